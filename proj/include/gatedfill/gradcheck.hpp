#pragma once

#include "gatedfill/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gatedfill {

struct GradCheckOptions {
    double eps = 1e-6;
    /// Entries checked per parameter tensor; larger tensors are sampled at a
    /// fixed stride. 0 checks every entry.
    int64_t max_entries_per_tensor = 0;
    /// Entries whose error exceeds this are measured again at eps / 4 and
    /// 4 eps and keep the smallest error. A kink inside the step or round-off
    /// spoils only some step sizes; a wrong gradient disagrees at all of them.
    /// 0 disables the retry.
    double retry_above = 1e-5;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int64_t entries_checked = 0;
    int64_t entries_retried = 0;
};

/// Central finite differences against the tape gradient, in 64-bit.
///
/// `loss` must rebuild the graph from the current parameter values on each
/// call and return a scalar. The relative error per entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). Non-finite
/// values raise std::runtime_error naming the parameter.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss,
                           const std::vector<NamedTensor<double>>& params, const GradCheckOptions& options = {});

}  // namespace gatedfill
