#pragma once

#include "gatedfill/tensor.hpp"

#include <vector>

namespace gatedfill {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list. Moments are kept in
/// double regardless of T.
template <typename T>
class Adam {
public:
    Adam(std::vector<Tensor<T>> params, AdamOptions options);

    void zero_grad();
    /// Applies one update from the accumulated gradients.
    void step();
    long steps() const { return t_; }
    const AdamOptions& options() const { return options_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamOptions options_;
    long t_ = 0;
};

}  // namespace gatedfill
