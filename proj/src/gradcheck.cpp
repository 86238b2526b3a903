#include "gatedfill/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gatedfill {

namespace {

void check_finite(double v, const std::string& name, int64_t index, const char* what) {
    if (!std::isfinite(v)) {
        throw std::runtime_error("grad_check: non-finite " + std::string(what) + " at " + name + "[" +
                                 std::to_string(index) + "]");
    }
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss,
                           const std::vector<NamedTensor<double>>& params, const GradCheckOptions& options) {
    if (!(options.eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
    for (const auto& p : params) {
        auto t = p.tensor;
        t.zero_grad();
    }
    const Tensor<double> base = loss();
    if (!std::isfinite(base.item())) {
        for (const auto& p : params) {
            const auto v = p.tensor.data();
            for (size_t i = 0; i < v.size(); ++i) check_finite(v[i], p.name, static_cast<int64_t>(i), "value");
        }
        check_finite(base.item(), "loss", 0, "loss");
    }
    base.backward();

    GradCheckReport report;
    for (const auto& p : params) {
        Tensor<double> t = p.tensor;
        const std::vector<double> analytic = t.grad();
        const int64_t n = t.numel();
        int64_t stride = 1;
        if (options.max_entries_per_tensor > 0 && n > options.max_entries_per_tensor) {
            stride = (n + options.max_entries_per_tensor - 1) / options.max_entries_per_tensor;
        }
        auto values = t.data_mut();
        for (int64_t i = 0; i < n; i += stride) {
            check_finite(analytic[i], p.name, i, "analytic gradient");
            const double saved = values[i];
            auto central = [&](double eps) {
                values[i] = saved + eps;
                const double plus = loss().item();
                values[i] = saved - eps;
                const double minus = loss().item();
                values[i] = saved;
                check_finite(plus, p.name, i, "loss");
                check_finite(minus, p.name, i, "loss");
                return (plus - minus) / (2.0 * eps);
            };
            auto relative = [&](double numeric) {
                return std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
            };
            double numeric = central(options.eps);
            double rel = relative(numeric);
            if (options.retry_above > 0.0 && rel > options.retry_above) {
                ++report.entries_retried;
                for (double eps : {options.eps / 4.0, options.eps * 4.0}) {
                    const double alt = central(eps);
                    if (relative(alt) < rel) {
                        numeric = alt;
                        rel = relative(alt);
                    }
                }
            }
            ++report.entries_checked;
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_parameter = p.name;
                report.worst_index = i;
                report.worst_analytic = analytic[i];
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace gatedfill
