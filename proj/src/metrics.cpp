#include "gatedfill/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace gatedfill {

EvalRegion eval_region_from_string(const std::string& name) {
    if (name == "full") return EvalRegion::full;
    if (name == "hole-only" || name == "hole_only") return EvalRegion::hole_only;
    throw std::invalid_argument("unknown evaluation region '" + name + "' (expected full or hole-only)");
}

const char* to_string(EvalRegion region) {
    return region == EvalRegion::full ? "full" : "hole-only";
}

const char* to_string(MaskKind kind) {
    return kind == MaskKind::rectangular ? "rectangular" : "free-form";
}

void to_json(nlohmann::json& j, const EvalResult& r) {
    j = nlohmann::json{{"mean_l1_error_percent", r.mean_l1_error_percent},
                       {"mean_l2_error_percent", r.mean_l2_error_percent},
                       {"n_images", r.n_images},
                       {"mask_kind", to_string(r.mask_kind)},
                       {"region", to_string(r.region)}};
}

EvalResult evaluate(std::span<const Tensor<double>> ground_truth, std::span<const Tensor<double>> results,
                    std::span<const Mask> masks, EvalRegion region, MaskKind kind) {
    if (ground_truth.size() != results.size() || ground_truth.size() != masks.size()) {
        throw std::invalid_argument("evaluate: ground truth, results and masks differ in count");
    }
    if (ground_truth.empty()) throw std::invalid_argument("evaluate: no images");
    EvalResult r;
    r.mask_kind = kind;
    r.region = region;
    double l1_sum = 0.0;
    double l2_sum = 0.0;
    for (size_t k = 0; k < ground_truth.size(); ++k) {
        const Shape s = ground_truth[k].shape();
        if (!(results[k].shape() == s) || s.n != 1) {
            throw ShapeError("evaluate: image " + std::to_string(k) + " shapes " + s.str() + " vs " +
                             results[k].shape().str());
        }
        if (masks[k].height != s.h || masks[k].width != s.w) {
            throw ShapeError("evaluate: mask " + std::to_string(k) + " does not match image size");
        }
        const auto g = ground_truth[k].data();
        const auto p = results[k].data();
        double l1 = 0.0;
        double l2 = 0.0;
        int64_t count = 0;
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t y = 0; y < s.h; ++y)
                for (int64_t x = 0; x < s.w; ++x) {
                    if (region == EvalRegion::hole_only &&
                        masks[k].valid(static_cast<int>(y), static_cast<int>(x)))
                        continue;
                    const size_t i = static_cast<size_t>((c * s.h + y) * s.w + x);
                    const double d = g[i] - p[i];
                    l1 += std::abs(d);
                    l2 += d * d;
                    ++count;
                }
        if (count == 0) throw std::invalid_argument("evaluate: image " + std::to_string(k) + " has an empty region");
        l1_sum += l1 / static_cast<double>(count);
        l2_sum += l2 / static_cast<double>(count);
    }
    const double n = static_cast<double>(ground_truth.size());
    r.n_images = static_cast<int64_t>(ground_truth.size());
    r.mean_l1_error_percent = 100.0 * l1_sum / n;
    r.mean_l2_error_percent = 100.0 * l2_sum / n;
    return r;
}

}  // namespace gatedfill
