#pragma once

#include "gatedfill/mask.hpp"
#include "gatedfill/tensor.hpp"

#include <span>
#include <string>

#include <json.hpp>

namespace gatedfill {

enum class EvalRegion { full, hole_only };
enum class MaskKind { rectangular, free_form };

EvalRegion eval_region_from_string(const std::string& name);
const char* to_string(EvalRegion region);
const char* to_string(MaskKind kind);

struct EvalResult {
    double mean_l1_error_percent = 0.0;
    double mean_l2_error_percent = 0.0;
    int64_t n_images = 0;
    MaskKind mask_kind = MaskKind::free_form;
    EvalRegion region = EvalRegion::full;
};

void to_json(nlohmann::json& j, const EvalResult& r);

/// Per image, mean |gt - result| and mean (gt - result)^2 over the measured
/// pixels and all channels, times 100; then averaged over images. Images
/// are (1, c, h, w) in [0, 1]. hole_only measures mask == 0 pixels and
/// throws if an image has none.
EvalResult evaluate(std::span<const Tensor<double>> ground_truth, std::span<const Tensor<double>> results,
                    std::span<const Mask> masks, EvalRegion region = EvalRegion::full,
                    MaskKind kind = MaskKind::free_form);

}  // namespace gatedfill
