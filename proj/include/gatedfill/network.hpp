#pragma once

#include "gatedfill/layers.hpp"
#include "gatedfill/rng.hpp"
#include "gatedfill/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace gatedfill {

struct GeneratorConfig {
    int base_width = 32;
    double width_slim = 0.75;
    bool use_refinement = true;
    int input_channels = 4;  // RGB + hole channel, 5 with a sketch
    std::vector<int> dilation_schedule{2, 4, 8, 16};
    bool frozen_gates = false;  // ablation: every gate fixed at 0.5

    /// round(base_width * width_slim): channels of the deep layers.
    int64_t width() const;
    /// Channels of the full-resolution layers, half the deep width.
    int64_t shallow_width() const;
    bool guided() const { return input_channels == 5; }
    void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& cfg);
void from_json(const nlohmann::json& j, GeneratorConfig& cfg);

template <typename T>
struct StackLayer {
    GatedConvLayer<T> conv;
    int upsample_before = 1;  // nearest-neighbour factor applied to the layer input
};

/// Encoder (two stride-2 stages), dilated bottleneck, decoder (two nearest
/// upsampling stages). No skip connections; the last layer is a linear
/// gated conv followed by tanh.
template <typename T>
struct GatedStack {
    std::vector<StackLayer<T>> layers;

    Tensor<T> forward(const Tensor<T>& input, std::vector<Tensor<T>>* gates = nullptr) const;
    int64_t parameter_count() const;
    void collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const;
};

template <typename T>
struct InpaintOutput {
    Tensor<T> coarse;
    Tensor<T> refined;
    Tensor<T> composited;  // refined on holes, original on valid pixels
};

template <typename T>
struct GatingMap {
    std::string layer;  // "coarse.3", "refine.10", ...
    Tensor<T> gates;    // σ(gating), (n, c, h, w)
};

template <typename T>
class Generator {
public:
    static Generator build(const GeneratorConfig& cfg, Rng& rng);

    /// `image` is in [-1, 1], `mask` (n, 1, h, w) with 1 = valid, `sketch`
    /// (n, 1, h, w) or undefined. Height and width must be divisible by 4.
    InpaintOutput<T> forward(const Tensor<T>& image, const Tensor<T>& mask, const Tensor<T>& sketch = {},
                             std::vector<GatingMap<T>>* gating = nullptr) const;

    const GeneratorConfig& config() const { return cfg_; }
    const GatedStack<T>& coarse() const { return coarse_; }
    const GatedStack<T>& refine() const { return refine_; }
    int64_t parameter_count() const;
    void collect(std::vector<NamedTensor<T>>& out, const std::string& prefix = "G") const;

private:
    static GatedStack<T> build_stack(const GeneratorConfig& cfg, Rng& rng);

    GeneratorConfig cfg_;
    GatedStack<T> coarse_;
    GatedStack<T> refine_;
};

/// Gating maps of every layer in both stages.
template <typename T>
std::vector<GatingMap<T>> dump_gating(const Generator<T>& g, const Tensor<T>& image, const Tensor<T>& mask,
                                      const Tensor<T>& sketch = {});

/// One grayscale PNG per layer: channels of batch item 0 tiled in a grid,
/// gate value v stored as round(255 v). Returns the written paths.
std::vector<std::filesystem::path> write_gating_pngs(std::span<const GatingMap<float>> maps,
                                                     const std::filesystem::path& dir);

/// Receptive field after each layer: r += (k_eff - 1) * jump, jump *= stride,
/// with k_eff = dilation * (k - 1) + 1.
std::vector<int64_t> receptive_fields(std::span<const ConvGeometry> chain);

}  // namespace gatedfill
