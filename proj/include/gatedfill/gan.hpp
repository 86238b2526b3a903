#pragma once

#include "gatedfill/layers.hpp"
#include "gatedfill/rng.hpp"
#include "gatedfill/tensor.hpp"

#include <string>
#include <vector>

#include <json.hpp>

namespace gatedfill {

struct DiscriminatorConfig {
    int input_channels = 4;  // RGB + hole channel (+1 with guidance)
    std::vector<int> widths{64, 128, 256, 256, 256, 256};
    double width_scale = 0.25;
    int kernel = 5;
    int stride = 2;
    double leaky_alpha = 0.2;
    int n_power_iterations = 1;

    std::vector<int64_t> effective_widths() const;
    void validate() const;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& cfg);
void from_json(const nlohmann::json& j, DiscriminatorConfig& cfg);

/// Six stride-2 5x5 convolutions, each spectral-normalized and followed by
/// leaky ReLU. The output score map is never reduced inside the network.
template <typename T>
class Discriminator {
public:
    static Discriminator build(const DiscriminatorConfig& cfg, Rng& rng);

    /// `mask` is (n, 1, h, w) with 1 = valid; the network sees 1 - mask so
    /// synthesized pixels read as 1. `guidance` may be undefined.
    /// `update_spectral` advances the power iteration state.
    Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& mask, const Tensor<T>& guidance = {},
                      bool update_spectral = true);

    const DiscriminatorConfig& config() const { return cfg_; }
    std::vector<ConvGeometry> geometries() const;
    std::vector<VanillaConvLayer<T>>& layers() { return layers_; }
    const std::vector<VanillaConvLayer<T>>& layers() const { return layers_; }
    std::vector<SpectralNormState<T>>& spectral_states() { return spectral_; }
    const std::vector<SpectralNormState<T>>& spectral_states() const { return spectral_; }

    void collect(std::vector<NamedTensor<T>>& out, const std::string& prefix = "D") const;
    int64_t parameter_count() const;

private:
    DiscriminatorConfig cfg_;
    std::vector<VanillaConvLayer<T>> layers_;
    std::vector<SpectralNormState<T>> spectral_;
};

template <typename T>
struct HingeTerms {
    Tensor<T> real;   // E[ReLU(1 - D(x))]
    Tensor<T> fake;   // E[ReLU(1 + D(G(z)))]
    Tensor<T> total;  // real + fake
};

/// Each score-map element is its own GAN: both terms are means over batch,
/// channels and locations, computed independently of one another.
template <typename T>
HingeTerms<T> d_hinge_terms(const Tensor<T>& real_scores, const Tensor<T>& fake_scores);
template <typename T>
Tensor<T> d_hinge_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores);
/// -E[D(G(z))].
template <typename T>
Tensor<T> g_hinge_loss(const Tensor<T>& fake_scores);

/// Mean absolute error. With `region` (n, 1, h, w) the mean runs over
/// region == 1 pixels only, all channels.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& region = {});

template <typename T>
Tensor<T> g_objective(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& fake_scores,
                      T l1_weight = T(1), T gan_weight = T(1));

struct GanLossReport {
    double d_loss_real = 0.0;
    double d_loss_fake = 0.0;
    double d_loss = 0.0;
    double g_gan_loss = 0.0;
    double g_l1_loss = 0.0;
    double g_total = 0.0;

    bool finite() const;
};

}  // namespace gatedfill
