#pragma once

#include "gatedfill/mask.hpp"
#include "gatedfill/rng.hpp"
#include "gatedfill/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace gatedfill {

/// Plain convolution followed by an activation.
template <typename T>
struct VanillaConvLayer {
    Tensor<T> weight;  // (out, in, k_h, k_w)
    Tensor<T> bias;    // (1, out, 1, 1)
    ConvGeometry geom;
    Activation activation = Activation::none;

    Tensor<T> forward(const Tensor<T>& input) const;
    void collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const;
};

/// φ(conv(x, W_f) + b_f) ⊙ σ(conv(x, W_g) + b_g).
///
/// With `frozen_gate` set the gating branch is bypassed and every gate is
/// the constant 0.5; the gating parameters stay allocated so parameter
/// counts match the learned-gate layer.
template <typename T>
struct GatedConvLayer {
    Tensor<T> feature_weight;
    Tensor<T> gate_weight;
    Tensor<T> feature_bias;
    Tensor<T> gate_bias;
    ConvGeometry geom;
    Activation activation = Activation::elu;
    bool frozen_gate = false;

    int64_t in_channels() const { return feature_weight.shape().c; }
    int64_t out_channels() const { return feature_weight.shape().n; }
    int64_t parameter_count() const;

    /// `gate_out`, when given, receives σ(gating) (all 0.5 when frozen).
    Tensor<T> forward(const Tensor<T>& input, Tensor<T>* gate_out = nullptr) const;
    void collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const;
};

enum class PartialConvScaling {
    window_mean,    // W · (I ⊙ M / sum(M)): an all-valid window scales by 1/(k_h k_w)
    renormalized,  // W · (I ⊙ M) · sum(1) / sum(M)
};

template <typename T>
struct PartialConvOutput {
    Tensor<T> features;
    Tensor<T> mask;  // (n, 1, h', w'), binary
};

/// Convolution over the valid pixels of a binary mask with rule-based mask
/// update: m' = 1 iff the window holds at least one valid pixel. Windows
/// with no valid pixel produce exactly 0, bias included.
template <typename T>
struct PartialConvLayer {
    Tensor<T> weight;
    Tensor<T> bias;
    ConvGeometry geom;
    PartialConvScaling scaling = PartialConvScaling::window_mean;

    /// `mask` is (n, 1, h, w) with 1 = valid; it is treated as a constant.
    PartialConvOutput<T> forward(const Tensor<T>& input, const Tensor<T>& mask) const;
    void collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const;
};

/// Per-window count of valid pixels, zero padding counted as invalid.
template <typename T>
Tensor<T> mask_window_sum(const Tensor<T>& mask, const ConvGeometry& geom);

/// Applies only the partial-conv mask-update rule along a chain of layers and
/// returns the mask after every layer.
std::vector<Mask> propagate_mask(std::span<const ConvGeometry> chain, const Mask& mask);

// --- spectral normalization -----------------------------------------------

template <typename T>
struct SpectralNormState {
    std::vector<T> u;  // unit-norm estimate of the leading left singular vector
    int n_power_iterations = 1;
};

template <typename T>
struct SpectralNormResult {
    Tensor<T> weight;  // W / sigma
    T sigma = T(0);
};

template <typename T>
SpectralNormState<T> make_spectral_state(int64_t rows, Rng& rng, int n_power_iterations = 1);

/// Views W as (out_channels) x (everything else) and divides by the power
/// iteration estimate sigma = u^T W v.
///
/// With `update` the state runs n_power_iterations and u is stored back;
/// without it v = normalize(W^T u) is taken from the stored u, which is left
/// untouched. The gradient treats u and v as constants of the step.
/// Throws std::domain_error on a zero matrix.
template <typename T>
SpectralNormResult<T> spectral_normalize(const Tensor<T>& weight, SpectralNormState<T>& state, bool update = true);

/// Differentiable W / (u^T W v) with u, v held constant.
template <typename T>
Tensor<T> divide_by_bilinear(const Tensor<T>& weight, std::span<const T> u, std::span<const T> v);

// --- initialization -------------------------------------------------------

enum class InitScheme { he, xavier };

/// Normal kernel with std sqrt(2/fan_in) (he) or sqrt(2/(fan_in+fan_out))
/// (xavier); fans count the receptive field.
template <typename T>
Tensor<T> init_kernel(Shape shape, InitScheme scheme, Rng& rng);
double init_target_variance(Shape shape, InitScheme scheme);

template <typename T>
VanillaConvLayer<T> make_vanilla_conv(int64_t in, int64_t out, ConvGeometry geom, Activation act, Rng& rng);
template <typename T>
GatedConvLayer<T> make_gated_conv(int64_t in, int64_t out, ConvGeometry geom, Activation act, Rng& rng);
template <typename T>
PartialConvLayer<T> make_partial_conv(int64_t in, int64_t out, ConvGeometry geom, Rng& rng,
                                      PartialConvScaling scaling = PartialConvScaling::window_mean);

}  // namespace gatedfill
