#include "gatedfill/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace gatedfill {

namespace {

template <typename T>
Tensor<T> zero_bias(int64_t channels) {
    return Tensor<T>::zeros({1, channels, 1, 1}, true);
}

template <typename T>
void push(std::vector<NamedTensor<T>>& out, const std::string& prefix, const char* leaf, const Tensor<T>& t) {
    out.push_back({prefix + "." + leaf, t});
}

double normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    // Non-finite weights pass NaN through so the caller sees a non-finite loss.
    if (std::isnan(norm)) return norm;
    if (!(norm > 0.0)) throw std::domain_error("spectral_normalize: zero matrix has no leading direction");
    for (double& x : v) x /= norm;
    return norm;
}

}  // namespace

// --- vanilla -----------------------------------------------------------

template <typename T>
Tensor<T> VanillaConvLayer<T>::forward(const Tensor<T>& input) const {
    return activate(conv2d(input, weight, bias, geom), activation);
}

template <typename T>
void VanillaConvLayer<T>::collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    push(out, prefix, "W", weight);
    push(out, prefix, "b", bias);
}

// --- gated -------------------------------------------------------------

template <typename T>
int64_t GatedConvLayer<T>::parameter_count() const {
    return feature_weight.numel() + gate_weight.numel() + feature_bias.numel() + gate_bias.numel();
}

template <typename T>
Tensor<T> GatedConvLayer<T>::forward(const Tensor<T>& input, Tensor<T>* gate_out) const {
    if (!(feature_weight.shape() == gate_weight.shape())) {
        throw ShapeError("gated conv: W_f " + feature_weight.shape().str() + " and W_g " + gate_weight.shape().str() +
                         " differ");
    }
    if (frozen_gate) {
        const Tensor<T> feature = activate(conv2d(input, feature_weight, feature_bias, geom), activation);
        if (gate_out) *gate_out = Tensor<T>::full(feature.shape(), T(0.5));
        return mul_scalar(feature, T(0.5));
    }
    // Both branches share one im2col: stack W_f over W_g and split the output.
    const int64_t c = out_channels();
    const Tensor<T> both = conv2d(input, concat_batch(feature_weight, gate_weight),
                                  concat_channels(feature_bias, gate_bias), geom);
    const Tensor<T> feature = activate(slice_channels(both, 0, c), activation);
    const Tensor<T> gate = sigmoid(slice_channels(both, c, c));
    if (gate_out) *gate_out = gate;
    return mul(feature, gate);
}

template <typename T>
void GatedConvLayer<T>::collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    push(out, prefix, "Wf", feature_weight);
    push(out, prefix, "Wg", gate_weight);
    push(out, prefix, "bf", feature_bias);
    push(out, prefix, "bg", gate_bias);
}

// --- partial -----------------------------------------------------------

template <typename T>
Tensor<T> mask_window_sum(const Tensor<T>& mask, const ConvGeometry& geom) {
    geom.validate();
    const Shape s = mask.shape();
    if (s.c != 1) throw ShapeError("mask_window_sum: mask must have one channel, got " + s.str());
    const int64_t oh = geom.out_size(s.h, geom.kernel_h);
    const int64_t ow = geom.out_size(s.w, geom.kernel_w);
    if (oh <= 0 || ow <= 0) throw ShapeError("mask_window_sum: zero-size output for " + s.str());
    const auto m = mask.data();
    std::vector<T> out(static_cast<size_t>(s.n * oh * ow), T(0));
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                T acc = T(0);
                for (int ki = 0; ki < geom.kernel_h; ++ki) {
                    const int64_t iy = oy * geom.stride - geom.padding + ki * geom.dilation;
                    if (iy < 0 || iy >= s.h) continue;
                    for (int kj = 0; kj < geom.kernel_w; ++kj) {
                        const int64_t ix = ox * geom.stride - geom.padding + kj * geom.dilation;
                        if (ix >= 0 && ix < s.w) acc += m[(n * s.h + iy) * s.w + ix];
                    }
                }
                out[(n * oh + oy) * ow + ox] = acc;
            }
    return Tensor<T>::from_data({s.n, 1, oh, ow}, std::move(out));
}

template <typename T>
PartialConvOutput<T> PartialConvLayer<T>::forward(const Tensor<T>& input, const Tensor<T>& mask) const {
    const Shape is = input.shape();
    const Shape ms = mask.shape();
    if (ms.n != is.n || ms.c != 1 || ms.h != is.h || ms.w != is.w) {
        throw ShapeError("partial conv: mask " + ms.str() + " does not match input " + is.str());
    }
    require_binary(mask, "partial conv");

    const Tensor<T> masked = mul(input, repeat_channels(mask.detach(), is.c));
    const Tensor<T> raw = conv2d(masked, weight, Tensor<T>{}, geom);
    const Tensor<T> window = mask_window_sum(mask, geom);

    const T taps = static_cast<T>(geom.kernel_h * geom.kernel_w);
    std::vector<T> scale(window.data().size());
    std::vector<T> updated(window.data().size());
    for (size_t i = 0; i < scale.size(); ++i) {
        const T count = window.data()[i];
        if (count > T(0)) {
            scale[i] = scaling == PartialConvScaling::window_mean ? T(1) / count : taps / count;
            updated[i] = T(1);
        } else {
            scale[i] = T(0);
            updated[i] = T(0);
        }
    }
    const Shape ws = window.shape();
    const Tensor<T> scale_t = Tensor<T>::from_data(ws, std::move(scale));
    const Tensor<T> mask_out = Tensor<T>::from_data(ws, std::move(updated));
    const int64_t cout = raw.shape().c;

    Tensor<T> features = add_channel_bias(mul(raw, repeat_channels(scale_t, cout)), bias);
    features = mul(features, repeat_channels(mask_out, cout));
    return {features, mask_out};
}

template <typename T>
void PartialConvLayer<T>::collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    push(out, prefix, "W", weight);
    push(out, prefix, "b", bias);
}

std::vector<Mask> propagate_mask(std::span<const ConvGeometry> chain, const Mask& mask) {
    std::vector<Mask> result;
    result.reserve(chain.size());
    Tensor<double> current = mask_tensor<double>(std::span(&mask, 1));
    for (const auto& geom : chain) {
        const Tensor<double> window = mask_window_sum(current, geom);
        std::vector<double> bits(window.data().size());
        for (size_t i = 0; i < bits.size(); ++i) bits[i] = window.data()[i] > 0.0 ? 1.0 : 0.0;
        current = Tensor<double>::from_data(window.shape(), std::move(bits));
        result.push_back(mask_from_tensor(current));
    }
    return result;
}

// --- spectral normalization -----------------------------------------------

template <typename T>
SpectralNormState<T> make_spectral_state(int64_t rows, Rng& rng, int n_power_iterations) {
    if (rows <= 0) throw std::invalid_argument("make_spectral_state: rows must be positive");
    if (n_power_iterations <= 0) throw std::invalid_argument("make_spectral_state: need at least one iteration");
    std::vector<double> u(static_cast<size_t>(rows));
    for (auto& x : u) x = rng.normal();
    normalize(u);
    SpectralNormState<T> state;
    state.u.assign(u.begin(), u.end());
    state.n_power_iterations = n_power_iterations;
    return state;
}

template <typename T>
SpectralNormResult<T> spectral_normalize(const Tensor<T>& weight, SpectralNormState<T>& state, bool update) {
    const int64_t rows = weight.shape().n;
    const int64_t cols = weight.numel() / std::max<int64_t>(rows, 1);
    if (static_cast<int64_t>(state.u.size()) != rows) {
        throw ShapeError("spectral_normalize: u has " + std::to_string(state.u.size()) + " entries, weight " +
                         weight.shape().str() + " has " + std::to_string(rows) + " rows");
    }
    const auto w = weight.data();
    std::vector<double> u(state.u.begin(), state.u.end());
    std::vector<double> v(static_cast<size_t>(cols));

    auto wt_u = [&] {
        std::fill(v.begin(), v.end(), 0.0);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) v[c] += static_cast<double>(w[r * cols + c]) * u[r];
        normalize(v);
    };
    auto w_v = [&] {
        for (int64_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (int64_t c = 0; c < cols; ++c) acc += static_cast<double>(w[r * cols + c]) * v[c];
            u[r] = acc;
        }
        normalize(u);
    };

    if (update) {
        for (int it = 0; it < state.n_power_iterations; ++it) {
            wt_u();
            w_v();
        }
        state.u.assign(u.begin(), u.end());
    } else {
        wt_u();
    }
    const std::vector<T> ut(u.begin(), u.end());
    const std::vector<T> vt(v.begin(), v.end());
    Tensor<T> normalized = divide_by_bilinear(weight, std::span<const T>(ut), std::span<const T>(vt));
    double sigma = 0.0;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) sigma += u[r] * static_cast<double>(w[r * cols + c]) * v[c];
    return {normalized, static_cast<T>(sigma)};
}

template <typename T>
Tensor<T> divide_by_bilinear(const Tensor<T>& weight, std::span<const T> u, std::span<const T> v) {
    const int64_t rows = weight.shape().n;
    const int64_t cols = weight.numel() / std::max<int64_t>(rows, 1);
    if (static_cast<int64_t>(u.size()) != rows || static_cast<int64_t>(v.size()) != cols) {
        throw ShapeError("divide_by_bilinear: u/v sizes do not match " + weight.shape().str());
    }
    const auto w = weight.data();
    double sigma = 0.0;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) sigma += static_cast<double>(u[r]) * w[r * cols + c] * v[c];
    if (sigma == 0.0) throw std::domain_error("divide_by_bilinear: u^T W v is zero");
    std::vector<T> out(w.size());
    for (size_t i = 0; i < w.size(); ++i) out[i] = static_cast<T>(w[i] / sigma);

    std::vector<T> uu(u.begin(), u.end());
    std::vector<T> vv(v.begin(), v.end());
    return Tensor<T>::make_op(weight.shape(), std::move(out), {weight},
                              [uu = std::move(uu), vv = std::move(vv), sigma, rows, cols](auto& self) {
                                  auto& parent = *self.parents[0];
                                  auto& g = parent.ensure_grad();
                                  // out = W / s with s = u^T W v:
                                  // dL/dW = G / s - <G, W> / s^2 * u v^T
                                  double inner = 0.0;
                                  for (size_t i = 0; i < g.size(); ++i) {
                                      inner += static_cast<double>(self.grad[i]) * parent.data[i];
                                  }
                                  const double k = inner / (sigma * sigma);
                                  for (int64_t r = 0; r < rows; ++r)
                                      for (int64_t c = 0; c < cols; ++c) {
                                          const size_t i = static_cast<size_t>(r * cols + c);
                                          g[i] += static_cast<T>(self.grad[i] / sigma - k * uu[r] * vv[c]);
                                      }
                              });
}

// --- initialization -------------------------------------------------------

constexpr double kGatedFeatureGain = 2.0;

double init_target_variance(Shape shape, InitScheme scheme) {
    const double receptive = static_cast<double>(shape.h * shape.w);
    const double fan_in = static_cast<double>(shape.c) * receptive;
    const double fan_out = static_cast<double>(shape.n) * receptive;
    return scheme == InitScheme::he ? 2.0 / fan_in : 2.0 / (fan_in + fan_out);
}

template <typename T>
Tensor<T> init_kernel(Shape shape, InitScheme scheme, Rng& rng) {
    if (shape.numel() <= 0) throw ShapeError("init_kernel: empty shape " + shape.str());
    const double stddev = std::sqrt(init_target_variance(shape, scheme));
    std::vector<T> data(static_cast<size_t>(shape.numel()));
    for (auto& x : data) x = static_cast<T>(stddev * rng.normal());
    return Tensor<T>::from_data(shape, std::move(data), true);
}

template <typename T>
VanillaConvLayer<T> make_vanilla_conv(int64_t in, int64_t out, ConvGeometry geom, Activation act, Rng& rng) {
    geom.validate();
    VanillaConvLayer<T> layer;
    layer.weight = init_kernel<T>({out, in, geom.kernel_h, geom.kernel_w}, InitScheme::he, rng);
    layer.bias = zero_bias<T>(out);
    layer.geom = geom;
    layer.activation = act;
    return layer;
}

template <typename T>
GatedConvLayer<T> make_gated_conv(int64_t in, int64_t out, ConvGeometry geom, Activation act, Rng& rng) {
    geom.validate();
    GatedConvLayer<T> layer;
    const Shape k{out, in, geom.kernel_h, geom.kernel_w};
    layer.feature_weight = init_kernel<T>(k, InitScheme::he, rng);
    // Gates start near 0.5 and halve the signal at every layer; doubling the
    // feature kernel keeps activations from vanishing through deep stacks.
    if (act != Activation::none)
        for (auto& w : layer.feature_weight.data_mut()) w *= T(kGatedFeatureGain);
    layer.gate_weight = init_kernel<T>(k, InitScheme::xavier, rng);
    layer.feature_bias = zero_bias<T>(out);
    layer.gate_bias = zero_bias<T>(out);
    layer.geom = geom;
    layer.activation = act;
    return layer;
}

template <typename T>
PartialConvLayer<T> make_partial_conv(int64_t in, int64_t out, ConvGeometry geom, Rng& rng,
                                      PartialConvScaling scaling) {
    geom.validate();
    PartialConvLayer<T> layer;
    layer.weight = init_kernel<T>({out, in, geom.kernel_h, geom.kernel_w}, InitScheme::he, rng);
    layer.bias = zero_bias<T>(out);
    layer.geom = geom;
    layer.scaling = scaling;
    return layer;
}

#define GATEDFILL_INSTANTIATE(T)                                                                                 \
    template struct VanillaConvLayer<T>;                                                                         \
    template struct GatedConvLayer<T>;                                                                           \
    template struct PartialConvLayer<T>;                                                                         \
    template Tensor<T> mask_window_sum(const Tensor<T>&, const ConvGeometry&);                                   \
    template SpectralNormState<T> make_spectral_state(int64_t, Rng&, int);                                       \
    template SpectralNormResult<T> spectral_normalize(const Tensor<T>&, SpectralNormState<T>&, bool);            \
    template Tensor<T> divide_by_bilinear(const Tensor<T>&, std::span<const T>, std::span<const T>);             \
    template Tensor<T> init_kernel(Shape, InitScheme, Rng&);                                                     \
    template VanillaConvLayer<T> make_vanilla_conv(int64_t, int64_t, ConvGeometry, Activation, Rng&);            \
    template GatedConvLayer<T> make_gated_conv(int64_t, int64_t, ConvGeometry, Activation, Rng&);                \
    template PartialConvLayer<T> make_partial_conv(int64_t, int64_t, ConvGeometry, Rng&, PartialConvScaling);

GATEDFILL_INSTANTIATE(float)
GATEDFILL_INSTANTIATE(double)

#undef GATEDFILL_INSTANTIATE

}  // namespace gatedfill
