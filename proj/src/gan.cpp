#include "gatedfill/gan.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gatedfill {

std::vector<int64_t> DiscriminatorConfig::effective_widths() const {
    std::vector<int64_t> out;
    for (int w : widths) out.push_back(std::max<int64_t>(1, std::llround(w * width_scale)));
    return out;
}

void DiscriminatorConfig::validate() const {
    if (input_channels < 1) throw std::invalid_argument("discriminator: input_channels must be positive");
    if (widths.size() != 6) throw std::invalid_argument("discriminator: exactly six layer widths are required");
    if (!(width_scale > 0.0)) throw std::invalid_argument("discriminator: width_scale must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("discriminator: kernel must be odd");
    if (stride < 1) throw std::invalid_argument("discriminator: stride must be positive");
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& cfg) {
    j = nlohmann::json{{"input_channels", cfg.input_channels}, {"widths", cfg.widths},
                       {"width_scale", cfg.width_scale},       {"kernel", cfg.kernel},
                       {"stride", cfg.stride},                 {"leaky_alpha", cfg.leaky_alpha},
                       {"n_power_iterations", cfg.n_power_iterations}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& cfg) {
    cfg.input_channels = j.value("input_channels", cfg.input_channels);
    cfg.widths = j.value("widths", cfg.widths);
    cfg.width_scale = j.value("width_scale", cfg.width_scale);
    cfg.kernel = j.value("kernel", cfg.kernel);
    cfg.stride = j.value("stride", cfg.stride);
    cfg.leaky_alpha = j.value("leaky_alpha", cfg.leaky_alpha);
    cfg.n_power_iterations = j.value("n_power_iterations", cfg.n_power_iterations);
}

template <typename T>
Discriminator<T> Discriminator<T>::build(const DiscriminatorConfig& cfg, Rng& rng) {
    cfg.validate();
    Discriminator d;
    d.cfg_ = cfg;
    int64_t in = cfg.input_channels;
    for (int64_t out : cfg.effective_widths()) {
        const auto geom = ConvGeometry::same(cfg.kernel, cfg.stride);
        d.layers_.push_back(make_vanilla_conv<T>(in, out, geom, Activation::leaky_relu, rng));
        d.spectral_.push_back(make_spectral_state<T>(out, rng, cfg.n_power_iterations));
        in = out;
    }
    return d;
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& image, const Tensor<T>& mask, const Tensor<T>& guidance,
                                    bool update_spectral) {
    const Shape& is = image.shape();
    const Shape& ms = mask.shape();
    if (ms.n != is.n || ms.c != 1 || ms.h != is.h || ms.w != is.w) {
        throw ShapeError("discriminator: mask " + ms.str() + " does not match image " + is.str());
    }
    Tensor<T> x = concat_channels(image, add_scalar(neg(mask.detach()), T(1)));
    if (guidance.defined()) x = concat_channels(x, guidance);
    if (x.shape().c != cfg_.input_channels) {
        throw ShapeError("discriminator: expects " + std::to_string(cfg_.input_channels) + " input channels, got " +
                         std::to_string(x.shape().c));
    }
    for (size_t i = 0; i < layers_.size(); ++i) {
        const auto& layer = layers_[i];
        // An all-zero kernel already has spectral norm 0 and no direction to
        // normalize along; it is used as is.
        const auto w = layer.weight.data();
        const bool zero = std::all_of(w.begin(), w.end(), [](T v) { return v == T(0); });
        const Tensor<T> weight = zero ? layer.weight : spectral_normalize(layer.weight, spectral_[i], update_spectral).weight;
        x = leaky_relu(conv2d(x, weight, layer.bias, layer.geom), static_cast<T>(cfg_.leaky_alpha));
    }
    return x;
}

template <typename T>
std::vector<ConvGeometry> Discriminator<T>::geometries() const {
    std::vector<ConvGeometry> out;
    for (const auto& l : layers_) out.push_back(l.geom);
    return out;
}

template <typename T>
void Discriminator<T>::collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    for (size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, prefix + "." + std::to_string(i));
}

template <typename T>
int64_t Discriminator<T>::parameter_count() const {
    int64_t n = 0;
    for (const auto& l : layers_) n += l.weight.numel() + l.bias.numel();
    return n;
}

template <typename T>
HingeTerms<T> d_hinge_terms(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
    HingeTerms<T> t;
    t.real = mean(relu(add_scalar(neg(real_scores), T(1))));
    t.fake = mean(relu(add_scalar(fake_scores, T(1))));
    t.total = add(t.real, t.fake);
    return t;
}

template <typename T>
Tensor<T> d_hinge_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
    return d_hinge_terms(real_scores, fake_scores).total;
}

template <typename T>
Tensor<T> g_hinge_loss(const Tensor<T>& fake_scores) {
    return neg(mean(fake_scores));
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& region) {
    const Tensor<T> err = abs(sub(pred, target));
    if (!region.defined()) return mean(err);
    const Shape ps = pred.shape();
    const Shape rs = region.shape();
    if (rs.n != ps.n || rs.c != 1 || rs.h != ps.h || rs.w != ps.w) {
        throw ShapeError("l1_loss: region " + rs.str() + " does not match " + ps.str());
    }
    double count = 0.0;
    for (T v : region.data()) count += static_cast<double>(v);
    if (count == 0.0) throw std::invalid_argument("l1_loss: empty region");
    const Tensor<T> masked = mul(err, repeat_channels(region.detach(), ps.c));
    return mul_scalar(sum(masked), static_cast<T>(1.0 / (count * static_cast<double>(ps.c))));
}

template <typename T>
Tensor<T> g_objective(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& fake_scores, T l1_weight,
                      T gan_weight) {
    return add(mul_scalar(l1_loss(pred, target), l1_weight), mul_scalar(g_hinge_loss(fake_scores), gan_weight));
}

bool GanLossReport::finite() const {
    return std::isfinite(d_loss_real) && std::isfinite(d_loss_fake) && std::isfinite(d_loss) &&
           std::isfinite(g_gan_loss) && std::isfinite(g_l1_loss) && std::isfinite(g_total);
}

#define GATEDFILL_INSTANTIATE(T)                                                                     \
    template class Discriminator<T>;                                                                 \
    template HingeTerms<T> d_hinge_terms(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> d_hinge_loss(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> g_hinge_loss(const Tensor<T>&);                                               \
    template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> g_objective(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T, T);

GATEDFILL_INSTANTIATE(float)
GATEDFILL_INSTANTIATE(double)

#undef GATEDFILL_INSTANTIATE

}  // namespace gatedfill
