#include "gatedfill/network.hpp"

#include "gatedfill/image_io.hpp"

#include <cmath>
#include <stdexcept>

namespace gatedfill {

int64_t GeneratorConfig::width() const {
    return std::llround(base_width * width_slim);
}

int64_t GeneratorConfig::shallow_width() const {
    return std::llround(static_cast<double>(width()) / 2.0);
}

void GeneratorConfig::validate() const {
    if (!(width_slim > 0.0 && width_slim <= 1.0)) throw std::invalid_argument("width_slim must lie in (0, 1]");
    if (shallow_width() < 4) {
        throw std::invalid_argument("generator width too small: base_width " + std::to_string(base_width) +
                                    " x slim " + std::to_string(width_slim) + " leaves fewer than 4 channels");
    }
    if (input_channels != 4 && input_channels != 5) {
        throw std::invalid_argument("generator input_channels must be 4 (RGB + mask) or 5 (with sketch)");
    }
    for (int d : dilation_schedule) {
        if (d < 1) throw std::invalid_argument("dilation rates must be positive");
    }
}

void to_json(nlohmann::json& j, const GeneratorConfig& cfg) {
    j = nlohmann::json{{"base_width", cfg.base_width},
                       {"width_slim", cfg.width_slim},
                       {"use_refinement", cfg.use_refinement},
                       {"input_channels", cfg.input_channels},
                       {"dilation_schedule", cfg.dilation_schedule},
                       {"frozen_gates", cfg.frozen_gates}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& cfg) {
    cfg.base_width = j.value("base_width", cfg.base_width);
    cfg.width_slim = j.value("width_slim", cfg.width_slim);
    cfg.use_refinement = j.value("use_refinement", cfg.use_refinement);
    cfg.input_channels = j.value("input_channels", cfg.input_channels);
    cfg.dilation_schedule = j.value("dilation_schedule", cfg.dilation_schedule);
    cfg.frozen_gates = j.value("frozen_gates", cfg.frozen_gates);
}

// --- stacks ------------------------------------------------------------

template <typename T>
Tensor<T> GatedStack<T>::forward(const Tensor<T>& input, std::vector<Tensor<T>>* gates) const {
    Tensor<T> x = input;
    for (const auto& layer : layers) {
        if (layer.upsample_before > 1) x = upsample_nearest(x, layer.upsample_before);
        Tensor<T> gate;
        x = layer.conv.forward(x, gates ? &gate : nullptr);
        if (gates) gates->push_back(gate);
    }
    return tanh(x);
}

template <typename T>
int64_t GatedStack<T>::parameter_count() const {
    int64_t n = 0;
    for (const auto& l : layers) n += l.conv.parameter_count();
    return n;
}

template <typename T>
void GatedStack<T>::collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    for (size_t i = 0; i < layers.size(); ++i) layers[i].conv.collect(out, prefix + "." + std::to_string(i));
}

template <typename T>
GatedStack<T> Generator<T>::build_stack(const GeneratorConfig& cfg, Rng& rng) {
    const int64_t c = cfg.width();
    const int64_t h = cfg.shallow_width();
    GatedStack<T> stack;
    auto add = [&](int64_t in, int64_t out, int kernel, int stride, int dilation, Activation act, int up = 1) {
        auto conv = make_gated_conv<T>(in, out, ConvGeometry::same(kernel, stride, dilation), act, rng);
        conv.frozen_gate = cfg.frozen_gates;
        stack.layers.push_back({std::move(conv), up});
    };
    const auto elu = Activation::elu;
    add(cfg.input_channels, h, 5, 1, 1, elu);
    add(h, c, 3, 2, 1, elu);
    add(c, c, 3, 1, 1, elu);
    add(c, c, 3, 2, 1, elu);
    add(c, c, 3, 1, 1, elu);
    for (int d : cfg.dilation_schedule) add(c, c, 3, 1, d, elu);
    add(c, c, 3, 1, 1, elu);
    add(c, c, 3, 1, 1, elu);
    add(c, c, 3, 1, 1, elu, 2);
    add(c, c, 3, 1, 1, elu);
    add(c, h, 3, 1, 1, elu, 2);
    add(h, h, 3, 1, 1, elu);
    add(h, 3, 3, 1, 1, Activation::none);
    return stack;
}

template <typename T>
Generator<T> Generator<T>::build(const GeneratorConfig& cfg, Rng& rng) {
    cfg.validate();
    Generator g;
    g.cfg_ = cfg;
    g.coarse_ = build_stack(cfg, rng);
    if (cfg.use_refinement) g.refine_ = build_stack(cfg, rng);
    return g;
}

template <typename T>
InpaintOutput<T> Generator<T>::forward(const Tensor<T>& image, const Tensor<T>& mask, const Tensor<T>& sketch,
                                       std::vector<GatingMap<T>>* gating) const {
    const Shape is = image.shape();
    const Shape ms = mask.shape();
    if (is.c != 3) throw ShapeError("generator: image must have 3 channels, got " + is.str());
    if (ms.n != is.n || ms.c != 1 || ms.h != is.h || ms.w != is.w) {
        throw ShapeError("generator: mask " + ms.str() + " does not match image " + is.str());
    }
    if (is.h % 4 != 0 || is.w % 4 != 0) {
        throw ShapeError("generator: resolution " + std::to_string(is.h) + "x" + std::to_string(is.w) +
                         " is not divisible by 4; pad the input");
    }
    if (cfg_.guided() != sketch.defined()) {
        throw ShapeError(cfg_.guided() ? "generator: model is guided but no sketch channel was given"
                                       : "generator: model takes no sketch channel");
    }
    if (sketch.defined() && !(sketch.shape() == ms)) {
        throw ShapeError("generator: sketch " + sketch.shape().str() + " does not match mask " + ms.str());
    }
    require_binary(mask, "generator");

    const Tensor<T> valid = repeat_channels(mask.detach(), 3);
    const Tensor<T> hole3 = add_scalar(neg(valid), T(1));
    const Tensor<T> hole = add_scalar(neg(mask.detach()), T(1));
    const Tensor<T> known = mul(image, valid);

    auto stage_input = [&](const Tensor<T>& rgb) {
        Tensor<T> x = concat_channels(rgb, hole);
        if (sketch.defined()) x = concat_channels(x, sketch);
        return x;
    };
    auto run = [&](const GatedStack<T>& stack, const Tensor<T>& input, const char* name) {
        std::vector<Tensor<T>> gates;
        Tensor<T> out = stack.forward(input, gating ? &gates : nullptr);
        if (gating) {
            for (size_t i = 0; i < gates.size(); ++i) gating->push_back({name + std::string(".") + std::to_string(i), gates[i]});
        }
        return out;
    };

    InpaintOutput<T> out;
    out.coarse = run(coarse_, stage_input(known), "coarse");
    if (cfg_.use_refinement) {
        const Tensor<T> mixed = add(mul(out.coarse, hole3), known);
        out.refined = run(refine_, stage_input(mixed), "refine");
    } else {
        out.refined = out.coarse;
    }
    out.composited = add(mul(out.refined, hole3), known);
    return out;
}

template <typename T>
int64_t Generator<T>::parameter_count() const {
    return coarse_.parameter_count() + refine_.parameter_count();
}

template <typename T>
void Generator<T>::collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    coarse_.collect(out, prefix + ".coarse");
    if (cfg_.use_refinement) refine_.collect(out, prefix + ".refine");
}

template <typename T>
std::vector<GatingMap<T>> dump_gating(const Generator<T>& g, const Tensor<T>& image, const Tensor<T>& mask,
                                      const Tensor<T>& sketch) {
    std::vector<GatingMap<T>> maps;
    g.forward(image, mask, sketch, &maps);
    return maps;
}

std::vector<std::filesystem::path> write_gating_pngs(std::span<const GatingMap<float>> maps,
                                                     const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (const auto& map : maps) {
        const Shape s = map.gates.shape();
        const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(s.c))));
        const int rows = static_cast<int>((s.c + cols - 1) / cols);
        const int tile_w = static_cast<int>(s.w) + 1;
        const int tile_h = static_cast<int>(s.h) + 1;
        Image grid(cols * tile_w - 1, rows * tile_h - 1, 1);
        const auto v = map.gates.data();
        for (int64_t c = 0; c < s.c; ++c) {
            const int oy = static_cast<int>(c / cols) * tile_h;
            const int ox = static_cast<int>(c % cols) * tile_w;
            for (int64_t y = 0; y < s.h; ++y)
                for (int64_t x = 0; x < s.w; ++x) {
                    const float g = v[(c * s.h + y) * s.w + x];
                    grid.at(static_cast<int>(oy + y), static_cast<int>(ox + x), 0) =
                        static_cast<uint8_t>(std::lround(std::clamp(g, 0.0f, 1.0f) * 255.0f));
                }
        }
        auto path = dir / ("gating_" + map.layer + ".png");
        write_png(path, grid);
        written.push_back(path);
    }
    return written;
}

std::vector<int64_t> receptive_fields(std::span<const ConvGeometry> chain) {
    std::vector<int64_t> out;
    int64_t rf = 1;
    int64_t jump = 1;
    for (const auto& g : chain) {
        const int64_t k_eff = static_cast<int64_t>(g.dilation) * (std::max(g.kernel_h, g.kernel_w) - 1) + 1;
        rf += (k_eff - 1) * jump;
        jump *= g.stride;
        out.push_back(rf);
    }
    return out;
}

template struct GatedStack<float>;
template struct GatedStack<double>;
template class Generator<float>;
template class Generator<double>;
template std::vector<GatingMap<float>> dump_gating(const Generator<float>&, const Tensor<float>&,
                                                   const Tensor<float>&, const Tensor<float>&);
template std::vector<GatingMap<double>> dump_gating(const Generator<double>&, const Tensor<double>&,
                                                    const Tensor<double>&, const Tensor<double>&);

}  // namespace gatedfill
