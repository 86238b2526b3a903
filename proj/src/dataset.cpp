#include "gatedfill/dataset.hpp"

#include "gatedfill/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gatedfill {

SynthKind synth_kind_from_string(const std::string& name) {
    for (auto k : {SynthKind::gradient, SynthKind::two_region, SynthKind::constant, SynthKind::textures}) {
        if (name == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown synthetic dataset kind '" + name + "'");
}

const char* to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::gradient: return "gradient";
        case SynthKind::two_region: return "two-region";
        case SynthKind::constant: return "constant";
        case SynthKind::textures: return "textures";
    }
    return "textures";
}

SynthImage synth_image(SynthKind kind, int size, Rng& rng) {
    if (size < 16) throw std::invalid_argument("synth_image: size must be >= 16");
    if (kind == SynthKind::textures) {
        constexpr SynthKind pick[] = {SynthKind::gradient, SynthKind::two_region, SynthKind::constant};
        kind = pick[rng.uniform_int(0, 2)];
    }
    SynthImage out;
    out.kind = kind;
    for (auto& c : out.color_a) c = static_cast<float>(rng.uniform());
    if (kind != SynthKind::constant) {
        for (auto& c : out.color_b) c = static_cast<float>(rng.uniform());
    } else {
        out.color_b = out.color_a;
    }

    const int64_t S = size;
    std::vector<float> rgb(static_cast<size_t>(3 * S * S));
    std::vector<float> sketch(static_cast<size_t>(S * S), 0.0f);
    auto set = [&](int64_t y, int64_t x, const std::array<float, 3>& c) {
        for (int64_t ch = 0; ch < 3; ++ch) rgb[(ch * S + y) * S + x] = c[ch];
    };

    switch (kind) {
        case SynthKind::constant:
            for (int64_t y = 0; y < S; ++y)
                for (int64_t x = 0; x < S; ++x) set(y, x, out.color_a);
            break;
        case SynthKind::gradient: {
            const bool mirror_x = rng.coin();
            const bool mirror_y = rng.coin();
            const float denom = static_cast<float>(S - 1);
            for (int64_t y = 0; y < S; ++y)
                for (int64_t x = 0; x < S; ++x) {
                    const float tx = static_cast<float>(mirror_x ? S - 1 - x : x) / denom;
                    const float ty = static_cast<float>(mirror_y ? S - 1 - y : y) / denom;
                    const float t = (tx + ty) / 2.0f;
                    std::array<float, 3> c;
                    for (int ch = 0; ch < 3; ++ch) c[ch] = std::lerp(out.color_a[ch], out.color_b[ch], t);
                    set(y, x, c);
                }
            break;
        }
        case SynthKind::two_region: {
            const double px = rng.uniform(0.25, 0.75) * S;
            const double py = rng.uniform(0.25, 0.75) * S;
            const double theta = rng.uniform(0.0, std::numbers::pi);
            const double nx = std::cos(theta);
            const double ny = std::sin(theta);
            for (int64_t y = 0; y < S; ++y)
                for (int64_t x = 0; x < S; ++x) {
                    const double d = (x + 0.5 - px) * nx + (y + 0.5 - py) * ny;
                    set(y, x, d < 0.0 ? out.color_a : out.color_b);
                    if (std::abs(d) <= 0.5) sketch[y * S + x] = 1.0f;
                }
            break;
        }
        case SynthKind::textures: break;
    }
    out.image = Tensor<float>::from_data({1, 3, S, S}, std::move(rgb));
    out.sketch = Tensor<float>::from_data({1, 1, S, S}, std::move(sketch));
    return out;
}

template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
    if (items.empty()) throw ShapeError("stack_batch: nothing to stack");
    Shape s = items[0].shape();
    std::vector<T> data;
    int64_t n = 0;
    for (const auto& t : items) {
        const Shape ts = t.shape();
        if (ts.c != s.c || ts.h != s.h || ts.w != s.w) {
            throw ShapeError("stack_batch: " + ts.str() + " does not match " + s.str());
        }
        data.insert(data.end(), t.data().begin(), t.data().end());
        n += ts.n;
    }
    s.n = n;
    return Tensor<T>::from_data(s, std::move(data));
}

template Tensor<float> stack_batch(std::span<const Tensor<float>>);
template Tensor<double> stack_batch(std::span<const Tensor<double>>);

Batch synth_dataset(SynthKind kind, int n, int size, Rng& rng) {
    if (n <= 0) throw std::invalid_argument("synth_dataset: n must be positive");
    std::vector<Tensor<float>> images;
    std::vector<Tensor<float>> sketches;
    for (int i = 0; i < n; ++i) {
        auto img = synth_image(kind, size, rng);
        images.push_back(img.image);
        sketches.push_back(img.sketch);
    }
    return {stack_batch<float>(images), stack_batch<float>(sketches)};
}

ImageFolderDataset::ImageFolderDataset(const std::filesystem::path& dir, int size) : size_(size) {
    if (!std::filesystem::is_directory(dir)) throw ImageIoError("image folder '" + dir.string() + "' not found");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto& p = entry.path();
        if (p.extension() != ".png") continue;
        if (p.stem().string().ends_with("_sketch")) continue;
        files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        const Image img = read_png(p, 3);
        if (img.width < size || img.height < size) continue;
        images_.push_back(image_to_tensor<float>(img));
        auto sketch_path = p.parent_path() / (p.stem().string() + "_sketch.png");
        if (std::filesystem::exists(sketch_path)) {
            sketches_.push_back(sketch_from_image<float>(read_png(sketch_path, 1)));
        } else {
            sketches_.push_back(Tensor<float>::zeros({1, 1, img.height, img.width}));
        }
    }
    if (images_.empty()) {
        throw ImageIoError("image folder '" + dir.string() + "' has no PNG of at least " + std::to_string(size) + " px");
    }
}

Batch ImageFolderDataset::sample(int n, Rng& rng) const {
    std::vector<Tensor<float>> images;
    std::vector<Tensor<float>> sketches;
    const int64_t S = size_;
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(images_.size()) - 1));
        const Shape s = images_[k].shape();
        const int64_t top = rng.uniform_int(0, s.h - S);
        const int64_t left = rng.uniform_int(0, s.w - S);
        std::vector<float> rgb(static_cast<size_t>(3 * S * S));
        std::vector<float> sk(static_cast<size_t>(S * S));
        for (int64_t y = 0; y < S; ++y)
            for (int64_t x = 0; x < S; ++x) {
                for (int64_t c = 0; c < 3; ++c) rgb[(c * S + y) * S + x] = images_[k].at(0, c, top + y, left + x);
                sk[y * S + x] = sketches_[k].at(0, 0, top + y, left + x);
            }
        images.push_back(Tensor<float>::from_data({1, 3, S, S}, std::move(rgb)));
        sketches.push_back(Tensor<float>::from_data({1, 1, S, S}, std::move(sk)));
    }
    return {stack_batch<float>(images), stack_batch<float>(sketches)};
}

}  // namespace gatedfill
