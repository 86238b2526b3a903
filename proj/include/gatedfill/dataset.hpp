#pragma once

#include "gatedfill/rng.hpp"
#include "gatedfill/tensor.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gatedfill {

/// Procedural stand-ins for natural images. `textures` mixes the other
/// three kinds with equal probability.
enum class SynthKind { gradient, two_region, constant, textures };

SynthKind synth_kind_from_string(const std::string& name);
const char* to_string(SynthKind kind);

struct SynthImage {
    SynthKind kind = SynthKind::constant;
    Tensor<float> image;   // (1, 3, s, s) in [0, 1]
    Tensor<float> sketch;  // (1, 1, s, s) binary; the region boundary for two_region
    std::array<float, 3> color_a{};  // gradient start corner / first region / the constant
    std::array<float, 3> color_b{};  // gradient end corner / second region
};

/// gradient: linear blend from color_a at a random corner to color_b at the
/// opposite corner. two_region: a straight line splits color_a from color_b.
/// constant: color_a everywhere.
SynthImage synth_image(SynthKind kind, int size, Rng& rng);

struct Batch {
    Tensor<float> images;    // (n, 3, s, s) in [0, 1]
    Tensor<float> sketches;  // (n, 1, s, s)
};

Batch synth_dataset(SynthKind kind, int n, int size, Rng& rng);

/// Concatenates tensors along the batch axis (values only, no tape).
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items);

/// Pairs `<name>.png` with an optional `<name>_sketch.png`; random square
/// crops of `size` pixels.
class ImageFolderDataset {
public:
    ImageFolderDataset(const std::filesystem::path& dir, int size);
    Batch sample(int n, Rng& rng) const;
    size_t size() const { return images_.size(); }

private:
    int size_;
    std::vector<Tensor<float>> images_;
    std::vector<Tensor<float>> sketches_;
};

}  // namespace gatedfill
