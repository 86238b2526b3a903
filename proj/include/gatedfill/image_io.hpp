#pragma once

#include "gatedfill/mask.hpp"
#include "gatedfill/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace gatedfill {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8-bit interleaved (row, column, channel) pixels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> pixels;

    Image() = default;
    Image(int w, int h, int c, uint8_t fill = 0)
        : width(w), height(h), channels(c), pixels(static_cast<size_t>(w) * h * c, fill) {}

    uint8_t at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
    uint8_t& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
    friend bool operator==(const Image&, const Image&) = default;
};

/// Decodes any PNG and converts it to `channels` (1 = gray, 3 = RGB).
Image read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Image& image);

/// (1, c, h, w) tensor with values v / 255.
template <typename T>
Tensor<T> image_to_tensor(const Image& image);
/// Item `index` of a tensor in [0, 1]; values are clamped and rounded.
template <typename T>
Image tensor_to_image(const Tensor<T>& t, int64_t index = 0);

/// Gray values >= 128 are valid (1), anything lower is a hole (0).
Mask mask_from_image(const Image& image);
/// 255 = valid, 0 = hole.
Image mask_to_image(const Mask& mask);
Image sketch_to_image(const Tensor<float>& sketch, int64_t index = 0);
/// Binary sketch: gray >= 128 becomes 1.
template <typename T>
Tensor<T> sketch_from_image(const Image& image);

/// [0, 1] -> [-1, 1] by 2v - 1, and back.
template <typename T>
Tensor<T> to_network_range(const Tensor<T>& unit);
template <typename T>
Tensor<T> from_network_range(const Tensor<T>& net);

}  // namespace gatedfill
