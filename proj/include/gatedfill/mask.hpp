#pragma once

#include "gatedfill/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gatedfill {

/// Single-channel binary map: 1 = valid pixel, 0 = hole.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> bits;

    Mask() = default;
    Mask(int h, int w, uint8_t fill = 1);

    uint8_t at(int y, int x) const { return bits[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int y, int x) { return bits[static_cast<size_t>(y) * width + x]; }
    bool valid(int y, int x) const { return at(y, x) != 0; }
    int64_t hole_count() const;
    bool all_valid() const { return hole_count() == 0; }

    friend bool operator==(const Mask&, const Mask&) = default;
};

/// Stacks masks into a (n, 1, h, w) tensor holding 1 for valid pixels.
template <typename T>
Tensor<T> mask_tensor(std::span<const Mask> masks);

/// Item `index` of a (n, 1, h, w) tensor; throws if any value is not 0 or 1.
template <typename T>
Mask mask_from_tensor(const Tensor<T>& t, int64_t index = 0);

/// Throws ShapeError unless every value is exactly 0 or 1.
template <typename T>
void require_binary(const Tensor<T>& t, const char* context);

}  // namespace gatedfill
