#pragma once

#include "gatedfill/tensor.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace gatedfill {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One "GFT1" record: little-endian magic, u32 rank, rank x u32 dims,
/// u8 dtype tag (0 = f32), then row-major f32 payload.
struct TensorBlob {
    std::vector<uint32_t> dims;
    std::vector<float> values;

    uint64_t numel() const;
    friend bool operator==(const TensorBlob&, const TensorBlob&) = default;
};

void append_blob(std::vector<uint8_t>& out, const TensorBlob& blob);
/// Decodes the record at the start of `bytes`; `consumed` receives its length.
TensorBlob parse_blob(std::span<const uint8_t> bytes, size_t* consumed = nullptr);

template <typename T>
TensorBlob to_blob(const Tensor<T>& t);
template <typename T>
TensorBlob to_blob(std::span<const T> vector_values);

/// Rank <= 4 blobs load as tensors with leading extents of 1.
template <typename T>
Tensor<T> tensor_from_blob(const TensorBlob& blob, bool requires_grad = false);

}  // namespace gatedfill
