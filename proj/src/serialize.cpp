#include "gatedfill/serialize.hpp"

#include <bit>
#include <cstring>

namespace gatedfill {

namespace {

constexpr uint8_t kDtypeF32 = 0;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(std::span<const uint8_t> bytes, size_t at) {
    if (at + 4 > bytes.size()) throw FormatError("GFT1: truncated record");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[at + i]) << (8 * i);
    return v;
}

}  // namespace

uint64_t TensorBlob::numel() const {
    uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void append_blob(std::vector<uint8_t>& out, const TensorBlob& blob) {
    if (blob.numel() != blob.values.size()) throw FormatError("GFT1: dims do not match value count");
    out.insert(out.end(), {'G', 'F', 'T', '1'});
    put_u32(out, static_cast<uint32_t>(blob.dims.size()));
    for (auto d : blob.dims) put_u32(out, d);
    out.push_back(kDtypeF32);
    for (float v : blob.values) put_u32(out, std::bit_cast<uint32_t>(v));
}

TensorBlob parse_blob(std::span<const uint8_t> bytes, size_t* consumed) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "GFT1", 4) != 0) throw FormatError("GFT1: bad magic");
    size_t at = 4;
    const uint32_t rank = get_u32(bytes, at);
    at += 4;
    if (rank > 8) throw FormatError("GFT1: implausible rank " + std::to_string(rank));
    TensorBlob blob;
    for (uint32_t i = 0; i < rank; ++i, at += 4) blob.dims.push_back(get_u32(bytes, at));
    if (at >= bytes.size()) throw FormatError("GFT1: truncated record");
    if (bytes[at++] != kDtypeF32) throw FormatError("GFT1: unsupported dtype tag");
    const uint64_t n = blob.numel();
    if (at + n * 4 > bytes.size()) throw FormatError("GFT1: truncated payload");
    blob.values.resize(n);
    for (uint64_t i = 0; i < n; ++i, at += 4) blob.values[i] = std::bit_cast<float>(get_u32(bytes, at));
    if (consumed) *consumed = at;
    return blob;
}

template <typename T>
TensorBlob to_blob(const Tensor<T>& t) {
    const Shape& s = t.shape();
    TensorBlob blob;
    blob.dims = {static_cast<uint32_t>(s.n), static_cast<uint32_t>(s.c), static_cast<uint32_t>(s.h),
                 static_cast<uint32_t>(s.w)};
    blob.values.assign(t.data().begin(), t.data().end());
    return blob;
}

template <typename T>
TensorBlob to_blob(std::span<const T> vector_values) {
    TensorBlob blob;
    blob.dims = {static_cast<uint32_t>(vector_values.size())};
    blob.values.assign(vector_values.begin(), vector_values.end());
    return blob;
}

template <typename T>
Tensor<T> tensor_from_blob(const TensorBlob& blob, bool requires_grad) {
    if (blob.dims.size() > 4) throw FormatError("GFT1: rank > 4 cannot load as a tensor");
    int64_t ext[4] = {1, 1, 1, 1};
    const size_t lead = 4 - blob.dims.size();
    for (size_t i = 0; i < blob.dims.size(); ++i) ext[lead + i] = blob.dims[i];
    std::vector<T> data(blob.values.begin(), blob.values.end());
    return Tensor<T>::from_data({ext[0], ext[1], ext[2], ext[3]}, std::move(data), requires_grad);
}

template TensorBlob to_blob(const Tensor<float>&);
template TensorBlob to_blob(const Tensor<double>&);
template TensorBlob to_blob(std::span<const float>);
template TensorBlob to_blob(std::span<const double>);
template Tensor<float> tensor_from_blob(const TensorBlob&, bool);
template Tensor<double> tensor_from_blob(const TensorBlob&, bool);

}  // namespace gatedfill
