#include "gatedfill/mask.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace gatedfill {

Mask::Mask(int h, int w, uint8_t fill) : height(h), width(w), bits(static_cast<size_t>(h) * w, fill ? 1 : 0) {
    if (h < 0 || w < 0) throw std::invalid_argument("Mask: negative extent");
}

int64_t Mask::hole_count() const {
    return std::count(bits.begin(), bits.end(), uint8_t{0});
}

template <typename T>
Tensor<T> mask_tensor(std::span<const Mask> masks) {
    if (masks.empty()) throw ShapeError("mask_tensor: no masks");
    const int h = masks[0].height;
    const int w = masks[0].width;
    std::vector<T> data;
    data.reserve(masks.size() * static_cast<size_t>(h) * w);
    for (const auto& m : masks) {
        if (m.height != h || m.width != w) throw ShapeError("mask_tensor: masks differ in size");
        for (auto b : m.bits) data.push_back(b ? T(1) : T(0));
    }
    return Tensor<T>::from_data({static_cast<int64_t>(masks.size()), 1, h, w}, std::move(data));
}

template <typename T>
void require_binary(const Tensor<T>& t, const char* context) {
    for (T v : t.data()) {
        if (v != T(0) && v != T(1)) {
            throw ShapeError(std::string(context) + ": mask must be binary, found value " + std::to_string(v));
        }
    }
}

template <typename T>
Mask mask_from_tensor(const Tensor<T>& t, int64_t index) {
    const Shape& s = t.shape();
    if (s.c != 1 || index < 0 || index >= s.n) throw ShapeError("mask_from_tensor: bad shape " + s.str());
    Mask m(static_cast<int>(s.h), static_cast<int>(s.w));
    auto src = t.data().subspan(index * s.plane(), s.plane());
    for (size_t i = 0; i < src.size(); ++i) {
        if (src[i] != T(0) && src[i] != T(1)) throw ShapeError("mask_from_tensor: non-binary value");
        m.bits[i] = src[i] == T(1) ? 1 : 0;
    }
    return m;
}

template Tensor<float> mask_tensor(std::span<const Mask>);
template Tensor<double> mask_tensor(std::span<const Mask>);
template Mask mask_from_tensor(const Tensor<float>&, int64_t);
template Mask mask_from_tensor(const Tensor<double>&, int64_t);
template void require_binary(const Tensor<float>&, const char*);
template void require_binary(const Tensor<double>&, const char*);

}  // namespace gatedfill
