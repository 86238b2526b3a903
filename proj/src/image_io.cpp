#include "gatedfill/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace gatedfill {

Image read_png(const std::filesystem::path& path, int channels) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("read_png: channels must be 1 or 3");
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw ImageIoError("cannot read PNG '" + path.string() + "': " + png.message);
    }
    png.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image image(static_cast<int>(png.width), static_cast<int>(png.height), channels);
    if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw ImageIoError("cannot decode PNG '" + path.string() + "': " + png.message);
    }
    return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw ImageIoError("cannot write PNG '" + path.string() + "': " + png.message);
    }
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
    const int64_t H = image.height, W = image.width, C = image.channels;
    std::vector<T> data(static_cast<size_t>(C * H * W));
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                data[(c * H + y) * W + x] = static_cast<T>(image.at(static_cast<int>(y), static_cast<int>(x),
                                                                    static_cast<int>(c))) /
                                            T(255);
    return Tensor<T>::from_data({1, C, H, W}, std::move(data));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int64_t index) {
    const Shape s = t.shape();
    if (s.c != 1 && s.c != 3) throw ShapeError("tensor_to_image: expects 1 or 3 channels, got " + s.str());
    if (index < 0 || index >= s.n) throw ShapeError("tensor_to_image: index out of range");
    Image image(static_cast<int>(s.w), static_cast<int>(s.h), static_cast<int>(s.c));
    const auto v = t.data();
    for (int64_t c = 0; c < s.c; ++c)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x) {
                const double u = std::clamp(static_cast<double>(v[((index * s.c + c) * s.h + y) * s.w + x]), 0.0, 1.0);
                image.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(c)) =
                    static_cast<uint8_t>(std::lround(u * 255.0));
            }
    return image;
}

Mask mask_from_image(const Image& image) {
    if (image.channels != 1) throw std::invalid_argument("mask_from_image: mask PNG must be single-channel");
    Mask mask(image.height, image.width);
    for (size_t i = 0; i < image.pixels.size(); ++i) mask.bits[i] = image.pixels[i] >= 128 ? 1 : 0;
    return mask;
}

Image mask_to_image(const Mask& mask) {
    Image image(mask.width, mask.height, 1);
    for (size_t i = 0; i < mask.bits.size(); ++i) image.pixels[i] = mask.bits[i] ? 255 : 0;
    return image;
}

Image sketch_to_image(const Tensor<float>& sketch, int64_t index) {
    return tensor_to_image(sketch, index);
}

template <typename T>
Tensor<T> sketch_from_image(const Image& image) {
    if (image.channels != 1) throw std::invalid_argument("sketch_from_image: sketch PNG must be single-channel");
    std::vector<T> data(image.pixels.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = image.pixels[i] >= 128 ? T(1) : T(0);
    return Tensor<T>::from_data({1, 1, image.height, image.width}, std::move(data));
}

template <typename T>
Tensor<T> to_network_range(const Tensor<T>& unit) {
    return add_scalar(mul_scalar(unit, T(2)), T(-1));
}

template <typename T>
Tensor<T> from_network_range(const Tensor<T>& net) {
    return mul_scalar(add_scalar(net, T(1)), T(0.5));
}

template Tensor<float> image_to_tensor(const Image&);
template Tensor<double> image_to_tensor(const Image&);
template Image tensor_to_image(const Tensor<float>&, int64_t);
template Image tensor_to_image(const Tensor<double>&, int64_t);
template Tensor<float> sketch_from_image(const Image&);
template Tensor<double> sketch_from_image(const Image&);
template Tensor<float> to_network_range(const Tensor<float>&);
template Tensor<double> to_network_range(const Tensor<double>&);
template Tensor<float> from_network_range(const Tensor<float>&);
template Tensor<double> from_network_range(const Tensor<double>&);

}  // namespace gatedfill
