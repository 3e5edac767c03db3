#include "occsplat/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace occsplat {

size_t Mask::count() const {
    return static_cast<size_t>(std::accumulate(data.begin(), data.end(), size_t{0}));
}

namespace {

std::uint8_t to_u8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void write_png(const std::string& path, int h, int w, int fmt, const std::uint8_t* bytes) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = static_cast<png_uint_32>(fmt);
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes, 0, nullptr))
        throw std::runtime_error("failed to write PNG '" + path + "': " + img.message);
}

}  // namespace

void write_png_rgb(const std::string& path, const Image3& img) {
    std::vector<std::uint8_t> bytes(img.size());
    for (size_t i = 0; i < img.size(); ++i) bytes[i] = to_u8(img.data[i]);
    write_png(path, img.height, img.width, PNG_FORMAT_RGB, bytes.data());
}

void write_png_gray(const std::string& path, const Image1& img) {
    std::vector<std::uint8_t> bytes(img.size());
    for (size_t i = 0; i < img.size(); ++i) bytes[i] = to_u8(img.data[i]);
    write_png(path, img.height, img.width, PNG_FORMAT_GRAY, bytes.data());
}

void write_png_mask(const std::string& path, const Mask& mask) {
    std::vector<std::uint8_t> bytes(mask.data.size());
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
    write_png(path, mask.height, mask.width, PNG_FORMAT_GRAY, bytes.data());
}

Image3 read_png_rgb(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw std::runtime_error("failed to read PNG '" + path + "': " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr))
        throw std::runtime_error("failed to decode PNG '" + path + "': " + img.message);
    Image3 out(static_cast<int>(img.height), static_cast<int>(img.width));
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = bytes[i] / 255.0;
    return out;
}

Mask read_png_mask(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw std::runtime_error("failed to read PNG '" + path + "': " + img.message);
    img.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr))
        throw std::runtime_error("failed to decode PNG '" + path + "': " + img.message);
    Mask out(static_cast<int>(img.height), static_cast<int>(img.width));
    for (size_t i = 0; i < bytes.size(); ++i) out.data[i] = bytes[i] >= 128 ? 1 : 0;
    return out;
}

}  // namespace occsplat
