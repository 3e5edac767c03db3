#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace occsplat {

// Row-major interleaved RGB image, values nominally in [0, 1].
struct Image3 {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // size height*width*3

    Image3() = default;
    Image3(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

    double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    size_t size() const { return data.size(); }
};

// Row-major single-channel image of doubles.
struct Image1 {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image1() = default;
    Image1(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
};

// Binary mask, values in {0, 1}. 1 = foreground.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t count() const;
    bool same_dims(const Mask& o) const { return height == o.height && width == o.width; }
};

// PNG I/O. Color images are 8-bit RGB, masks and alpha images 8-bit
// grayscale. Doubles are clamped to [0,1] and rounded on write; masks
// are written 0/255 and thresholded at 128 on read.
void write_png_rgb(const std::string& path, const Image3& img);
void write_png_gray(const std::string& path, const Image1& img);
void write_png_mask(const std::string& path, const Mask& mask);
Image3 read_png_rgb(const std::string& path);
Mask read_png_mask(const std::string& path);

}  // namespace occsplat
