#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mmap {

// Dense 8-bit RGB image, row-major, channel-interleaved (h x w x 3).
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // size = height * width * 3

    ImageU8() = default;
    ImageU8(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0) {}

    std::uint8_t& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool operator==(const ImageU8& o) const = default;
};

// Dense double RGB image in the same layout. Pixel values keep the uint8
// scale [0, 255] until normalize_view maps them to encoder inputs.
struct ImageF64 {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    ImageF64() = default;
    ImageF64(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

ImageF64 to_f64(const ImageU8& img);

// Bilinear resample to out_h x out_w using half-pixel centers. Constant
// images stay constant under this convention.
ImageF64 resize_bilinear(const ImageF64& src, int out_h, int out_w);

// Axis-aligned crop; the window must lie inside the image.
ImageU8 crop(const ImageU8& src, int y0, int x0, int h, int w);
ImageF64 crop(const ImageF64& src, int y0, int x0, int h, int w);

// 8-bit RGB PNG round-trip (libpng). Deterministic: identical pixels
// produce byte-identical files.
void write_png(const std::filesystem::path& path, const ImageU8& img);
ImageU8 read_png(const std::filesystem::path& path);

}  // namespace mmap
