#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace agg {

/// Straight-alpha RGBA image, row-major, values in [0,1].
struct ImageRGBA {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;    // height * width * 3
    std::vector<double> alpha;  // height * width

    ImageRGBA() = default;
    ImageRGBA(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0),
                              alpha(static_cast<std::size_t>(w) * h, 0.0) {}

    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    double& r(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double r(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double& a(int x, int y) { return alpha[static_cast<std::size_t>(y) * width + x]; }
    double a(int x, int y) const { return alpha[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const ImageRGBA&, const ImageRGBA&) = default;
};

/// 8-bit RGBA PNG, straight alpha.
void write_png(const ImageRGBA& image, const std::filesystem::path& path);

/// Reads 8-bit gray/RGB/RGBA PNGs; images without alpha get alpha = 1.
ImageRGBA read_png(const std::filesystem::path& path);

/// Resamples to size x size: area average when the source is an integer
/// multiple of `size`, nearest neighbour otherwise.
ImageRGBA resize_image(const ImageRGBA& image, int size);

}  // namespace agg
