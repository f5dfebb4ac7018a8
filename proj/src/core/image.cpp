#include "agg/image.hpp"

#include "agg/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace agg {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace

void write_png(const ImageRGBA& image, const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw Error(ErrorCode::IoError, "cannot open " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoError, "libpng init failed");
    }
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 4);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoError, "libpng write failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) row[x * 4 + c] = to_byte(image.r(x, y, c));
            row[x * 4 + 3] = to_byte(image.a(x, y));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageRGBA read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw Error(ErrorCode::IoError, "cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::IoError, "libpng init failed");
    }
    ImageRGBA image;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::IoError, "not a readable PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    const png_byte color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (!(color_type & PNG_COLOR_MASK_ALPHA) && !png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_filler(png, 0xFF, PNG_FILLER_AFTER);
    }
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    buffer.resize(static_cast<std::size_t>(w) * h * 4);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * w * 4;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    image = ImageRGBA(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const unsigned char* px = rows[y] + x * 4;
            for (int c = 0; c < 3; ++c) image.r(x, y, c) = px[c] / 255.0;
            image.a(x, y) = px[3] / 255.0;
        }
    }
    return image;
}

ImageRGBA resize_image(const ImageRGBA& image, int size) {
    if (image.width == size && image.height == size) return image;
    ImageRGBA out(size, size);
    const bool area = image.width == image.height && image.width % size == 0;
    const int f = area ? image.width / size : 1;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            if (area) {
                double acc[4] = {0, 0, 0, 0};
                for (int dy = 0; dy < f; ++dy) {
                    for (int dx = 0; dx < f; ++dx) {
                        for (int c = 0; c < 3; ++c) acc[c] += image.r(x * f + dx, y * f + dy, c);
                        acc[3] += image.a(x * f + dx, y * f + dy);
                    }
                }
                const double inv = 1.0 / (f * f);
                for (int c = 0; c < 3; ++c) out.r(x, y, c) = acc[c] * inv;
                out.a(x, y) = acc[3] * inv;
            } else {
                const int sx = std::min(image.width - 1, x * image.width / size);
                const int sy = std::min(image.height - 1, y * image.height / size);
                for (int c = 0; c < 3; ++c) out.r(x, y, c) = image.r(sx, sy, c);
                out.a(x, y) = image.a(sx, sy);
            }
        }
    }
    return out;
}

}  // namespace agg
