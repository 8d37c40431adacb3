#ifndef UDASEG_IO_PNG_IO_HPP
#define UDASEG_IO_PNG_IO_HPP

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "udaseg/core/tensor.hpp"

namespace udaseg {

namespace detail {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
} // namespace detail

/// Read a PNG file as a (C, H, W) tensor in [0, 1]. `channels` must be 1
/// (grayscale, alpha dropped, color converted) or 3 (RGB, gray expanded).
inline Tensor read_png(const std::string& path, int channels) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("read_png: channels must be 1 or 3");
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_png: cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw std::runtime_error("read_png: not a PNG file: " + path);
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("read_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("read_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: corrupt or unreadable file: " + path);
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color_type = png_get_color_type(png, info);
    const png_byte bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (channels == 3) {
        if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_set_gray_to_rgb(png);
        }
    } else {
        if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
            color_type == PNG_COLOR_TYPE_PALETTE) {
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        }
    }
    png_read_update_info(png, info);

    const size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> raster(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raster.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const int out_c = channels;
    if (rowbytes < static_cast<size_t>(w) * static_cast<size_t>(out_c)) {
        throw std::runtime_error("read_png: unexpected row layout in " + path);
    }
    Tensor out({out_c, static_cast<int64_t>(h), static_cast<int64_t>(w)});
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_bytep row = rows[y];
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < out_c; ++c) {
                out(c, y, x) = static_cast<double>(row[x * out_c + c]) / 255.0;
            }
        }
    }
    return out;
}

/// Write a (C, H, W) tensor in [0, 1] as an 8-bit PNG (C = 1 gray, C = 3 RGB).
inline void write_png(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) {
        throw std::invalid_argument("write_png: (1|3, H, W) tensor required");
    }
    const int c = static_cast<int>(img.dim(0));
    const int64_t h = img.dim(1), w = img.dim(2);

    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png: cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("write_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: failed writing " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(w) * c);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                const double v = std::min(1.0, std::max(0.0, img(ch, y, x)));
                row[static_cast<size_t>(x) * c + ch] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace udaseg

#endif // UDASEG_IO_PNG_IO_HPP
