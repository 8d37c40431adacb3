#ifndef UDASEG_CORE_IMAGE_OPS_HPP
#define UDASEG_CORE_IMAGE_OPS_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "udaseg/core/tensor.hpp"

namespace udaseg {

/// Bilinear resize of a (C, H, W) image. Sample positions use pixel-center
/// alignment; an identity resize returns the input values exactly.
inline Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w) {
    if (img.rank() != 3) throw std::invalid_argument("resize_bilinear: (C,H,W) tensor required");
    const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bilinear: output size must be positive");
    if (out_h == h && out_w == w) return img;
    Tensor out({c, out_h, out_w});
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < out_h; ++y) {
            const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
            const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fy)), 0, h - 1);
            const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
            const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
            for (int64_t x = 0; x < out_w; ++x) {
                const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
                const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fx)), 0, w - 1);
                const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
                const double wx = std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
                const double top = img(ch, y0, x0) * (1.0 - wx) + img(ch, y0, x1) * wx;
                const double bot = img(ch, y1, x0) * (1.0 - wx) + img(ch, y1, x1) * wx;
                out(ch, y, x) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

/// Nearest-neighbor resize of a (C, H, W) image; used for masks.
inline Tensor resize_nearest(const Tensor& img, int64_t out_h, int64_t out_w) {
    if (img.rank() != 3) throw std::invalid_argument("resize_nearest: (C,H,W) tensor required");
    const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_nearest: output size must be positive");
    if (out_h == h && out_w == w) return img;
    Tensor out({c, out_h, out_w});
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < out_h; ++y) {
            const int64_t src_y = std::min<int64_t>(static_cast<int64_t>((static_cast<double>(y) + 0.5) * sy), h - 1);
            for (int64_t x = 0; x < out_w; ++x) {
                const int64_t src_x = std::min<int64_t>(static_cast<int64_t>((static_cast<double>(x) + 0.5) * sx), w - 1);
                out(ch, y, x) = img(ch, src_y, src_x);
            }
        }
    }
    return out;
}

/// Channel-mean grayscale of a (C, H, W) image, shape (1, H, W).
inline Tensor to_grayscale(const Tensor& img) {
    if (img.rank() != 3) throw std::invalid_argument("to_grayscale: (C,H,W) tensor required");
    const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (c == 1) return img;
    Tensor out({1, h, w});
    const double inv_c = 1.0 / static_cast<double>(c);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) s += img(ch, y, x);
            out(0, y, x) = s * inv_c;
        }
    }
    return out;
}

/// Sobel gradient-magnitude edge map of a (C, H, W) image in [0, 1]:
/// grayscale conversion, 3x3 Sobel with replicate border padding, magnitude
/// normalized by its theoretical maximum 4*sqrt(2) so outputs lie in [0, 1].
/// Constant images map to an identically zero edge map.
inline Tensor sobel_edge_map(const Tensor& img) {
    const Tensor g = to_grayscale(img);
    const int64_t h = g.dim(1), w = g.dim(2);
    Tensor out({1, h, w});
    auto at = [&](int64_t y, int64_t x) {
        y = std::clamp<int64_t>(y, 0, h - 1);
        x = std::clamp<int64_t>(x, 0, w - 1);
        return g(0, y, x);
    };
    const double norm = 1.0 / (4.0 * std::sqrt(2.0));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            // Grouped as differences so a constant image yields exactly zero.
            const double gx = (at(y - 1, x + 1) - at(y - 1, x - 1)) + 2.0 * (at(y, x + 1) - at(y, x - 1)) +
                              (at(y + 1, x + 1) - at(y + 1, x - 1));
            const double gy = (at(y + 1, x - 1) - at(y - 1, x - 1)) + 2.0 * (at(y + 1, x) - at(y - 1, x)) +
                              (at(y + 1, x + 1) - at(y - 1, x + 1));
            out(0, y, x) = std::min(1.0, std::sqrt(gx * gx + gy * gy) * norm);
        }
    }
    return out;
}

/// 2x2 average pooling applied `times` times to a (C, H, W) map.
inline Tensor avg_pool2x2_repeated(const Tensor& img, int times) {
    Tensor cur = img;
    for (int t = 0; t < times; ++t) {
        const int64_t c = cur.dim(0), h = cur.dim(1), w = cur.dim(2);
        if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("avg_pool2x2_repeated: odd spatial size");
        Tensor next({c, h / 2, w / 2});
        for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t y = 0; y < h / 2; ++y) {
                for (int64_t x = 0; x < w / 2; ++x) {
                    next(ch, y, x) = 0.25 * (cur(ch, 2 * y, 2 * x) + cur(ch, 2 * y, 2 * x + 1) +
                                             cur(ch, 2 * y + 1, 2 * x) + cur(ch, 2 * y + 1, 2 * x + 1));
                }
            }
        }
        cur = std::move(next);
    }
    return cur;
}

} // namespace udaseg

#endif // UDASEG_CORE_IMAGE_OPS_HPP
