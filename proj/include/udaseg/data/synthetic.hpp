#ifndef UDASEG_DATA_SYNTHETIC_HPP
#define UDASEG_DATA_SYNTHETIC_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "udaseg/core/parallel.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/core/tensor.hpp"
#include "udaseg/data/dataset.hpp"

namespace udaseg {

/// Photometric rendering parameters of one domain.
struct StyleConfig {
    // Row-major 3x3 mixing matrix applied to the shared base RGB.
    std::array<double, 9> color_matrix = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    double gamma = 1.0;
    double texture_amplitude = 0.0;
    double noise_std = 0.0;

    void validate() const {
        for (double v : color_matrix) {
            if (!std::isfinite(v)) throw std::invalid_argument("StyleConfig: non-finite color matrix entry");
        }
        if (!std::isfinite(gamma) || gamma <= 0.0) throw std::invalid_argument("StyleConfig: gamma must be positive");
        if (!std::isfinite(texture_amplitude) || texture_amplitude < 0.0) {
            throw std::invalid_argument("StyleConfig: texture_amplitude must be >= 0");
        }
        if (!std::isfinite(noise_std) || noise_std < 0.0) {
            throw std::invalid_argument("StyleConfig: noise_std must be >= 0");
        }
    }

    bool operator==(const StyleConfig&) const = default;
};

/// Random smooth-blob mask family.
struct ShapeFamily {
    int min_blobs = 1;
    int max_blobs = 3;
    double min_radius = 0.15;  // relative to min(height, width)
    double max_radius = 0.30;
    double boundary_noise = 0.25;

    void validate() const {
        if (min_blobs < 1 || max_blobs < min_blobs) throw std::invalid_argument("ShapeFamily: bad blob count range");
        if (min_radius <= 0.0 || max_radius < min_radius || max_radius > 0.5) {
            throw std::invalid_argument("ShapeFamily: bad radius range");
        }
        if (boundary_noise < 0.0) throw std::invalid_argument("ShapeFamily: boundary_noise must be >= 0");
    }
};

struct SyntheticShiftConfig {
    int n_images = 200;
    int64_t height = 64;
    int64_t width = 64;
    ShapeFamily shape_family;
    StyleConfig source_style;
    StyleConfig target_style;
    uint64_t seed = 0;

    void validate() const {
        if (n_images < 1) throw std::invalid_argument("SyntheticShiftConfig: n_images must be >= 1");
        if (height < 8 || width < 8) throw std::invalid_argument("SyntheticShiftConfig: image size too small");
        shape_family.validate();
        source_style.validate();
        target_style.validate();
    }
};

namespace synth_detail {

struct Blob {
    double cx, cy, radius;
    std::array<double, 4> cos_amp;
    std::array<double, 4> sin_amp;
};

inline Tensor render_mask(const SyntheticShiftConfig& cfg, Rng& rng) {
    const int64_t h = cfg.height, w = cfg.width;
    const double scale = static_cast<double>(std::min(h, w));
    const int n_blobs = cfg.shape_family.min_blobs +
                        static_cast<int>(rng.uniform_int(
                            static_cast<uint64_t>(cfg.shape_family.max_blobs - cfg.shape_family.min_blobs + 1)));
    std::vector<Blob> blobs(static_cast<size_t>(n_blobs));
    for (auto& b : blobs) {
        b.cx = rng.uniform(0.25, 0.75) * static_cast<double>(w);
        b.cy = rng.uniform(0.25, 0.75) * static_cast<double>(h);
        b.radius = rng.uniform(cfg.shape_family.min_radius, cfg.shape_family.max_radius) * scale;
        for (int m = 0; m < 4; ++m) {
            const double s = cfg.shape_family.boundary_noise / static_cast<double>(m + 2);
            b.cos_amp[static_cast<size_t>(m)] = s * rng.normal();
            b.sin_amp[static_cast<size_t>(m)] = s * rng.normal();
        }
    }
    Tensor mask({1, h, w});
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            bool inside = false;
            for (const Blob& b : blobs) {
                const double dx = static_cast<double>(x) - b.cx;
                const double dy = static_cast<double>(y) - b.cy;
                const double rho = std::sqrt(dx * dx + dy * dy);
                if (rho > 1.6 * b.radius) continue;
                const double theta = std::atan2(dy, dx);
                double factor = 1.0;
                for (int m = 0; m < 4; ++m) {
                    factor += b.cos_amp[static_cast<size_t>(m)] * std::cos((m + 2) * theta) +
                              b.sin_amp[static_cast<size_t>(m)] * std::sin((m + 2) * theta);
                }
                factor = std::max(factor, 0.3);
                if (rho <= b.radius * factor) {
                    inside = true;
                    break;
                }
            }
            mask(0, y, x) = inside ? 1.0 : 0.0;
        }
    }
    return mask;
}

struct SineField {
    std::array<double, 3> fx, fy, phase;

    static SineField draw(Rng& rng) {
        SineField f;
        for (int j = 0; j < 3; ++j) {
            f.fx[static_cast<size_t>(j)] = rng.uniform(0.5, 2.5);
            f.fy[static_cast<size_t>(j)] = rng.uniform(0.5, 2.5);
            f.phase[static_cast<size_t>(j)] = rng.uniform(0.0, 6.283185307179586);
        }
        return f;
    }

    double at(double u, double v) const {
        double s = 0.0;
        for (int j = 0; j < 3; ++j) {
            s += std::sin(6.283185307179586 * (fx[static_cast<size_t>(j)] * u + fy[static_cast<size_t>(j)] * v) +
                          phase[static_cast<size_t>(j)]);
        }
        return s / 3.0;
    }
};

/// Per-image scene shared by both domains: mask, tinted base RGB, texture
/// field and pixel noise. Domains differ only through their StyleConfig.
struct Scene {
    Tensor mask;      // (1, H, W)
    Tensor base_rgb;  // (3, H, W)
    Tensor texture;   // (1, H, W)
    Tensor noise;     // (3, H, W)
};

inline Scene build_scene(const SyntheticShiftConfig& cfg, int index) {
    Rng shape_rng(combine_seed(cfg.seed, static_cast<uint64_t>(2 * index)));
    Rng render_rng(combine_seed(cfg.seed, static_cast<uint64_t>(2 * index + 1)));
    const int64_t h = cfg.height, w = cfg.width;

    Scene sc;
    sc.mask = render_mask(cfg, shape_rng);

    std::array<double, 3> fg = {0.78, 0.45, 0.40};
    std::array<double, 3> bg = {0.42, 0.58, 0.52};
    for (auto& v : fg) v += 0.05 * render_rng.normal();
    for (auto& v : bg) v += 0.05 * render_rng.normal();
    const SineField shade = SineField::draw(render_rng);
    const SineField tex = SineField::draw(render_rng);

    sc.base_rgb = Tensor({3, h, w});
    sc.texture = Tensor({1, h, w});
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / static_cast<double>(w);
            const double v = static_cast<double>(y) / static_cast<double>(h);
            const double s = 1.0 + 0.15 * shade.at(u, v);
            const auto& tint = sc.mask(0, y, x) > 0.5 ? fg : bg;
            for (int c = 0; c < 3; ++c) {
                sc.base_rgb(c, y, x) = std::clamp(tint[static_cast<size_t>(c)] * s, 0.0, 1.0);
            }
            sc.texture(0, y, x) = tex.at(u, v);
        }
    }
    sc.noise = Tensor({3, h, w});
    render_rng.fill_normal(sc.noise);
    return sc;
}

inline Tensor render_style(const Scene& sc, const StyleConfig& st) {
    const int64_t h = sc.base_rgb.dim(1), w = sc.base_rgb.dim(2);
    Tensor img({3, h, w});
    const auto& m = st.color_matrix;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const double r = sc.base_rgb(0, y, x), g = sc.base_rgb(1, y, x), b = sc.base_rgb(2, y, x);
            const std::array<double, 3> mixed = {m[0] * r + m[1] * g + m[2] * b, m[3] * r + m[4] * g + m[5] * b,
                                                 m[6] * r + m[7] * g + m[8] * b};
            for (int c = 0; c < 3; ++c) {
                double v = std::pow(std::clamp(mixed[static_cast<size_t>(c)], 0.0, 1.0), st.gamma);
                v += st.texture_amplitude * sc.texture(0, y, x);
                v += st.noise_std * sc.noise(c, y, x);
                if (!std::isfinite(v)) throw std::runtime_error("generate_synthetic_shift: style produced NaN");
                img(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return img;
}

inline std::string item_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "synth_%04d", index);
    return buf;
}

} // namespace synth_detail

/// Two photometric renderings of the same random scenes: source item i and
/// target item i share mask i bit-exactly. Fully determined by cfg.seed.
inline std::pair<DomainDataset, DomainDataset> generate_synthetic_shift(const SyntheticShiftConfig& cfg) {
    cfg.validate();
    DomainDataset source, target;
    source.tag = DomainTag::Source;
    target.tag = DomainTag::Target;
    source.name = "synthetic-source";
    target.name = "synthetic-target";
    source.height = target.height = cfg.height;
    source.width = target.width = cfg.width;
    source.items.resize(static_cast<size_t>(cfg.n_images));
    target.items.resize(static_cast<size_t>(cfg.n_images));

    parallel_for(cfg.n_images, [&](int64_t i) {
        const synth_detail::Scene sc = synth_detail::build_scene(cfg, static_cast<int>(i));
        DatasetItem& s = source.items[static_cast<size_t>(i)];
        DatasetItem& t = target.items[static_cast<size_t>(i)];
        s.name = t.name = synth_detail::item_name(static_cast<int>(i));
        s.mask = sc.mask;
        t.mask = sc.mask;
        s.image = synth_detail::render_style(sc, cfg.source_style);
        t.image = synth_detail::render_style(sc, cfg.target_style);
    });
    return {std::move(source), std::move(target)};
}

} // namespace udaseg

#endif // UDASEG_DATA_SYNTHETIC_HPP
