#ifndef UDASEG_TESTS_ORACLES_HPP
#define UDASEG_TESTS_ORACLES_HPP

// Brute-force reference implementations, independent of the library's
// computation paths. Everything here favors clarity over speed: direct
// nested loops, no separable convolutions, no shared helpers.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "udaseg/core/rng.hpp"
#include "udaseg/core/tensor.hpp"
#include "udaseg/loss/ssim.hpp"

namespace oracles {

/// Direct per-window evaluation of SSIM = mean over windows and channels of
/// l^alpha * c^beta * s^gamma with Gaussian window weights.
inline double ssim_direct(const udaseg::Tensor& x, const udaseg::Tensor& y, const udaseg::SsimConfig& cfg) {
    const int64_t bsz = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int k = cfg.window_size;
    const int c0 = k / 2;

    std::vector<double> win(static_cast<size_t>(k) * k);
    double wsum = 0.0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double di = i - c0, dj = j - c0;
            const double v = std::exp(-di * di / (2.0 * cfg.window_sigma * cfg.window_sigma)) *
                             std::exp(-dj * dj / (2.0 * cfg.window_sigma * cfg.window_sigma));
            win[static_cast<size_t>(i) * k + j] = v;
            wsum += v;
        }
    }
    for (double& v : win) v /= wsum;

    double total = 0.0;
    int64_t windows = 0;
    for (int64_t b = 0; b < bsz; ++b) {
        for (int64_t c = 0; c < ch; ++c) {
            for (int64_t oy = 0; oy + k <= h; ++oy) {
                for (int64_t ox = 0; ox + k <= w; ++ox) {
                    double mx = 0.0, my = 0.0;
                    for (int i = 0; i < k; ++i) {
                        for (int j = 0; j < k; ++j) {
                            const double wv = win[static_cast<size_t>(i) * k + j];
                            mx += wv * x(b, c, oy + i, ox + j);
                            my += wv * y(b, c, oy + i, ox + j);
                        }
                    }
                    double vx = 0.0, vy = 0.0, cov = 0.0;
                    for (int i = 0; i < k; ++i) {
                        for (int j = 0; j < k; ++j) {
                            const double wv = win[static_cast<size_t>(i) * k + j];
                            const double dx = x(b, c, oy + i, ox + j) - mx;
                            const double dy = y(b, c, oy + i, ox + j) - my;
                            vx += wv * dx * dx;
                            vy += wv * dy * dy;
                            cov += wv * dx * dy;
                        }
                    }
                    const double sx = std::sqrt(std::max(vx, 0.0));
                    const double sy = std::sqrt(std::max(vy, 0.0));
                    const double l = (2.0 * mx * my + cfg.c1) / (mx * mx + my * my + cfg.c1);
                    const double cc = (2.0 * sx * sy + cfg.c2) / (vx + vy + cfg.c2);
                    const double ss = (cov + cfg.c3) / (sx * sy + cfg.c3);
                    const double sg = cfg.gamma == 1.0 ? ss
                                      : ss >= 0.0      ? std::pow(ss, cfg.gamma)
                                                       : -std::pow(-ss, cfg.gamma);
                    total += std::pow(l, cfg.alpha) * std::pow(cc, cfg.beta) * sg;
                    ++windows;
                }
            }
        }
    }
    return total / static_cast<double>(windows);
}

/// Monte-Carlo estimate of KL(Q || N(0,I)) for a diagonal Gaussian posterior,
/// averaged over the batch: E_q[log q(z) - log p(z)].
inline double kl_monte_carlo(const udaseg::Tensor& mu, const udaseg::Tensor& log_var, int samples, uint64_t seed) {
    udaseg::Rng rng(seed);
    const int64_t bsz = mu.dim(0), d = mu.dim(1);
    double total = 0.0;
    for (int64_t b = 0; b < bsz; ++b) {
        double acc = 0.0;
        for (int s = 0; s < samples; ++s) {
            for (int64_t j = 0; j < d; ++j) {
                const double lv = log_var(b, j);
                const double sd = std::exp(0.5 * lv);
                const double eps = rng.normal();
                const double z = mu(b, j) + sd * eps;
                // log q - log p, the 2*pi terms cancel.
                const double log_q = -0.5 * (lv + eps * eps);
                const double log_p = -0.5 * z * z;
                acc += log_q - log_p;
            }
        }
        total += acc / samples;
    }
    return total / static_cast<double>(bsz);
}

struct MaskCounts {
    int64_t inter = 0;  // |A and B|, counted directly
    int64_t uni = 0;    // |A or B|, counted directly
    int64_t a = 0;
    int64_t b = 0;
};

inline MaskCounts count_masks(const udaseg::Tensor& pred, const udaseg::Tensor& truth, int64_t item) {
    MaskCounts c;
    const int64_t n = pred.numel() / pred.dim(0);
    const double* p = pred.data() + item * n;
    const double* t = truth.data() + item * n;
    for (int64_t i = 0; i < n; ++i) {
        const bool vp = p[i] != 0.0;
        const bool vt = t[i] != 0.0;
        c.inter += vp && vt;
        c.uni += vp || vt;
        c.a += vp;
        c.b += vt;
    }
    return c;
}

inline double iou_from_counts(const MaskCounts& c) {
    if (c.uni == 0) return 1.0;
    return static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

inline double dsc_from_counts(const MaskCounts& c) {
    if (c.a + c.b == 0) return 1.0;
    return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.a + c.b);
}

/// DSC == 2 IoU / (1 + IoU) checked exactly on integers. With IoU = I/U
/// (union counted directly) and DSC = 2I/(|A|+|B|), cross-multiplying
/// 2I/(|A|+|B|) == 2I/(U+I) reduces to the integer equality below.
inline bool dice_iou_identity_exact(const MaskCounts& c) {
    if (c.uni == 0) return c.a + c.b == 0;  // both scores 1 by convention
    return 2 * c.inter * (c.uni + c.inter) == 2 * c.inter * (c.a + c.b);
}

/// Central-difference gradient check. `f` evaluates the scalar objective as a
/// function of the flattened input; `grad` is the analytic gradient. The
/// error of each coordinate is measured relative to max(|numeric|, |analytic|,
/// floor) where the default floor is 1e-3 of the gradient's largest entry, so
/// near-zero coordinates are judged on an absolute scale instead of drowning
/// in finite-difference noise.
inline double max_relative_grad_error(const std::function<double(const udaseg::Tensor&)>& f, udaseg::Tensor input,
                                      const udaseg::Tensor& grad, double step, double floor = -1.0) {
    if (floor < 0.0) floor = std::max(1e-3 * udaseg::max_abs(grad), 1e-10);
    double worst = 0.0;
    for (int64_t i = 0; i < input.numel(); ++i) {
        const double saved = input[i];
        input[i] = saved + step;
        const double fp = f(input);
        input[i] = saved - step;
        const double fm = f(input);
        input[i] = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::abs(numeric), std::abs(grad[i]), floor});
        worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
    }
    return worst;
}

} // namespace oracles

#endif // UDASEG_TESTS_ORACLES_HPP
