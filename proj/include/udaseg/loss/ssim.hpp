#ifndef UDASEG_LOSS_SSIM_HPP
#define UDASEG_LOSS_SSIM_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "udaseg/core/image_ops.hpp"
#include "udaseg/core/tensor.hpp"
#include "udaseg/core/types.hpp"

namespace udaseg {

/// Structural similarity = mean over Gaussian windows of
/// luminance^alpha * contrast^beta * structure^gamma.
struct SsimConfig {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    int window_size = 11;
    double window_sigma = 1.5;
    // Stabilizers for dynamic range 1: (0.01)^2, (0.03)^2, c2/2.
    double c1 = 1e-4;
    double c2 = 9e-4;
    double c3 = 4.5e-4;
    enum class ChannelPolicy { PerChannelMean, LuminanceOnly };
    ChannelPolicy channel_policy = ChannelPolicy::PerChannelMean;

    void validate() const {
        if (alpha <= 0.0 || beta <= 0.0 || gamma <= 0.0) {
            throw std::invalid_argument("SsimConfig: alpha, beta, gamma must be positive");
        }
        if (window_size < 3 || window_size % 2 == 0) {
            throw std::invalid_argument("SsimConfig: window_size must be odd and >= 3");
        }
        if (window_sigma <= 0.0) throw std::invalid_argument("SsimConfig: window_sigma must be positive");
        if (c1 <= 0.0 || c2 <= 0.0 || c3 <= 0.0) throw std::invalid_argument("SsimConfig: c1, c2, c3 must be positive");
    }
};

/// Per-window similarity maps, shape (batch, channels, Hv, Wv), plus the
/// scalar mean over windows, channels and batch.
struct SsimComponents {
    Tensor luminance;
    Tensor contrast;
    Tensor structure;
    double ssim = 0.0;
};

namespace ssim_detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<size_t>(size));
    const int c = size / 2;
    double s = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = static_cast<double>(i - c);
        k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        s += k[static_cast<size_t>(i)];
    }
    for (double& v : k) v /= s;
    return k;
}

/// Separable valid-mode correlation of an (H, W) plane with a 1D kernel in
/// both axes. out is (H-K+1) x (W-K+1).
inline void corr_valid(const double* in, int64_t h, int64_t w, const std::vector<double>& k, std::vector<double>& tmp,
                       double* out) {
    const int64_t kk = static_cast<int64_t>(k.size());
    const int64_t wv = w - kk + 1;
    const int64_t hv = h - kk + 1;
    tmp.resize(static_cast<size_t>(h * wv));
    for (int64_t y = 0; y < h; ++y) {
        const double* row = in + y * w;
        double* trow = tmp.data() + y * wv;
        for (int64_t x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int64_t i = 0; i < kk; ++i) s += k[static_cast<size_t>(i)] * row[x + i];
            trow[x] = s;
        }
    }
    for (int64_t y = 0; y < hv; ++y) {
        for (int64_t x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int64_t i = 0; i < kk; ++i) s += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>((y + i) * wv + x)];
            out[y * wv + x] = s;
        }
    }
}

/// Adjoint of corr_valid: scatter a (Hv, Wv) coefficient plane back to (H, W).
inline void corr_valid_adjoint(const double* in, int64_t h, int64_t w, const std::vector<double>& k,
                               std::vector<double>& tmp, double* out) {
    const int64_t kk = static_cast<int64_t>(k.size());
    const int64_t wv = w - kk + 1;
    const int64_t hv = h - kk + 1;
    tmp.assign(static_cast<size_t>(h * wv), 0.0);
    for (int64_t y = 0; y < hv; ++y) {
        const double* row = in + y * wv;
        for (int64_t i = 0; i < kk; ++i) {
            double* trow = tmp.data() + (y + i) * wv;
            const double kv = k[static_cast<size_t>(i)];
            for (int64_t x = 0; x < wv; ++x) trow[x] += kv * row[x];
        }
    }
    for (int64_t y = 0; y < h; ++y) {
        double* orow = out + y * w;
        for (int64_t x = 0; x < w; ++x) orow[x] = 0.0;
        const double* trow = tmp.data() + y * wv;
        for (int64_t x = 0; x < wv; ++x) {
            const double v = trow[x];
            for (int64_t i = 0; i < kk; ++i) orow[x + i] += k[static_cast<size_t>(i)] * v;
        }
    }
}

/// s^gamma extended to negative s as sign(s)*|s|^gamma (exact for gamma = 1).
inline double signed_pow(double s, double gamma) {
    if (gamma == 1.0) return s;
    return s >= 0.0 ? std::pow(s, gamma) : -std::pow(-s, gamma);
}

inline double signed_pow_derivative(double s, double gamma) {
    if (gamma == 1.0) return 1.0;
    const double a = std::max(std::abs(s), 1e-12);
    return gamma * std::pow(a, gamma - 1.0);
}

/// Effective (batch, channels, H, W) input under the channel policy.
inline Tensor effective_input(const ImageBatch& x, SsimConfig::ChannelPolicy policy) {
    if (policy == SsimConfig::ChannelPolicy::PerChannelMean || x.dim(1) == 1) return x;
    Tensor out({x.dim(0), 1, x.dim(2), x.dim(3)});
    for (int64_t b = 0; b < x.dim(0); ++b) out.set_item(b, to_grayscale(x.item(b)));
    return out;
}

} // namespace ssim_detail

/// SSIM between two image batches (same shape, values in [0, 1]).
inline SsimComponents ssim(const ImageBatch& x, const ImageBatch& x_hat, const SsimConfig& cfg = {}) {
    cfg.validate();
    if (x.rank() != 4) throw std::invalid_argument("ssim: (B,C,H,W) tensors required");
    check_same_shape(x, x_hat, "ssim");
    const int64_t h = x.dim(2), w = x.dim(3);
    if (cfg.window_size > h || cfg.window_size > w) {
        throw std::invalid_argument("ssim: window size " + std::to_string(cfg.window_size) +
                                    " exceeds image size " + x.shape_str());
    }
    const Tensor xe = ssim_detail::effective_input(x, cfg.channel_policy);
    const Tensor ye = ssim_detail::effective_input(x_hat, cfg.channel_policy);
    const int64_t bsz = xe.dim(0), ch = xe.dim(1);
    const int64_t hv = h - cfg.window_size + 1, wv = w - cfg.window_size + 1;
    const auto kernel = ssim_detail::gaussian_kernel(cfg.window_size, cfg.window_sigma);

    SsimComponents out;
    out.luminance = Tensor({bsz, ch, hv, wv});
    out.contrast = Tensor({bsz, ch, hv, wv});
    out.structure = Tensor({bsz, ch, hv, wv});

    const int64_t plane = h * w;
    const int64_t vplane = hv * wv;
    std::vector<double> tmp;
    std::vector<double> mu_x(static_cast<size_t>(vplane)), mu_y(static_cast<size_t>(vplane));
    std::vector<double> m2x(static_cast<size_t>(vplane)), m2y(static_cast<size_t>(vplane)), mxy(static_cast<size_t>(vplane));
    std::vector<double> sq(static_cast<size_t>(plane));

    double total = 0.0;
    for (int64_t b = 0; b < bsz; ++b) {
        for (int64_t c = 0; c < ch; ++c) {
            const double* xp = xe.data() + (b * ch + c) * plane;
            const double* yp = ye.data() + (b * ch + c) * plane;
            ssim_detail::corr_valid(xp, h, w, kernel, tmp, mu_x.data());
            ssim_detail::corr_valid(yp, h, w, kernel, tmp, mu_y.data());
            for (int64_t i = 0; i < plane; ++i) sq[static_cast<size_t>(i)] = xp[i] * xp[i];
            ssim_detail::corr_valid(sq.data(), h, w, kernel, tmp, m2x.data());
            for (int64_t i = 0; i < plane; ++i) sq[static_cast<size_t>(i)] = yp[i] * yp[i];
            ssim_detail::corr_valid(sq.data(), h, w, kernel, tmp, m2y.data());
            for (int64_t i = 0; i < plane; ++i) sq[static_cast<size_t>(i)] = xp[i] * yp[i];
            ssim_detail::corr_valid(sq.data(), h, w, kernel, tmp, mxy.data());

            double* lum = out.luminance.data() + (b * ch + c) * vplane;
            double* con = out.contrast.data() + (b * ch + c) * vplane;
            double* str = out.structure.data() + (b * ch + c) * vplane;
            for (int64_t i = 0; i < vplane; ++i) {
                const double mx = mu_x[static_cast<size_t>(i)], my = mu_y[static_cast<size_t>(i)];
                const double vx = std::max(m2x[static_cast<size_t>(i)] - mx * mx, 0.0);
                const double vy = std::max(m2y[static_cast<size_t>(i)] - my * my, 0.0);
                const double cov = mxy[static_cast<size_t>(i)] - mx * my;
                const double sx = std::sqrt(vx), sy = std::sqrt(vy);
                const double l = (2.0 * mx * my + cfg.c1) / (mx * mx + my * my + cfg.c1);
                const double cc = (2.0 * sx * sy + cfg.c2) / (vx + vy + cfg.c2);
                const double ss = (cov + cfg.c3) / (sx * sy + cfg.c3);
                lum[i] = l;
                con[i] = cc;
                str[i] = ss;
                total += std::pow(l, cfg.alpha) * std::pow(cc, cfg.beta) * ssim_detail::signed_pow(ss, cfg.gamma);
            }
        }
    }
    out.ssim = total / static_cast<double>(bsz * ch * vplane);
    return out;
}

/// L_ssim = 1 - SSIM; range [0, 2].
inline double ssim_loss(const ImageBatch& x, const ImageBatch& x_hat, const SsimConfig& cfg = {}) {
    return 1.0 - ssim(x, x_hat, cfg).ssim;
}

/// Value of L_ssim plus its analytic gradient with respect to x_hat.
/// Degenerate windows (zero variance) use a clamped sqrt derivative.
inline double ssim_loss_value_and_grad(const ImageBatch& x, const ImageBatch& x_hat, const SsimConfig& cfg,
                                       Tensor& dx_hat) {
    cfg.validate();
    if (x.rank() != 4) throw std::invalid_argument("ssim: (B,C,H,W) tensors required");
    check_same_shape(x, x_hat, "ssim");
    const int64_t h = x.dim(2), w = x.dim(3);
    if (cfg.window_size > h || cfg.window_size > w) {
        throw std::invalid_argument("ssim: window size exceeds image size");
    }
    const bool lum_only = cfg.channel_policy == SsimConfig::ChannelPolicy::LuminanceOnly && x.dim(1) > 1;
    const Tensor xe = ssim_detail::effective_input(x, cfg.channel_policy);
    const Tensor ye = ssim_detail::effective_input(x_hat, cfg.channel_policy);
    const int64_t bsz = xe.dim(0), ch = xe.dim(1);
    const int64_t hv = h - cfg.window_size + 1, wv = w - cfg.window_size + 1;
    const auto kernel = ssim_detail::gaussian_kernel(cfg.window_size, cfg.window_sigma);

    const int64_t plane = h * w;
    const int64_t vplane = hv * wv;
    std::vector<double> tmp;
    std::vector<double> mu_x(static_cast<size_t>(vplane)), mu_y(static_cast<size_t>(vplane));
    std::vector<double> m2x(static_cast<size_t>(vplane)), m2y(static_cast<size_t>(vplane)), mxy(static_cast<size_t>(vplane));
    std::vector<double> a1(static_cast<size_t>(vplane)), a2(static_cast<size_t>(vplane)), a3(static_cast<size_t>(vplane));
    std::vector<double> sq(static_cast<size_t>(plane));
    std::vector<double> scat(static_cast<size_t>(plane));

    Tensor de({bsz, ch, h, w});
    // d L_ssim / d ssim = -1; each window contributes with weight 1/(B*C*windows).
    const double gscale = -1.0 / static_cast<double>(bsz * ch * vplane);

    double total = 0.0;
    for (int64_t b = 0; b < bsz; ++b) {
        for (int64_t c = 0; c < ch; ++c) {
            const double* xp = xe.data() + (b * ch + c) * plane;
            const double* yp = ye.data() + (b * ch + c) * plane;
            double* dp = de.data() + (b * ch + c) * plane;
            ssim_detail::corr_valid(xp, h, w, kernel, tmp, mu_x.data());
            ssim_detail::corr_valid(yp, h, w, kernel, tmp, mu_y.data());
            for (int64_t i = 0; i < plane; ++i) sq[static_cast<size_t>(i)] = xp[i] * xp[i];
            ssim_detail::corr_valid(sq.data(), h, w, kernel, tmp, m2x.data());
            for (int64_t i = 0; i < plane; ++i) sq[static_cast<size_t>(i)] = yp[i] * yp[i];
            ssim_detail::corr_valid(sq.data(), h, w, kernel, tmp, m2y.data());
            for (int64_t i = 0; i < plane; ++i) sq[static_cast<size_t>(i)] = xp[i] * yp[i];
            ssim_detail::corr_valid(sq.data(), h, w, kernel, tmp, mxy.data());

            for (int64_t i = 0; i < vplane; ++i) {
                const double mx = mu_x[static_cast<size_t>(i)], my = mu_y[static_cast<size_t>(i)];
                const double vx = std::max(m2x[static_cast<size_t>(i)] - mx * mx, 0.0);
                const double vy = std::max(m2y[static_cast<size_t>(i)] - my * my, 0.0);
                const double cov = mxy[static_cast<size_t>(i)] - mx * my;
                const double sx = std::sqrt(vx), sy = std::sqrt(vy);

                const double dl = mx * mx + my * my + cfg.c1;
                const double nl = 2.0 * mx * my + cfg.c1;
                const double l = nl / dl;
                const double dc = vx + vy + cfg.c2;
                const double nc = 2.0 * sx * sy + cfg.c2;
                const double cc = nc / dc;
                const double ds = sx * sy + cfg.c3;
                const double ns = cov + cfg.c3;
                const double ss = ns / ds;

                const double la = std::pow(l, cfg.alpha);
                const double cb = std::pow(cc, cfg.beta);
                const double sg = ssim_detail::signed_pow(ss, cfg.gamma);
                total += la * cb * sg;

                const double dl_dmuy = (2.0 * mx * dl - nl * 2.0 * my) / (dl * dl);
                // c and s both depend on sigma_y; sigma_y^2 enters c's denominator directly.
                const double dc_dsy = 2.0 * sx / dc;      // through numerator
                const double dc_dvy = -nc / (dc * dc);    // through denominator
                const double ds_dsy = -ns * sx / (ds * ds);
                const double ds_dcov = 1.0 / ds;

                const double dF_dl = cfg.alpha * std::pow(l, cfg.alpha - 1.0) * cb * sg;
                const double dF_dc = cfg.beta * std::pow(cc, cfg.beta - 1.0) * la * sg;
                const double dF_ds = ssim_detail::signed_pow_derivative(ss, cfg.gamma) * la * cb;

                const double inv2sy = 0.5 / std::max(sy, 1e-12);
                // dF/d(mu_y), dF/d(sigma_y^2), dF/d(cov)
                const double dmuy = dF_dl * dl_dmuy;
                const double dvy = dF_dc * (dc_dsy * inv2sy + dc_dvy) + dF_ds * ds_dsy * inv2sy;
                const double dcov = dF_ds * ds_dcov;

                a1[static_cast<size_t>(i)] = gscale * (dmuy - dcov * mx - 2.0 * dvy * my);
                a2[static_cast<size_t>(i)] = gscale * 2.0 * dvy;
                a3[static_cast<size_t>(i)] = gscale * dcov;
            }

            // dy(q) = scat(a1)(q) + y(q) * scat(a2)(q) + x(q) * scat(a3)(q)
            // with the mu-dependent parts folded into a1 above:
            //   d(sigma_y^2)/dy = 2 w (y - mu_y), d(cov)/dy = w (x - mu_x),
            //   d(mu_y)/dy = w.
            ssim_detail::corr_valid_adjoint(a1.data(), h, w, kernel, tmp, scat.data());
            for (int64_t i = 0; i < plane; ++i) dp[i] = scat[static_cast<size_t>(i)];
            ssim_detail::corr_valid_adjoint(a2.data(), h, w, kernel, tmp, scat.data());
            for (int64_t i = 0; i < plane; ++i) dp[i] += yp[i] * scat[static_cast<size_t>(i)];
            ssim_detail::corr_valid_adjoint(a3.data(), h, w, kernel, tmp, scat.data());
            for (int64_t i = 0; i < plane; ++i) dp[i] += xp[i] * scat[static_cast<size_t>(i)];
        }
    }

    if (lum_only) {
        // Chain through the channel-mean grayscale conversion.
        dx_hat = Tensor(x_hat.shape());
        const int64_t cx = x_hat.dim(1);
        const double inv_c = 1.0 / static_cast<double>(cx);
        for (int64_t b = 0; b < bsz; ++b) {
            for (int64_t c = 0; c < cx; ++c) {
                double* dst = dx_hat.data() + (b * cx + c) * plane;
                const double* src = de.data() + b * plane;
                for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * inv_c;
            }
        }
    } else {
        dx_hat = std::move(de);
    }
    return 1.0 - total / static_cast<double>(bsz * ch * vplane);
}

} // namespace udaseg

#endif // UDASEG_LOSS_SSIM_HPP
