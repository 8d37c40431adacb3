#ifndef UDASEG_LOSS_LOSSES_HPP
#define UDASEG_LOSS_LOSSES_HPP

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "udaseg/core/tensor.hpp"
#include "udaseg/core/types.hpp"

namespace udaseg {

/// Named scalar results of a training step; component weights are echoed so
/// run manifests are self-contained.
struct LossReport {
    std::map<std::string, double> values;
    std::map<std::string, double> weights;

    void set(const std::string& name, double v) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("LossReport: non-finite value for '" + name + "' (" + describe() + ")");
        }
        values[name] = v;
    }

    double get(const std::string& name) const {
        const auto it = values.find(name);
        if (it == values.end()) throw std::out_of_range("LossReport: no value named '" + name + "'");
        return it->second;
    }

    std::string describe() const {
        std::string s;
        for (const auto& [k, v] : values) s += k + "=" + std::to_string(v) + " ";
        return s;
    }
};

/// KL(Q || N(0,I)) for a diagonal Gaussian, closed form, averaged over batch:
/// 0.5 * sum_d(mu_d^2 + sigma_d^2 - 1 - log sigma_d^2).
inline double kl_divergence(const GaussianPosterior& q) {
    q.validate();
    const int64_t b = q.batch(), d = q.latent_dim();
    double total = 0.0;
    for (int64_t i = 0; i < b; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            const double mu = q.mu(i, j);
            const double lv = q.log_var(i, j);
            total += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
        }
    }
    return total / static_cast<double>(b);
}

/// Gradients of kl_divergence with respect to mu and log_var.
inline void kl_divergence_grad(const GaussianPosterior& q, Tensor& d_mu, Tensor& d_log_var) {
    const int64_t b = q.batch(), d = q.latent_dim();
    d_mu = Tensor(q.mu.shape());
    d_log_var = Tensor(q.log_var.shape());
    const double inv_b = 1.0 / static_cast<double>(b);
    for (int64_t i = 0; i < b; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            d_mu(i, j) = q.mu(i, j) * inv_b;
            d_log_var(i, j) = 0.5 * (std::exp(q.log_var(i, j)) - 1.0) * inv_b;
        }
    }
}

/// Mean squared error over all elements.
inline double reconstruction_loss(const ImageBatch& x, const ImageBatch& x_hat) {
    check_same_shape(x, x_hat, "reconstruction_loss");
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double d = x[i] - x_hat[i];
        s += d * d;
    }
    return s / static_cast<double>(x.numel());
}

/// d reconstruction_loss / d x_hat.
inline Tensor reconstruction_loss_grad(const ImageBatch& x, const ImageBatch& x_hat) {
    check_same_shape(x, x_hat, "reconstruction_loss");
    Tensor g(x.shape());
    const double scale = 2.0 / static_cast<double>(x.numel());
    for (int64_t i = 0; i < x.numel(); ++i) g[i] = scale * (x_hat[i] - x[i]);
    return g;
}

using FeatureFn = std::function<Tensor(const ImageBatch&)>;

/// Mean squared difference between feature embeddings of the two images.
inline double perceptual_loss(const ImageBatch& x, const ImageBatch& x_hat, const FeatureFn& feature_fn) {
    const Tensor fx = feature_fn(x);
    const Tensor fy = feature_fn(x_hat);
    if (!fx.same_shape(fy)) {
        throw std::runtime_error("perceptual_loss: feature shapes differ (" + fx.shape_str() + " vs " + fy.shape_str() +
                                 "); feature_fn is not deterministic in shape");
    }
    double s = 0.0;
    for (int64_t i = 0; i < fx.numel(); ++i) {
        const double d = fx[i] - fy[i];
        s += d * d;
    }
    return s / static_cast<double>(fx.numel());
}

struct SegmentationLoss {
    double total = 0.0;
    double dice_part = 0.0;
    double bce_part = 0.0;
};

namespace loss_detail {

constexpr double kBceClamp = 1e-7;

inline void check_seg_inputs(const Tensor& pred, const Tensor& truth) {
    check_same_shape(pred, truth, "segmentation_loss");
    for (int64_t i = 0; i < truth.numel(); ++i) {
        if (truth[i] != 0.0 && truth[i] != 1.0) {
            throw std::invalid_argument("segmentation_loss: truth mask is not binary");
        }
    }
}

} // namespace loss_detail

/// Dice + binary cross-entropy on probability masks.
/// dice = 1 - (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth), sums taken
/// over the whole batch; BCE probabilities are clamped to [eps, 1-eps].
inline SegmentationLoss segmentation_loss(const Tensor& pred, const MaskBatch& truth, double smooth = 1.0) {
    loss_detail::check_seg_inputs(pred, truth);
    const int64_t n = pred.numel();
    double inter = 0.0, psum = 0.0, tsum = 0.0, bce = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double p = pred[i], t = truth[i];
        inter += p * t;
        psum += p;
        tsum += t;
        const double pc = std::min(1.0 - loss_detail::kBceClamp, std::max(loss_detail::kBceClamp, p));
        bce -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
    }
    SegmentationLoss out;
    out.dice_part = 1.0 - (2.0 * inter + smooth) / (psum + tsum + smooth);
    out.bce_part = bce / static_cast<double>(n);
    out.total = out.dice_part + out.bce_part;
    return out;
}

/// segmentation_loss plus its gradient with respect to pred.
inline SegmentationLoss segmentation_loss_value_and_grad(const Tensor& pred, const MaskBatch& truth, double smooth,
                                                         Tensor& d_pred) {
    loss_detail::check_seg_inputs(pred, truth);
    const int64_t n = pred.numel();
    double inter = 0.0, psum = 0.0, tsum = 0.0, bce = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        inter += pred[i] * truth[i];
        psum += pred[i];
        tsum += truth[i];
    }
    const double denom = psum + tsum + smooth;
    const double numer = 2.0 * inter + smooth;

    d_pred = Tensor(pred.shape());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
        const double p = pred[i], t = truth[i];
        const double pc = std::min(1.0 - loss_detail::kBceClamp, std::max(loss_detail::kBceClamp, p));
        bce -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
        // d dice / d p_i = -(2 t_i * denom - numer) / denom^2
        const double d_dice = -(2.0 * t * denom - numer) / (denom * denom);
        const double d_bce = (p > loss_detail::kBceClamp && p < 1.0 - loss_detail::kBceClamp)
                                 ? (pc - t) / (pc * (1.0 - pc)) * inv_n
                                 : 0.0;
        d_pred[i] = d_dice + d_bce;
    }
    SegmentationLoss out;
    out.dice_part = 1.0 - numer / denom;
    out.bce_part = bce * inv_n;
    out.total = out.dice_part + out.bce_part;
    return out;
}

} // namespace udaseg

#endif // UDASEG_LOSS_LOSSES_HPP
