#ifndef UDASEG_METRICS_MASKS_HPP
#define UDASEG_METRICS_MASKS_HPP

#include <stdexcept>

#include "udaseg/core/tensor.hpp"
#include "udaseg/core/types.hpp"

namespace udaseg {

namespace metrics_detail {

inline void check_binary(const Tensor& m, const char* what) {
    for (int64_t i = 0; i < m.numel(); ++i) {
        if (m[i] != 0.0 && m[i] != 1.0) throw std::invalid_argument(std::string(what) + ": mask is not binary");
    }
}

struct Counts {
    int64_t inter = 0;
    int64_t a = 0;
    int64_t b = 0;
};

inline Counts count_plane(const double* pa, const double* pb, int64_t n) {
    Counts c;
    for (int64_t i = 0; i < n; ++i) {
        const bool va = pa[i] != 0.0;
        const bool vb = pb[i] != 0.0;
        c.inter += va && vb;
        c.a += va;
        c.b += vb;
    }
    return c;
}

/// Per-image scores averaged over the batch. fn maps counts to a score;
/// both masks empty scores 1 by convention.
template <typename Fn>
double batch_mean_score(const MaskBatch& pred, const MaskBatch& truth, const char* what, Fn fn) {
    check_same_shape(pred, truth, what);
    check_binary(pred, what);
    check_binary(truth, what);
    if (pred.rank() != 4) throw std::invalid_argument(std::string(what) + ": (B,1,H,W) masks required");
    const int64_t bsz = pred.dim(0);
    const int64_t n = pred.numel() / bsz;
    double total = 0.0;
    for (int64_t b = 0; b < bsz; ++b) {
        const Counts c = count_plane(pred.data() + b * n, truth.data() + b * n, n);
        total += (c.a == 0 && c.b == 0) ? 1.0 : fn(c);
    }
    return total / static_cast<double>(bsz);
}

} // namespace metrics_detail

/// Intersection-over-union between binary masks, averaged over batch images.
inline double iou(const MaskBatch& pred, const MaskBatch& truth) {
    return metrics_detail::batch_mean_score(pred, truth, "iou", [](const metrics_detail::Counts& c) {
        return static_cast<double>(c.inter) / static_cast<double>(c.a + c.b - c.inter);
    });
}

/// Dice similarity coefficient between binary masks, averaged over batch images.
inline double dsc(const MaskBatch& pred, const MaskBatch& truth) {
    return metrics_detail::batch_mean_score(pred, truth, "dsc", [](const metrics_detail::Counts& c) {
        return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.a + c.b);
    });
}

/// Binarize a probability map at threshold t in (0,1): 1 where p >= t.
inline MaskBatch threshold(const Tensor& prob, double t) {
    if (t <= 0.0 || t >= 1.0) throw std::invalid_argument("threshold: t must lie in (0,1)");
    MaskBatch out(prob.shape());
    for (int64_t i = 0; i < prob.numel(); ++i) out[i] = prob[i] >= t ? 1.0 : 0.0;
    return out;
}

} // namespace udaseg

#endif // UDASEG_METRICS_MASKS_HPP
