#ifndef UDASEG_CORE_TYPES_HPP
#define UDASEG_CORE_TYPES_HPP

#include <stdexcept>

#include "udaseg/core/tensor.hpp"

namespace udaseg {

/// Batch of images: (batch, channel, height, width), values in [0, 1].
using ImageBatch = Tensor;

/// Binary masks aligned 1:1 with an ImageBatch: (batch, 1, height, width), values in {0, 1}.
using MaskBatch = Tensor;

/// Per-image diagonal Gaussian posterior parameters, shape (batch, latent_dim) each.
struct GaussianPosterior {
    Tensor mu;
    Tensor log_var;

    void validate() const {
        check_same_shape(mu, log_var, "GaussianPosterior");
        if (mu.rank() != 2) throw std::invalid_argument("GaussianPosterior: (batch, latent_dim) tensors required");
        if (!all_finite(mu) || !all_finite(log_var)) {
            throw std::invalid_argument("GaussianPosterior: non-finite parameters");
        }
    }

    int64_t batch() const { return mu.dim(0); }
    int64_t latent_dim() const { return mu.dim(1); }
};

/// Point(s) in the latent space, shape (batch, latent_dim).
struct LatentCode {
    Tensor z;

    int64_t batch() const { return z.dim(0); }
    int64_t latent_dim() const { return z.dim(1); }
};

} // namespace udaseg

#endif // UDASEG_CORE_TYPES_HPP
