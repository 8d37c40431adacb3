#ifndef UDASEG_INFER_LATENT_SEARCH_HPP
#define UDASEG_INFER_LATENT_SEARCH_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "udaseg/core/parallel.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/core/tensor.hpp"
#include "udaseg/core/types.hpp"
#include "udaseg/loss/ssim.hpp"
#include "udaseg/metrics/masks.hpp"
#include "udaseg/model/unet.hpp"
#include "udaseg/model/vae.hpp"

namespace udaseg {

struct LatentSearchConfig {
    int max_iterations = 500;
    double learning_rate = 0.05;
    enum class Init { EncoderInit, ZeroInit, RandomInit };
    Init init_policy = Init::EncoderInit;
    // Number of independent search runs; runs after the first start from a
    // seeded perturbation of the init policy.
    int restarts = 1;
    // Stop when the best loss improves by less than this over 10 iterations.
    double convergence_tol = 1e-4;
    uint64_t seed = 0;
    // Optional soft prior pull toward z = 0; 0 disables.
    double prior_weight = 0.0;
    double rms_rho = 0.9;
    double rms_eps = 1e-8;

    void validate() const {
        if (max_iterations < 1) throw std::invalid_argument("LatentSearchConfig: max_iterations must be >= 1");
        if (learning_rate <= 0.0) throw std::invalid_argument("LatentSearchConfig: learning_rate must be positive");
        if (restarts < 0) throw std::invalid_argument("LatentSearchConfig: restarts must be >= 0");
        if (convergence_tol <= 0.0) throw std::invalid_argument("LatentSearchConfig: convergence_tol must be positive");
    }
};

/// Full record of one image's latent search.
struct LatentSearchTrace {
    std::vector<std::vector<double>> losses;  // per restart, per iteration
    double best_loss = 0.0;
    Tensor best_z;               // (latent_dim)
    Tensor best_reconstruction;  // (C, H, W)
    int iterations_used = 0;
    int restart_index_of_best = -1;
    std::vector<int> aborted_restarts;
};

/// Decoder interface consumed by the search loop: any differentiable map
/// from a latent vector to an image.
struct SearchModel {
    int64_t latent_dim = 0;
    // z -> image (C, H, W); the ctx carries activations for the backward call.
    std::function<Tensor(const Tensor& z, nn::Ctx& ctx)> decode;
    // d loss / d image -> d loss / d z, consuming the matching ctx.
    std::function<Tensor(const Tensor& d_image, nn::Ctx& ctx)> backward;
    // Initial latent mean for encoder-init; empty tensor when unavailable.
    std::function<Tensor()> encoder_init;
};

/// First-order search over z minimizing ssim_loss(x_t, decode(z)), adaptive
/// per-coordinate steps, optional restarts, deterministic given the seed.
inline LatentSearchTrace latent_search_core(const Tensor& x_t, const SearchModel& model,
                                            const LatentSearchConfig& cfg, const SsimConfig& ssim_cfg, uint64_t seed) {
    cfg.validate();
    ssim_cfg.validate();
    if (x_t.rank() != 3) throw std::invalid_argument("latent_search: (C,H,W) target required");
    const int64_t latent = model.latent_dim;
    const ImageBatch x_batch = x_t.reshaped({1, x_t.dim(0), x_t.dim(1), x_t.dim(2)});

    LatentSearchTrace trace;
    trace.best_loss = std::numeric_limits<double>::infinity();
    const int runs = std::max(1, cfg.restarts);

    for (int run = 0; run < runs; ++run) {
        Rng rng(combine_seed(seed, static_cast<uint64_t>(run)));
        Tensor z({latent});
        switch (cfg.init_policy) {
            case LatentSearchConfig::Init::EncoderInit:
                z = model.encoder_init();
                break;
            case LatentSearchConfig::Init::ZeroInit:
                z.fill(0.0);
                break;
            case LatentSearchConfig::Init::RandomInit:
                rng.fill_normal(z);
                break;
        }
        if (run > 0 && cfg.init_policy != LatentSearchConfig::Init::RandomInit) {
            for (int64_t j = 0; j < latent; ++j) z[j] += 0.1 * rng.normal();
        }

        Tensor v({latent});  // RMS accumulator
        std::vector<double> run_losses;
        run_losses.reserve(static_cast<size_t>(cfg.max_iterations));
        double run_best = std::numeric_limits<double>::infinity();
        double window_best = std::numeric_limits<double>::infinity();
        bool aborted = false;

        for (int it = 0; it < cfg.max_iterations; ++it) {
            nn::Ctx ctx;
            const Tensor x_hat = model.decode(z, ctx);
            Tensor d_xhat_batch;
            const double loss = ssim_loss_value_and_grad(
                x_batch, x_hat.reshaped({1, x_hat.dim(0), x_hat.dim(1), x_hat.dim(2)}), ssim_cfg, d_xhat_batch);
            if (!std::isfinite(loss)) {
                aborted = true;
                break;
            }
            run_losses.push_back(loss);
            ++trace.iterations_used;
            if (loss < run_best) run_best = loss;
            if (loss < trace.best_loss) {
                trace.best_loss = loss;
                trace.best_z = z;
                trace.best_reconstruction = x_hat;
                trace.restart_index_of_best = run;
            }

            Tensor dz = model.backward(d_xhat_batch.reshaped({x_hat.dim(0), x_hat.dim(1), x_hat.dim(2)}), ctx);
            if (!all_finite(dz)) {
                aborted = true;
                break;
            }
            if (cfg.prior_weight > 0.0) {
                for (int64_t j = 0; j < latent; ++j) dz[j] += cfg.prior_weight * z[j];
            }
            for (int64_t j = 0; j < latent; ++j) {
                v[j] = cfg.rms_rho * v[j] + (1.0 - cfg.rms_rho) * dz[j] * dz[j];
                z[j] -= cfg.learning_rate * dz[j] / (std::sqrt(v[j]) + cfg.rms_eps);
            }

            if ((it + 1) % 10 == 0) {
                if (window_best - run_best < cfg.convergence_tol) break;
                window_best = run_best;
            }
        }
        if (aborted) trace.aborted_restarts.push_back(run);
        trace.losses.push_back(std::move(run_losses));
    }

    if (!std::isfinite(trace.best_loss)) {
        throw std::runtime_error("latent_search: all restarts diverged to non-finite losses");
    }
    return trace;
}

namespace infer_detail {

/// Search model backed by a frozen VAE; the decoder is conditioned on the
/// target image's own edge map.
inline SearchModel vae_search_model(const Vae& vae, const Tensor& x_t) {
    SearchModel m;
    m.latent_dim = vae.config().latent_dim;
    auto edge = std::make_shared<Tensor>(sobel_edge_map(x_t));
    m.decode = [&vae, edge](const Tensor& z, nn::Ctx& ctx) { return vae.decode_item(z, *edge, ctx); };
    m.backward = [&vae](const Tensor& d, nn::Ctx& ctx) { return vae.decode_backward_item(d, ctx, nullptr); };
    m.encoder_init = [&vae, x_t]() {
        nn::Ctx ctx;
        Tensor mu, lv;
        vae.encode_item(x_t, ctx, mu, lv);
        return mu;
    };
    return m;
}

} // namespace infer_detail

/// Latent search for each image of a batch; images are independent problems
/// solved in parallel, each with a sub-seed derived from (cfg.seed, index).
inline std::vector<LatentSearchTrace> latent_search(const ImageBatch& x_t, const Vae& vae,
                                                    const LatentSearchConfig& cfg, const SsimConfig& ssim_cfg = {}) {
    cfg.validate();
    ssim_cfg.validate();
    if (x_t.rank() != 4) throw std::invalid_argument("latent_search: (B,C,H,W) tensor required");
    std::vector<LatentSearchTrace> traces(static_cast<size_t>(x_t.dim(0)));
    parallel_for(x_t.dim(0), [&](int64_t b) {
        const Tensor item = x_t.item(b);
        traces[static_cast<size_t>(b)] = latent_search_core(item, infer_detail::vae_search_model(vae, item), cfg,
                                                            ssim_cfg, combine_seed(cfg.seed, static_cast<uint64_t>(b)));
    });
    return traces;
}

/// Map target images onto the source manifold via latent search, then segment
/// the best reconstructions and binarize at threshold t.
inline std::pair<MaskBatch, std::vector<LatentSearchTrace>> infer_target_mask(const ImageBatch& x_t, const Vae& vae,
                                                                              const UNet& seg,
                                                                              const LatentSearchConfig& cfg,
                                                                              const SsimConfig& ssim_cfg, double t) {
    cfg.validate();
    ssim_cfg.validate();
    if (x_t.rank() != 4) throw std::invalid_argument("infer_target_mask: (B,C,H,W) tensor required");
    if (t <= 0.0 || t >= 1.0) throw std::invalid_argument("infer_target_mask: threshold must lie in (0,1)");
    MaskBatch masks({x_t.dim(0), 1, x_t.dim(2), x_t.dim(3)});
    std::vector<LatentSearchTrace> traces(static_cast<size_t>(x_t.dim(0)));
    parallel_for(x_t.dim(0), [&](int64_t b) {
        const Tensor item = x_t.item(b);
        LatentSearchTrace tr = latent_search_core(item, infer_detail::vae_search_model(vae, item), cfg, ssim_cfg,
                                                  combine_seed(cfg.seed, static_cast<uint64_t>(b)));
        nn::Ctx ctx;
        const Tensor probs = seg.forward_item(tr.best_reconstruction, ctx).probs;
        Tensor mask(probs.shape());
        for (int64_t i = 0; i < probs.numel(); ++i) mask[i] = probs[i] >= t ? 1.0 : 0.0;
        masks.set_item(b, mask);
        traces[static_cast<size_t>(b)] = std::move(tr);
    });
    return {std::move(masks), std::move(traces)};
}

} // namespace udaseg

#endif // UDASEG_INFER_LATENT_SEARCH_HPP
