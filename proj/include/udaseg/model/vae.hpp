#ifndef UDASEG_MODEL_VAE_HPP
#define UDASEG_MODEL_VAE_HPP

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "udaseg/core/image_ops.hpp"
#include "udaseg/core/parallel.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/core/tensor.hpp"
#include "udaseg/core/types.hpp"
#include "udaseg/loss/losses.hpp"
#include "udaseg/nn/layers.hpp"

namespace udaseg {

struct VaeConfig {
    int64_t input_h = 128;
    int64_t input_w = 128;
    int input_channels = 3;
    std::vector<int> encoder_channels = {32, 64, 128, 256};
    std::vector<int> decoder_channels = {};  // empty mirrors encoder_channels
    int latent_dim = 128;
    // Number of 2x downsamplings applied to the edge map before it is
    // concatenated into the decoder; 0 injects at full resolution.
    int edge_injection_stage = 0;
    double activation_slope = 0.1;

    static VaeConfig desk_scale() {
        VaeConfig c;
        c.input_h = 64;
        c.input_w = 64;
        c.encoder_channels = {8, 16, 32, 64};
        c.latent_dim = 64;
        return c;
    }

    static VaeConfig paper_scale() { return VaeConfig{}; }

    const std::vector<int>& dec_channels() const {
        return decoder_channels.empty() ? encoder_channels : decoder_channels;
    }

    int stages() const { return static_cast<int>(encoder_channels.size()); }

    void validate() const {
        if (latent_dim < 2) throw std::invalid_argument("VaeConfig: latent_dim must be >= 2");
        if (encoder_channels.empty()) throw std::invalid_argument("VaeConfig: encoder_channels empty");
        if (!decoder_channels.empty() && decoder_channels.size() != encoder_channels.size()) {
            throw std::invalid_argument("VaeConfig: decoder_channels must match encoder stage count");
        }
        const int n = stages();
        const int64_t div = int64_t{1} << n;
        if (input_h % div != 0 || input_w % div != 0) {
            throw std::invalid_argument("VaeConfig: input size must be divisible by 2^stages");
        }
        if (edge_injection_stage < 0 || edge_injection_stage >= n) {
            throw std::invalid_argument("VaeConfig: edge_injection_stage out of range");
        }
    }
};

/// Sobel edge maps for an image batch, shape (B, 1, H, W).
inline Tensor extract_edges(const ImageBatch& x) {
    if (x.rank() != 4) throw std::invalid_argument("extract_edges: (B,C,H,W) tensor required");
    Tensor out({x.dim(0), 1, x.dim(2), x.dim(3)});
    for (int64_t b = 0; b < x.dim(0); ++b) out.set_item(b, sobel_edge_map(x.item(b)));
    return out;
}

/// Convolutional VAE with a diagonal Gaussian posterior and an edge-map skip
/// connection into the decoder.
class Vae {
public:
    explicit Vae(VaeConfig cfg) : cfg_(std::move(cfg)), act_(cfg_.activation_slope) {
        cfg_.validate();
        const int n = cfg_.stages();
        const auto& ec = cfg_.encoder_channels;
        const auto& dc = cfg_.dec_channels();

        enc_convs_.reserve(static_cast<size_t>(n));
        int prev = cfg_.input_channels;
        for (int i = 0; i < n; ++i) {
            enc_convs_.emplace_back(prev, ec[static_cast<size_t>(i)], 3, 2);
            prev = ec[static_cast<size_t>(i)];
        }
        bottleneck_h_ = cfg_.input_h >> n;
        bottleneck_w_ = cfg_.input_w >> n;
        flat_dim_ = static_cast<int64_t>(ec.back()) * bottleneck_h_ * bottleneck_w_;
        fc_mu_ = nn::Linear(flat_dim_, cfg_.latent_dim);
        fc_log_var_ = nn::Linear(flat_dim_, cfg_.latent_dim);

        dec_fc_ = nn::Linear(cfg_.latent_dim, static_cast<int64_t>(dc.back()) * bottleneck_h_ * bottleneck_w_);
        dec_convs_.reserve(static_cast<size_t>(n));
        for (int m = 0; m < n; ++m) {
            const int c_in = dc[static_cast<size_t>(n - 1 - m)];
            const int c_out = dc[static_cast<size_t>(std::max(n - 2 - m, 0))];
            const bool inject = cfg_.edge_injection_stage > 0 && cfg_.edge_injection_stage == n - 1 - m;
            dec_convs_.emplace_back(c_in + (inject ? 1 : 0), c_out, 3, 1);
        }
        const int head_in = dc.front() + (cfg_.edge_injection_stage == 0 ? 1 : 0);
        head_conv1_ = nn::Conv2d(head_in, dc.front(), 3, 1);
        head_conv2_ = nn::Conv2d(dc.front(), cfg_.input_channels, 3, 1);

        for (size_t i = 0; i < enc_convs_.size(); ++i) {
            enc_convs_[i].register_params(registry_, "enc.conv" + std::to_string(i));
        }
        fc_mu_.register_params(registry_, "enc.fc_mu");
        fc_log_var_.register_params(registry_, "enc.fc_log_var");
        dec_fc_.register_params(registry_, "dec.fc");
        for (size_t i = 0; i < dec_convs_.size(); ++i) {
            dec_convs_[i].register_params(registry_, "dec.conv" + std::to_string(i));
        }
        head_conv1_.register_params(registry_, "dec.head1");
        head_conv2_.register_params(registry_, "dec.head2");
    }

    void init(uint64_t seed) {
        Rng rng(seed);
        for (auto& c : enc_convs_) c.init(rng);
        fc_mu_.init(rng);
        fc_log_var_.init(rng);
        dec_fc_.init(rng);
        for (auto& c : dec_convs_) c.init(rng);
        head_conv1_.init(rng);
        head_conv2_.init(rng);
    }

    const VaeConfig& config() const { return cfg_; }
    const std::vector<nn::Param*>& params() const { return registry_.params(); }

    // ---- per-item differentiable paths ----

    void encode_item(const Tensor& x, nn::Ctx& ctx, Tensor& mu, Tensor& log_var) const {
        check_input_item(x);
        Tensor h = x;
        for (const auto& conv : enc_convs_) {
            h = act_.forward(conv.forward(h, ctx), ctx);
        }
        const Tensor flat = h.reshaped({flat_dim_});
        mu = fc_mu_.forward(flat, ctx);
        log_var = fc_log_var_.forward(flat, ctx);
    }

    Tensor encode_backward_item(const Tensor& d_mu, const Tensor& d_log_var, nn::Ctx& ctx, nn::GradBuffer* g) const {
        Tensor d_flat = fc_log_var_.backward(d_log_var, ctx, g);
        axpy(1.0, fc_mu_.backward(d_mu, ctx, g), d_flat);
        const int n = cfg_.stages();
        Tensor dh = d_flat.reshaped({cfg_.encoder_channels.back(), bottleneck_h_, bottleneck_w_});
        for (int i = n - 1; i >= 0; --i) {
            dh = act_.backward(dh, ctx, g);
            dh = enc_convs_[static_cast<size_t>(i)].backward(dh, ctx, g);
        }
        return dh;
    }

    Tensor decode_item(const Tensor& z, const Tensor& edge, nn::Ctx& ctx) const {
        if (z.numel() != cfg_.latent_dim) {
            throw std::invalid_argument("Vae::decode: latent dim mismatch, expected " +
                                        std::to_string(cfg_.latent_dim) + ", got " + z.shape_str());
        }
        if (edge.rank() != 3 || edge.dim(0) != 1 || edge.dim(1) != cfg_.input_h || edge.dim(2) != cfg_.input_w) {
            throw std::invalid_argument("Vae::decode: edge map must be (1," + std::to_string(cfg_.input_h) + "," +
                                        std::to_string(cfg_.input_w) + "), got " + edge.shape_str());
        }
        const int n = cfg_.stages();
        const auto& dc = cfg_.dec_channels();
        Tensor h = act_.forward(dec_fc_.forward(z.reshaped({cfg_.latent_dim}), ctx), ctx);
        h = h.reshaped({dc.back(), bottleneck_h_, bottleneck_w_});
        for (int m = 0; m < n; ++m) {
            h = up_.forward(h, ctx);
            if (cfg_.edge_injection_stage > 0 && cfg_.edge_injection_stage == n - 1 - m) {
                h = nn::concat_channels(h, avg_pool2x2_repeated(edge, cfg_.edge_injection_stage));
            }
            h = act_.forward(dec_convs_[static_cast<size_t>(m)].forward(h, ctx), ctx);
        }
        if (cfg_.edge_injection_stage == 0) h = nn::concat_channels(h, edge);
        h = act_.forward(head_conv1_.forward(h, ctx), ctx);
        h = head_conv2_.forward(h, ctx);
        return sigmoid_.forward(h, ctx);
    }

    /// Backward through the decoder; returns d loss / d z. The edge path is
    /// fixed conditioning and receives no gradient.
    Tensor decode_backward_item(const Tensor& d_x_hat, nn::Ctx& ctx, nn::GradBuffer* g) const {
        const int n = cfg_.stages();
        const auto& dc = cfg_.dec_channels();
        Tensor dh = sigmoid_.backward(d_x_hat, ctx, g);
        dh = head_conv2_.backward(dh, ctx, g);
        dh = act_.backward(dh, ctx, g);
        dh = head_conv1_.backward(dh, ctx, g);
        if (cfg_.edge_injection_stage == 0) dh = nn::split_channels(dh, dc.front()).first;
        for (int m = n - 1; m >= 0; --m) {
            dh = act_.backward(dh, ctx, g);
            dh = dec_convs_[static_cast<size_t>(m)].backward(dh, ctx, g);
            if (cfg_.edge_injection_stage > 0 && cfg_.edge_injection_stage == n - 1 - m) {
                dh = nn::split_channels(dh, dc[static_cast<size_t>(n - 1 - m)]).first;
            }
            dh = up_.backward(dh, ctx, g);
        }
        Tensor d_flat = dh.reshaped({static_cast<int64_t>(dc.back()) * bottleneck_h_ * bottleneck_w_});
        d_flat = act_.backward(d_flat, ctx, g);
        return dec_fc_.backward(d_flat, ctx, g);
    }

    // ---- batch API (evaluation mode: activations discarded) ----

    GaussianPosterior encode(const ImageBatch& x) const {
        check_input_batch(x);
        GaussianPosterior q{Tensor({x.dim(0), cfg_.latent_dim}), Tensor({x.dim(0), cfg_.latent_dim})};
        parallel_for(x.dim(0), [&](int64_t b) {
            nn::Ctx ctx;
            Tensor mu, lv;
            encode_item(x.item(b), ctx, mu, lv);
            q.mu.set_row(b, mu);
            q.log_var.set_row(b, lv);
        });
        return q;
    }

    /// z = mu + exp(0.5 * log_var) * noise. Supplied noise must match mu's
    /// shape; otherwise noise is drawn from `rng` in deterministic order.
    LatentCode reparameterize(const GaussianPosterior& q, const Tensor* noise = nullptr, Rng* rng = nullptr) const {
        q.validate();
        Tensor eps;
        if (noise != nullptr) {
            check_same_shape(*noise, q.mu, "Vae::reparameterize");
            eps = *noise;
        } else {
            if (rng == nullptr) throw std::invalid_argument("Vae::reparameterize: need noise tensor or rng");
            eps = Tensor(q.mu.shape());
            rng->fill_normal(eps);
        }
        LatentCode out{Tensor(q.mu.shape())};
        for (int64_t i = 0; i < q.mu.numel(); ++i) {
            out.z[i] = q.mu[i] + std::exp(0.5 * q.log_var[i]) * eps[i];
        }
        return out;
    }

    ImageBatch decode(const LatentCode& z, const Tensor& edges) const {
        if (z.z.rank() != 2 || z.latent_dim() != cfg_.latent_dim) {
            throw std::invalid_argument("Vae::decode: latent batch must be (B," + std::to_string(cfg_.latent_dim) +
                                        "), got " + z.z.shape_str());
        }
        if (edges.rank() != 4 || edges.dim(0) != z.batch()) {
            throw std::invalid_argument("Vae::decode: edge batch mismatch");
        }
        ImageBatch out({z.batch(), cfg_.input_channels, cfg_.input_h, cfg_.input_w});
        parallel_for(z.batch(), [&](int64_t b) {
            nn::Ctx ctx;
            out.set_item(b, decode_item(z.z.row(b), edges.item(b), ctx));
        });
        return out;
    }

    /// Deterministic reconstruction (z = posterior mean), evaluation mode.
    ImageBatch reconstruct(const ImageBatch& x) const {
        check_input_batch(x);
        ImageBatch out(x.shape());
        parallel_for(x.dim(0), [&](int64_t b) {
            nn::Ctx ctx;
            const Tensor xb = x.item(b);
            Tensor mu, lv;
            encode_item(xb, ctx, mu, lv);
            ctx.clear();
            out.set_item(b, decode_item(mu, sobel_edge_map(xb), ctx));
        });
        return out;
    }

    void check_input_item(const Tensor& x) const {
        if (x.rank() != 3 || x.dim(0) != cfg_.input_channels || x.dim(1) != cfg_.input_h || x.dim(2) != cfg_.input_w) {
            throw std::invalid_argument("Vae: expected (" + std::to_string(cfg_.input_channels) + "," +
                                        std::to_string(cfg_.input_h) + "," + std::to_string(cfg_.input_w) +
                                        ") input, got " + x.shape_str());
        }
    }

    void check_input_batch(const ImageBatch& x) const {
        if (x.rank() != 4 || x.dim(1) != cfg_.input_channels || x.dim(2) != cfg_.input_h || x.dim(3) != cfg_.input_w) {
            throw std::invalid_argument("Vae: expected (B," + std::to_string(cfg_.input_channels) + "," +
                                        std::to_string(cfg_.input_h) + "," + std::to_string(cfg_.input_w) +
                                        ") input, got " + x.shape_str());
        }
    }

private:
    VaeConfig cfg_;
    nn::LeakyRelu act_;
    nn::Sigmoid sigmoid_;
    nn::Upsample2x up_;
    std::vector<nn::Conv2d> enc_convs_;
    nn::Linear fc_mu_;
    nn::Linear fc_log_var_;
    nn::Linear dec_fc_;
    std::vector<nn::Conv2d> dec_convs_;
    nn::Conv2d head_conv1_;
    nn::Conv2d head_conv2_;
    int64_t bottleneck_h_ = 0, bottleneck_w_ = 0, flat_dim_ = 0;
    nn::ParamRegistry registry_;
};

struct VaeLossWeights {
    double reconstruction = 1.0;
    double kl = 0.01;
    double perceptual = 0.1;
};

/// Differentiable feature hook for the perceptual loss: `value` maps an item
/// (C,H,W) to a feature tensor; `backward` maps (item, d feature) to d item.
struct PerceptualHook {
    std::function<Tensor(const Tensor&)> value;
    std::function<Tensor(const Tensor&, const Tensor&)> backward;
};

struct VaeStepResult {
    LossReport report;
    ImageBatch x_hat;
    GaussianPosterior posterior;
    LatentCode z;
};

/// One VAE training step: forward, loss = w_r*L_r + w_kl*D_KL + w_p*L_p,
/// gradients accumulated into `grads` (already zeroed by the caller applies);
/// the caller applies the optimizer update.
inline VaeStepResult vae_training_step(const Vae& vae, const ImageBatch& x, const VaeLossWeights& w,
                                       const PerceptualHook* perceptual, Rng& noise_rng, nn::GradBuffer& grads) {
    vae.check_input_batch(x);
    const int64_t bsz = x.dim(0);
    const int64_t latent = vae.config().latent_dim;

    Tensor eps({bsz, latent});
    noise_rng.fill_normal(eps);

    VaeStepResult res;
    res.x_hat = ImageBatch(x.shape());
    res.posterior = GaussianPosterior{Tensor({bsz, latent}), Tensor({bsz, latent})};
    res.z = LatentCode{Tensor({bsz, latent})};

    struct ItemState {
        nn::Ctx enc_ctx;
        nn::Ctx dec_ctx;
        Tensor edge;
        Tensor mu, lv, z, x_hat;
    };
    std::vector<ItemState> states(static_cast<size_t>(bsz));

    parallel_for(bsz, [&](int64_t b) {
        ItemState& st = states[static_cast<size_t>(b)];
        const Tensor xb = x.item(b);
        st.edge = sobel_edge_map(xb);
        vae.encode_item(xb, st.enc_ctx, st.mu, st.lv);
        st.z = Tensor({latent});
        for (int64_t j = 0; j < latent; ++j) st.z[j] = st.mu[j] + std::exp(0.5 * st.lv[j]) * eps(b, j);
        st.x_hat = vae.decode_item(st.z, st.edge, st.dec_ctx);
        res.posterior.mu.set_row(b, st.mu);
        res.posterior.log_var.set_row(b, st.lv);
        res.z.z.set_row(b, st.z);
        res.x_hat.set_item(b, st.x_hat);
    });

    const double l_r = reconstruction_loss(x, res.x_hat);
    const double d_kl = kl_divergence(res.posterior);

    // Perceptual term: mean over items of the per-item feature MSE.
    double l_p = 0.0;
    std::vector<Tensor> feat_x(static_cast<size_t>(bsz)), feat_xhat(static_cast<size_t>(bsz));
    if (perceptual != nullptr && w.perceptual != 0.0) {
        std::vector<double> item_lp(static_cast<size_t>(bsz), 0.0);
        parallel_for(bsz, [&](int64_t b) {
            feat_x[static_cast<size_t>(b)] = perceptual->value(x.item(b));
            feat_xhat[static_cast<size_t>(b)] = perceptual->value(states[static_cast<size_t>(b)].x_hat);
            const Tensor& fx = feat_x[static_cast<size_t>(b)];
            const Tensor& fy = feat_xhat[static_cast<size_t>(b)];
            if (!fx.same_shape(fy)) throw std::runtime_error("vae_training_step: perceptual feature shapes differ");
            double s = 0.0;
            for (int64_t i = 0; i < fx.numel(); ++i) {
                const double d = fy[i] - fx[i];
                s += d * d;
            }
            item_lp[static_cast<size_t>(b)] = s / static_cast<double>(fx.numel());
        });
        for (double v : item_lp) l_p += v;
        l_p /= static_cast<double>(bsz);
    }

    const double total = w.reconstruction * l_r + w.kl * d_kl + w.perceptual * l_p;
    res.report.weights = {{"lambda_r", w.reconstruction}, {"lambda_kl", w.kl}, {"lambda_p", w.perceptual}};
    res.report.set("l_r", l_r);
    res.report.set("d_kl", d_kl);
    res.report.set("l_p", l_p);
    res.report.set("total", total);

    // Backward, one gradient buffer per item, reduced in item order.
    const int64_t n_px = x.numel();
    std::vector<nn::GradBuffer> item_grads;
    item_grads.reserve(static_cast<size_t>(bsz));
    for (int64_t b = 0; b < bsz; ++b) item_grads.emplace_back(vae.params());

    parallel_for(bsz, [&](int64_t b) {
        ItemState& st = states[static_cast<size_t>(b)];
        nn::GradBuffer* g = &item_grads[static_cast<size_t>(b)];
        const Tensor xb = x.item(b);

        Tensor d_xhat(st.x_hat.shape());
        const double r_scale = w.reconstruction * 2.0 / static_cast<double>(n_px);
        for (int64_t i = 0; i < d_xhat.numel(); ++i) d_xhat[i] = r_scale * (st.x_hat[i] - xb[i]);
        if (perceptual != nullptr && w.perceptual != 0.0) {
            const Tensor& fx = feat_x[static_cast<size_t>(b)];
            const Tensor& fy = feat_xhat[static_cast<size_t>(b)];
            Tensor d_feat(fy.shape());
            const double p_scale = w.perceptual * 2.0 / static_cast<double>(fy.numel() * bsz);
            for (int64_t i = 0; i < fy.numel(); ++i) d_feat[i] = p_scale * (fy[i] - fx[i]);
            axpy(1.0, perceptual->backward(st.x_hat, d_feat), d_xhat);
        }

        Tensor dz = vae.decode_backward_item(d_xhat, st.dec_ctx, g);

        // Reparameterization chain plus the KL closed-form gradients.
        Tensor d_mu({latent}), d_lv({latent});
        const double kl_scale = w.kl / static_cast<double>(bsz);
        for (int64_t j = 0; j < latent; ++j) {
            const double sd = std::exp(0.5 * st.lv[j]);
            d_mu[j] = dz[j] + kl_scale * st.mu[j];
            d_lv[j] = dz[j] * 0.5 * sd * eps(b, j) + kl_scale * 0.5 * (std::exp(st.lv[j]) - 1.0);
        }
        vae.encode_backward_item(d_mu, d_lv, st.enc_ctx, g);
    });

    for (const auto& ig : item_grads) grads.add(ig);
    return res;
}

} // namespace udaseg

#endif // UDASEG_MODEL_VAE_HPP
