#ifndef UDASEG_MODEL_UNET_HPP
#define UDASEG_MODEL_UNET_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "udaseg/core/parallel.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/core/tensor.hpp"
#include "udaseg/core/types.hpp"
#include "udaseg/model/vae.hpp"
#include "udaseg/nn/layers.hpp"

namespace udaseg {

struct SegConfig {
    enum class Backbone { DeskScale, PaperScale };
    Backbone backbone_id = Backbone::PaperScale;
    int64_t input_h = 128;
    int64_t input_w = 128;
    int input_channels = 3;
    // channels[0] is the full-resolution stem; each following stage halves
    // the spatial dims. Empty uses the backbone preset.
    std::vector<int> channels = {};
    // Number of downsamplings at the feature tap feeding the perceptual loss.
    int feature_tap_index = 3;

    static SegConfig desk_scale() {
        SegConfig c;
        c.backbone_id = Backbone::DeskScale;
        c.input_h = 64;
        c.input_w = 64;
        return c;
    }

    static SegConfig paper_scale() { return SegConfig{}; }

    std::vector<int> effective_channels() const {
        if (!channels.empty()) return channels;
        return backbone_id == Backbone::DeskScale ? std::vector<int>{8, 16, 32, 64}
                                                  : std::vector<int>{32, 64, 128, 256, 512};
    }

    void validate() const {
        const auto ch = effective_channels();
        if (ch.size() < 2) throw std::invalid_argument("SegConfig: need at least 2 stages");
        const int downs = static_cast<int>(ch.size()) - 1;
        if (feature_tap_index < 1 || feature_tap_index > downs) {
            throw std::invalid_argument("SegConfig: feature_tap_index must lie in [1," + std::to_string(downs) + "]");
        }
        const int64_t div = int64_t{1} << downs;
        if (input_h % div != 0 || input_w % div != 0) {
            throw std::invalid_argument("SegConfig: input size must be divisible by 2^downsamplings");
        }
    }
};

/// U-Net: stem + strided-conv encoder, nearest-upsample decoder with skip
/// concatenations, sigmoid head. One forward pass yields both the probability
/// map and the encoder feature tap used as the perceptual embedding.
class UNet {
public:
    explicit UNet(SegConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        channels_ = cfg_.effective_channels();
        const int n = static_cast<int>(channels_.size());

        stem_ = nn::Conv2d(cfg_.input_channels, channels_[0], 3, 1);
        enc_convs_.reserve(static_cast<size_t>(n - 1));
        for (int i = 1; i < n; ++i) enc_convs_.emplace_back(channels_[i - 1], channels_[i], 3, 2);
        dec_convs_.reserve(static_cast<size_t>(n - 1));
        for (int i = n - 1; i >= 1; --i) {
            dec_convs_.emplace_back(channels_[i] + channels_[i - 1], channels_[i - 1], 3, 1);
        }
        head_ = nn::Conv2d(channels_[0], 1, 3, 1);

        stem_.register_params(registry_, "stem");
        for (size_t i = 0; i < enc_convs_.size(); ++i) {
            enc_convs_[i].register_params(registry_, "enc" + std::to_string(i + 1));
        }
        for (size_t i = 0; i < dec_convs_.size(); ++i) {
            dec_convs_[i].register_params(registry_, "dec" + std::to_string(i));
        }
        head_.register_params(registry_, "head");
    }

    void init(uint64_t seed) {
        Rng rng(seed);
        stem_.init(rng);
        for (auto& c : enc_convs_) c.init(rng);
        for (auto& c : dec_convs_) c.init(rng);
        head_.init(rng);
    }

    const SegConfig& config() const { return cfg_; }
    const std::vector<nn::Param*>& params() const { return registry_.params(); }

    struct ItemForward {
        Tensor probs;     // (1, H, W)
        Tensor features;  // encoder tap
    };

    ItemForward forward_item(const Tensor& x, nn::Ctx& ctx) const {
        check_input_item(x);
        const int n = static_cast<int>(channels_.size());
        std::vector<Tensor> enc(static_cast<size_t>(n));
        enc[0] = relu_.forward(stem_.forward(x, ctx), ctx);
        for (int i = 1; i < n; ++i) {
            enc[static_cast<size_t>(i)] =
                relu_.forward(enc_convs_[static_cast<size_t>(i - 1)].forward(enc[static_cast<size_t>(i - 1)], ctx), ctx);
        }
        ItemForward out;
        out.features = enc[static_cast<size_t>(cfg_.feature_tap_index)];

        Tensor h = enc[static_cast<size_t>(n - 1)];
        for (int i = n - 1; i >= 1; --i) {
            h = up_.forward(h, ctx);
            h = nn::concat_channels(h, enc[static_cast<size_t>(i - 1)]);
            h = relu_.forward(dec_convs_[static_cast<size_t>(n - 1 - i)].forward(h, ctx), ctx);
        }
        out.probs = sigmoid_.forward(head_.forward(h, ctx), ctx);
        return out;
    }

    /// Backward from d probs to d input; skip-connection gradients are summed
    /// into their encoder stages.
    Tensor backward_item(const Tensor& d_probs, nn::Ctx& ctx, nn::GradBuffer* g) const {
        const int n = static_cast<int>(channels_.size());
        std::vector<Tensor> d_enc(static_cast<size_t>(n));

        Tensor dh = sigmoid_.backward(d_probs, ctx, g);
        dh = head_.backward(dh, ctx, g);
        for (int i = 1; i <= n - 1; ++i) {
            dh = relu_.backward(dh, ctx, g);
            dh = dec_convs_[static_cast<size_t>(n - 1 - i)].backward(dh, ctx, g);
            auto [d_up, d_skip] = nn::split_channels(dh, channels_[static_cast<size_t>(i)]);
            d_enc[static_cast<size_t>(i - 1)] = std::move(d_skip);
            dh = up_.backward(d_up, ctx, g);
        }
        // dh now matches enc[n-1], the decoder entry point.
        for (int i = n - 1; i >= 1; --i) {
            if (d_enc[static_cast<size_t>(i)].numel() > 0) axpy(1.0, d_enc[static_cast<size_t>(i)], dh);
            dh = relu_.backward(dh, ctx, g);
            dh = enc_convs_[static_cast<size_t>(i - 1)].backward(dh, ctx, g);
        }
        axpy(1.0, d_enc[0], dh);
        dh = relu_.backward(dh, ctx, g);
        return stem_.backward(dh, ctx, g);
    }

    /// Encoder-only pass up to the feature tap (perceptual embedding path).
    Tensor features_item(const Tensor& x, nn::Ctx& ctx) const {
        check_input_item(x);
        Tensor h = relu_.forward(stem_.forward(x, ctx), ctx);
        for (int i = 1; i <= cfg_.feature_tap_index; ++i) {
            h = relu_.forward(enc_convs_[static_cast<size_t>(i - 1)].forward(h, ctx), ctx);
        }
        return h;
    }

    Tensor features_backward_item(const Tensor& d_feat, nn::Ctx& ctx, nn::GradBuffer* g) const {
        Tensor dh = d_feat;
        for (int i = cfg_.feature_tap_index; i >= 1; --i) {
            dh = relu_.backward(dh, ctx, g);
            dh = enc_convs_[static_cast<size_t>(i - 1)].backward(dh, ctx, g);
        }
        dh = relu_.backward(dh, ctx, g);
        return stem_.backward(dh, ctx, g);
    }

    // ---- batch API (evaluation mode) ----

    /// Per-pixel foreground probabilities, shape (B, 1, H, W).
    Tensor segment(const ImageBatch& x) const {
        check_input_batch(x);
        Tensor out({x.dim(0), 1, cfg_.input_h, cfg_.input_w});
        parallel_for(x.dim(0), [&](int64_t b) {
            nn::Ctx ctx;
            out.set_item(b, forward_item(x.item(b), ctx).probs);
        });
        return out;
    }

    /// Feature tap activations, shape (B, C_tap, H/2^t, W/2^t).
    Tensor feature_embedding(const ImageBatch& x) const {
        check_input_batch(x);
        const int t = cfg_.feature_tap_index;
        const int64_t fh = cfg_.input_h >> t, fw = cfg_.input_w >> t;
        Tensor out({x.dim(0), channels_[static_cast<size_t>(t)], fh, fw});
        parallel_for(x.dim(0), [&](int64_t b) {
            nn::Ctx ctx;
            out.set_item(b, features_item(x.item(b), ctx));
        });
        return out;
    }

    /// Perceptual-loss hook backed by this net's feature tap. When `train_features`
    /// is false the feature parameters receive no gradient.
    PerceptualHook perceptual_hook() const {
        PerceptualHook hook;
        hook.value = [this](const Tensor& x) {
            nn::Ctx ctx;
            return features_item(x, ctx);
        };
        hook.backward = [this](const Tensor& x, const Tensor& d_feat) {
            nn::Ctx ctx;
            features_item(x, ctx);
            return features_backward_item(d_feat, ctx, nullptr);
        };
        return hook;
    }

    void check_input_item(const Tensor& x) const {
        if (x.rank() != 3 || x.dim(0) != cfg_.input_channels || x.dim(1) != cfg_.input_h || x.dim(2) != cfg_.input_w) {
            throw std::invalid_argument("UNet: expected (" + std::to_string(cfg_.input_channels) + "," +
                                        std::to_string(cfg_.input_h) + "," + std::to_string(cfg_.input_w) +
                                        ") input, got " + x.shape_str());
        }
    }

    void check_input_batch(const ImageBatch& x) const {
        if (x.rank() != 4 || x.dim(1) != cfg_.input_channels || x.dim(2) != cfg_.input_h || x.dim(3) != cfg_.input_w) {
            throw std::invalid_argument("UNet: expected (B," + std::to_string(cfg_.input_channels) + "," +
                                        std::to_string(cfg_.input_h) + "," + std::to_string(cfg_.input_w) +
                                        ") input, got " + x.shape_str());
        }
    }

private:
    SegConfig cfg_;
    std::vector<int> channels_;
    nn::LeakyRelu relu_{0.0};
    nn::Sigmoid sigmoid_;
    nn::Upsample2x up_;
    nn::Conv2d stem_;
    std::vector<nn::Conv2d> enc_convs_;
    std::vector<nn::Conv2d> dec_convs_;
    nn::Conv2d head_;
    nn::ParamRegistry registry_;
};

} // namespace udaseg

#endif // UDASEG_MODEL_UNET_HPP
