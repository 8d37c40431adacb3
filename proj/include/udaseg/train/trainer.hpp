#ifndef UDASEG_TRAIN_TRAINER_HPP
#define UDASEG_TRAIN_TRAINER_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "udaseg/config.hpp"
#include "udaseg/core/parallel.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/data/dataset.hpp"
#include "udaseg/infer/latent_search.hpp"
#include "udaseg/io/json_util.hpp"
#include "udaseg/loss/losses.hpp"
#include "udaseg/metrics/masks.hpp"
#include "udaseg/model/unet.hpp"
#include "udaseg/model/vae.hpp"
#include "udaseg/nn/rmsprop.hpp"
#include "udaseg/train/run_config.hpp"

namespace udaseg {

constexpr const char* kCodeVersion = "0.1.0";

// ---- parameter snapshot / hash helpers ----

inline std::vector<Tensor> snapshot_params(const std::vector<nn::Param*>& params) {
    std::vector<Tensor> snap;
    snap.reserve(params.size());
    for (const nn::Param* p : params) snap.push_back(p->value);
    return snap;
}

inline void restore_params(const std::vector<nn::Param*>& params, const std::vector<Tensor>& snap) {
    if (params.size() != snap.size()) throw std::invalid_argument("restore_params: size mismatch");
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

/// FNV-1a over raw parameter bytes; used to verify frozen-model contracts.
inline uint64_t hash_params(const std::vector<nn::Param*>& params) {
    uint64_t h = 1469598103934665603ull;
    for (const nn::Param* p : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
        const size_t n = static_cast<size_t>(p->value.numel()) * sizeof(double);
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

// ---- evaluation report ----

struct EvalCell {
    std::string method;     // "baseline-unet" | "uda"
    std::string direction;  // e.g. "source->target"
    std::string protocol;   // "separated" | "mixed"
    double iou_score = 0.0;
    double dsc_score = 0.0;
    int n_images = 0;
    uint64_t seed = 0;
    std::string timestamp;
};

/// Table-1-shaped result container: one cell per (method, direction, protocol).
struct EvalReport {
    std::vector<EvalCell> cells;

    void add(EvalCell cell) {
        if (cell.iou_score < 0.0 || cell.iou_score > 1.0 || cell.dsc_score < 0.0 || cell.dsc_score > 1.0) {
            throw std::invalid_argument("EvalReport: scores must lie in [0,1]");
        }
        if (cell.dsc_score + 1e-12 < cell.iou_score) {
            throw std::invalid_argument("EvalReport: DSC must be >= IoU");
        }
        for (const auto& c : cells) {
            if (c.method == cell.method && c.direction == cell.direction && c.protocol == cell.protocol) {
                throw std::invalid_argument("EvalReport: duplicate cell key " + cell.method + "/" + cell.direction +
                                            "/" + cell.protocol);
            }
        }
        cells.push_back(std::move(cell));
    }

    const EvalCell* find(const std::string& method, const std::string& direction, const std::string& protocol) const {
        for (const auto& c : cells) {
            if (c.method == method && c.direction == direction && c.protocol == protocol) return &c;
        }
        return nullptr;
    }

    Json to_json() const {
        Json arr = Json::array();
        for (const auto& c : cells) {
            arr.push_back(Json{{"method", c.method},
                               {"direction", c.direction},
                               {"protocol", c.protocol},
                               {"iou", c.iou_score},
                               {"dsc", c.dsc_score},
                               {"n_images", c.n_images},
                               {"seed", c.seed},
                               {"timestamp", c.timestamp}});
        }
        return Json{{"cells", arr}};
    }

    std::string to_csv() const {
        std::string s = "method,direction,protocol,iou,dsc,n_images,seed,timestamp\n";
        for (const auto& c : cells) {
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.6f,%.6f,%d,%llu,%s\n", c.method.c_str(), c.direction.c_str(),
                          c.protocol.c_str(), c.iou_score, c.dsc_score, c.n_images,
                          static_cast<unsigned long long>(c.seed), c.timestamp.c_str());
            s += buf;
        }
        return s;
    }

    /// Text table with one row per method and direction/protocol column pairs.
    std::string to_table() const {
        std::vector<std::string> methods, keys;
        for (const auto& c : cells) {
            const std::string key = c.direction + " " + c.protocol;
            if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
            if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
        }
        std::string s = "method";
        for (const auto& k : keys) s += " | " + k + " IoU | " + k + " DSC";
        s += "\n";
        for (const auto& m : methods) {
            s += m;
            for (const auto& k : keys) {
                const EvalCell* found = nullptr;
                for (const auto& c : cells) {
                    if (c.method == m && c.direction + " " + c.protocol == k) found = &c;
                }
                char buf[64];
                if (found) {
                    std::snprintf(buf, sizeof(buf), " | %.3f | %.3f", found->iou_score, found->dsc_score);
                } else {
                    std::snprintf(buf, sizeof(buf), " | - | -");
                }
                s += buf;
            }
            s += "\n";
        }
        return s;
    }
};

/// Deterministic run tag derived from the effective config. Artifacts carry
/// this instead of a wall-clock stamp so re-running with unchanged config and
/// seeds overwrites outputs with bit-identical content.
inline std::string run_stamp(const Json& config_echo) {
    const std::string s = config_echo.dump();
    uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "run-%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- training steps ----

/// One optimizer-ready gradient computation for the segmentation net.
inline SegmentationLoss seg_training_step(const UNet& seg, const ImageBatch& x, const MaskBatch& truth, double smooth,
                                          nn::GradBuffer& grads) {
    const int64_t bsz = x.dim(0);
    std::vector<nn::Ctx> ctxs(static_cast<size_t>(bsz));
    Tensor pred({bsz, 1, x.dim(2), x.dim(3)});
    parallel_for(bsz, [&](int64_t b) {
        pred.set_item(b, seg.forward_item(x.item(b), ctxs[static_cast<size_t>(b)]).probs);
    });
    Tensor d_pred;
    const SegmentationLoss loss = segmentation_loss_value_and_grad(pred, truth, smooth, d_pred);

    std::vector<nn::GradBuffer> item_grads;
    item_grads.reserve(static_cast<size_t>(bsz));
    for (int64_t b = 0; b < bsz; ++b) item_grads.emplace_back(seg.params());
    parallel_for(bsz, [&](int64_t b) {
        seg.backward_item(d_pred.item(b), ctxs[static_cast<size_t>(b)], &item_grads[static_cast<size_t>(b)]);
    });
    for (const auto& ig : item_grads) grads.add(ig);
    return loss;
}

namespace train_detail {

inline std::vector<std::vector<size_t>> make_batches(size_t n, int batch_size, Rng& rng) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    std::vector<std::vector<size_t>> batches;
    for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(n, start + static_cast<size_t>(batch_size));
        batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                             idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

inline double validation_dsc(const UNet& seg, const DomainDataset& val, double thresh) {
    const auto idx = val.all_indices();
    const MaskBatch pred = threshold(seg.segment(val.images(idx)), thresh);
    return dsc(pred, val.masks(idx));
}

inline double validation_dsc_on_recon(const Vae& vae, const UNet& seg, const DomainDataset& val, double thresh) {
    const auto idx = val.all_indices();
    const MaskBatch pred = threshold(seg.segment(vae.reconstruct(val.images(idx))), thresh);
    return dsc(pred, val.masks(idx));
}

inline double validation_recon_loss(const Vae& vae, const DomainDataset& val) {
    const auto idx = val.all_indices();
    const ImageBatch x = val.images(idx);
    return reconstruction_loss(x, vae.reconstruct(x));
}

} // namespace train_detail

struct BaselineResult {
    std::unique_ptr<UNet> model;
    Json manifest;
    double best_val_dsc = 0.0;
    int best_epoch = -1;
    bool aborted = false;
};

/// Baseline: segmentation net trained on raw source images; keeps the
/// checkpoint with the best validation DSC.
inline BaselineResult train_baseline(const DomainDataset& train, const DomainDataset& validation, const RunConfig& cfg,
                                     const SegConfig& seg_cfg) {
    cfg.validate();
    seg_cfg.validate();
    if (!train.all_have_masks()) throw std::invalid_argument("train_baseline: training dataset has items without masks");
    if (train.size() == 0 || validation.size() == 0) {
        throw std::invalid_argument("train_baseline: empty train or validation set");
    }

    BaselineResult res;
    res.model = std::make_unique<UNet>(seg_cfg);
    UNet& seg = *res.model;
    seg.init(cfg.seeds.init);
    nn::RmsProp opt(seg.params());
    nn::GradBuffer grads(seg.params());

    std::vector<Tensor> best_snap = snapshot_params(seg.params());
    Json epochs = Json::array();

    for (int epoch = 0; epoch < cfg.epochs && !res.aborted; ++epoch) {
        Rng shuffle_rng(combine_seed(cfg.seeds.data, static_cast<uint64_t>(epoch)));
        const auto batches = train_detail::make_batches(train.size(), cfg.batch_size, shuffle_rng);
        double sum_total = 0.0, sum_dice = 0.0, sum_bce = 0.0;
        int steps = 0;
        for (const auto& batch : batches) {
            grads.zero();
            const SegmentationLoss loss =
                seg_training_step(seg, train.images(batch), train.masks(batch), cfg.dice_smooth, grads);
            if (!std::isfinite(loss.total)) {
                res.aborted = true;
                break;
            }
            opt.step(seg.params(), grads, cfg.seg_lr);
            sum_total += loss.total;
            sum_dice += loss.dice_part;
            sum_bce += loss.bce_part;
            ++steps;
        }
        if (res.aborted) break;
        const double val_dsc = train_detail::validation_dsc(seg, validation, cfg.mask_threshold);
        epochs.push_back(Json{{"epoch", epoch},
                              {"steps", steps},
                              {"l_total", sum_total / steps},
                              {"l_dsc", sum_dice / steps},
                              {"l_bce", sum_bce / steps},
                              {"val_dsc", val_dsc}});
        if (val_dsc > res.best_val_dsc || res.best_epoch < 0) {
            res.best_val_dsc = val_dsc;
            res.best_epoch = epoch;
            best_snap = snapshot_params(seg.params());
        }
    }
    restore_params(seg.params(), best_snap);

    res.manifest = Json{{"kind", "baseline-training"},
                        {"code_version", kCodeVersion},
                        {"config", Json{{"run", to_json(cfg)}, {"seg", to_json(seg_cfg)}}},
                        {"epochs", epochs},
                        {"selected", Json{{"epoch", res.best_epoch}, {"val_dsc", res.best_val_dsc}}},
                        {"aborted", res.aborted},
                        {"n_train", train.size()},
                        {"n_validation", validation.size()}};
    return res;
}

struct UdaResult {
    std::unique_ptr<Vae> vae;
    std::unique_ptr<UNet> seg;
    Json manifest;
    double best_val_dsc = 0.0;
    double stage_a_val_recon = 0.0;
    bool aborted = false;
};

/// Staged UDA training: (A) VAE warm-up without the perceptual term, (B)
/// segmentation on frozen-VAE reconstructions, (C) joint refinement where the
/// perceptual loss uses the live segmentation features and both models update.
inline UdaResult train_uda(const DomainDataset& train, const DomainDataset& validation, const RunConfig& cfg,
                           const VaeConfig& vae_cfg, const SegConfig& seg_cfg) {
    cfg.validate();
    vae_cfg.validate();
    seg_cfg.validate();
    if (!train.all_have_masks()) throw std::invalid_argument("train_uda: training dataset has items without masks");
    if (train.size() == 0 || validation.size() == 0) {
        throw std::invalid_argument("train_uda: empty train or validation set");
    }

    UdaResult res;
    res.vae = std::make_unique<Vae>(vae_cfg);
    res.seg = std::make_unique<UNet>(seg_cfg);
    Vae& vae = *res.vae;
    UNet& seg = *res.seg;
    vae.init(combine_seed(cfg.seeds.init, 0));
    seg.init(combine_seed(cfg.seeds.init, 1));

    nn::RmsProp vae_opt(vae.params());
    nn::RmsProp seg_opt(seg.params());
    nn::GradBuffer vae_grads(vae.params());
    nn::GradBuffer seg_grads(seg.params());
    Rng noise_rng(cfg.seeds.noise);

    Json epochs = Json::array();
    int epoch = 0;

    // ---- stage A: VAE warm-up ----
    double best_val_recon = train_detail::validation_recon_loss(vae, validation);
    std::vector<Tensor> best_vae_snap = snapshot_params(vae.params());
    const VaeLossWeights warmup{cfg.lambda_r, cfg.lambda_kl, 0.0};
    for (int e = 0; e < cfg.stage_a_epochs() && !res.aborted; ++e, ++epoch) {
        Rng shuffle_rng(combine_seed(cfg.seeds.data, static_cast<uint64_t>(epoch)));
        const auto batches = train_detail::make_batches(train.size(), cfg.batch_size, shuffle_rng);
        double sum_lr = 0.0, sum_kl = 0.0;
        int steps = 0;
        for (const auto& batch : batches) {
            vae_grads.zero();
            try {
                const VaeStepResult step = vae_training_step(vae, train.images(batch), warmup, nullptr, noise_rng, vae_grads);
                sum_lr += step.report.get("l_r");
                sum_kl += step.report.get("d_kl");
            } catch (const std::runtime_error&) {
                res.aborted = true;
                break;
            }
            vae_opt.step(vae.params(), vae_grads, cfg.vae_lr);
            ++steps;
        }
        if (res.aborted) break;
        const double val_recon = train_detail::validation_recon_loss(vae, validation);
        epochs.push_back(Json{{"epoch", epoch},
                              {"stage", "A"},
                              {"steps", steps},
                              {"l_r", sum_lr / steps},
                              {"d_kl", sum_kl / steps},
                              {"val_l_r", val_recon}});
        if (val_recon < best_val_recon) {
            best_val_recon = val_recon;
            best_vae_snap = snapshot_params(vae.params());
        }
    }
    restore_params(vae.params(), best_vae_snap);
    res.stage_a_val_recon = best_val_recon;
    const uint64_t vae_hash_after_a = hash_params(vae.params());

    // ---- stage B: segmentation on frozen reconstructions ----
    double best_pair_dsc = -1.0;
    std::vector<Tensor> best_seg_snap = snapshot_params(seg.params());
    for (int e = 0; e < cfg.stage_b_epochs() && !res.aborted; ++e, ++epoch) {
        Rng shuffle_rng(combine_seed(cfg.seeds.data, static_cast<uint64_t>(epoch)));
        const auto batches = train_detail::make_batches(train.size(), cfg.batch_size, shuffle_rng);
        double sum_total = 0.0;
        int steps = 0;
        for (const auto& batch : batches) {
            seg_grads.zero();
            const ImageBatch recon = vae.reconstruct(train.images(batch));
            const SegmentationLoss loss = seg_training_step(seg, recon, train.masks(batch), cfg.dice_smooth, seg_grads);
            if (!std::isfinite(loss.total)) {
                res.aborted = true;
                break;
            }
            seg_opt.step(seg.params(), seg_grads, cfg.seg_lr);
            sum_total += loss.total;
            ++steps;
        }
        if (res.aborted) break;
        const double val_dsc = train_detail::validation_dsc_on_recon(vae, seg, validation, cfg.mask_threshold);
        epochs.push_back(
            Json{{"epoch", epoch}, {"stage", "B"}, {"steps", steps}, {"l_seg", sum_total / steps}, {"val_dsc", val_dsc}});
        if (val_dsc > best_pair_dsc) {
            best_pair_dsc = val_dsc;
            best_seg_snap = snapshot_params(seg.params());
        }
    }
    restore_params(seg.params(), best_seg_snap);
    const uint64_t vae_hash_after_b = hash_params(vae.params());

    // ---- stage C: joint refinement ----
    const VaeLossWeights joint{cfg.lambda_r, cfg.lambda_kl, cfg.lambda_p};
    const PerceptualHook hook = seg.perceptual_hook();
    best_vae_snap = snapshot_params(vae.params());
    for (int e = 0; e < cfg.stage_c_epochs() && !res.aborted; ++e, ++epoch) {
        Rng shuffle_rng(combine_seed(cfg.seeds.data, static_cast<uint64_t>(epoch)));
        const auto batches = train_detail::make_batches(train.size(), cfg.batch_size, shuffle_rng);
        double sum_lr = 0.0, sum_kl = 0.0, sum_lp = 0.0, sum_seg = 0.0;
        int steps = 0;
        for (const auto& batch : batches) {
            const ImageBatch x = train.images(batch);
            vae_grads.zero();
            ImageBatch recon;
            try {
                VaeStepResult step = vae_training_step(vae, x, joint, &hook, noise_rng, vae_grads);
                sum_lr += step.report.get("l_r");
                sum_kl += step.report.get("d_kl");
                sum_lp += step.report.get("l_p");
                recon = std::move(step.x_hat);
            } catch (const std::runtime_error&) {
                res.aborted = true;
                break;
            }
            vae_opt.step(vae.params(), vae_grads, cfg.vae_lr);

            seg_grads.zero();
            const SegmentationLoss seg_loss = seg_training_step(seg, recon, train.masks(batch), cfg.dice_smooth, seg_grads);
            if (!std::isfinite(seg_loss.total)) {
                res.aborted = true;
                break;
            }
            seg_opt.step(seg.params(), seg_grads, cfg.seg_lr);
            sum_seg += seg_loss.total;
            ++steps;
        }
        if (res.aborted) break;
        const double val_dsc = train_detail::validation_dsc_on_recon(vae, seg, validation, cfg.mask_threshold);
        const double val_recon = train_detail::validation_recon_loss(vae, validation);
        epochs.push_back(Json{{"epoch", epoch},
                              {"stage", "C"},
                              {"steps", steps},
                              {"l_r", sum_lr / steps},
                              {"d_kl", sum_kl / steps},
                              {"l_p", sum_lp / steps},
                              {"l_seg", sum_seg / steps},
                              {"val_dsc", val_dsc},
                              {"val_l_r", val_recon}});
        if (val_dsc > best_pair_dsc) {
            best_pair_dsc = val_dsc;
            best_seg_snap = snapshot_params(seg.params());
            best_vae_snap = snapshot_params(vae.params());
        }
    }
    restore_params(seg.params(), best_seg_snap);
    restore_params(vae.params(), best_vae_snap);
    res.best_val_dsc = best_pair_dsc;

    res.manifest = Json{{"kind", "uda-training"},
                        {"code_version", kCodeVersion},
                        {"config", Json{{"run", to_json(cfg)}, {"vae", to_json(vae_cfg)}, {"seg", to_json(seg_cfg)}}},
                        {"epochs", epochs},
                        {"stage_epochs",
                         Json{{"a", cfg.stage_a_epochs()}, {"b", cfg.stage_b_epochs()}, {"c", cfg.stage_c_epochs()}}},
                        {"vae_hash_after_stage_a", vae_hash_after_a},
                        {"vae_hash_after_stage_b", vae_hash_after_b},
                        {"selected", Json{{"val_dsc", res.best_val_dsc}, {"stage_a_val_l_r", res.stage_a_val_recon}}},
                        {"aborted", res.aborted},
                        {"n_train", train.size()},
                        {"n_validation", validation.size()}};
    return res;
}

// ---- evaluation ----

enum class EvalMethod { BaselineUnet, Uda };

inline const char* eval_method_name(EvalMethod m) { return m == EvalMethod::BaselineUnet ? "baseline-unet" : "uda"; }

/// Evaluate one (method, direction, protocol) cell on a test set with masks.
/// The baseline path segments target images directly; the UDA path maps them
/// through latent search first. Models are used read-only.
inline EvalCell evaluate_cell(EvalMethod method, const std::string& direction, const std::string& protocol,
                              const DomainDataset& testset, const UNet& seg, const Vae* vae,
                              const LatentSearchConfig& ls_cfg, const SsimConfig& ssim_cfg, double thresh,
                              const std::string& stamp) {
    if (testset.size() == 0) throw std::invalid_argument("evaluate_cell: empty test set");
    if (!testset.all_have_masks()) {
        throw std::invalid_argument("evaluate_cell: test set '" + testset.name + "' has items without masks");
    }
    const auto idx = testset.all_indices();
    const ImageBatch x = testset.images(idx);
    const MaskBatch truth = testset.masks(idx);

    MaskBatch pred;
    if (method == EvalMethod::BaselineUnet) {
        pred = threshold(seg.segment(x), thresh);
    } else {
        if (vae == nullptr) throw std::invalid_argument("evaluate_cell: UDA method requires a VAE");
        pred = infer_target_mask(x, *vae, seg, ls_cfg, ssim_cfg, thresh).first;
    }

    EvalCell cell;
    cell.method = eval_method_name(method);
    cell.direction = direction;
    cell.protocol = protocol;
    cell.iou_score = iou(pred, truth);
    cell.dsc_score = dsc(pred, truth);
    cell.n_images = static_cast<int>(testset.size());
    cell.seed = ls_cfg.seed;
    cell.timestamp = stamp;
    return cell;
}

// ---- latent-search trace serialization ----

inline Json trace_to_json(const LatentSearchTrace& t, const LatentSearchConfig& cfg) {
    return Json{{"config", to_json(cfg)},
                {"losses", t.losses},
                {"best_loss", t.best_loss},
                {"iterations_used", t.iterations_used},
                {"restart_index_of_best", t.restart_index_of_best},
                {"aborted_restarts", t.aborted_restarts}};
}

} // namespace udaseg

#endif // UDASEG_TRAIN_TRAINER_HPP
