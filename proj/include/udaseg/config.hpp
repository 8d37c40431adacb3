#ifndef UDASEG_CONFIG_HPP
#define UDASEG_CONFIG_HPP

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "udaseg/data/synthetic.hpp"
#include "udaseg/infer/latent_search.hpp"
#include "udaseg/io/json_util.hpp"
#include "udaseg/loss/ssim.hpp"
#include "udaseg/model/unet.hpp"
#include "udaseg/model/vae.hpp"
#include "udaseg/train/run_config.hpp"

namespace udaseg {

// ---- SsimConfig ----

inline Json to_json(const SsimConfig& c) {
    return Json{{"alpha", c.alpha},
                {"beta", c.beta},
                {"gamma", c.gamma},
                {"window_size", c.window_size},
                {"window_sigma", c.window_sigma},
                {"c1", c.c1},
                {"c2", c.c2},
                {"c3", c.c3},
                {"channel_policy",
                 c.channel_policy == SsimConfig::ChannelPolicy::PerChannelMean ? "per-channel-mean" : "luminance-only"}};
}

inline SsimConfig ssim_config_from_json(const Json& j, const std::string& path = "ssim") {
    SsimConfig c;
    JsonReader r(j, path);
    r.get("alpha", c.alpha);
    r.get("beta", c.beta);
    r.get("gamma", c.gamma);
    r.get("window_size", c.window_size);
    r.get("window_sigma", c.window_sigma);
    r.get("c1", c.c1);
    r.get("c2", c.c2);
    r.get("c3", c.c3);
    std::string policy = c.channel_policy == SsimConfig::ChannelPolicy::PerChannelMean ? "per-channel-mean"
                                                                                       : "luminance-only";
    r.get("channel_policy", policy);
    if (policy == "per-channel-mean") {
        c.channel_policy = SsimConfig::ChannelPolicy::PerChannelMean;
    } else if (policy == "luminance-only") {
        c.channel_policy = SsimConfig::ChannelPolicy::LuminanceOnly;
    } else {
        throw std::runtime_error("config: bad value for '" + path + ".channel_policy': " + policy);
    }
    r.finish();
    c.validate();
    return c;
}

// ---- VaeConfig ----

inline Json to_json(const VaeConfig& c) {
    return Json{{"input_h", c.input_h},
                {"input_w", c.input_w},
                {"input_channels", c.input_channels},
                {"encoder_channels", c.encoder_channels},
                {"decoder_channels", c.decoder_channels},
                {"latent_dim", c.latent_dim},
                {"edge_injection_stage", c.edge_injection_stage},
                {"activation_slope", c.activation_slope}};
}

inline VaeConfig vae_config_from_json(const Json& j, const std::string& path = "vae") {
    VaeConfig c;
    JsonReader r(j, path);
    std::string preset;
    r.get("preset", preset);
    if (preset == "desk-scale") {
        c = VaeConfig::desk_scale();
    } else if (preset == "paper-scale") {
        c = VaeConfig::paper_scale();
    } else if (!preset.empty()) {
        throw std::runtime_error("config: bad value for '" + path + ".preset': " + preset);
    }
    r.get("input_h", c.input_h);
    r.get("input_w", c.input_w);
    r.get("input_channels", c.input_channels);
    r.get("encoder_channels", c.encoder_channels);
    r.get("decoder_channels", c.decoder_channels);
    r.get("latent_dim", c.latent_dim);
    r.get("edge_injection_stage", c.edge_injection_stage);
    r.get("activation_slope", c.activation_slope);
    r.finish();
    c.validate();
    return c;
}

// ---- SegConfig ----

inline Json to_json(const SegConfig& c) {
    return Json{{"backbone", c.backbone_id == SegConfig::Backbone::DeskScale ? "desk-scale" : "paper-scale"},
                {"input_h", c.input_h},
                {"input_w", c.input_w},
                {"input_channels", c.input_channels},
                {"channels", c.channels},
                {"feature_tap_index", c.feature_tap_index}};
}

inline SegConfig seg_config_from_json(const Json& j, const std::string& path = "seg") {
    SegConfig c;
    JsonReader r(j, path);
    std::string backbone = c.backbone_id == SegConfig::Backbone::DeskScale ? "desk-scale" : "paper-scale";
    r.get("backbone", backbone);
    if (backbone == "desk-scale") {
        c = SegConfig::desk_scale();
    } else if (backbone == "paper-scale") {
        c = SegConfig::paper_scale();
    } else {
        throw std::runtime_error("config: bad value for '" + path + ".backbone': " + backbone);
    }
    r.get("input_h", c.input_h);
    r.get("input_w", c.input_w);
    r.get("input_channels", c.input_channels);
    r.get("channels", c.channels);
    r.get("feature_tap_index", c.feature_tap_index);
    r.finish();
    c.validate();
    return c;
}

// ---- LatentSearchConfig ----

inline Json to_json(const LatentSearchConfig& c) {
    const char* init = c.init_policy == LatentSearchConfig::Init::EncoderInit  ? "encoder-init"
                       : c.init_policy == LatentSearchConfig::Init::ZeroInit   ? "zero-init"
                                                                               : "random-init";
    return Json{{"max_iterations", c.max_iterations},
                {"learning_rate", c.learning_rate},
                {"init_policy", init},
                {"restarts", c.restarts},
                {"convergence_tol", c.convergence_tol},
                {"seed", c.seed},
                {"prior_weight", c.prior_weight},
                {"rms_rho", c.rms_rho},
                {"rms_eps", c.rms_eps}};
}

inline LatentSearchConfig latent_search_config_from_json(const Json& j, const std::string& path = "latent_search") {
    LatentSearchConfig c;
    JsonReader r(j, path);
    r.get("max_iterations", c.max_iterations);
    r.get("learning_rate", c.learning_rate);
    std::string init = "encoder-init";
    r.get("init_policy", init);
    if (init == "encoder-init") {
        c.init_policy = LatentSearchConfig::Init::EncoderInit;
    } else if (init == "zero-init") {
        c.init_policy = LatentSearchConfig::Init::ZeroInit;
    } else if (init == "random-init") {
        c.init_policy = LatentSearchConfig::Init::RandomInit;
    } else {
        throw std::runtime_error("config: bad value for '" + path + ".init_policy': " + init);
    }
    r.get("restarts", c.restarts);
    r.get("convergence_tol", c.convergence_tol);
    r.get("seed", c.seed);
    r.get("prior_weight", c.prior_weight);
    r.get("rms_rho", c.rms_rho);
    r.get("rms_eps", c.rms_eps);
    r.finish();
    c.validate();
    return c;
}

// ---- SplitSpec ----

inline Json to_json(const SplitSpec& c) {
    return Json{{"train_fraction", c.train_fraction}, {"mix_fraction", c.mix_fraction}, {"seed", c.seed}};
}

inline SplitSpec split_spec_from_json(const Json& j, const std::string& path = "split") {
    SplitSpec c;
    JsonReader r(j, path);
    r.get("train_fraction", c.train_fraction);
    r.get("mix_fraction", c.mix_fraction);
    r.get("seed", c.seed);
    r.finish();
    c.validate();
    return c;
}

// ---- Synthetic benchmark ----

inline Json to_json(const StyleConfig& c) {
    return Json{{"color_matrix", c.color_matrix},
                {"gamma", c.gamma},
                {"texture_amplitude", c.texture_amplitude},
                {"noise_std", c.noise_std}};
}

inline StyleConfig style_config_from_json(const Json& j, const std::string& path) {
    StyleConfig c;
    JsonReader r(j, path);
    std::vector<double> m(c.color_matrix.begin(), c.color_matrix.end());
    r.get("color_matrix", m);
    if (m.size() != 9) throw std::runtime_error("config: '" + path + ".color_matrix' must have 9 entries");
    std::copy(m.begin(), m.end(), c.color_matrix.begin());
    r.get("gamma", c.gamma);
    r.get("texture_amplitude", c.texture_amplitude);
    r.get("noise_std", c.noise_std);
    r.finish();
    c.validate();
    return c;
}

inline Json to_json(const ShapeFamily& c) {
    return Json{{"min_blobs", c.min_blobs},
                {"max_blobs", c.max_blobs},
                {"min_radius", c.min_radius},
                {"max_radius", c.max_radius},
                {"boundary_noise", c.boundary_noise}};
}

inline ShapeFamily shape_family_from_json(const Json& j, const std::string& path) {
    ShapeFamily c;
    JsonReader r(j, path);
    r.get("min_blobs", c.min_blobs);
    r.get("max_blobs", c.max_blobs);
    r.get("min_radius", c.min_radius);
    r.get("max_radius", c.max_radius);
    r.get("boundary_noise", c.boundary_noise);
    r.finish();
    c.validate();
    return c;
}

inline Json to_json(const SyntheticShiftConfig& c) {
    return Json{{"n_images", c.n_images}, {"height", c.height},
                {"width", c.width},       {"shape_family", to_json(c.shape_family)},
                {"source_style", to_json(c.source_style)}, {"target_style", to_json(c.target_style)},
                {"seed", c.seed}};
}

inline SyntheticShiftConfig synthetic_config_from_json(const Json& j, const std::string& path = "synth") {
    SyntheticShiftConfig c;
    JsonReader r(j, path);
    r.get("n_images", c.n_images);
    r.get("height", c.height);
    r.get("width", c.width);
    if (const Json* s = r.child("shape_family")) c.shape_family = shape_family_from_json(*s, r.path("shape_family"));
    if (const Json* s = r.child("source_style")) c.source_style = style_config_from_json(*s, r.path("source_style"));
    if (const Json* s = r.child("target_style")) c.target_style = style_config_from_json(*s, r.path("target_style"));
    r.get("seed", c.seed);
    r.finish();
    c.validate();
    return c;
}

// ---- RunConfig ----

inline Json to_json(const SeedSet& s) { return Json{{"data", s.data}, {"init", s.init}, {"noise", s.noise}}; }

inline SeedSet seed_set_from_json(const Json& j, const std::string& path) {
    SeedSet s;
    JsonReader r(j, path);
    r.get("data", s.data);
    r.get("init", s.init);
    r.get("noise", s.noise);
    r.finish();
    return s;
}

inline Json to_json(const RunConfig& c) {
    return Json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"vae_lr", c.vae_lr},
                {"seg_lr", c.seg_lr},
                {"optimizer", c.optimizer_id},
                {"stage_a_fraction", c.stage_a_fraction},
                {"stage_b_fraction", c.stage_b_fraction},
                {"lambda_r", c.lambda_r},
                {"lambda_kl", c.lambda_kl},
                {"lambda_p", c.lambda_p},
                {"dice_smooth", c.dice_smooth},
                {"mask_threshold", c.mask_threshold},
                {"seeds", to_json(c.seeds)},
                {"source_root", c.source_root},
                {"target_root", c.target_root},
                {"checkpoint_dir", c.checkpoint_dir},
                {"report_dir", c.report_dir}};
}

inline RunConfig run_config_from_json(const Json& j, const std::string& path = "run") {
    RunConfig c;
    JsonReader r(j, path);
    r.get("epochs", c.epochs);
    r.get("batch_size", c.batch_size);
    r.get("vae_lr", c.vae_lr);
    r.get("seg_lr", c.seg_lr);
    r.get("optimizer", c.optimizer_id);
    r.get("stage_a_fraction", c.stage_a_fraction);
    r.get("stage_b_fraction", c.stage_b_fraction);
    r.get("lambda_r", c.lambda_r);
    r.get("lambda_kl", c.lambda_kl);
    r.get("lambda_p", c.lambda_p);
    r.get("dice_smooth", c.dice_smooth);
    r.get("mask_threshold", c.mask_threshold);
    if (const Json* s = r.child("seeds")) c.seeds = seed_set_from_json(*s, r.path("seeds"));
    r.get("source_root", c.source_root);
    r.get("target_root", c.target_root);
    r.get("checkpoint_dir", c.checkpoint_dir);
    r.get("report_dir", c.report_dir);
    r.finish();
    c.validate();
    return c;
}

// ---- Top-level CLI config ----

/// Aggregate configuration document. Every default is materialized on
/// serialization so emitted manifests carry the complete effective config.
struct CliConfig {
    SyntheticShiftConfig synth;
    VaeConfig vae = VaeConfig::desk_scale();
    SegConfig seg = SegConfig::desk_scale();
    SsimConfig ssim;
    LatentSearchConfig latent_search;
    SplitSpec split;
    RunConfig run;

    void validate() const {
        synth.validate();
        vae.validate();
        seg.validate();
        ssim.validate();
        latent_search.validate();
        split.validate();
        run.validate();
        if (vae.input_h != seg.input_h || vae.input_w != seg.input_w) {
            throw std::invalid_argument("config: vae and seg input sizes must match");
        }
    }
};

inline Json to_json(const CliConfig& c) {
    return Json{{"synth", to_json(c.synth)},
                {"vae", to_json(c.vae)},
                {"seg", to_json(c.seg)},
                {"ssim", to_json(c.ssim)},
                {"latent_search", to_json(c.latent_search)},
                {"split", to_json(c.split)},
                {"run", to_json(c.run)}};
}

inline CliConfig cli_config_from_json(const Json& j) {
    CliConfig c;
    JsonReader r(j, "config");
    if (const Json* s = r.child("synth")) c.synth = synthetic_config_from_json(*s, "config.synth");
    if (const Json* s = r.child("vae")) c.vae = vae_config_from_json(*s, "config.vae");
    if (const Json* s = r.child("seg")) c.seg = seg_config_from_json(*s, "config.seg");
    if (const Json* s = r.child("ssim")) c.ssim = ssim_config_from_json(*s, "config.ssim");
    if (const Json* s = r.child("latent_search")) {
        c.latent_search = latent_search_config_from_json(*s, "config.latent_search");
    }
    if (const Json* s = r.child("split")) c.split = split_spec_from_json(*s, "config.split");
    if (const Json* s = r.child("run")) c.run = run_config_from_json(*s, "config.run");
    r.finish();
    c.validate();
    return c;
}

} // namespace udaseg

#endif // UDASEG_CONFIG_HPP
