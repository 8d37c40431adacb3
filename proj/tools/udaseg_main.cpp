// Command-line driver: synthetic dataset generation, training, evaluation
// and single-image / batch inference, all driven by one JSON config file.

#include <cerrno>
#include <cstdio>
#include <exception>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unistd.h>
#include <vector>

#include <CLI11.hpp>

#include "udaseg/udaseg.hpp"

namespace fs = std::filesystem;
using namespace udaseg;

namespace {

/// Exclusive lock on an output directory; concurrent runs must use disjoint
/// output directories.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST) {
                throw std::runtime_error("output directory '" + dir.string() + "' is locked by another run (remove " +
                                         path_.string() + " if stale)");
            }
            throw std::runtime_error("cannot create lock file '" + path_.string() + "'");
        }
    }
    ~DirLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

void check_device_env() {
    if (const char* dev = std::getenv("UDASEG_DEVICE")) {
        const std::string d = dev;
        if (d != "cpu" && !d.empty()) {
            throw std::runtime_error("UDASEG_DEVICE='" + d + "' is not supported; only 'cpu' is available");
        }
    }
}

CliConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file '" + path + "'");
    Json j;
    try {
        j = Json::parse(is);
    } catch (const Json::parse_error& e) {
        throw std::runtime_error("config parse error in '" + path + "': " + e.what());
    }
    return cli_config_from_json(j);
}

void apply_seed_override(CliConfig& cfg, const std::optional<uint64_t>& seed) {
    if (!seed) return;
    cfg.synth.seed = *seed;
    cfg.split.seed = combine_seed(*seed, 100);
    cfg.run.seeds.data = combine_seed(*seed, 101);
    cfg.run.seeds.init = combine_seed(*seed, 102);
    cfg.run.seeds.noise = combine_seed(*seed, 103);
    cfg.latent_search.seed = combine_seed(*seed, 104);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
    os << text;
    if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

Json platform_info() {
    return Json{{"threads", thread_count()}, {"compiler", __VERSION__}, {"code_version", kCodeVersion}};
}

std::vector<PlotSeries> series_from_epochs(const Json& epochs) {
    std::vector<std::string> keys;
    for (const auto& e : epochs) {
        for (auto it = e.begin(); it != e.end(); ++it) {
            if (it->is_number() && it.key() != "epoch" && it.key() != "steps" &&
                std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
                keys.push_back(it.key());
            }
        }
    }
    std::vector<PlotSeries> series;
    for (const auto& k : keys) {
        PlotSeries s;
        s.name = k;
        for (const auto& e : epochs) {
            s.values.push_back(e.contains(k) ? e.at(k).get<double>() : std::numeric_limits<double>::quiet_NaN());
        }
        series.push_back(std::move(s));
    }
    return series;
}

// ---- synth ----

int cmd_synth(const std::string& config_path, const std::string& out_dir, std::optional<uint64_t> seed) {
    CliConfig cfg = load_config(config_path);
    apply_seed_override(cfg, seed);
    const fs::path out(out_dir);
    DirLock lock(out);

    const auto [source, target] = generate_synthetic_shift(cfg.synth);
    save_dataset(source, out / "source");
    save_dataset(target, out / "target");

    Json manifest{{"kind", "synthetic-dataset"},
                  {"config", Json{{"synth", to_json(cfg.synth)}}},
                  {"counts", Json{{"source", source.size()}, {"target", target.size()}}},
                  {"platform", platform_info()}};
    write_text(out / "manifest.json", manifest.dump(2) + "\n");

    std::printf("synth: wrote %zu source and %zu target images (%lldx%lld) to %s\n", source.size(), target.size(),
                static_cast<long long>(cfg.synth.height), static_cast<long long>(cfg.synth.width), out_dir.c_str());
    return 0;
}

// ---- train ----

int cmd_train(const std::string& config_path, const std::string& mode, const std::string& out_dir,
              std::optional<uint64_t> seed) {
    CliConfig cfg = load_config(config_path);
    apply_seed_override(cfg, seed);
    if (cfg.run.source_root.empty()) throw std::runtime_error("config: run.source_root is required for training");
    const DomainDataset source =
        load_dataset(cfg.run.source_root, "source", {cfg.vae.input_h, cfg.vae.input_w}, DomainTag::Source);
    if (source.size() < 2) throw std::runtime_error("training dataset has fewer than 2 items");
    const auto [train, validation] = split_dataset(source, cfg.split);

    const fs::path out(out_dir);
    DirLock lock(out);
    fs::create_directories(out / "checkpoints");
    const Json config_echo = to_json(cfg);
    const std::string stamp = run_stamp(config_echo);

    Json manifest;
    if (mode == "baseline") {
        BaselineResult res = train_baseline(train, validation, cfg.run, cfg.seg);
        manifest = res.manifest;
        ckpt::Meta meta;
        meta.component = "segmentation";
        meta.config = to_json(cfg.seg);
        meta.epoch = res.best_epoch;
        meta.extra = Json{{"seeds", to_json(cfg.run.seeds)},
                          {"selection", Json{{"val_dsc", res.best_val_dsc}}},
                          {"stamp", stamp},
                          {"code_version", kCodeVersion}};
        ckpt::save((out / "checkpoints" / "baseline_seg.ckpt").string(), meta, res.model->params());
        std::printf("train baseline: best validation DSC %.4f at epoch %d\n", res.best_val_dsc, res.best_epoch);
        if (res.aborted) std::fprintf(stderr, "warning: training aborted on non-finite loss; kept last good model\n");
    } else if (mode == "uda") {
        UdaResult res = train_uda(train, validation, cfg.run, cfg.vae, cfg.seg);
        manifest = res.manifest;
        const Json extra{{"seeds", to_json(cfg.run.seeds)},
                         {"selection", Json{{"val_dsc", res.best_val_dsc}, {"stage_a_val_l_r", res.stage_a_val_recon}}},
                         {"stamp", stamp},
                         {"code_version", kCodeVersion}};
        ckpt::Meta vae_meta{"vae", to_json(cfg.vae), cfg.run.epochs, extra};
        ckpt::save((out / "checkpoints" / "uda_vae.ckpt").string(), vae_meta, res.vae->params());
        ckpt::Meta seg_meta{"segmentation", to_json(cfg.seg), cfg.run.epochs, extra};
        ckpt::save((out / "checkpoints" / "uda_seg.ckpt").string(), seg_meta, res.seg->params());
        std::printf("train uda: best validation DSC %.4f (stage A val L_r %.5f)\n", res.best_val_dsc,
                    res.stage_a_val_recon);
        if (res.aborted) std::fprintf(stderr, "warning: training aborted on non-finite loss; kept last good model\n");
    } else {
        throw std::runtime_error("unknown --mode '" + mode + "' (expected baseline or uda)");
    }

    manifest["config_echo"] = config_echo;
    manifest["stamp"] = stamp;
    manifest["platform"] = platform_info();
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    render_line_plot((out / "loss_curves.png").string(), series_from_epochs(manifest.at("epochs")));
    return 0;
}

// ---- eval ----

int cmd_eval(const std::string& config_path, const std::string& protocol, const std::string& out_dir,
             const std::string& checkpoints_dir, std::optional<uint64_t> seed) {
    CliConfig cfg = load_config(config_path);
    apply_seed_override(cfg, seed);
    if (protocol != "separated" && protocol != "mixed") {
        throw std::runtime_error("unknown --protocol '" + protocol + "' (expected separated or mixed)");
    }
    if (cfg.run.source_root.empty() || cfg.run.target_root.empty()) {
        throw std::runtime_error("config: run.source_root and run.target_root are required for evaluation");
    }

    const fs::path ckdir(checkpoints_dir);
    for (const char* name : {"baseline_seg.ckpt", "uda_vae.ckpt", "uda_seg.ckpt"}) {
        if (!fs::exists(ckdir / name)) {
            throw std::runtime_error("missing checkpoint '" + (ckdir / name).string() + "'");
        }
    }

    const DomainDataset source =
        load_dataset(cfg.run.source_root, "source", {cfg.vae.input_h, cfg.vae.input_w}, DomainTag::Source);
    const DomainDataset target =
        load_dataset(cfg.run.target_root, "target", {cfg.vae.input_h, cfg.vae.input_w}, DomainTag::Target);
    const DomainDataset testset = protocol == "mixed" ? build_mixed_test(target, source, cfg.split) : target;
    const std::string direction = source.name + "->" + target.name;

    UNet baseline(cfg.seg);
    const ckpt::Meta base_meta = ckpt::load((ckdir / "baseline_seg.ckpt").string(), "segmentation", baseline.params());
    Vae vae(cfg.vae);
    ckpt::load((ckdir / "uda_vae.ckpt").string(), "vae", vae.params());
    UNet uda_seg(cfg.seg);
    const ckpt::Meta uda_meta = ckpt::load((ckdir / "uda_seg.ckpt").string(), "segmentation", uda_seg.params());

    const fs::path out(out_dir);
    DirLock lock(out);

    const std::string base_stamp = base_meta.extra.value("stamp", "run-unknown");
    const std::string uda_stamp = uda_meta.extra.value("stamp", "run-unknown");

    EvalReport report;
    report.add(evaluate_cell(EvalMethod::BaselineUnet, direction, protocol, testset, baseline, nullptr,
                             cfg.latent_search, cfg.ssim, cfg.run.mask_threshold, base_stamp));
    report.add(evaluate_cell(EvalMethod::Uda, direction, protocol, testset, uda_seg, &vae, cfg.latent_search, cfg.ssim,
                             cfg.run.mask_threshold, uda_stamp));

    write_text(out / ("report_" + protocol + ".json"), report.to_json().dump(2) + "\n");
    write_text(out / ("report_" + protocol + ".csv"), report.to_csv());
    write_text(out / ("report_" + protocol + ".txt"), report.to_table());

    // Five-panel overlays: input, ground truth, baseline mask, uda mask, clone.
    const fs::path overlay_dir = out / ("overlays_" + protocol);
    fs::create_directories(overlay_dir);
    const auto idx = testset.all_indices();
    const ImageBatch x = testset.images(idx);
    const MaskBatch truth = testset.masks(idx);
    const MaskBatch base_masks = threshold(baseline.segment(x), cfg.run.mask_threshold);
    const auto [uda_masks, traces] =
        infer_target_mask(x, vae, uda_seg, cfg.latent_search, cfg.ssim, cfg.run.mask_threshold);
    for (size_t i = 0; i < testset.size(); ++i) {
        const auto b = static_cast<int64_t>(i);
        // Index-prefixed names: mixed sets can repeat item names across domains.
        char prefix[16];
        std::snprintf(prefix, sizeof(prefix), "%04zu_", i);
        render_panel_row(
            (overlay_dir / (prefix + testset.items[i].name + ".png")).string(),
            {x.item(b), truth.item(b), base_masks.item(b), uda_masks.item(b), traces[i].best_reconstruction});
    }

    Json manifest{{"kind", "evaluation"},
                  {"protocol", protocol},
                  {"direction", direction},
                  {"config_echo", to_json(cfg)},
                  {"checkpoints", Json{{"baseline", base_stamp}, {"uda", uda_stamp}}},
                  {"n_images", testset.size()},
                  {"platform", platform_info()}};
    write_text(out / ("manifest_" + protocol + ".json"), manifest.dump(2) + "\n");

    std::printf("%s", report.to_table().c_str());
    return 0;
}

// ---- infer ----

int cmd_infer(const std::string& vae_ckpt, const std::string& seg_ckpt, const std::string& input_path,
              const std::string& out_dir, std::optional<uint64_t> seed, const std::string& config_path) {
    CliConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    apply_seed_override(cfg, seed);

    const ckpt::Meta vae_meta = ckpt::load_meta(vae_ckpt);
    Vae vae(vae_config_from_json(vae_meta.config, "checkpoint.vae"));
    ckpt::load(vae_ckpt, "vae", vae.params());
    const ckpt::Meta seg_meta = ckpt::load_meta(seg_ckpt);
    UNet seg(seg_config_from_json(seg_meta.config, "checkpoint.seg"));
    ckpt::load(seg_ckpt, "segmentation", seg.params());
    std::printf("loaded vae checkpoint (epoch %lld) and segmentation checkpoint (epoch %lld)\n",
                static_cast<long long>(vae_meta.epoch), static_cast<long long>(seg_meta.epoch));

    const int64_t h = vae.config().input_h, w = vae.config().input_w;
    std::vector<std::string> names;
    ImageBatch x;
    if (fs::is_directory(input_path)) {
        const DomainDataset ds = load_dataset(input_path, "input", {h, w}, DomainTag::Target);
        if (ds.size() == 0) throw std::runtime_error("no images found under '" + input_path + "'");
        x = ds.images(ds.all_indices());
        for (const auto& it : ds.items) names.push_back(it.name);
    } else {
        const Tensor img = read_png(input_path, 3);
        if (img.dim(1) != h || img.dim(2) != w) {
            throw std::runtime_error("image size " + img.shape_str() + " does not match checkpoint input size (" +
                                     std::to_string(h) + "x" + std::to_string(w) + ")");
        }
        x = img.reshaped({1, 3, h, w});
        names.push_back(fs::path(input_path).stem().string());
    }

    const fs::path out(out_dir);
    DirLock lock(out);
    fs::create_directories(out / "masks");
    fs::create_directories(out / "traces");

    const auto [masks, traces] = infer_target_mask(x, vae, seg, cfg.latent_search, cfg.ssim, cfg.run.mask_threshold);
    for (size_t i = 0; i < names.size(); ++i) {
        const auto b = static_cast<int64_t>(i);
        write_png((out / "masks" / (names[i] + ".png")).string(), masks.item(b));
        write_text(out / "traces" / (names[i] + ".json"), trace_to_json(traces[i], cfg.latent_search).dump(2) + "\n");
    }
    std::vector<PlotSeries> series;
    for (size_t i = 0; i < std::min<size_t>(traces.size(), 6); ++i) {
        series.push_back(PlotSeries{names[i], traces[i].losses.front()});
    }
    render_line_plot((out / "convergence.png").string(), series);

    double mean_best = 0.0;
    for (const auto& t : traces) mean_best += t.best_loss;
    std::printf("infer: %zu image(s), mean best L_ssim %.5f; outputs in %s\n", names.size(),
                mean_best / static_cast<double>(traces.size()), out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised domain-adaptation segmentation workbench"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", mode = "baseline", protocol = "separated";
    std::string checkpoints_dir, vae_ckpt, seg_ckpt, input_path;
    std::optional<uint64_t> seed;

    auto* synth = app.add_subcommand("synth", "Generate the synthetic two-domain benchmark dataset");
    synth->add_option("--config", config_path, "JSON config file")->required();
    synth->add_option("--out", out_dir, "Output directory");
    synth->add_option("--seed", seed, "Override all seeds");

    auto* train = app.add_subcommand("train", "Train the baseline or the staged UDA pipeline");
    train->add_option("--config", config_path, "JSON config file")->required();
    train->add_option("--mode", mode, "baseline | uda")->required();
    train->add_option("--out", out_dir, "Output directory");
    train->add_option("--seed", seed, "Override all seeds");

    auto* eval = app.add_subcommand("eval", "Evaluate trained models on the target domain");
    eval->add_option("--config", config_path, "JSON config file")->required();
    eval->add_option("--protocol", protocol, "separated | mixed")->required();
    eval->add_option("--checkpoints", checkpoints_dir, "Directory holding the trained checkpoints")->required();
    eval->add_option("--out", out_dir, "Output directory");
    eval->add_option("--seed", seed, "Override all seeds");

    auto* infer = app.add_subcommand("infer", "Latent-search inference on an image or directory");
    infer->add_option("--vae", vae_ckpt, "VAE checkpoint")->required();
    infer->add_option("--seg", seg_ckpt, "Segmentation checkpoint")->required();
    infer->add_option("--input", input_path, "PNG file or dataset directory")->required();
    infer->add_option("--config", config_path, "JSON config file (search settings)");
    infer->add_option("--out", out_dir, "Output directory");
    infer->add_option("--seed", seed, "Override all seeds");

    CLI11_PARSE(app, argc, argv);

    try {
        check_device_env();
        if (synth->parsed()) return cmd_synth(config_path, out_dir, seed);
        if (train->parsed()) return cmd_train(config_path, mode, out_dir, seed);
        if (eval->parsed()) return cmd_eval(config_path, protocol, out_dir, checkpoints_dir, seed);
        if (infer->parsed()) return cmd_infer(vae_ckpt, seg_ckpt, input_path, out_dir, seed, config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
