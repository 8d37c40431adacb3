#ifndef UDASEG_TRAIN_RUN_CONFIG_HPP
#define UDASEG_TRAIN_RUN_CONFIG_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace udaseg {

struct SeedSet {
    uint64_t data = 1;
    uint64_t init = 2;
    uint64_t noise = 3;
};

/// End-to-end training schedule parameters. The staged schedule splits the
/// epoch budget into (A) VAE warm-up without the perceptual term, (B)
/// segmentation training on frozen-VAE reconstructions, and (C) joint
/// refinement with the live perceptual embedding.
struct RunConfig {
    int epochs = 100;
    int batch_size = 32;
    double vae_lr = 0.0001;
    double seg_lr = 0.001;
    std::string optimizer_id = "rmsprop";
    double stage_a_fraction = 0.4;
    double stage_b_fraction = 0.3;
    double lambda_r = 1.0;
    double lambda_kl = 0.01;
    double lambda_p = 0.1;
    double dice_smooth = 1.0;
    double mask_threshold = 0.5;
    SeedSet seeds;
    std::string source_root;
    std::string target_root;
    std::string checkpoint_dir = "checkpoints";
    std::string report_dir = "reports";

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("RunConfig: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("RunConfig: batch_size must be >= 1");
        if (vae_lr <= 0.0 || seg_lr <= 0.0) throw std::invalid_argument("RunConfig: learning rates must be positive");
        if (optimizer_id != "rmsprop") {
            throw std::invalid_argument("RunConfig: unsupported optimizer '" + optimizer_id + "'");
        }
        if (stage_a_fraction < 0.0 || stage_b_fraction < 0.0 || stage_a_fraction + stage_b_fraction > 1.0) {
            throw std::invalid_argument("RunConfig: stage fractions must be nonnegative and sum to <= 1");
        }
        if (mask_threshold <= 0.0 || mask_threshold >= 1.0) {
            throw std::invalid_argument("RunConfig: mask_threshold must lie in (0,1)");
        }
    }

    int stage_a_epochs() const {
        const int a = static_cast<int>(stage_a_fraction * epochs + 1e-9);
        return std::min(a, epochs);
    }
    int stage_b_epochs() const {
        const int b = static_cast<int>(stage_b_fraction * epochs + 1e-9);
        return std::min(b, epochs - stage_a_epochs());
    }
    int stage_c_epochs() const { return epochs - stage_a_epochs() - stage_b_epochs(); }
};

} // namespace udaseg

#endif // UDASEG_TRAIN_RUN_CONFIG_HPP
