#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/io/checkpoint.hpp"
#include "udaseg/model/vae.hpp"
#include "udaseg/nn/rmsprop.hpp"
#include "udaseg/train/trainer.hpp"

using namespace udaseg;

namespace {

VaeConfig tiny_config() {
    VaeConfig cfg;
    cfg.input_h = 8;
    cfg.input_w = 8;
    cfg.input_channels = 2;
    cfg.encoder_channels = {3, 4};
    cfg.latent_dim = 5;
    return cfg;
}

ImageBatch random_batch(const VaeConfig& cfg, int64_t b, uint64_t seed) {
    ImageBatch x({b, cfg.input_channels, cfg.input_h, cfg.input_w});
    Rng rng(seed);
    rng.fill_uniform(x);
    return x;
}

} // namespace

TEST_CASE("vae config validation") {
    VaeConfig cfg = tiny_config();
    cfg.latent_dim = 1;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.input_h = 10;  // not divisible by 2^2
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.edge_injection_stage = 2;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("encode produces (batch, latent) posteriors deterministically") {
    const VaeConfig cfg = VaeConfig::desk_scale();
    Vae vae(cfg);
    vae.init(1);
    const ImageBatch x = random_batch(cfg, 4, 2);
    const GaussianPosterior q1 = vae.encode(x);
    REQUIRE(q1.mu.shape() == std::vector<int64_t>{4, cfg.latent_dim});
    REQUIRE(q1.log_var.shape() == std::vector<int64_t>{4, cfg.latent_dim});
    const GaussianPosterior q2 = vae.encode(x);
    REQUIRE(max_abs_diff(q1.mu, q2.mu) == 0.0);
    REQUIRE(max_abs_diff(q1.log_var, q2.log_var) == 0.0);
    REQUIRE_THROWS_AS(vae.encode(Tensor::zeros({1, 3, 32, 32})), std::invalid_argument);
}

TEST_CASE("encoder mean responds to input pixels") {
    const VaeConfig cfg = tiny_config();
    Vae vae(cfg);
    vae.init(3);
    ImageBatch x = random_batch(cfg, 1, 4);
    const double base = mean(vae.encode(x).mu);
    x(0, 0, 4, 4) += 1e-4;
    const double bumped = mean(vae.encode(x).mu);
    REQUIRE(std::abs(bumped - base) > 0.0);
}

TEST_CASE("reparameterize identities") {
    const VaeConfig cfg = tiny_config();
    Vae vae(cfg);
    vae.init(5);
    GaussianPosterior q{Tensor({3, 5}), Tensor({3, 5})};
    Rng rng(6);
    rng.fill_normal(q.mu);
    rng.fill_uniform(q.log_var, -0.5, 0.5);

    SECTION("zero noise returns the mean exactly") {
        const Tensor zero = Tensor::zeros({3, 5});
        const LatentCode z = vae.reparameterize(q, &zero);
        REQUIRE(max_abs_diff(z.z, q.mu) == 0.0);
    }
    SECTION("unit noise with log_var 0 adds exactly one") {
        GaussianPosterior unit{q.mu, Tensor::zeros({3, 5})};
        const Tensor ones = Tensor::full({3, 5}, 1.0);
        const LatentCode z = vae.reparameterize(unit, &ones);
        for (int64_t i = 0; i < z.z.numel(); ++i) REQUIRE(z.z[i] == q.mu[i] + 1.0);
    }
    SECTION("sample mean approaches the posterior mean") {
        GaussianPosterior one{Tensor({1, 5}), Tensor({1, 5})};
        Rng r2(7);
        r2.fill_normal(one.mu);
        one.log_var.fill(0.2);
        Rng noise(8);
        const int n = 10000;
        Tensor acc({1, 5});
        for (int s = 0; s < n; ++s) {
            const LatentCode z = vae.reparameterize(one, nullptr, &noise);
            axpy(1.0, z.z, acc);
        }
        const double sd = std::exp(0.1);
        for (int64_t j = 0; j < 5; ++j) {
            REQUIRE(acc(0, j) / n == Catch::Approx(one.mu(0, j)).margin(3.0 * sd / std::sqrt(double(n))));
        }
    }
    SECTION("shape mismatch rejected") {
        const Tensor bad = Tensor::zeros({3, 4});
        REQUIRE_THROWS_AS(vae.reparameterize(q, &bad), std::invalid_argument);
    }
    SECTION("gradient of z with respect to mu is the identity under fixed noise") {
        Rng nr(9);
        Tensor eps({1, 5});
        nr.fill_normal(eps);
        GaussianPosterior p2{Tensor({1, 5}), Tensor({1, 5})};
        Rng r3(10);
        r3.fill_normal(p2.mu);
        r3.fill_uniform(p2.log_var, -0.3, 0.3);
        const double h = 1e-6;
        for (int64_t j = 0; j < 5; ++j) {
            GaussianPosterior plus = p2, minus = p2;
            plus.mu(0, j) += h;
            minus.mu(0, j) -= h;
            const Tensor zp = vae.reparameterize(plus, &eps).z;
            const Tensor zm = vae.reparameterize(minus, &eps).z;
            for (int64_t k = 0; k < 5; ++k) {
                const double d = (zp(0, k) - zm(0, k)) / (2.0 * h);
                REQUIRE(d == Catch::Approx(k == j ? 1.0 : 0.0).margin(1e-4));
            }
        }
    }
}

TEST_CASE("decode shape, bounds and live edge path") {
    const VaeConfig cfg = VaeConfig::desk_scale();
    Vae vae(cfg);
    vae.init(11);
    Rng rng(12);
    LatentCode z{Tensor({4, cfg.latent_dim})};
    rng.fill_normal(z.z);
    const ImageBatch x = random_batch(cfg, 4, 13);
    const Tensor edges = extract_edges(x);
    const ImageBatch out = vae.decode(z, edges);
    REQUIRE(out.shape() == std::vector<int64_t>{4, 3, 64, 64});
    for (int64_t i = 0; i < out.numel(); ++i) {
        REQUIRE(out[i] >= 0.0);
        REQUIRE(out[i] <= 1.0);
    }

    // Holding z fixed while changing the edge map must change the output.
    const Tensor edges2 = extract_edges(random_batch(cfg, 4, 14));
    REQUIRE(max_abs_diff(edges, edges2) > 0.0);
    const ImageBatch out2 = vae.decode(z, edges2);
    REQUIRE(max_abs_diff(out, out2) > 0.0);

    LatentCode bad{Tensor({4, cfg.latent_dim + 1})};
    REQUIRE_THROWS_AS(vae.decode(bad, edges), std::invalid_argument);
}

TEST_CASE("round trip preserves the input shape for legal sizes") {
    for (const auto& [h, w] : std::vector<std::pair<int64_t, int64_t>>{{8, 8}, {8, 16}, {16, 8}}) {
        VaeConfig cfg = tiny_config();
        cfg.input_h = h;
        cfg.input_w = w;
        Vae vae(cfg);
        vae.init(15);
        const ImageBatch x = random_batch(cfg, 2, 16);
        const GaussianPosterior q = vae.encode(x);
        Rng noise(17);
        const LatentCode z = vae.reparameterize(q, nullptr, &noise);
        const ImageBatch y = vae.decode(z, extract_edges(x));
        REQUIRE(y.shape() == x.shape());
    }
}

TEST_CASE("edge injection at a coarser decoder stage") {
    VaeConfig cfg = tiny_config();
    cfg.edge_injection_stage = 1;
    Vae vae(cfg);
    vae.init(18);
    const ImageBatch x = random_batch(cfg, 1, 19);
    const GaussianPosterior q = vae.encode(x);
    const LatentCode z{q.mu};
    const ImageBatch y = vae.decode(z, extract_edges(x));
    REQUIRE(y.shape() == x.shape());
}

TEST_CASE("vae training step component consistency and parameter gradients") {
    const VaeConfig cfg = tiny_config();
    Vae vae(cfg);
    vae.init(21);
    const ImageBatch x = random_batch(cfg, 2, 22);
    const VaeLossWeights w{1.0, 0.01, 0.0};

    nn::GradBuffer grads(vae.params());
    Rng noise(23);
    const VaeStepResult res = vae_training_step(vae, x, w, nullptr, noise, grads);

    REQUIRE(res.report.get("l_r") == Catch::Approx(reconstruction_loss(x, res.x_hat)).margin(1e-6));
    REQUIRE(res.report.get("d_kl") == Catch::Approx(kl_divergence(res.posterior)).margin(1e-6));
    REQUIRE(res.report.get("total") ==
            Catch::Approx(w.reconstruction * res.report.get("l_r") + w.kl * res.report.get("d_kl")).margin(1e-12));

    // Sampled finite-difference check of parameter gradients; the objective
    // re-runs the step with an identical noise stream.
    auto objective = [&]() {
        nn::GradBuffer g(vae.params());
        Rng nr(23);
        return vae_training_step(vae, x, w, nullptr, nr, g).report.get("total");
    };
    Rng pick(24);
    const double h = 1e-5;
    for (const nn::Param* p : vae.params()) {
        for (int probe = 0; probe < 2; ++probe) {
            const int64_t j = static_cast<int64_t>(pick.uniform_int(static_cast<uint64_t>(p->value.numel())));
            Tensor& v = const_cast<nn::Param*>(p)->value;
            const double saved = v[j];
            v[j] = saved + h;
            const double fp = objective();
            v[j] = saved - h;
            const double fm = objective();
            v[j] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = grads[p->index][j];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            INFO(p->name << "[" << j << "] numeric=" << numeric << " analytic=" << analytic);
            REQUIRE(std::abs(numeric - analytic) / denom < 1e-4);
        }
    }
}

TEST_CASE("vae training step with all-zero weights leaves parameters unchanged") {
    const VaeConfig cfg = tiny_config();
    Vae vae(cfg);
    vae.init(25);
    const ImageBatch x = random_batch(cfg, 2, 26);
    nn::GradBuffer grads(vae.params());
    Rng noise(27);
    const VaeStepResult res = vae_training_step(vae, x, VaeLossWeights{0.0, 0.0, 0.0}, nullptr, noise, grads);
    REQUIRE(res.report.get("total") == 0.0);

    const std::vector<Tensor> before = snapshot_params(vae.params());
    nn::RmsProp opt(vae.params());
    opt.step(vae.params(), grads, 0.001);
    for (size_t i = 0; i < before.size(); ++i) {
        REQUIRE(max_abs_diff(before[i], vae.params()[i]->value) == 0.0);
    }
}

TEST_CASE("kl-only objective drives the kl term toward zero") {
    const VaeConfig cfg = tiny_config();
    Vae vae(cfg);
    vae.init(29);
    const ImageBatch x = random_batch(cfg, 4, 30);
    const VaeLossWeights w{0.0, 1.0, 0.0};
    nn::RmsProp opt(vae.params());
    nn::GradBuffer grads(vae.params());
    Rng noise(31);
    double initial = 0.0, last = 0.0;
    for (int it = 0; it < 200; ++it) {
        grads.zero();
        const VaeStepResult res = vae_training_step(vae, x, w, nullptr, noise, grads);
        if (it == 0) initial = res.report.get("d_kl");
        last = res.report.get("d_kl");
        opt.step(vae.params(), grads, 0.001);
    }
    REQUIRE(last < initial / 10.0);
}

TEST_CASE("first training steps are bit-identical across reruns") {
    const VaeConfig cfg = tiny_config();
    auto run = [&] {
        Vae vae(cfg);
        vae.init(33);
        nn::RmsProp opt(vae.params());
        nn::GradBuffer grads(vae.params());
        Rng noise(34);
        const ImageBatch x = random_batch(cfg, 3, 35);
        std::vector<double> totals;
        for (int it = 0; it < 5; ++it) {
            grads.zero();
            totals.push_back(
                vae_training_step(vae, x, VaeLossWeights{1.0, 0.01, 0.0}, nullptr, noise, grads).report.get("total"));
            opt.step(vae.params(), grads, 0.0001);
        }
        return totals;
    };
    REQUIRE(run() == run());
}

TEST_CASE("overfit sanity: 500 steps on one small batch reach l_r below 0.01") {
    VaeConfig cfg;
    cfg.input_h = 32;
    cfg.input_w = 32;
    cfg.input_channels = 3;
    cfg.encoder_channels = {8, 16, 32};
    cfg.latent_dim = 32;
    Vae vae(cfg);
    vae.init(37);

    // Small synthetic batch: two-tone discs.
    ImageBatch x({8, 3, 32, 32});
    Rng rng(38);
    for (int64_t b = 0; b < 8; ++b) {
        const double cx = rng.uniform(10, 22), cy = rng.uniform(10, 22), r = rng.uniform(5, 9);
        for (int64_t yy = 0; yy < 32; ++yy) {
            for (int64_t xx = 0; xx < 32; ++xx) {
                const bool in = (xx - cx) * (xx - cx) + (yy - cy) * (yy - cy) < r * r;
                x(b, 0, yy, xx) = in ? 0.8 : 0.3;
                x(b, 1, yy, xx) = in ? 0.4 : 0.6;
                x(b, 2, yy, xx) = in ? 0.35 : 0.55;
            }
        }
    }
    nn::RmsProp opt(vae.params());
    nn::GradBuffer grads(vae.params());
    Rng noise(39);
    double last = 1.0;
    for (int it = 0; it < 500; ++it) {
        grads.zero();
        last = vae_training_step(vae, x, VaeLossWeights{1.0, 0.0001, 0.0}, nullptr, noise, grads).report.get("l_r");
        opt.step(vae.params(), grads, 0.001);
    }
    REQUIRE(last < 0.01);
}

TEST_CASE("checkpoint save/load round trip and failure modes") {
    const VaeConfig cfg = tiny_config();
    Vae vae(cfg);
    vae.init(41);
    const auto dir = std::filesystem::temp_directory_path() / "udaseg_ckpt_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "vae.ckpt").string();

    ckpt::Meta meta;
    meta.component = "vae";
    meta.config = Json{{"note", "test"}};
    meta.epoch = 7;
    ckpt::save(path, meta, vae.params());

    Vae fresh(cfg);
    fresh.init(999);
    REQUIRE(hash_params(fresh.params()) != hash_params(vae.params()));
    const ckpt::Meta loaded = ckpt::load(path, "vae", fresh.params());
    REQUIRE(loaded.epoch == 7);
    REQUIRE(hash_params(fresh.params()) == hash_params(vae.params()));

    REQUIRE_THROWS_WITH(ckpt::load(path, "segmentation", fresh.params()),
                        Catch::Matchers::ContainsSubstring("component"));

    const std::string trunc = (dir / "trunc.ckpt").string();
    {
        std::ifstream in(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream out(trunc, std::ios::binary);
        out.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
    }
    REQUIRE_THROWS_AS(ckpt::load(trunc, "vae", fresh.params()), std::runtime_error);
    std::filesystem::remove_all(dir);
}
