#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/loss/ssim.hpp"

using namespace udaseg;

namespace {

ImageBatch random_images(int64_t b, int64_t c, int64_t h, int64_t w, uint64_t seed) {
    ImageBatch x({b, c, h, w});
    Rng rng(seed);
    rng.fill_uniform(x);
    return x;
}

} // namespace

TEST_CASE("ssim of an image with itself is 1") {
    const ImageBatch x = random_images(2, 3, 24, 24, 1);
    const SsimComponents s = ssim(x, x);
    REQUIRE(s.ssim == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(ssim_loss(x, x) == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("ssim of two constant images is 1") {
    const ImageBatch a = Tensor::full({1, 3, 16, 16}, 0.5);
    const ImageBatch b = Tensor::full({1, 3, 16, 16}, 0.5);
    REQUIRE(ssim(a, b).ssim == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("ssim matches the direct per-window oracle on seeded random pairs") {
    SsimConfig cfg;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const ImageBatch x = random_images(1, 3, 32, 32, 100 + seed);
        const ImageBatch y = random_images(1, 3, 32, 32, 200 + seed);
        const double direct = oracles::ssim_direct(x, y, cfg);
        REQUIRE(ssim(x, y, cfg).ssim == Catch::Approx(direct).margin(1e-6));
    }
}

TEST_CASE("ssim matches the oracle for non-unit exponents") {
    SsimConfig cfg;
    cfg.alpha = 1.3;
    cfg.beta = 0.7;
    cfg.gamma = 2.0;
    const ImageBatch x = random_images(1, 2, 20, 20, 7);
    const ImageBatch y = random_images(1, 2, 20, 20, 8);
    REQUIRE(ssim(x, y, cfg).ssim == Catch::Approx(oracles::ssim_direct(x, y, cfg)).margin(1e-9));
}

TEST_CASE("ssim component ranges and identity structure") {
    const ImageBatch x = random_images(1, 1, 20, 20, 9);
    const SsimComponents s = ssim(x, x);
    for (int64_t i = 0; i < s.structure.numel(); ++i) {
        REQUIRE(s.luminance[i] == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(s.contrast[i] == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(s.structure[i] == Catch::Approx(1.0).margin(1e-9));
    }
    REQUIRE(s.ssim >= -1.0);
    REQUIRE(s.ssim <= 1.0 + 1e-12);
}

TEST_CASE("anti-correlated checkerboards give ssim_loss in (1, 2]") {
    // x alternates 0.1 / 0.9; the counterpart is 1 - x. Window means match,
    // covariance is negative, so the structure term pushes SSIM below zero.
    ImageBatch x({1, 1, 16, 16});
    for (int64_t yy = 0; yy < 16; ++yy) {
        for (int64_t xx = 0; xx < 16; ++xx) x(0, 0, yy, xx) = ((yy + xx) % 2 == 0) ? 0.9 : 0.1;
    }
    ImageBatch y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = 1.0 - x[i];
    const double loss = ssim_loss(x, y);
    REQUIRE(loss > 1.0);
    REQUIRE(loss <= 2.0);
    REQUIRE(1.0 - loss == Catch::Approx(oracles::ssim_direct(x, y, SsimConfig{})).margin(1e-9));
}

TEST_CASE("ssim is symmetric") {
    const ImageBatch x = random_images(1, 3, 24, 24, 10);
    const ImageBatch y = random_images(1, 3, 24, 24, 11);
    REQUIRE(ssim(x, y).ssim == Catch::Approx(ssim(y, x).ssim).margin(1e-6));
    REQUIRE(ssim_loss(x, y) == Catch::Approx(ssim_loss(y, x)).margin(1e-6));
}

TEST_CASE("ssim rejects bad shapes and oversized windows") {
    const ImageBatch x = random_images(1, 3, 16, 16, 12);
    REQUIRE_THROWS_AS(ssim(x, random_images(1, 3, 16, 17, 13)), std::invalid_argument);
    SsimConfig cfg;
    cfg.window_size = 17;
    REQUIRE_THROWS_AS(ssim(x, x, cfg), std::invalid_argument);
    cfg.window_size = 4;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.window_size = 11;
    cfg.alpha = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("ssim_loss analytic gradient matches central finite differences") {
    const SsimConfig cfg;
    const ImageBatch x = random_images(1, 1, 16, 16, 14);
    ImageBatch y = random_images(1, 1, 16, 16, 15);

    Tensor grad;
    ssim_loss_value_and_grad(x, y, cfg, grad);
    auto f = [&](const Tensor& yy) { return ssim_loss(x, yy, cfg); };

    // Spec tolerance: step 1e-3, relative error < 1e-3.
    REQUIRE(oracles::max_relative_grad_error(f, y, grad, 1e-3) < 1e-3);
    // Double precision allows a tighter step as well.
    REQUIRE(oracles::max_relative_grad_error(f, y, grad, 1e-5) < 1e-4);
}

TEST_CASE("ssim_loss gradient matches finite differences for general exponents") {
    SsimConfig cfg;
    cfg.alpha = 2.0;
    cfg.beta = 1.5;
    cfg.gamma = 1.0;
    const ImageBatch x = random_images(1, 2, 16, 16, 16);
    ImageBatch y = random_images(1, 2, 16, 16, 17);
    Tensor grad;
    const double v = ssim_loss_value_and_grad(x, y, cfg, grad);
    REQUIRE(v == Catch::Approx(ssim_loss(x, y, cfg)).margin(1e-12));
    auto f = [&](const Tensor& yy) { return ssim_loss(x, yy, cfg); };
    REQUIRE(oracles::max_relative_grad_error(f, y, grad, 1e-5) < 1e-4);
}

TEST_CASE("luminance-only channel policy reduces to grayscale ssim") {
    SsimConfig cfg;
    cfg.channel_policy = SsimConfig::ChannelPolicy::LuminanceOnly;
    const ImageBatch x = random_images(2, 3, 18, 18, 18);
    const ImageBatch y = random_images(2, 3, 18, 18, 19);

    ImageBatch gx({2, 1, 18, 18}), gy({2, 1, 18, 18});
    for (int64_t b = 0; b < 2; ++b) {
        gx.set_item(b, to_grayscale(x.item(b)));
        gy.set_item(b, to_grayscale(y.item(b)));
    }
    REQUIRE(ssim(x, y, cfg).ssim == Catch::Approx(ssim(gx, gy, SsimConfig{}).ssim).margin(1e-12));

    Tensor grad;
    ssim_loss_value_and_grad(x, y, cfg, grad);
    auto f = [&](const Tensor& yy) { return ssim_loss(x, yy, cfg); };
    REQUIRE(oracles::max_relative_grad_error(f, y, grad, 1e-5) < 1e-4);
}

TEST_CASE("ssim_loss is finite on degenerate all-zero and all-one images") {
    const ImageBatch zero = Tensor::zeros({1, 3, 16, 16});
    const ImageBatch one = Tensor::full({1, 3, 16, 16}, 1.0);
    REQUIRE(std::isfinite(ssim_loss(zero, one)));
    REQUIRE(std::isfinite(ssim_loss(zero, zero)));
    REQUIRE(ssim_loss(zero, zero) == Catch::Approx(0.0).margin(1e-9));
}
