#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "udaseg/core/parallel.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/nn/layers.hpp"
#include "udaseg/nn/rmsprop.hpp"

using namespace udaseg;

namespace {

Tensor random_like(const std::vector<int64_t>& shape, uint64_t seed) {
    Tensor t(shape);
    Rng rng(seed);
    rng.fill_normal(t);
    return t;
}

// Scalar probe objective: fixed random weights r dotted with the layer output.
double weighted_sum(const Tensor& y, const Tensor& r) {
    double s = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
    return s;
}

} // namespace

TEST_CASE("conv2d forward matches a direct convolution loop") {
    nn::Conv2d conv(2, 3, 3, 1);
    nn::ParamRegistry reg;
    conv.register_params(reg, "c");
    Rng rng(5);
    conv.init(rng);
    Tensor x({2, 6, 7});
    rng.fill_normal(x);

    nn::Ctx ctx;
    const Tensor y = conv.forward(x, ctx);
    REQUIRE(y.shape() == std::vector<int64_t>{3, 6, 7});

    const Tensor& w = reg.params()[0]->value;  // (out, in*3*3)
    const Tensor& b = reg.params()[1]->value;
    for (int64_t co = 0; co < 3; ++co) {
        for (int64_t oy = 0; oy < 6; ++oy) {
            for (int64_t ox = 0; ox < 7; ++ox) {
                double acc = b[co];
                for (int64_t ci = 0; ci < 2; ++ci) {
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const int64_t sy = oy - 1 + ky, sx = ox - 1 + kx;
                            if (sy < 0 || sy >= 6 || sx < 0 || sx >= 7) continue;
                            acc += w(co, (ci * 3 + ky) * 3 + kx) * x(ci, sy, sx);
                        }
                    }
                }
                REQUIRE(y(co, oy, ox) == Catch::Approx(acc).margin(1e-12));
            }
        }
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    for (int stride : {1, 2}) {
        nn::Conv2d conv(2, 3, 3, stride);
        nn::ParamRegistry reg;
        conv.register_params(reg, "c");
        Rng rng(11 + static_cast<uint64_t>(stride));
        conv.init(rng);
        Tensor x({2, 8, 8});
        rng.fill_normal(x);

        nn::Ctx probe_ctx;
        const Tensor r = random_like(conv.forward(x, probe_ctx).shape(), 99);
        probe_ctx.clear();

        nn::Ctx ctx;
        conv.forward(x, ctx);
        nn::GradBuffer grads(reg.params());
        const Tensor dx = conv.backward(r, ctx, &grads);

        auto f_input = [&](const Tensor& xx) {
            nn::Ctx c;
            return weighted_sum(conv.forward(xx, c), r);
        };
        REQUIRE(oracles::max_relative_grad_error(f_input, x, dx, 1e-6) < 1e-6);

        Tensor& wv = reg.params()[0]->value;
        auto f_weight = [&](const Tensor& ww) {
            const Tensor saved = wv;
            wv = ww;
            nn::Ctx c;
            const double v = weighted_sum(conv.forward(x, c), r);
            wv = saved;
            return v;
        };
        REQUIRE(oracles::max_relative_grad_error(f_weight, wv, grads[0], 1e-6) < 1e-6);

        Tensor& bv = reg.params()[1]->value;
        auto f_bias = [&](const Tensor& bb) {
            const Tensor saved = bv;
            bv = bb;
            nn::Ctx c;
            const double v = weighted_sum(conv.forward(x, c), r);
            bv = saved;
            return v;
        };
        REQUIRE(oracles::max_relative_grad_error(f_bias, bv, grads[1], 1e-6) < 1e-6);
    }
}

TEST_CASE("linear gradients match finite differences") {
    nn::Linear lin(10, 6);
    nn::ParamRegistry reg;
    lin.register_params(reg, "l");
    Rng rng(17);
    lin.init(rng);
    Tensor x({10});
    rng.fill_normal(x);
    const Tensor r = random_like({6}, 100);

    nn::Ctx ctx;
    lin.forward(x, ctx);
    nn::GradBuffer grads(reg.params());
    const Tensor dx = lin.backward(r, ctx, &grads);

    auto f = [&](const Tensor& xx) {
        nn::Ctx c;
        return weighted_sum(lin.forward(xx, c), r);
    };
    REQUIRE(oracles::max_relative_grad_error(f, x, dx, 1e-6) < 1e-6);

    Tensor& wv = reg.params()[0]->value;
    auto f_w = [&](const Tensor& ww) {
        const Tensor saved = wv;
        wv = ww;
        nn::Ctx c;
        const double v = weighted_sum(lin.forward(x, c), r);
        wv = saved;
        return v;
    };
    REQUIRE(oracles::max_relative_grad_error(f_w, wv, grads[0], 1e-6) < 1e-6);
}

TEST_CASE("activation and upsample gradients match finite differences") {
    Rng rng(23);
    Tensor x({3, 4, 4});
    rng.fill_normal(x);

    SECTION("leaky relu") {
        nn::LeakyRelu act(0.1);
        const Tensor r = random_like(x.shape(), 101);
        nn::Ctx ctx;
        act.forward(x, ctx);
        const Tensor dx = act.backward(r, ctx, nullptr);
        auto f = [&](const Tensor& xx) {
            nn::Ctx c;
            return weighted_sum(act.forward(xx, c), r);
        };
        REQUIRE(oracles::max_relative_grad_error(f, x, dx, 1e-7) < 1e-5);
    }
    SECTION("sigmoid") {
        nn::Sigmoid act;
        const Tensor r = random_like(x.shape(), 102);
        nn::Ctx ctx;
        act.forward(x, ctx);
        const Tensor dx = act.backward(r, ctx, nullptr);
        auto f = [&](const Tensor& xx) {
            nn::Ctx c;
            return weighted_sum(act.forward(xx, c), r);
        };
        REQUIRE(oracles::max_relative_grad_error(f, x, dx, 1e-6) < 1e-6);
    }
    SECTION("upsample2x") {
        nn::Upsample2x up;
        nn::Ctx ctx;
        const Tensor y = up.forward(x, ctx);
        REQUIRE(y.shape() == std::vector<int64_t>{3, 8, 8});
        REQUIRE(y(1, 5, 5) == x(1, 2, 2));
        const Tensor r = random_like(y.shape(), 103);
        const Tensor dx = up.backward(r, ctx, nullptr);
        auto f = [&](const Tensor& xx) {
            nn::Ctx c;
            return weighted_sum(up.forward(xx, c), r);
        };
        REQUIRE(oracles::max_relative_grad_error(f, x, dx, 1e-6) < 1e-6);
    }
}

TEST_CASE("concat and split are inverse") {
    Rng rng(29);
    Tensor a({2, 4, 4}), b({3, 4, 4});
    rng.fill_normal(a);
    rng.fill_normal(b);
    const Tensor cat = nn::concat_channels(a, b);
    REQUIRE(cat.shape() == std::vector<int64_t>{5, 4, 4});
    const auto [a2, b2] = nn::split_channels(cat, 2);
    REQUIRE(max_abs_diff(a, a2) == 0.0);
    REQUIRE(max_abs_diff(b, b2) == 0.0);
    REQUIRE_THROWS_AS(nn::concat_channels(a, Tensor({3, 5, 4})), std::invalid_argument);
}

TEST_CASE("rmsprop leaves parameters unchanged on zero gradients") {
    nn::Linear lin(4, 4);
    nn::ParamRegistry reg;
    lin.register_params(reg, "l");
    Rng rng(31);
    lin.init(rng);
    const Tensor before = reg.params()[0]->value;
    nn::RmsProp opt(reg.params());
    nn::GradBuffer grads(reg.params());
    opt.step(reg.params(), grads, 0.01);
    REQUIRE(max_abs_diff(before, reg.params()[0]->value) == 0.0);
}

TEST_CASE("rmsprop reduces a quadratic objective") {
    nn::Linear lin(1, 3);
    nn::ParamRegistry reg;
    lin.register_params(reg, "l");
    Rng rng(37);
    lin.init(rng);
    Tensor target({3, 1});
    rng.fill_normal(target);
    nn::RmsProp opt(reg.params());
    nn::GradBuffer grads(reg.params());
    auto objective = [&] {
        double s = 0.0;
        for (int64_t i = 0; i < 3; ++i) {
            const double d = reg.params()[0]->value[i] - target[i];
            s += 0.5 * d * d;
        }
        return s;
    };
    const double f0 = objective();
    for (int it = 0; it < 200; ++it) {
        grads.zero();
        for (int64_t i = 0; i < 3; ++i) grads[0][i] = reg.params()[0]->value[i] - target[i];
        opt.step(reg.params(), grads, 0.01);
    }
    REQUIRE(objective() < f0 * 0.01);
}

TEST_CASE("per-item gradient reduction is reproducible under parallel execution") {
    nn::Conv2d conv(1, 2, 3, 1);
    nn::ParamRegistry reg;
    conv.register_params(reg, "c");
    Rng rng(41);
    conv.init(rng);

    std::vector<Tensor> items;
    for (int i = 0; i < 5; ++i) {
        Tensor x({1, 6, 6});
        rng.fill_normal(x);
        items.push_back(x);
    }
    auto run = [&] {
        nn::GradBuffer total(reg.params());
        std::vector<nn::GradBuffer> per_item;
        for (int i = 0; i < 5; ++i) per_item.emplace_back(reg.params());
        parallel_for(5, [&](int64_t i) {
            nn::Ctx ctx;
            const Tensor y = conv.forward(items[static_cast<size_t>(i)], ctx);
            const Tensor r = Tensor::full(y.shape(), 1.0);
            conv.backward(r, ctx, &per_item[static_cast<size_t>(i)]);
        });
        for (const auto& g : per_item) total.add(g);
        return total;
    };
    const nn::GradBuffer g1 = run();
    const nn::GradBuffer g2 = run();
    REQUIRE(max_abs_diff(g1[0], g2[0]) == 0.0);
    REQUIRE(max_abs_diff(g1[1], g2[1]) == 0.0);
}
