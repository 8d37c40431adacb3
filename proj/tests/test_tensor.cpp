#include <catch2/catch_amalgamated.hpp>

#include "udaseg/core/rng.hpp"
#include "udaseg/core/tensor.hpp"

using namespace udaseg;

TEST_CASE("tensor shape and indexing") {
    Tensor t({2, 3, 4, 5});
    REQUIRE(t.numel() == 120);
    REQUIRE(t.rank() == 4);
    t(1, 2, 3, 4) = 7.5;
    REQUIRE(t[119] == 7.5);

    Tensor r = t.reshaped({6, 20});
    REQUIRE(r(5, 19) == 7.5);
    REQUIRE_THROWS_AS(t.reshaped({7, 20}), std::invalid_argument);
}

TEST_CASE("tensor item round trip") {
    Tensor batch({3, 2, 4, 4});
    for (int64_t i = 0; i < batch.numel(); ++i) batch[i] = static_cast<double>(i);
    const Tensor it = batch.item(1);
    REQUIRE(it.shape() == std::vector<int64_t>{2, 4, 4});
    REQUIRE(it(0, 0, 0) == 32.0);
    Tensor out({3, 2, 4, 4});
    out.set_item(1, it);
    REQUIRE(out(1, 1, 3, 3) == batch(1, 1, 3, 3));
}

TEST_CASE("tensor reductions and helpers") {
    Tensor a = Tensor::full({4}, 2.0);
    Tensor b = Tensor::full({4}, -1.0);
    REQUIRE(sum(a) == 8.0);
    REQUIRE(mean(a) == 2.0);
    REQUIRE(max_abs_diff(a, b) == 3.0);
    axpy(2.0, a, b);
    REQUIRE(b[0] == 3.0);
    REQUIRE(all_finite(b));
    b[2] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_FALSE(all_finite(b));
}

TEST_CASE("rng determinism and distribution sanity") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
    for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());

    Rng c(7);
    double s = 0.0, s2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = c.normal();
        s += v;
        s2 += v * v;
    }
    REQUIRE(std::abs(s / n) < 0.03);
    REQUIRE(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("rng uniform_int bounds and shuffle determinism") {
    Rng r(3);
    for (int i = 0; i < 1000; ++i) REQUIRE(r.uniform_int(7) < 7);

    std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> v2 = v1;
    Rng s1(9), s2(9);
    s1.shuffle(v1);
    s2.shuffle(v2);
    REQUIRE(v1 == v2);
}

TEST_CASE("sample_without_replacement yields distinct indices") {
    Rng r(11);
    const auto picks = r.sample_without_replacement(20, 8);
    REQUIRE(picks.size() == 8);
    std::set<size_t> uniq(picks.begin(), picks.end());
    REQUIRE(uniq.size() == 8);
    for (size_t p : picks) REQUIRE(p < 20);
}

TEST_CASE("combine_seed separates streams") {
    REQUIRE(combine_seed(1, 2) != combine_seed(2, 1));
    REQUIRE(combine_seed(0, 0) != combine_seed(0, 1));
}
