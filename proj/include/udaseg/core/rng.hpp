#ifndef UDASEG_CORE_RNG_HPP
#define UDASEG_CORE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "udaseg/core/tensor.hpp"

namespace udaseg {

/// splitmix64 step, used to fold seed components into sub-stream seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t combine_seed(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

/// Deterministic random stream. All distributions are implemented on top of
/// the raw mt19937_64 output rather than std:: distributions, so sequences
/// are identical across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
        const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % n;
        uint64_t r = engine_();
        while (r >= limit) r = engine_();
        return r % n;
    }

    /// Standard normal via Box-Muller; consumes uniforms in pairs.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    void fill_normal(Tensor& t, double mean = 0.0, double stddev = 1.0) {
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal(mean, stddev);
    }

    void fill_uniform(Tensor& t, double lo = 0.0, double hi = 1.0) {
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Sample k distinct indices from [0, n), in shuffled order.
    std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
        if (k > n) throw std::invalid_argument("Rng::sample_without_replacement: k > n");
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        shuffle(idx);
        idx.resize(k);
        return idx;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace udaseg

#endif // UDASEG_CORE_RNG_HPP
