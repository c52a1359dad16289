#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <unordered_set>
#include <vector>

namespace ustat {

// Finalizer of the splitmix64 generator (Steele, Lea & Flood 2014). Bijective on
// 64-bit words, which makes the stream-derivation scheme below collision-free by
// construction rather than merely with high probability.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// Derive a child seed from (seed, key). Injective in `key` for a fixed seed, so
// distinct ordinals always map to distinct streams. Chain calls to key by several
// values: fold_in(fold_in(seed, tag), ordinal).
constexpr std::uint64_t fold_in(std::uint64_t seed, std::uint64_t key) noexcept {
    return mix64(seed ^ (mix64(key) + kGolden));
}

// Stream tags keeping the independent randomness consumers apart.
namespace streams {
constexpr std::uint64_t kOmega = 0x01;
constexpr std::uint64_t kDesign = 0x02;
constexpr std::uint64_t kData = 0x03;
constexpr std::uint64_t kReplicate = 0x04;
constexpr std::uint64_t kSelect = 0x05;
constexpr std::uint64_t kCartNode = 0x06;
constexpr std::uint64_t kOuter = 0x07;
constexpr std::uint64_t kTheta = 0x08;
constexpr std::uint64_t kBootstrap = 0x09;
constexpr std::uint64_t kReservoir = 0x0a;
}  // namespace streams

// Counter-based splitmix64 engine. Satisfies UniformRandomBitGenerator so the
// standard-library distributions accept it.
class Rng {
  public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return mix64(state_ += kGolden); }

    std::uint64_t next_u64() noexcept { return (*this)(); }

    // Uniform on [0, 1): 53 random bits.
    double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe under log().
    double uniform_pos() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Unbiased uniform integer in [0, bound). bound must be >= 1.
    std::uint64_t uniform_below(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Standard normal via Box-Muller with a cached spare.
    double normal() noexcept {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double t = 2.0 * std::numbers::pi * uniform01();
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

    std::int64_t binomial(std::int64_t trials, double prob) {
        std::binomial_distribution<std::int64_t> dist(trials, prob);
        return dist(*this);
    }

    std::int64_t poisson(double mean) {
        std::poisson_distribution<std::int64_t> dist(mean);
        return dist(*this);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// ω seed owned by one subsample ordinal; independent of data streams.
inline std::uint64_t derive_omega(std::uint64_t master_seed, std::uint64_t ordinal) noexcept {
    return fold_in(fold_in(master_seed, streams::kOmega), ordinal);
}

// Reorder pool so that pool[0..k) is a uniform sample without replacement.
template <class T>
void partial_fisher_yates(Rng& rng, std::vector<T>& pool, std::size_t k) {
    const std::size_t n = pool.size();
    for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(n - i));
        std::swap(pool[i], pool[j]);
    }
}

// Floyd's algorithm: k distinct integers drawn uniformly from [0, n), k <= n.
// Output order is not meaningful; callers sort as needed.
template <class UInt>
void floyd_sample(Rng& rng, UInt n, UInt k, std::vector<UInt>& out) {
    out.clear();
    out.reserve(static_cast<std::size_t>(k));
    std::unordered_set<UInt> seen;
    seen.reserve(static_cast<std::size_t>(k) * 2);
    for (UInt j = n - k; j < n; ++j) {
        const UInt t = static_cast<UInt>(rng.uniform_below(static_cast<std::uint64_t>(j) + 1));
        if (seen.insert(t).second) {
            out.push_back(t);
        } else {
            seen.insert(j);
            out.push_back(j);
        }
    }
}

}  // namespace ustat
