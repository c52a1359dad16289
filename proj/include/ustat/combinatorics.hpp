#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ustat/error.hpp"

namespace ustat {

// Binomial coefficient in 128-bit arithmetic, saturating instead of overflowing.
struct Binom128 {
    unsigned __int128 value = 0;
    bool saturated = false;

    bool fits_u64() const noexcept {
        return !saturated && value <= static_cast<unsigned __int128>(UINT64_MAX);
    }
    std::uint64_t as_u64() const noexcept { return static_cast<std::uint64_t>(value); }
};

inline Binom128 binom128(std::uint64_t n, std::uint64_t k) {
    Binom128 out;
    if (k > n) return out;
    if (k > n - k) k = n - k;
    constexpr unsigned __int128 kMax = ~static_cast<unsigned __int128>(0);
    unsigned __int128 c = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        const std::uint64_t num = n - k + i;
        // c = c * num / i; division is exact at each step.
        if (c > kMax / num) {
            out.saturated = true;
            out.value = kMax;
            return out;
        }
        c = c * num / i;
    }
    out.value = c;
    return out;
}

inline double log_choose(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

inline void unrank_combination(std::uint32_t n, std::uint32_t k, std::uint64_t rank,
                               std::vector<std::uint32_t>& out);

// Lexicographic enumeration of k-subsets of {0..n-1} without materializing them.
class CombinationEnumerator {
  public:
    CombinationEnumerator(std::uint32_t n, std::uint32_t k) : n_(n), k_(k), current_(k) {
        if (k == 0 || k > n) throw InvalidArgsError("combination enumeration requires 1 <= k <= n");
        for (std::uint32_t i = 0; i < k; ++i) current_[i] = i;
    }

    // Start mid-sequence at the combination with the given lexicographic rank.
    CombinationEnumerator(std::uint32_t n, std::uint32_t k, std::uint64_t start_rank)
        : n_(n), k_(k) {
        if (k == 0 || k > n) throw InvalidArgsError("combination enumeration requires 1 <= k <= n");
        unrank_combination(n, k, start_rank, current_);
    }

    std::span<const std::uint32_t> current() const noexcept { return current_; }

    // Advance to the next combination; false once exhausted.
    bool next() noexcept {
        std::int64_t i = static_cast<std::int64_t>(k_) - 1;
        while (i >= 0 && current_[static_cast<std::size_t>(i)] ==
                             n_ - k_ + static_cast<std::uint32_t>(i)) {
            --i;
        }
        if (i < 0) return false;
        ++current_[static_cast<std::size_t>(i)];
        for (std::size_t j = static_cast<std::size_t>(i) + 1; j < k_; ++j) {
            current_[j] = current_[j - 1] + 1;
        }
        return true;
    }

  private:
    std::uint32_t n_, k_;
    std::vector<std::uint32_t> current_;
};

// Combination with the given lexicographic rank. Only valid when C(n,k) fits in
// uint64; intended for modest enumeration scales (block starts, dense designs).
inline void unrank_combination(std::uint32_t n, std::uint32_t k, std::uint64_t rank,
                               std::vector<std::uint32_t>& out) {
    const Binom128 total = binom128(n, k);
    if (total.saturated || static_cast<unsigned __int128>(rank) >= total.value) {
        throw InvalidArgsError("combination rank out of range");
    }
    out.clear();
    out.reserve(k);
    std::uint32_t a = 0;
    std::uint32_t remaining = k;
    // c = C(n - a - 1, remaining - 1): completions if element a is taken.
    unsigned __int128 c = binom128(n - 1, k - 1).value;
    unsigned __int128 r = rank;
    while (remaining > 0) {
        if (remaining == 1) {
            out.push_back(a + static_cast<std::uint32_t>(r));
            break;
        }
        const unsigned __int128 m = n - a - 1;
        if (r < c) {
            out.push_back(a);
            // take a: c <- C(n - a - 2, remaining - 2); exact division.
            c = c * (remaining - 1) / m;
            --remaining;
            ++a;
        } else {
            r -= c;
            // skip a: c <- C(n - a - 2, remaining - 1); exact division.
            c = c * (m - (remaining - 1)) / m;
            ++a;
        }
    }
}

}  // namespace ustat
