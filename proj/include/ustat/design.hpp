#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "ustat/combinatorics.hpp"
#include "ustat/error.hpp"
#include "ustat/rng.hpp"

namespace ustat {

enum class Scheme { Complete, Bernoulli, FixedN };

struct EnsembleConfig {
    std::uint32_t s = 1;
    std::uint64_t n_subsamples = 1;  // target N; ignored for Complete
    Scheme scheme = Scheme::Bernoulli;
    std::uint64_t master_seed = 0;
    int threads = 1;
    std::uint64_t enumeration_cap = kDefaultEnumerationCap;
    bool capture = false;                  // keep per-subsample values
    std::uint64_t capture_cap = 1u << 20;  // thin deterministically beyond this
};

// A realized collection of subsample index sets. Blocks of s sorted row indices,
// stored flat in lexicographic order so that evaluation order (and hence every
// downstream reduction) is reproducible.
struct Design {
    std::uint32_t s = 0;
    std::vector<std::uint32_t> flat;

    std::uint64_t count() const noexcept {
        return s == 0 ? 0 : static_cast<std::uint64_t>(flat.size() / s);
    }
    std::span<const std::uint32_t> subsample(std::uint64_t i) const noexcept {
        return {flat.data() + i * s, s};
    }
};

namespace detail {

inline void check_subsample_args(std::uint64_t n, std::uint64_t s) {
    if (s < 1 || s > n) throw InvalidArgsError("subsample size must satisfy 1 <= s <= n");
}

// Guard against designs too large to hold in memory.
constexpr std::uint64_t kMaxDesignEntries = 200'000'000;

inline std::uint64_t hash_index_block(std::span<const std::uint32_t> block) {
    std::uint64_t h = 0x5bf03635e52f1d6dULL;
    for (const std::uint32_t v : block) h = mix64(h ^ (v + kGolden));
    return h;
}

}  // namespace detail

inline Design enumerate_subsamples(std::uint32_t n, std::uint32_t s,
                                   std::uint64_t cap = kDefaultEnumerationCap) {
    detail::check_subsample_args(n, s);
    const Binom128 c = binom128(n, s);
    if (c.saturated || c.value > cap) {
        throw CapExceededError("C(n,s) exceeds the enumeration cap");
    }
    const std::uint64_t total = c.as_u64();
    Design design;
    design.s = s;
    design.flat.reserve(total * s);
    CombinationEnumerator it(n, s);
    do {
        const auto cur = it.current();
        design.flat.insert(design.flat.end(), cur.begin(), cur.end());
    } while (it.next());
    return design;
}

struct IncompleteDesign {
    Design design;
    std::uint64_t realized_n = 0;  // N-hat
    std::uint64_t target_n = 0;
};

// Draw an incomplete design. Bernoulli: N-hat ~ Binomial(C(n,s), N/C(n,s)), then
// N-hat distinct subsamples uniform without replacement; FixedN: exactly N.
// When C(n,s) saturates 128 bits it is treated as infinite: the Binomial count
// converges to Poisson(N) and duplicate draws have negligible probability.
inline IncompleteDesign draw_incomplete_design(std::uint32_t n, std::uint32_t s, std::uint64_t N,
                                               Scheme scheme, std::uint64_t seed) {
    detail::check_subsample_args(n, s);
    if (scheme == Scheme::Complete) {
        throw InvalidArgsError("draw_incomplete_design requires Bernoulli or FixedN scheme");
    }
    if (N < 1) throw InvalidArgsError("target subsample count must be >= 1");
    const Binom128 c = binom128(n, s);
    if (!c.saturated && static_cast<unsigned __int128>(N) > c.value) {
        if (scheme == Scheme::FixedN) {
            throw InvalidArgsError("FixedN requires N <= C(n,s)");
        }
        throw InvalidArgsError("Bernoulli requires N <= C(n,s)");
    }

    Rng rng(fold_in(seed, streams::kDesign));
    std::uint64_t nhat = N;
    if (scheme == Scheme::Bernoulli) {
        if (c.fits_u64() && c.as_u64() <= static_cast<std::uint64_t>(INT64_MAX)) {
            const double p = static_cast<double>(static_cast<long double>(N) /
                                                 static_cast<long double>(c.as_u64()));
            nhat = static_cast<std::uint64_t>(
                rng.binomial(static_cast<std::int64_t>(c.as_u64()), p));
        } else {
            nhat = static_cast<std::uint64_t>(rng.poisson(static_cast<double>(N)));
        }
    }

    IncompleteDesign out;
    out.target_n = N;
    out.realized_n = nhat;
    out.design.s = s;
    if (nhat == 0) return out;
    if (nhat * static_cast<std::uint64_t>(s) > detail::kMaxDesignEntries) {
        throw CapExceededError("incomplete design too large to materialize");
    }

    const bool dense = c.fits_u64() && c.as_u64() <= std::max<std::uint64_t>(65536, 16 * nhat) &&
                       c.as_u64() <= (1ull << 34);
    out.design.flat.reserve(nhat * s);
    if (dense) {
        // Sample lexicographic ranks, then unrank; sorted ranks give a design in
        // lexicographic order, so a full draw coincides with enumeration.
        std::vector<std::uint64_t> ranks;
        floyd_sample<std::uint64_t>(rng, c.as_u64(), nhat, ranks);
        std::sort(ranks.begin(), ranks.end());
        std::vector<std::uint32_t> block;
        for (const std::uint64_t r : ranks) {
            unrank_combination(n, s, r, block);
            out.design.flat.insert(out.design.flat.end(), block.begin(), block.end());
        }
    } else {
        // Rejection with dedup on a hash of the sorted index set. At this scale
        // C(n,s) >> N-hat^2, so both rejections and hash collisions are rare.
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(static_cast<std::size_t>(nhat) * 2);
        std::vector<std::uint32_t> pool(n);
        for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::uint32_t> block(s);
        std::uint64_t collected = 0;
        while (collected < nhat) {
            partial_fisher_yates(rng, pool, s);
            std::copy(pool.begin(), pool.begin() + s, block.begin());
            std::sort(block.begin(), block.end());
            if (seen.insert(detail::hash_index_block(block)).second) {
                out.design.flat.insert(out.design.flat.end(), block.begin(), block.end());
                ++collected;
            }
        }
        // Canonical order: sort blocks lexicographically.
        std::vector<std::uint64_t> order(collected);
        for (std::uint64_t i = 0; i < collected; ++i) order[i] = i;
        const auto& flat = out.design.flat;
        std::sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) {
            return std::lexicographical_compare(
                flat.begin() + static_cast<std::ptrdiff_t>(a * s),
                flat.begin() + static_cast<std::ptrdiff_t>((a + 1) * s),
                flat.begin() + static_cast<std::ptrdiff_t>(b * s),
                flat.begin() + static_cast<std::ptrdiff_t>((b + 1) * s));
        });
        std::vector<std::uint32_t> sorted_flat(out.design.flat.size());
        for (std::uint64_t i = 0; i < collected; ++i) {
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(order[i] * s), s,
                        sorted_flat.begin() + static_cast<std::ptrdiff_t>(i * s));
        }
        out.design.flat = std::move(sorted_flat);
    }
    return out;
}

}  // namespace ustat
