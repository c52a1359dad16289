#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ustat/combinatorics.hpp"
#include "ustat/dataset.hpp"
#include "ustat/design.hpp"
#include "ustat/error.hpp"
#include "ustat/kernels.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"
#include "ustat/stats.hpp"

namespace ustat {

struct SubsampleValue {
    std::uint64_t ordinal;
    double value;
};

struct EnsembleResult {
    double theta_hat = 0.0;
    std::uint64_t realized_n = 0;  // kernel evaluations averaged into theta_hat
    std::uint64_t target_n = 0;    // requested ensemble size; 0 for complete form
    bool complete = false;
    bool mean_identity = false;    // grand-mean closed form used, no enumeration
    bool capture_complete = true;  // per_subsample holds every evaluation
    std::vector<SubsampleValue> per_subsample;
    KernelCounters counters;
};

namespace detail {

constexpr std::uint64_t kEvalBlock = 4096;

// Which ordinals to keep when capture is on: all of them if they fit the cap,
// otherwise a uniform without-replacement subset (sorted for binary search).
inline std::vector<std::uint64_t> capture_ordinals(std::uint64_t total, std::uint64_t cap,
                                                   std::uint64_t master_seed) {
    std::vector<std::uint64_t> picks;
    if (total <= cap) {
        picks.resize(total);
        for (std::uint64_t i = 0; i < total; ++i) picks[i] = i;
        return picks;
    }
    Rng rng(fold_in(master_seed, streams::kReservoir));
    floyd_sample(rng, total, cap, picks);
    std::sort(picks.begin(), picks.end());
    return picks;
}

// Shared evaluation driver: fetch(ordinal) row views come from either the full
// lexicographic enumeration or a materialized design. Blocks are a fixed
// partition of the ordinal range, so the compensated fold over block sums is
// identical for every thread count.
template <typename MakeCursor>
void evaluate_ordinals(std::uint64_t total, const KernelSpec& kernel,
                       std::uint64_t master_seed, int threads, MakeCursor make_cursor,
                       EnsembleResult& out) {
    const std::uint64_t n_blocks = (total + kEvalBlock - 1) / kEvalBlock;
    std::vector<double> block_sums(n_blocks, 0.0);
    std::vector<KernelCounters> block_counters(n_blocks);

    std::vector<std::uint64_t>* captured = nullptr;
    std::vector<std::uint64_t> capture_list;
    if (!out.per_subsample.empty()) {
        capture_list.reserve(out.per_subsample.size());
        for (const auto& sv : out.per_subsample) capture_list.push_back(sv.ordinal);
        captured = &capture_list;
    }

    parallel_blocks(total, kEvalBlock, threads, [&](std::uint64_t block, std::uint64_t lo,
                                                    std::uint64_t hi) {
        KernelWorkspace ws;
        NeumaierSum sum;
        KernelCounters counters;
        auto cursor = make_cursor(lo);
        for (std::uint64_t ord = lo; ord < hi; ++ord) {
            const auto rows = cursor(ord);
            const double v =
                eval_kernel(kernel, cursor.data(), rows, derive_omega(master_seed, ord), ws,
                            &counters);
            sum.add(v);
            if (captured != nullptr) {
                const auto it = std::lower_bound(captured->begin(), captured->end(), ord);
                if (it != captured->end() && *it == ord) {
                    out.per_subsample[static_cast<std::size_t>(it - captured->begin())].value = v;
                }
            }
        }
        block_sums[block] = sum.value();
        block_counters[block] = counters;
    });

    NeumaierSum fold;
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
        fold.add(block_sums[b]);
        out.counters += block_counters[b];
    }
    out.theta_hat = fold.value() / static_cast<double>(total);
    out.realized_n = total;
}

struct EnumerationCursor {
    const Dataset* dataset;
    CombinationEnumerator enumerator;
    std::uint64_t at;

    EnumerationCursor(const Dataset* d, std::uint32_t n, std::uint32_t s, std::uint64_t start)
        : dataset(d), enumerator(n, s, start), at(start) {}

    const Dataset& data() const { return *dataset; }
    std::span<const std::uint32_t> operator()(std::uint64_t ord) {
        while (at < ord) {
            enumerator.next();
            ++at;
        }
        return enumerator.current();
    }
};

struct DesignCursor {
    const Dataset* dataset;
    const Design* design;

    const Dataset& data() const { return *dataset; }
    std::span<const std::uint32_t> operator()(std::uint64_t ord) const {
        return design->subsample(ord);
    }
};

inline void prepare_capture(EnsembleResult& out, std::uint64_t total,
                            const EnsembleConfig& config) {
    if (!config.capture) return;
    const auto picks = capture_ordinals(total, config.capture_cap, config.master_seed);
    out.capture_complete = picks.size() == total;
    out.per_subsample.resize(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) {
        out.per_subsample[i] = {picks[i], 0.0};
    }
}

inline double grand_mean(const Dataset& data) {
    NeumaierSum sum;
    for (std::size_t i = 0; i < data.n_rows(); ++i) sum.add(data.y(i));
    return sum.value() / static_cast<double>(data.n_rows());
}

}  // namespace detail

// Average of the kernel over every size-s subsample. For ω-consuming kernels
// each ordinal owns an independent derived stream. The mean kernel skips
// enumeration only when the subsample count exceeds the cap: averaging
// subsample means over all subsamples is exactly the grand mean.
inline EnsembleResult complete_u(const Dataset& data, const KernelSpec& kernel, std::uint32_t s,
                                 const EnsembleConfig& config = {}) {
    const std::size_t n = data.n_rows();
    if (s < 1 || s > n) throw InvalidArgsError("subsample size must satisfy 1 <= s <= n");
    EnsembleResult out;
    out.complete = true;
    out.target_n = 0;

    const Binom128 c = binom128(n, s);
    const bool enumerable =
        !c.saturated && c.value <= static_cast<unsigned __int128>(config.enumeration_cap);
    if (!enumerable) {
        if (kernel.kind == KernelKind::Mean) {
            out.theta_hat = detail::grand_mean(data);
            out.mean_identity = true;
            out.capture_complete = false;
            return out;
        }
        throw CapExceededError("complete enumeration exceeds the configured cap");
    }

    const std::uint64_t total = c.as_u64();
    detail::prepare_capture(out, total, config);
    const auto make_cursor = [&](std::uint64_t start) {
        return detail::EnumerationCursor(&data, static_cast<std::uint32_t>(n),
                                         static_cast<std::uint32_t>(s), start);
    };
    detail::evaluate_ordinals(total, kernel, config.master_seed, config.threads, make_cursor,
                              out);
    return out;
}

// Average over a randomly drawn design of subsamples. realized_n is the
// ensemble size actually evaluated (N-hat under the Bernoulli scheme).
inline EnsembleResult generalized_incomplete_u(const Dataset& data, const KernelSpec& kernel,
                                               const EnsembleConfig& config) {
    const IncompleteDesign drawn =
        draw_incomplete_design(static_cast<std::uint32_t>(data.n_rows()), config.s,
                               config.n_subsamples, config.scheme, config.master_seed);
    EnsembleResult out;
    out.complete = false;
    out.target_n = config.n_subsamples;

    const std::uint64_t total = drawn.design.count();
    if (total == 0) {
        // Possible under the Bernoulli scheme when the binomial draw hits zero.
        out.realized_n = 0;
        out.capture_complete = false;
        out.theta_hat = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    detail::prepare_capture(out, total, config);
    const auto make_cursor = [&](std::uint64_t) {
        return detail::DesignCursor{&data, &drawn.design};
    };
    detail::evaluate_ordinals(total, kernel, config.master_seed, config.threads, make_cursor,
                              out);
    return out;
}

}  // namespace ustat
