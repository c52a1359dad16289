#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ustat/combinatorics.hpp"
#include "ustat/dataset.hpp"
#include "ustat/ensemble.hpp"
#include "ustat/error.hpp"
#include "ustat/generators.hpp"
#include "ustat/kernels.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"
#include "ustat/stats.hpp"

namespace ustat {

struct ZetaEstimate {
    double value = 0.0;
    double se = 0.0;
    std::uint64_t m_used = 0;        // replicates contributing to the estimate
    std::uint64_t eval_errors = 0;   // kernel failures skipped (singular fits)
};

struct VarianceComponents {
    ZetaEstimate zeta1_omega;
    ZetaEstimate zeta_s_omega;
    ZetaEstimate zeta_s;
    std::uint64_t m_outer = 0, m_inner = 0, m_var = 0;
};

namespace detail {

constexpr std::uint64_t kZetaBlock = 64;

struct ReplicateScratch {
    Dataset data;
    std::vector<std::uint32_t> rows;
    KernelWorkspace ws;

    ReplicateScratch(std::uint32_t s, std::size_t p) : data(s, p), rows(s) {
        for (std::uint32_t i = 0; i < s; ++i) rows[i] = i;
    }
};

inline void fill_rows(const GeneratorSpec& gen, Rng& rng, Dataset& data, std::uint32_t from,
                      std::uint32_t to) {
    for (std::uint32_t i = from; i < to; ++i) {
        data.y(i) = draw_row(gen, rng, data.x_row(i));
    }
}

}  // namespace detail

// Covariance of two kernel evaluations sharing exactly one row, with fresh
// randomization on both sides. Each outer replicate fixes the shared row and
// averages M_inner pairs of independent completions; the covariance of those
// per-replicate means is exactly the shared-row covariance, because the
// completion noise is independent across the two sides. SE is a leave-one-out
// jackknife over outer replicates.
inline ZetaEstimate estimate_zeta1_omega(const KernelSpec& kernel, const GeneratorSpec& gen,
                                         std::uint32_t s, std::uint64_t m_outer,
                                         std::uint64_t m_inner, std::uint64_t seed,
                                         int threads = 1) {
    gen.validate();
    if (s < 1) throw InvalidArgsError("kernel order must be >= 1");
    if (m_outer < 2) throw InvalidArgsError("need at least two outer replicates");
    if (m_inner < 1) throw InvalidArgsError("need at least one completion pair");
    const std::size_t p = gen.n_features();

    std::vector<double> mean_a(m_outer), mean_b(m_outer);
    std::vector<std::uint8_t> valid(m_outer, 0);
    const std::uint64_t n_blocks = (m_outer + detail::kZetaBlock - 1) / detail::kZetaBlock;
    std::vector<std::uint64_t> block_errors(n_blocks, 0);

    parallel_blocks(m_outer, detail::kZetaBlock, threads, [&](std::uint64_t block,
                                                              std::uint64_t lo,
                                                              std::uint64_t hi) {
        detail::ReplicateScratch scratch(s, p);
        std::uint64_t errors = 0;
        for (std::uint64_t i = lo; i < hi; ++i) {
            const std::uint64_t outer_seed = fold_in(fold_in(seed, streams::kOuter), i);
            Rng data_rng(fold_in(outer_seed, streams::kData));
            detail::fill_rows(gen, data_rng, scratch.data, 0, 1);  // shared row
            NeumaierSum sum_a, sum_b;
            std::uint64_t pairs = 0;
            for (std::uint64_t j = 0; j < m_inner; ++j) {
                const std::uint64_t pair_seed = fold_in(outer_seed, j);
                try {
                    detail::fill_rows(gen, data_rng, scratch.data, 1, s);
                    const double a =
                        eval_kernel(kernel, scratch.data, scratch.rows,
                                    fold_in(fold_in(pair_seed, streams::kOmega), 0), scratch.ws);
                    detail::fill_rows(gen, data_rng, scratch.data, 1, s);
                    const double b =
                        eval_kernel(kernel, scratch.data, scratch.rows,
                                    fold_in(fold_in(pair_seed, streams::kOmega), 1), scratch.ws);
                    sum_a.add(a);
                    sum_b.add(b);
                    ++pairs;
                } catch (const SingularDesignError&) {
                    ++errors;
                }
            }
            if (pairs > 0) {
                mean_a[i] = sum_a.value() / static_cast<double>(pairs);
                mean_b[i] = sum_b.value() / static_cast<double>(pairs);
                valid[i] = 1;
            }
        }
        block_errors[block] = errors;
    });

    std::vector<double> a, b;
    a.reserve(m_outer);
    b.reserve(m_outer);
    for (std::uint64_t i = 0; i < m_outer; ++i) {
        if (valid[i]) {
            a.push_back(mean_a[i]);
            b.push_back(mean_b[i]);
        }
    }
    if (a.size() < 2) throw NumericalError("too few valid replicates for a covariance");

    const EstimateWithSe cov = covariance_with_jackknife_se(a, b);
    ZetaEstimate out;
    out.value = cov.value;
    out.se = cov.se;
    out.m_used = a.size();
    for (const std::uint64_t e : block_errors) out.eval_errors += e;
    return out;
}

// Full kernel variance: fresh rows and fresh randomization every draw.
inline ZetaEstimate estimate_zeta_s(const KernelSpec& kernel, const GeneratorSpec& gen,
                                    std::uint32_t s, std::uint64_t m, std::uint64_t seed,
                                    int threads = 1) {
    gen.validate();
    if (s < 1) throw InvalidArgsError("kernel order must be >= 1");
    if (m < 2) throw InvalidArgsError("need at least two replicates");
    const std::size_t p = gen.n_features();

    std::vector<double> values(m);
    std::vector<std::uint8_t> valid(m, 0);
    const std::uint64_t n_blocks = (m + detail::kZetaBlock - 1) / detail::kZetaBlock;
    std::vector<std::uint64_t> block_errors(n_blocks, 0);

    parallel_blocks(m, detail::kZetaBlock, threads, [&](std::uint64_t block, std::uint64_t lo,
                                                        std::uint64_t hi) {
        detail::ReplicateScratch scratch(s, p);
        std::uint64_t errors = 0;
        for (std::uint64_t i = lo; i < hi; ++i) {
            const std::uint64_t rep_seed = fold_in(fold_in(seed, streams::kReplicate), i);
            Rng data_rng(fold_in(rep_seed, streams::kData));
            try {
                detail::fill_rows(gen, data_rng, scratch.data, 0, s);
                values[i] = eval_kernel(kernel, scratch.data, scratch.rows,
                                        fold_in(rep_seed, streams::kOmega), scratch.ws);
                valid[i] = 1;
            } catch (const SingularDesignError&) {
                ++errors;
            }
        }
        block_errors[block] = errors;
    });

    std::vector<double> kept;
    kept.reserve(m);
    for (std::uint64_t i = 0; i < m; ++i) {
        if (valid[i]) kept.push_back(values[i]);
    }
    if (kept.size() < 2) throw NumericalError("too few valid replicates for a variance");

    const EstimateWithSe var = variance_with_jackknife_se(kept);
    ZetaEstimate out;
    out.value = var.value;
    out.se = var.se;
    out.m_used = kept.size();
    for (const std::uint64_t e : block_errors) out.eval_errors += e;
    return out;
}

// Kernel mean under fresh draws; the Monte-Carlo truth oracle for coverage
// experiments with kernels that have no closed-form expectation.
inline ZetaEstimate estimate_theta(const KernelSpec& kernel, const GeneratorSpec& gen,
                                   std::uint32_t s, std::uint64_t m, std::uint64_t seed,
                                   int threads = 1) {
    gen.validate();
    if (s < 1) throw InvalidArgsError("kernel order must be >= 1");
    if (m < 2) throw InvalidArgsError("need at least two replicates");
    const std::size_t p = gen.n_features();

    std::vector<double> values(m);
    std::vector<std::uint8_t> valid(m, 0);
    const std::uint64_t n_blocks = (m + detail::kZetaBlock - 1) / detail::kZetaBlock;
    std::vector<std::uint64_t> block_errors(n_blocks, 0);

    parallel_blocks(m, detail::kZetaBlock, threads, [&](std::uint64_t block, std::uint64_t lo,
                                                        std::uint64_t hi) {
        detail::ReplicateScratch scratch(s, p);
        std::uint64_t errors = 0;
        for (std::uint64_t i = lo; i < hi; ++i) {
            const std::uint64_t rep_seed = fold_in(fold_in(seed, streams::kTheta), i);
            Rng data_rng(fold_in(rep_seed, streams::kData));
            try {
                detail::fill_rows(gen, data_rng, scratch.data, 0, s);
                values[i] = eval_kernel(kernel, scratch.data, scratch.rows,
                                        fold_in(rep_seed, streams::kOmega), scratch.ws);
                valid[i] = 1;
            } catch (const SingularDesignError&) {
                ++errors;
            }
        }
        block_errors[block] = errors;
    });

    std::vector<double> kept;
    kept.reserve(m);
    for (std::uint64_t i = 0; i < m; ++i) {
        if (valid[i]) kept.push_back(values[i]);
    }
    if (kept.size() < 2) throw NumericalError("too few valid replicates for a mean");

    ZetaEstimate out;
    out.value = compensated_mean(kept);
    out.se = std::sqrt(sample_variance(kept) / static_cast<double>(kept.size()));
    out.m_used = kept.size();
    for (const std::uint64_t e : block_errors) out.eval_errors += e;
    return out;
}

// Covariance of two evaluations on the same rows with independent
// randomization streams. Requires a randomized kernel; force_deterministic
// pushes a deterministic kernel through anyway, in which case both sides are
// identical and the estimate collapses to the kernel variance.
inline ZetaEstimate estimate_zeta_s_omega(const KernelSpec& kernel, const GeneratorSpec& gen,
                                          std::uint32_t s, std::uint64_t m, std::uint64_t seed,
                                          int threads = 1, bool force_deterministic = false) {
    gen.validate();
    if (!kernel.uses_omega() && !force_deterministic) {
        throw InvalidArgsError(
            "kernel has no randomization stream; shared-data covariance is just its variance");
    }
    if (s < 1) throw InvalidArgsError("kernel order must be >= 1");
    if (m < 2) throw InvalidArgsError("need at least two replicates");
    const std::size_t p = gen.n_features();

    std::vector<double> va(m), vb(m);
    std::vector<std::uint8_t> valid(m, 0);
    const std::uint64_t n_blocks = (m + detail::kZetaBlock - 1) / detail::kZetaBlock;
    std::vector<std::uint64_t> block_errors(n_blocks, 0);

    parallel_blocks(m, detail::kZetaBlock, threads, [&](std::uint64_t block, std::uint64_t lo,
                                                        std::uint64_t hi) {
        detail::ReplicateScratch scratch(s, p);
        std::uint64_t errors = 0;
        for (std::uint64_t i = lo; i < hi; ++i) {
            const std::uint64_t rep_seed = fold_in(fold_in(seed, streams::kReplicate), i);
            Rng data_rng(fold_in(rep_seed, streams::kData));
            try {
                detail::fill_rows(gen, data_rng, scratch.data, 0, s);
                va[i] = eval_kernel(kernel, scratch.data, scratch.rows,
                                    fold_in(fold_in(rep_seed, streams::kOmega), 0), scratch.ws);
                vb[i] = eval_kernel(kernel, scratch.data, scratch.rows,
                                    fold_in(fold_in(rep_seed, streams::kOmega), 1), scratch.ws);
                valid[i] = 1;
            } catch (const SingularDesignError&) {
                ++errors;
            }
        }
        block_errors[block] = errors;
    });

    std::vector<double> a, b;
    a.reserve(m);
    b.reserve(m);
    for (std::uint64_t i = 0; i < m; ++i) {
        if (valid[i]) {
            a.push_back(va[i]);
            b.push_back(vb[i]);
        }
    }
    if (a.size() < 2) throw NumericalError("too few valid replicates for a covariance");

    const EstimateWithSe cov = covariance_with_jackknife_se(a, b);
    ZetaEstimate out;
    out.value = cov.value;
    out.se = cov.se;
    out.m_used = a.size();
    for (const std::uint64_t e : block_errors) out.eval_errors += e;
    return out;
}

struct ZetaConfig {
    std::uint64_t m_outer = 2000;
    std::uint64_t m_inner = 1;
    std::uint64_t m_var = 2000;
    std::uint64_t seed = 0;
    int threads = 1;
};

// All three components in one pass of configuration. For kernels without a
// randomization stream the shared-data covariance equals the variance by
// definition, so that slot just mirrors zeta_s.
inline VarianceComponents estimate_components(const KernelSpec& kernel, const GeneratorSpec& gen,
                                              std::uint32_t s, const ZetaConfig& cfg) {
    VarianceComponents out;
    out.m_outer = cfg.m_outer;
    out.m_inner = cfg.m_inner;
    out.m_var = cfg.m_var;
    out.zeta1_omega = estimate_zeta1_omega(kernel, gen, s, cfg.m_outer, cfg.m_inner,
                                           fold_in(cfg.seed, 1), cfg.threads);
    out.zeta_s = estimate_zeta_s(kernel, gen, s, cfg.m_var, fold_in(cfg.seed, 2), cfg.threads);
    if (kernel.uses_omega()) {
        out.zeta_s_omega = estimate_zeta_s_omega(kernel, gen, s, cfg.m_var,
                                                 fold_in(cfg.seed, 3), cfg.threads);
    } else {
        out.zeta_s_omega = out.zeta_s;
    }
    return out;
}

// Plug-in kernel variance from captured per-subsample values. Biased for
// overlapping subsamples (they are correlated); diagnostic use only.
inline EstimateWithSe plugin_zeta_s(std::span<const SubsampleValue> captured) {
    if (captured.size() < 2) throw InvalidArgsError("need at least two captured values");
    std::vector<double> vals;
    vals.reserve(captured.size());
    for (const auto& sv : captured) vals.push_back(sv.value);
    return variance_with_jackknife_se(vals);
}

// zeta_s / (s * zeta_1); the factor by which averaging fails to shrink the
// kernel variance relative to a linear statistic.
inline double variance_ratio(const VarianceComponents& c, std::uint32_t s) {
    if (!(c.zeta1_omega.value > 0.0)) {
        throw DegenerateProjectionError("first-order projection variance must be positive");
    }
    if (c.zeta1_omega.value <= c.zeta1_omega.se) {
        throw DegenerateProjectionError(
            "first-order projection variance is not resolved above its standard error");
    }
    return c.zeta_s.value / (static_cast<double>(s) * c.zeta1_omega.value);
}

inline EstimateWithSe variance_ratio_with_se(const VarianceComponents& c, std::uint32_t s) {
    const double ratio = variance_ratio(c, s);
    const double r1 = c.zeta1_omega.se / c.zeta1_omega.value;
    const double rs = c.zeta_s.se / c.zeta_s.value;
    return {ratio, std::abs(ratio) * std::sqrt(r1 * r1 + rs * rs)};
}

enum class RatioExample { Mean, Variance, Ols, OneNN, RandomK };

struct RatioParams {
    double sigma2 = 1.0;  // Variance: Var(Y); OneNN: noise variance
    double mu4 = 3.0;     // Variance: central fourth moment of Y
    std::uint64_t s = 2;
    std::uint64_t k = 1;  // RandomK selection size
};

struct RatioValue {
    double value = 1.0;
    bool is_limit = false;  // value is the s -> infinity limit, not a finite-s ratio
};

// Exact ratio zeta_s / (s * zeta_1) for the analytically solvable kernels.
inline RatioValue closed_form_ratio(RatioExample example, const RatioParams& p) {
    switch (example) {
        case RatioExample::Mean:
            return {1.0, false};
        case RatioExample::Variance: {
            if (p.s < 2) throw InvalidArgsError("pairwise variance kernel needs s >= 2");
            if (!(p.mu4 > p.sigma2 * p.sigma2)) {
                throw InvalidArgsError("fourth moment must exceed squared variance");
            }
            const double s = static_cast<double>(p.s);
            return {1.0 + 2.0 * p.sigma2 * p.sigma2 /
                              ((s - 1.0) * (p.mu4 - p.sigma2 * p.sigma2)),
                    false};
        }
        case RatioExample::Ols:
            return {1.0, true};
        case RatioExample::OneNN: {
            if (p.s < 2) throw InvalidArgsError("nearest-neighbor ratio needs s >= 2");
            const double s = static_cast<double>(p.s);
            const double zeta_s = p.sigma2 + s / ((s + 2.0) * (s + 1.0) * (s + 1.0));
            const double zeta_1 =
                (1.0 / (s * s)) * (1.0 / (2.0 * s + 1.0) - 1.0 / ((s + 1.0) * (s + 1.0))) +
                p.sigma2 / (2.0 * s - 1.0);
            return {zeta_s / (s * zeta_1), false};
        }
        case RatioExample::RandomK: {
            if (p.k < 1 || p.k > p.s) throw InvalidArgsError("need 1 <= k <= s");
            return {static_cast<double>(p.s) / static_cast<double>(p.k), false};
        }
    }
    throw InvalidArgsError("unknown ratio example");
}

// Limiting nearest-neighbor ratio bound: 2k divided by the double binomial
// sum, evaluated at a large finite order in log space.
inline double c_of_k(std::uint64_t k, std::uint64_t s_approx = 2000) {
    if (k < 1) throw InvalidArgsError("neighbor count must be >= 1");
    if (s_approx < 2 * k) throw InvalidArgsError("approximation order must be >= 2k");
    const double s = static_cast<double>(s_approx);
    long double v = 0.0L;
    for (std::uint64_t i = 0; i < k; ++i) {
        for (std::uint64_t j = 0; j < k; ++j) {
            const double lg = log_choose(s - 1.0, static_cast<double>(i)) +
                              log_choose(s - 1.0, static_cast<double>(j)) -
                              log_choose(2.0 * s - 2.0, static_cast<double>(i + j));
            v += std::exp(static_cast<long double>(lg));
        }
    }
    return static_cast<double>(2.0L * static_cast<long double>(k) / v);
}

// Doubles the approximation order until successive values agree to 1e-3.
inline double c_of_k_converged(std::uint64_t k, std::uint64_t s_start = 2000) {
    std::uint64_t s = std::max<std::uint64_t>(s_start, 2 * k);
    double prev = c_of_k(k, s);
    for (int iter = 0; iter < 20; ++iter) {
        s *= 2;
        const double next = c_of_k(k, s);
        if (std::abs(next - prev) < 1e-3) return next;
        prev = next;
    }
    return prev;
}

// Worst-case ratio bound for convex-weight linear smoothers.
inline double linear_smoother_bound(double sigma2, double f_sup, std::uint64_t s) {
    if (!(sigma2 > 0.0)) throw InvalidArgsError("noise variance must be positive");
    if (!(f_sup >= 0.0)) throw InvalidArgsError("sup-norm must be >= 0");
    return static_cast<double>(s) * (sigma2 + 0.25 * f_sup * f_sup) / sigma2;
}

}  // namespace ustat
