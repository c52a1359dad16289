#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ustat/error.hpp"
#include "ustat/generators.hpp"
#include "ustat/kernels.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"
#include "ustat/stats.hpp"

namespace ustat {

struct ConfidenceInterval {
    double center = 0.0;
    double half_width = 0.0;
    double level = 0.0;
    double variance_used = 0.0;

    double lo() const noexcept { return center - half_width; }
    double hi() const noexcept { return center + half_width; }
    bool covers(double value) const noexcept { return lo() <= value && value <= hi(); }
};

// Normal interval with the two-component sampling variance: projection part
// s^2 zeta1/n plus ensemble part zeta_s/N. N = 0 means the complete form,
// where the ensemble part vanishes.
inline ConfidenceInterval build_ci(double theta_hat, double zeta1_omega, double zeta_s,
                                   std::uint64_t n, std::uint32_t s, std::uint64_t N,
                                   double level) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgsError("level must be in (0,1)");
    if (n < 1 || s < 1) throw InvalidArgsError("need n >= 1 and s >= 1");
    if (!(zeta1_omega >= 0.0) || !(zeta_s >= 0.0)) {
        throw InvalidArgsError("variance components must be >= 0");
    }
    const double sd = static_cast<double>(s);
    double variance = sd * sd * zeta1_omega / static_cast<double>(n);
    if (N > 0) variance += zeta_s / static_cast<double>(N);
    if (!(variance > 0.0)) throw InvalidArgsError("sampling variance must be positive");
    ConfidenceInterval ci;
    ci.center = theta_hat;
    ci.level = level;
    ci.variance_used = variance;
    ci.half_width = normal_quantile(0.5 * (1.0 + level)) * std::sqrt(variance);
    return ci;
}

// Inputs shared by the normal-approximation error bounds. zeta1 is the
// shared-one-row covariance with randomization integrated out; Eg2/Eg3 are
// moments of the centered projection g, Eh2/Eh3 central moments of the kernel.
struct BEInputs {
    std::uint64_t n = 0;
    std::uint32_t s = 0;
    std::uint64_t N = 0;
    double zeta1 = 0.0;
    double zeta_s = 0.0;
    double Eg2 = 0.0;
    double Eg3 = 0.0;
    double Eh2 = 0.0;
    double Eh3 = 0.0;
    double kur1 = 0.0;
    double kur2 = 0.0;
    double p = 0.0;  // selection probability N / C(n,s)
};

struct BoundResult {
    double value = 0.0;
    std::vector<double> terms;  // summands in display order, scaled
    bool clamped = false;       // a negative ratio bracket was clamped to zero
};

namespace detail {

// (s/n) * (zeta_s / (s*zeta1) - 1), clamped at zero: sampling noise can push
// the estimated ratio below its theoretical floor of 1.
inline double ratio_bracket(const BEInputs& in, bool& clamped) {
    const double ratio =
        in.zeta_s / (static_cast<double>(in.s) * in.zeta1);
    double bracket = (static_cast<double>(in.s) / static_cast<double>(in.n)) * (ratio - 1.0);
    if (bracket < 0.0) {
        bracket = 0.0;
        clamped = true;
    }
    return bracket;
}

inline void check_be_common(const BEInputs& in) {
    if (in.n < 1 || in.s < 1) throw InvalidArgsError("need n >= 1 and s >= 1");
    if (!(in.zeta1 > 0.0)) throw InvalidArgsError("projection variance must be positive");
    if (!(in.zeta_s >= 0.0) || !(in.Eg3 >= 0.0)) {
        throw InvalidArgsError("moments must be >= 0");
    }
}

}  // namespace detail

// Two-term bound for the complete form: a classical third-moment rate plus a
// penalty for how far the kernel is from linear.
inline BoundResult be_bound_complete(const BEInputs& in) {
    detail::check_be_common(in);
    BoundResult out;
    const double term1 =
        6.1 * in.Eg3 / (std::sqrt(static_cast<double>(in.n)) * std::pow(in.zeta1, 1.5));
    const double term2 = (1.0 + std::sqrt(2.0)) * std::sqrt(detail::ratio_bracket(in, out.clamped));
    out.terms = {term1, term2};
    out.value = term1 + term2;
    return out;
}

// Complete bound plus the cost of evaluating only N of the C(n,s) subsamples.
inline BoundResult be_bound_incomplete_linear(const BEInputs& in) {
    if (in.N < 1) throw InvalidArgsError("ensemble size must be >= 1");
    if (!(in.p >= 0.0 && in.p <= 1.0)) throw InvalidArgsError("selection probability in [0,1]");
    BoundResult out = be_bound_complete(in);
    const double ratio = in.zeta_s / (static_cast<double>(in.s) * in.zeta1);
    const double term3 =
        (1.0 + std::sqrt(1.0 / static_cast<double>(in.s))) *
        std::sqrt((static_cast<double>(in.n) / static_cast<double>(in.N)) * (1.0 - in.p) * ratio);
    out.terms.push_back(term3);
    out.value += term3;
    return out;
}

// Four-term bound from the convolution argument, valid up to the universal
// constant C, which the source leaves unspecified; C is therefore an explicit
// caller-supplied scale and defaults to 1 in all reports.
inline BoundResult be_bound_convolution(const BEInputs& in, double C) {
    detail::check_be_common(in);
    if (in.N < 1) throw InvalidArgsError("ensemble size must be >= 1");
    if (!(C > 0.0)) throw InvalidArgsError("constant must be positive");
    if (!(in.Eg2 > 0.0) || !(in.Eh2 > 0.0) || !(in.Eh3 >= 0.0)) {
        throw InvalidArgsError("projection and kernel moments must be positive");
    }
    BoundResult out;
    const double term1 =
        in.Eg3 / (std::sqrt(static_cast<double>(in.n)) * std::pow(in.Eg2, 1.5));
    const double term2 =
        in.Eh3 / (std::sqrt(static_cast<double>(in.N)) * std::pow(in.Eh2, 1.5));
    const double term3 = std::sqrt(detail::ratio_bracket(in, out.clamped));
    const double sn = static_cast<double>(in.s) / static_cast<double>(in.n);
    const double term4 = std::cbrt(sn);
    out.terms = {C * term1, C * term2, C * term3, C * term4};
    out.value = C * (term1 + term2 + term3 + term4);
    return out;
}

// Convolution bound with the last term sharpened to (s/n)^eta under
// sub-Gaussian standardized kernels, 0 < eta < 1/2.
inline BoundResult be_bound_subgaussian(const BEInputs& in, double C, double eta) {
    if (!(eta > 0.0 && eta < 0.5)) throw InvalidArgsError("exponent must lie in (0, 1/2)");
    BoundResult out = be_bound_convolution(in, C);
    const double sn = static_cast<double>(in.s) / static_cast<double>(in.n);
    const double term4 = C * std::pow(sn, eta);
    out.value += term4 - out.terms[3];
    out.terms[3] = term4;
    return out;
}

// Moments of the projection g(z) = E[h(z, ...)] - theta, by nested Monte
// Carlo: each outer row's conditional mean is approximated by an inner
// average over fresh completions. The inner noise inflates Eg2 by roughly
// Var_inner/m_inner and biases E|g|^3 upward (Jensen); both shrink as m_inner
// grows and are reported via inner_var_mean rather than corrected.
struct GMoments {
    EstimateWithSe eg2;
    EstimateWithSe eg3;
    double theta_hat = 0.0;
    double inner_var_mean = 0.0;  // average inner-completion variance diagnostic
    std::uint64_t m_outer = 0, m_inner = 0;
    std::uint64_t eval_errors = 0;
};

inline GMoments estimate_g_moments(const KernelSpec& kernel, const GeneratorSpec& gen,
                                   std::uint32_t s, std::uint64_t m_outer, std::uint64_t seed,
                                   std::uint64_t m_inner = 64, int threads = 1) {
    gen.validate();
    if (m_outer < 2) throw InvalidArgsError("need at least two outer replicates");
    if (m_inner < 1) throw InvalidArgsError("need at least one completion");
    const std::size_t p = gen.n_features();

    std::vector<double> g_raw(m_outer), inner_var(m_outer);
    std::vector<std::uint8_t> valid(m_outer, 0);
    constexpr std::uint64_t kBlock = 64;
    const std::uint64_t n_blocks = (m_outer + kBlock - 1) / kBlock;
    std::vector<std::uint64_t> block_errors(n_blocks, 0);

    parallel_blocks(m_outer, kBlock, threads, [&](std::uint64_t block, std::uint64_t lo,
                                                  std::uint64_t hi) {
        Dataset data(s, p);
        std::vector<std::uint32_t> rows(s);
        for (std::uint32_t i = 0; i < s; ++i) rows[i] = i;
        KernelWorkspace ws;
        std::uint64_t errors = 0;
        for (std::uint64_t i = lo; i < hi; ++i) {
            const std::uint64_t outer_seed = fold_in(fold_in(seed, streams::kOuter), i);
            Rng data_rng(fold_in(outer_seed, streams::kData));
            data.y(0) = draw_row(gen, data_rng, data.x_row(0));
            NeumaierSum sum;
            double sumsq = 0.0;
            std::uint64_t done = 0;
            for (std::uint64_t j = 0; j < m_inner; ++j) {
                try {
                    for (std::uint32_t r = 1; r < s; ++r) {
                        data.y(r) = draw_row(gen, data_rng, data.x_row(r));
                    }
                    const double v =
                        eval_kernel(kernel, data, rows,
                                    fold_in(fold_in(outer_seed, streams::kOmega), j), ws);
                    sum.add(v);
                    sumsq += v * v;
                    ++done;
                } catch (const SingularDesignError&) {
                    ++errors;
                }
            }
            if (done > 0) {
                const double mean = sum.value() / static_cast<double>(done);
                g_raw[i] = mean;
                inner_var[i] =
                    done > 1 ? std::max(0.0, (sumsq - done * mean * mean) /
                                                 static_cast<double>(done - 1))
                             : 0.0;
                valid[i] = 1;
            }
        }
        block_errors[block] = errors;
    });

    std::vector<double> kept, kept_var;
    kept.reserve(m_outer);
    for (std::uint64_t i = 0; i < m_outer; ++i) {
        if (valid[i]) {
            kept.push_back(g_raw[i]);
            kept_var.push_back(inner_var[i]);
        }
    }
    if (kept.size() < 2) throw NumericalError("too few valid replicates for moments");

    const double theta = compensated_mean(kept);
    std::vector<double> g2(kept.size()), g3(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const double a = std::abs(kept[i] - theta);
        g2[i] = a * a;
        g3[i] = a * a * a;
    }

    GMoments out;
    out.theta_hat = theta;
    out.eg2 = {compensated_mean(g2), std::sqrt(sample_variance(g2) / kept.size())};
    out.eg3 = {compensated_mean(g3), std::sqrt(sample_variance(g3) / kept.size())};
    out.inner_var_mean = compensated_mean(kept_var);
    out.m_outer = kept.size();
    out.m_inner = m_inner;
    for (const std::uint64_t e : block_errors) out.eval_errors += e;
    return out;
}

// Central absolute moments of the kernel itself plus the two kurtosis-type
// ratios. Degenerate kernels (zero variance) flag NaN ratios instead of
// erroring, so callers can report the degeneracy.
struct HMoments {
    EstimateWithSe eh2;
    EstimateWithSe eh3;
    EstimateWithSe kur1;  // E[h^4] / E[h^2]^2 of the centered kernel
    EstimateWithSe kur2;  // E[|h|^6] / E[|h|^3]^2
    double mean = 0.0;
    bool degenerate = false;
    std::uint64_t m_used = 0;
    std::uint64_t eval_errors = 0;
};

inline HMoments h_moments_from_samples(std::span<const double> values) {
    if (values.size() < 4) throw InvalidArgsError("need at least four kernel draws");
    const std::size_t m = values.size();
    const double mean = compensated_mean(values);
    std::vector<double> c2(m), c3(m), c4(m), c6(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double c = values[i] - mean;
        const double a = std::abs(c);
        c2[i] = a * a;
        c3[i] = a * a * a;
        c4[i] = c2[i] * c2[i];
        c6[i] = c3[i] * c3[i];
    }
    HMoments out;
    out.mean = mean;
    out.m_used = m;
    const double m2 = compensated_mean(c2);
    const double m3 = compensated_mean(c3);
    const double m4 = compensated_mean(c4);
    const double m6 = compensated_mean(c6);
    out.eh2 = {m2, std::sqrt(sample_variance(c2) / m)};
    out.eh3 = {m3, std::sqrt(sample_variance(c3) / m)};
    if (!(m2 > 0.0) || !(m3 > 0.0)) {
        out.degenerate = true;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out.kur1 = {nan, nan};
        out.kur2 = {nan, nan};
        return out;
    }
    out.kur1.value = m4 / (m2 * m2);
    out.kur2.value = m6 / (m3 * m3);
    // Fixed-center jackknife over the moment ratios: leave-one-out moments are
    // O(1) updates when the center is held at the full-sample mean.
    const double md = static_cast<double>(m);
    double ss1 = 0.0, ss2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double l2 = (md * m2 - c2[i]) / (md - 1.0);
        const double l3 = (md * m3 - c3[i]) / (md - 1.0);
        const double l4 = (md * m4 - c4[i]) / (md - 1.0);
        const double l6 = (md * m6 - c6[i]) / (md - 1.0);
        const double d1 = l4 / (l2 * l2) - out.kur1.value;
        const double d2 = l6 / (l3 * l3) - out.kur2.value;
        ss1 += d1 * d1;
        ss2 += d2 * d2;
    }
    out.kur1.se = std::sqrt((md - 1.0) / md * ss1);
    out.kur2.se = std::sqrt((md - 1.0) / md * ss2);
    return out;
}

inline HMoments estimate_h_moments(const KernelSpec& kernel, const GeneratorSpec& gen,
                                   std::uint32_t s, std::uint64_t m, std::uint64_t seed,
                                   int threads = 1) {
    gen.validate();
    if (m < 4) throw InvalidArgsError("need at least four replicates");
    const std::size_t p = gen.n_features();

    std::vector<double> values(m);
    std::vector<std::uint8_t> valid(m, 0);
    constexpr std::uint64_t kBlock = 64;
    const std::uint64_t n_blocks = (m + kBlock - 1) / kBlock;
    std::vector<std::uint64_t> block_errors(n_blocks, 0);

    parallel_blocks(m, kBlock, threads, [&](std::uint64_t block, std::uint64_t lo,
                                            std::uint64_t hi) {
        Dataset data(s, p);
        std::vector<std::uint32_t> rows(s);
        for (std::uint32_t i = 0; i < s; ++i) rows[i] = i;
        KernelWorkspace ws;
        std::uint64_t errors = 0;
        for (std::uint64_t i = lo; i < hi; ++i) {
            const std::uint64_t rep_seed = fold_in(fold_in(seed, streams::kReplicate), i);
            Rng data_rng(fold_in(rep_seed, streams::kData));
            try {
                for (std::uint32_t r = 0; r < s; ++r) {
                    data.y(r) = draw_row(gen, data_rng, data.x_row(r));
                }
                values[i] = eval_kernel(kernel, data, rows,
                                        fold_in(rep_seed, streams::kOmega), ws);
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
    if (kept.size() < 4) throw NumericalError("too few valid replicates for moments");

    HMoments out = h_moments_from_samples(kept);
    for (const std::uint64_t e : block_errors) out.eval_errors += e;
    return out;
}

}  // namespace ustat
