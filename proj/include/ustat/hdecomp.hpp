#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ustat/combinatorics.hpp"
#include "ustat/dataset.hpp"
#include "ustat/error.hpp"
#include "ustat/kernels.hpp"
#include "ustat/rng.hpp"

namespace ustat {

// Finite distribution over rows (x, y); the exact-decomposition oracle works
// entirely on this support.
struct DiscreteSupport {
    Dataset atoms;
    std::vector<double> probs;

    std::size_t size() const noexcept { return probs.size(); }

    void validate() const {
        atoms.validate();
        if (atoms.n_rows() != probs.size() || probs.empty()) {
            throw InvalidArgsError("support needs one probability per atom");
        }
        double total = 0.0;
        for (const double p : probs) {
            if (!(p >= 0.0)) throw InvalidArgsError("atom probabilities must be >= 0");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw InvalidArgsError("atom probabilities must sum to 1");
        }
    }
};

inline DiscreteSupport make_support_1d(std::span<const double> xs, std::span<const double> ys,
                                       std::span<const double> probs) {
    if (xs.size() != ys.size() || xs.size() != probs.size()) {
        throw InvalidArgsError("support vectors must have equal length");
    }
    DiscreteSupport out;
    out.atoms.resize(xs.size(), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out.atoms.x_row(i)[0] = xs[i];
        out.atoms.y(i) = ys[i];
    }
    out.probs.assign(probs.begin(), probs.end());
    out.validate();
    return out;
}

// Kernel evaluated on a tuple of atom indices (repeats allowed). The ordinal
// identifies the evaluation site so randomized adapters can derive independent
// streams per tuple; deterministic kernels ignore it.
using TupleKernel = std::function<double(std::uint64_t, std::span<const std::uint32_t>)>;

inline TupleKernel support_kernel(const KernelSpec& spec, const DiscreteSupport& support) {
    if (spec.uses_omega()) {
        throw InvalidArgsError(
            "exact decomposition needs a deterministic kernel; average out the "
            "randomization first");
    }
    auto ws = std::make_shared<KernelWorkspace>();
    const Dataset* atoms = &support.atoms;
    return [spec, atoms, ws](std::uint64_t, std::span<const std::uint32_t> rows) {
        return eval_kernel(spec, *atoms, rows, 0, *ws);
    };
}

// Averages a randomized kernel over M_omega derived streams per tuple,
// yielding the data-conditional kernel up to Monte-Carlo error. The largest
// per-tuple standard error seen is tracked for reporting.
class RaoBlackwellKernel {
  public:
    RaoBlackwellKernel(KernelSpec spec, const DiscreteSupport& support, std::uint32_t m_omega,
                       std::uint64_t seed)
        : spec_(std::move(spec)), atoms_(&support.atoms), m_omega_(m_omega), seed_(seed) {
        if (m_omega < 2) throw InvalidArgsError("randomization averaging needs M_omega >= 2");
    }

    double operator()(std::uint64_t ordinal, std::span<const std::uint32_t> rows) {
        const std::uint64_t base = fold_in(fold_in(seed_, streams::kOmega), ordinal);
        double sum = 0.0, sumsq = 0.0;
        for (std::uint32_t r = 0; r < m_omega_; ++r) {
            const double v = eval_kernel(spec_, *atoms_, rows, fold_in(base, r), ws_);
            sum += v;
            sumsq += v * v;
        }
        const double mean = sum / m_omega_;
        const double var = std::max(0.0, (sumsq - sum * mean) / (m_omega_ - 1.0));
        max_se_ = std::max(max_se_, std::sqrt(var / m_omega_));
        return mean;
    }

    double max_se() const noexcept { return max_se_; }

    TupleKernel fn() {
        return [this](std::uint64_t ordinal, std::span<const std::uint32_t> rows) {
            return (*this)(ordinal, rows);
        };
    }

  private:
    KernelSpec spec_;
    const Dataset* atoms_;
    std::uint32_t m_omega_;
    std::uint64_t seed_;
    KernelWorkspace ws_;
    double max_se_ = 0.0;
};

struct HDecomposition {
    double theta = 0.0;
    std::vector<double> V;  // V[j-1] = variance of the order-j projection component
    double var_h = 0.0;     // sum over j of C(s,j) * V_j
    // Component tables over tuples of each order, kept for orthogonality
    // diagnostics when requested; tables[j-1] has size m^j, last index fastest.
    std::vector<std::vector<double>> tables;
};

namespace detail {

inline std::uint64_t checked_power(std::uint64_t base, std::uint32_t exp, std::uint64_t cap) {
    unsigned __int128 v = 1;
    for (std::uint32_t i = 0; i < exp; ++i) {
        v *= base;
        if (v > cap) throw CapExceededError("enumeration table exceeds the configured cap");
    }
    return static_cast<std::uint64_t>(v);
}

// Odometer over tuples in {0..m-1}^len, row-major with the last coordinate
// moving fastest; visit(ordinal, indices, weight) for every tuple.
template <typename Visit>
void for_each_tuple(std::size_t m, std::uint32_t len, std::span<const double> probs,
                    Visit visit) {
    std::vector<std::uint32_t> idx(len, 0);
    std::uint64_t ordinal = 0;
    for (;;) {
        double w = 1.0;
        for (const std::uint32_t i : idx) w *= probs[i];
        visit(ordinal, std::span<const std::uint32_t>(idx), w);
        ++ordinal;
        std::int64_t pos = static_cast<std::int64_t>(len) - 1;
        while (pos >= 0) {
            if (++idx[static_cast<std::size_t>(pos)] < m) break;
            idx[static_cast<std::size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) return;
    }
}

}  // namespace detail

// Exact projection decomposition of a symmetric kernel of order s under a
// finite row distribution: conditional-mean tables by full enumeration, then
// inclusion-exclusion over coordinate subsets to isolate each order's
// component, then exact component variances.
inline HDecomposition h_decomposition_exact(const DiscreteSupport& support, std::uint32_t s,
                                            const TupleKernel& kernel,
                                            std::uint64_t cap = kDefaultEnumerationCap,
                                            bool keep_tables = false) {
    support.validate();
    if (s < 1) throw InvalidArgsError("kernel order must be >= 1");
    if (s > 25) throw CapExceededError("kernel order too large for subset enumeration");
    const std::size_t m = support.size();
    detail::checked_power(m, s, cap);

    // cond[c] holds E[h | first c coordinates] as a table over tuples of
    // length c; cond[0] is the single value theta.
    std::vector<std::vector<long double>> cond(s + 1);
    cond[s].resize(detail::checked_power(m, s, cap));
    detail::for_each_tuple(m, s, support.probs,
                           [&](std::uint64_t ordinal, std::span<const std::uint32_t> idx,
                               double) { cond[s][ordinal] = kernel(ordinal, idx); });
    for (std::uint32_t c = s; c >= 1; --c) {
        const std::uint64_t lower = detail::checked_power(m, c - 1, cap);
        cond[c - 1].assign(lower, 0.0L);
        for (std::uint64_t t = 0; t < lower; ++t) {
            long double acc = 0.0L;
            for (std::size_t i = 0; i < m; ++i) {
                acc += static_cast<long double>(support.probs[i]) * cond[c][t * m + i];
            }
            cond[c - 1][t] = acc;
        }
    }
    const long double theta = cond[0][0];

    // comp[c]: centered conditional mean minus every lower-order component
    // evaluated on the corresponding coordinate subset.
    std::vector<std::vector<long double>> comp(s + 1);
    std::vector<std::uint32_t> sub;
    for (std::uint32_t c = 1; c <= s; ++c) {
        const std::uint64_t size = detail::checked_power(m, c, cap);
        comp[c].resize(size);
        detail::for_each_tuple(
            m, c, support.probs,
            [&](std::uint64_t ordinal, std::span<const std::uint32_t> idx, double) {
                long double val = cond[c][ordinal] - theta;
                const std::uint32_t full = (1u << c) - 1u;
                for (std::uint32_t mask = 1; mask < full; ++mask) {
                    sub.clear();
                    for (std::uint32_t b = 0; b < c; ++b) {
                        if (mask & (1u << b)) sub.push_back(idx[b]);
                    }
                    std::uint64_t sub_idx = 0;
                    for (const std::uint32_t i : sub) sub_idx = sub_idx * m + i;
                    val -= comp[sub.size()][sub_idx];
                }
                comp[c][ordinal] = val;
            });
    }

    HDecomposition out;
    out.theta = static_cast<double>(theta);
    out.V.resize(s);
    long double var_h = 0.0L;
    for (std::uint32_t j = 1; j <= s; ++j) {
        long double v = 0.0L;
        detail::for_each_tuple(m, j, support.probs,
                               [&](std::uint64_t ordinal, std::span<const std::uint32_t>,
                                   double w) { v += w * comp[j][ordinal] * comp[j][ordinal]; });
        out.V[j - 1] = static_cast<double>(std::max(v, 0.0L));
        var_h += static_cast<long double>(binom128(s, j).as_u64()) * v;
    }
    out.var_h = static_cast<double>(var_h);
    if (keep_tables) {
        out.tables.resize(s);
        for (std::uint32_t j = 1; j <= s; ++j) {
            out.tables[j - 1].assign(comp[j].begin(), comp[j].end());
        }
    }
    return out;
}

// zeta_c from components: covariance of two kernel draws sharing c rows equals
// the sum over j <= c of C(c,j) V_j.
inline double zeta_from_components(const HDecomposition& hd, std::uint32_t c) {
    if (c < 1 || c > hd.V.size()) throw InvalidArgsError("shared-row count out of range");
    long double acc = 0.0L;
    for (std::uint32_t j = 1; j <= c; ++j) {
        acc += static_cast<long double>(binom128(c, j).as_u64()) *
               static_cast<long double>(hd.V[j - 1]);
    }
    return static_cast<double>(acc);
}

// Variance of the complete statistic on n rows via the component identity.
inline double u_variance_from_components(const HDecomposition& hd, std::uint64_t n) {
    const std::uint32_t s = static_cast<std::uint32_t>(hd.V.size());
    if (n < s) throw InvalidArgsError("need n >= s");
    long double acc = 0.0L;
    for (std::uint32_t j = 1; j <= s; ++j) {
        const Binom128 csj = binom128(s, j);
        const Binom128 cnj = binom128(n, j);
        long double term;
        if (cnj.fits_u64() && csj.fits_u64()) {
            const long double c1 = static_cast<long double>(csj.as_u64());
            term = c1 * c1 / static_cast<long double>(cnj.as_u64());
        } else {
            term = std::exp(2.0L * static_cast<long double>(log_choose(s, j)) -
                            static_cast<long double>(log_choose(static_cast<double>(n), j)));
        }
        acc += term * static_cast<long double>(hd.V[j - 1]);
    }
    return static_cast<double>(acc);
}

// Brute-force oracle: exact Var(U_{n,s}) by enumerating every dataset of n
// rows from the support and averaging the kernel over all size-s subsets.
inline double enumerate_u_variance(const DiscreteSupport& support, std::uint32_t n,
                                   std::uint32_t s, const TupleKernel& kernel,
                                   std::uint64_t cap = kDefaultEnumerationCap) {
    support.validate();
    if (s < 1 || s > n) throw InvalidArgsError("need 1 <= s <= n");
    const std::size_t m = support.size();
    detail::checked_power(m, n, cap);
    const Binom128 c = binom128(n, s);
    if (!c.fits_u64()) throw CapExceededError("too many subsets to enumerate");
    const double n_subsets = static_cast<double>(c.as_u64());

    long double e1 = 0.0L, e2 = 0.0L;
    std::vector<std::uint32_t> rows(s);
    std::uint64_t site = 0;
    detail::for_each_tuple(
        m, n, support.probs,
        [&](std::uint64_t, std::span<const std::uint32_t> data_idx, double w) {
            long double u = 0.0L;
            CombinationEnumerator subsets(n, s);
            do {
                const auto positions = subsets.current();
                for (std::uint32_t i = 0; i < s; ++i) rows[i] = data_idx[positions[i]];
                u += kernel(site++, rows);
            } while (subsets.next());
            u /= n_subsets;
            e1 += w * u;
            e2 += w * u * u;
        });
    return static_cast<double>(e2 - e1 * e1);
}

}  // namespace ustat
