#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "ustat/error.hpp"

namespace ustat {

// Neumaier's compensated summation. Used wherever a sum must not depend on
// floating-point reassociation beyond a fixed evaluation order.
class NeumaierSum {
  public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_mean(std::span<const double> xs) {
    if (xs.empty()) throw InvalidArgsError("mean of empty sequence");
    NeumaierSum acc;
    for (const double x : xs) acc.add(x);
    return acc.value() / static_cast<double>(xs.size());
}

// Two-pass sample variance (denominator m - 1).
inline double sample_variance(std::span<const double> xs) {
    const std::size_t m = xs.size();
    if (m < 2) throw InvalidArgsError("sample variance needs at least two values");
    const double mean = compensated_mean(xs);
    NeumaierSum acc;
    for (const double x : xs) {
        const double d = x - mean;
        acc.add(d * d);
    }
    return acc.value() / static_cast<double>(m - 1);
}

struct EstimateWithSe {
    double value = 0.0;
    double se = 0.0;
};

// Sample variance together with its leave-one-out jackknife standard error.
inline EstimateWithSe variance_with_jackknife_se(std::span<const double> xs) {
    const std::size_t m = xs.size();
    if (m < 3) throw InvalidArgsError("jackknife variance needs at least three values");
    const double mean = compensated_mean(xs);
    NeumaierSum s2acc;
    for (const double x : xs) {
        const double d = x - mean;
        s2acc.add(d * d);
    }
    const double s2 = s2acc.value();  // sum of squared centered values
    const double md = static_cast<double>(m);
    std::vector<double> loo(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double d = xs[i] - mean;
        // centered leave-one-out mean is -d/(m-1)
        const double mu_i = -d / (md - 1.0);
        loo[i] = (s2 - d * d - (md - 1.0) * mu_i * mu_i) / (md - 2.0);
    }
    const double loo_mean = compensated_mean(loo);
    NeumaierSum dev;
    for (const double v : loo) {
        const double d = v - loo_mean;
        dev.add(d * d);
    }
    return {s2 / (md - 1.0), std::sqrt((md - 1.0) / md * dev.value())};
}

// Sample covariance (denominator m - 1) with jackknife standard error.
inline EstimateWithSe covariance_with_jackknife_se(std::span<const double> a,
                                                   std::span<const double> b) {
    const std::size_t m = a.size();
    if (m != b.size()) throw InvalidArgsError("covariance inputs differ in length");
    if (m < 3) throw InvalidArgsError("jackknife covariance needs at least three values");
    const double mean_a = compensated_mean(a);
    const double mean_b = compensated_mean(b);
    NeumaierSum sab;
    for (std::size_t i = 0; i < m; ++i) sab.add((a[i] - mean_a) * (b[i] - mean_b));
    const double s = sab.value();
    const double md = static_cast<double>(m);
    std::vector<double> loo(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double da = a[i] - mean_a;
        const double db = b[i] - mean_b;
        // centered leave-one-out means are -da/(m-1), -db/(m-1)
        loo[i] = (s - da * db - (md - 1.0) * (da / (md - 1.0)) * (db / (md - 1.0))) / (md - 2.0);
    }
    const double loo_mean = compensated_mean(loo);
    NeumaierSum dev;
    for (const double v : loo) {
        const double d = v - loo_mean;
        dev.add(d * d);
    }
    return {s / (md - 1.0), std::sqrt((md - 1.0) / md * dev.value())};
}

// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

// Standard normal quantile: Acklam's rational approximation (|relative error|
// < 1.15e-9) polished with one Halley step of the CDF, giving near machine
// precision on the non-extreme range.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgsError("quantile level must lie in (0, 1)");
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    if (std::isfinite(u)) {
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

// One-sample Kolmogorov-Smirnov distance between the empirical distribution of
// `samples` and the standard normal.
inline double ks_to_standard_normal(std::span<const double> samples) {
    if (samples.empty()) throw InvalidArgsError("KS statistic of empty sample");
    std::vector<double> xs(samples.begin(), samples.end());
    std::sort(xs.begin(), xs.end());
    const double r = static_cast<double>(xs.size());
    double stat = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double cdf = normal_cdf(xs[i]);
        const double hi = static_cast<double>(i + 1) / r - cdf;
        const double lo = cdf - static_cast<double>(i) / r;
        stat = std::max(stat, std::max(hi, lo));
    }
    return stat;
}

}  // namespace ustat
