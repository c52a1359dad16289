#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "ustat/dataset.hpp"
#include "ustat/error.hpp"
#include "ustat/rng.hpp"

namespace ustat {

enum class GeneratorFamily { LinearGaussian, OneMinusX, UniformBox, TwoPoint, Empirical };
enum class CovariateLaw { StandardNormal, UniformUnit };
enum class BoxResponse { Linear, Step, Constant };

// Row distribution F_Z for fresh-draw estimation and synthetic experiments.
// Empirical wraps a fixed dataset and resamples its rows with replacement;
// estimates against it are plug-in quantities, not population ones.
struct GeneratorSpec {
    GeneratorFamily family = GeneratorFamily::OneMinusX;
    double sigma = 1.0;                                   // noise standard deviation
    std::vector<double> beta;                             // LinearGaussian coefficients
    CovariateLaw covariates = CovariateLaw::StandardNormal;
    std::uint32_t dim = 1;                                // UniformBox dimension
    BoxResponse response = BoxResponse::Linear;
    std::vector<double> values;                           // TwoPoint support
    std::vector<double> probs;
    std::shared_ptr<const Dataset> source;                // Empirical

    std::size_t n_features() const {
        switch (family) {
            case GeneratorFamily::LinearGaussian:
                return beta.size();
            case GeneratorFamily::OneMinusX:
            case GeneratorFamily::TwoPoint:
                return 1;
            case GeneratorFamily::UniformBox:
                return dim;
            case GeneratorFamily::Empirical:
                return source ? source->n_features() : 0;
        }
        return 0;
    }

    void validate() const {
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
            throw InvalidArgsError("noise standard deviation must be finite and >= 0");
        }
        switch (family) {
            case GeneratorFamily::LinearGaussian:
                if (beta.empty()) throw InvalidArgsError("LinearGaussian needs coefficients");
                for (const double b : beta) {
                    if (!std::isfinite(b)) throw InvalidArgsError("coefficients must be finite");
                }
                break;
            case GeneratorFamily::OneMinusX:
                break;
            case GeneratorFamily::UniformBox:
                if (dim < 1) throw InvalidArgsError("UniformBox dimension must be >= 1");
                break;
            case GeneratorFamily::TwoPoint: {
                if (values.empty() || values.size() != probs.size()) {
                    throw InvalidArgsError("TwoPoint needs matching values and probabilities");
                }
                double total = 0.0;
                for (const double p : probs) {
                    if (!(p >= 0.0)) throw InvalidArgsError("probabilities must be >= 0");
                    total += p;
                }
                if (std::abs(total - 1.0) > 1e-9) {
                    throw InvalidArgsError("probabilities must sum to 1");
                }
                break;
            }
            case GeneratorFamily::Empirical:
                if (!source || source->n_rows() == 0) {
                    throw InvalidArgsError("Empirical generator needs a nonempty dataset");
                }
                break;
        }
    }
};

namespace detail {

inline double box_response_value(const GeneratorSpec& g, std::span<const double> x) {
    switch (g.response) {
        case BoxResponse::Linear: {
            double sum = 0.0;
            for (const double v : x) sum += v;
            return sum;
        }
        case BoxResponse::Step:
            return x[0] > 0.5 ? 1.0 : 0.0;
        case BoxResponse::Constant:
            return 0.0;
    }
    return 0.0;
}

}  // namespace detail

// Fill one covariate row and return its response. Consumes rng state.
inline double draw_row(const GeneratorSpec& g, Rng& rng, std::span<double> x) {
    switch (g.family) {
        case GeneratorFamily::LinearGaussian: {
            double mean = 0.0;
            for (std::size_t j = 0; j < g.beta.size(); ++j) {
                x[j] = (g.covariates == CovariateLaw::StandardNormal) ? rng.normal()
                                                                      : rng.uniform01();
                mean += g.beta[j] * x[j];
            }
            return mean + (g.sigma > 0.0 ? g.sigma * rng.normal() : 0.0);
        }
        case GeneratorFamily::OneMinusX: {
            x[0] = rng.uniform01();
            return 1.0 - x[0] + (g.sigma > 0.0 ? g.sigma * rng.normal() : 0.0);
        }
        case GeneratorFamily::UniformBox: {
            for (std::uint32_t j = 0; j < g.dim; ++j) x[j] = rng.uniform01();
            return detail::box_response_value(g, x.first(g.dim)) +
                   (g.sigma > 0.0 ? g.sigma * rng.normal() : 0.0);
        }
        case GeneratorFamily::TwoPoint: {
            const double u = rng.uniform01();
            double acc = 0.0;
            std::size_t pick = g.values.size() - 1;
            for (std::size_t i = 0; i < g.probs.size(); ++i) {
                acc += g.probs[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
            x[0] = g.values[pick];
            return g.values[pick];
        }
        case GeneratorFamily::Empirical: {
            const std::uint64_t r = rng.uniform_below(g.source->n_rows());
            const auto src = g.source->x_row(static_cast<std::size_t>(r));
            std::copy(src.begin(), src.end(), x.begin());
            return g.source->y(static_cast<std::size_t>(r));
        }
    }
    throw InvalidArgsError("unknown generator family");
}

inline Dataset generate(const GeneratorSpec& g, std::size_t n, std::uint64_t seed) {
    g.validate();
    if (n < 1) throw InvalidArgsError("sample size must be >= 1");
    const std::size_t p = g.n_features();
    Dataset data;
    data.resize(n, p);
    Rng rng(fold_in(seed, streams::kData));
    for (std::size_t i = 0; i < n; ++i) {
        data.y(i) = draw_row(g, rng, data.x_row(i));
    }
    data.validate();
    return data;
}

// Exact response moments where the family admits them. noise_var and f_sup
// refer to the decomposition Y = f(X) + noise; for TwoPoint and Empirical the
// response is a deterministic function of the draw, so noise_var = 0.
struct GeneratorMoments {
    double mean_y = 0.0;
    double var_y = 0.0;
    double mu4_y = 0.0;     // central fourth moment of Y
    double noise_var = 0.0;
    double f_sup = 0.0;     // sup |f| over the covariate support
    double abs3_y = 0.0;    // E|Y - mean|^3 where closed-form; else NaN
    bool has_abs3 = false;
};

namespace detail {
// E|Z|^3 for standard normal Z.
inline double normal_abs3() { return 2.0 * std::sqrt(2.0 / 3.14159265358979323846); }
}  // namespace detail

inline GeneratorMoments analytic_moments(const GeneratorSpec& g) {
    g.validate();
    GeneratorMoments m;
    const double s2 = g.sigma * g.sigma;
    constexpr double kUniformVar = 1.0 / 12.0;
    constexpr double kUniformKur4 = -1.0 / 120.0;  // fourth cumulant of U[0,1]
    switch (g.family) {
        case GeneratorFamily::LinearGaussian: {
            double b2 = 0.0, b4 = 0.0, bmean = 0.0, bsup = 0.0;
            for (const double b : g.beta) {
                b2 += b * b;
                b4 += b * b * b * b;
                bmean += b;
                bsup += std::abs(b);
            }
            if (g.covariates == CovariateLaw::StandardNormal) {
                m.mean_y = 0.0;
                m.var_y = b2 + s2;
                m.mu4_y = 3.0 * m.var_y * m.var_y;  // Y itself is Gaussian
                m.abs3_y = std::pow(m.var_y, 1.5) * detail::normal_abs3();
                m.has_abs3 = true;
                m.f_sup = std::numeric_limits<double>::infinity();
            } else {
                m.mean_y = 0.5 * bmean;
                m.var_y = kUniformVar * b2 + s2;
                m.mu4_y = 3.0 * m.var_y * m.var_y + kUniformKur4 * b4;
                m.f_sup = bsup;
            }
            m.noise_var = s2;
            return m;
        }
        case GeneratorFamily::OneMinusX:
            m.mean_y = 0.5;
            m.var_y = kUniformVar + s2;
            m.mu4_y = 1.0 / 80.0 + 0.5 * s2 + 3.0 * s2 * s2;
            m.noise_var = s2;
            m.f_sup = 1.0;
            return m;
        case GeneratorFamily::UniformBox: {
            const double d = static_cast<double>(g.dim);
            switch (g.response) {
                case BoxResponse::Linear:
                    m.mean_y = 0.5 * d;
                    m.var_y = d * kUniformVar + s2;
                    m.mu4_y = 3.0 * m.var_y * m.var_y + d * kUniformKur4;
                    m.f_sup = d;
                    break;
                case BoxResponse::Step:
                    m.mean_y = 0.5;
                    m.var_y = 0.25 + s2;
                    // fourth cumulant of a fair coin at {0,1} is -1/8
                    m.mu4_y = 3.0 * m.var_y * m.var_y - 0.125;
                    m.f_sup = 1.0;
                    break;
                case BoxResponse::Constant:
                    m.mean_y = 0.0;
                    m.var_y = s2;
                    m.mu4_y = 3.0 * s2 * s2;
                    m.abs3_y = g.sigma * g.sigma * g.sigma * detail::normal_abs3();
                    m.has_abs3 = true;
                    m.f_sup = 0.0;
                    break;
            }
            m.noise_var = s2;
            return m;
        }
        case GeneratorFamily::TwoPoint: {
            double mean = 0.0;
            for (std::size_t i = 0; i < g.values.size(); ++i) mean += g.probs[i] * g.values[i];
            double v2 = 0.0, v3 = 0.0, v4 = 0.0, sup = 0.0;
            for (std::size_t i = 0; i < g.values.size(); ++i) {
                const double c = g.values[i] - mean;
                v2 += g.probs[i] * c * c;
                v3 += g.probs[i] * std::abs(c * c * c);
                v4 += g.probs[i] * c * c * c * c;
                sup = std::max(sup, std::abs(g.values[i]));
            }
            m.mean_y = mean;
            m.var_y = v2;
            m.mu4_y = v4;
            m.abs3_y = v3;
            m.has_abs3 = true;
            m.noise_var = 0.0;
            m.f_sup = sup;
            return m;
        }
        case GeneratorFamily::Empirical: {
            const Dataset& d = *g.source;
            const std::size_t n = d.n_rows();
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += d.y(i);
            mean /= static_cast<double>(n);
            double v2 = 0.0, v3 = 0.0, v4 = 0.0, sup = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double c = d.y(i) - mean;
                v2 += c * c;
                v3 += std::abs(c * c * c);
                v4 += c * c * c * c;
                sup = std::max(sup, std::abs(d.y(i)));
            }
            m.mean_y = mean;
            m.var_y = v2 / static_cast<double>(n);
            m.mu4_y = v4 / static_cast<double>(n);
            m.abs3_y = v3 / static_cast<double>(n);
            m.has_abs3 = true;
            m.noise_var = 0.0;
            m.f_sup = sup;
            return m;
        }
    }
    throw InvalidArgsError("unknown generator family");
}

}  // namespace ustat
