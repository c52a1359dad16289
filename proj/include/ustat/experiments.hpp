#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "ustat/combinatorics.hpp"
#include "ustat/design.hpp"
#include "ustat/ensemble.hpp"
#include "ustat/error.hpp"
#include "ustat/generators.hpp"
#include "ustat/inference.hpp"
#include "ustat/kernels.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"
#include "ustat/stats.hpp"
#include "ustat/zeta.hpp"

namespace ustat {

enum class ZetaSource { Analytic, Estimate, Provided };

struct GridPoint {
    std::uint64_t n = 0;
    std::uint32_t s = 1;
    std::uint64_t N = 0;  // 0 = complete form
};

struct ExperimentConfig {
    std::string experiment = "clt";
    KernelSpec kernel;
    GeneratorSpec generator;
    std::vector<std::uint64_t> n_grid;
    std::vector<std::uint32_t> s_grid;  // broadcast length 1, paired, or via s_beta
    double s_beta = 0.0;                // s = ceil(n^beta) when > 0
    std::vector<std::uint64_t> N_grid;  // empty = complete form
    Scheme scheme = Scheme::FixedN;
    std::uint64_t R = 2;
    double level = 0.95;
    std::uint64_t seed = 0;
    int threads = 1;
    ZetaSource zeta_source = ZetaSource::Analytic;
    double theta_provided = std::numeric_limits<double>::quiet_NaN();
    double zeta1_provided = std::numeric_limits<double>::quiet_NaN();
    double zeta_s_provided = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t zeta_m_outer = 2000;
    std::uint64_t zeta_m_inner = 64;
    std::uint64_t zeta_m_var = 20000;
    std::uint64_t theta_oracle_m = 1'000'000;
    bool emit_bounds = false;
    double bound_C = 1.0;
    std::uint64_t ck_k_max = 50;
    std::uint64_t ck_s_approx = 2000;
};

struct ReportRow {
    std::string experiment;
    std::string grid_key;
    double grid_value = 0.0;
    std::string stat;
    double value = 0.0;
    double se = std::numeric_limits<double>::quiet_NaN();  // NaN = not applicable
};

struct ExperimentReport {
    std::string experiment;
    std::uint64_t seed = 0;
    int threads = 1;
    double wall_seconds = 0.0;
    std::vector<ReportRow> rows;
};

namespace detail {

inline std::vector<GridPoint> resolve_grid(const ExperimentConfig& cfg) {
    if (cfg.n_grid.empty()) throw InvalidArgsError("n grid must be nonempty");
    const std::size_t g = cfg.n_grid.size();
    if (cfg.s_beta <= 0.0) {
        if (cfg.s_grid.empty()) throw InvalidArgsError("s grid must be nonempty");
        if (cfg.s_grid.size() != 1 && cfg.s_grid.size() != g) {
            throw InvalidArgsError("s grid must have length 1 or match the n grid");
        }
    }
    if (!cfg.N_grid.empty() && cfg.N_grid.size() != 1 && cfg.N_grid.size() != g) {
        throw InvalidArgsError("N grid must have length 1 or match the n grid");
    }
    std::vector<GridPoint> points(g);
    for (std::size_t i = 0; i < g; ++i) {
        GridPoint& gp = points[i];
        gp.n = cfg.n_grid[i];
        if (cfg.s_beta > 0.0) {
            gp.s = static_cast<std::uint32_t>(
                std::ceil(std::pow(static_cast<double>(gp.n), cfg.s_beta)));
        } else {
            gp.s = cfg.s_grid.size() == 1 ? cfg.s_grid[0] : cfg.s_grid[i];
        }
        if (gp.s < 1 || gp.s > gp.n) throw InvalidArgsError("need 1 <= s <= n at every grid point");
        if (!cfg.N_grid.empty()) gp.N = cfg.N_grid.size() == 1 ? cfg.N_grid[0] : cfg.N_grid[i];
    }
    return points;
}

struct Standardization {
    double theta = 0.0;
    double theta_se = 0.0;
    bool theta_from_oracle = false;
    double zeta1 = 0.0, zeta1_se = 0.0;
    double zeta_s = 0.0, zeta_s_se = 0.0;
    bool analytic = false;
};

inline Standardization resolve_standardization(const ExperimentConfig& cfg, const GridPoint& gp,
                                               std::uint64_t gp_seed) {
    Standardization out;
    const double s = static_cast<double>(gp.s);
    switch (cfg.zeta_source) {
        case ZetaSource::Analytic: {
            if (cfg.kernel.kind != KernelKind::Mean) {
                throw InvalidArgsError(
                    "analytic standardization is available for the mean kernel only");
            }
            const GeneratorMoments m = analytic_moments(cfg.generator);
            out.theta = m.mean_y;
            out.zeta1 = m.var_y / (s * s);
            out.zeta_s = m.var_y / s;
            out.analytic = true;
            return out;
        }
        case ZetaSource::Provided: {
            if (!std::isfinite(cfg.zeta1_provided) || !std::isfinite(cfg.zeta_s_provided)) {
                throw InvalidArgsError("provided variance components must be finite");
            }
            out.zeta1 = cfg.zeta1_provided;
            out.zeta_s = cfg.zeta_s_provided;
            if (std::isfinite(cfg.theta_provided)) {
                out.theta = cfg.theta_provided;
            } else {
                const ZetaEstimate t = estimate_theta(cfg.kernel, cfg.generator, gp.s,
                                                      cfg.theta_oracle_m,
                                                      fold_in(gp_seed, streams::kTheta),
                                                      cfg.threads);
                out.theta = t.value;
                out.theta_se = t.se;
                out.theta_from_oracle = true;
            }
            return out;
        }
        case ZetaSource::Estimate: {
            ZetaConfig zc;
            zc.m_outer = cfg.zeta_m_outer;
            zc.m_inner = cfg.zeta_m_inner;
            zc.m_var = cfg.zeta_m_var;
            zc.seed = fold_in(gp_seed, streams::kOuter);
            zc.threads = cfg.threads;
            const VarianceComponents comps =
                estimate_components(cfg.kernel, cfg.generator, gp.s, zc);
            out.zeta1 = comps.zeta1_omega.value;
            out.zeta1_se = comps.zeta1_omega.se;
            out.zeta_s = comps.zeta_s.value;
            out.zeta_s_se = comps.zeta_s.se;
            if (std::isfinite(cfg.theta_provided)) {
                out.theta = cfg.theta_provided;
            } else {
                const ZetaEstimate t = estimate_theta(cfg.kernel, cfg.generator, gp.s,
                                                      cfg.theta_oracle_m,
                                                      fold_in(gp_seed, streams::kTheta),
                                                      cfg.threads);
                out.theta = t.value;
                out.theta_se = t.se;
                out.theta_from_oracle = true;
            }
            return out;
        }
    }
    throw InvalidArgsError("unknown variance source");
}

constexpr std::uint64_t kReplicateBlock = 8;

struct ReplicateEstimates {
    std::vector<double> theta;       // NaN marks an invalid replicate
    std::vector<double> realized_n;
};

// R independent draws of the estimator at one grid point. Each replicate owns
// a derived seed for both its dataset and its design, so the batch is a pure
// function of (config, seed) regardless of the thread count.
inline ReplicateEstimates run_replicates(const ExperimentConfig& cfg, const GridPoint& gp,
                                         std::uint64_t gp_seed) {
    ReplicateEstimates out;
    out.theta.assign(cfg.R, std::numeric_limits<double>::quiet_NaN());
    out.realized_n.assign(cfg.R, 0.0);
    parallel_blocks(cfg.R, kReplicateBlock, cfg.threads, [&](std::uint64_t, std::uint64_t lo,
                                                             std::uint64_t hi) {
        for (std::uint64_t r = lo; r < hi; ++r) {
            const std::uint64_t rep_seed = fold_in(fold_in(gp_seed, streams::kReplicate), r);
            const Dataset data = generate(cfg.generator, gp.n, rep_seed);
            EnsembleConfig ec;
            ec.s = gp.s;
            ec.n_subsamples = gp.N;
            ec.scheme = gp.N == 0 ? Scheme::Complete : cfg.scheme;
            ec.master_seed = rep_seed;
            ec.threads = 1;
            const EnsembleResult res =
                gp.N == 0 ? complete_u(data, cfg.kernel, gp.s, ec)
                          : generalized_incomplete_u(data, cfg.kernel, ec);
            if (res.realized_n > 0 || res.mean_identity) {
                out.theta[r] = res.theta_hat;
            }
            out.realized_n[r] = static_cast<double>(res.realized_n);
        }
    });
    return out;
}

inline double selection_probability(std::uint64_t n, std::uint32_t s, std::uint64_t N) {
    if (N == 0) return 1.0;  // complete form
    const Binom128 c = binom128(n, s);
    if (c.saturated) return 0.0;
    const long double p = static_cast<long double>(N) / static_cast<long double>(c.value);
    return static_cast<double>(std::min(p, 1.0L));
}

inline double ks_bootstrap_se(std::span<const double> sample, std::uint64_t seed,
                              std::uint32_t b_reps = 200) {
    Rng rng(fold_in(seed, streams::kBootstrap));
    std::vector<double> stats(b_reps);
    std::vector<double> resample(sample.size());
    for (std::uint32_t b = 0; b < b_reps; ++b) {
        for (std::size_t i = 0; i < sample.size(); ++i) {
            resample[i] = sample[rng.uniform_below(sample.size())];
        }
        stats[b] = ks_to_standard_normal(resample);
    }
    return std::sqrt(sample_variance(stats));
}

}  // namespace detail

// Sampling-distribution experiment: replicate the estimator, standardize by
// the two-component variance, and compare against the standard normal. The
// projection-only normalization (variance s^2 zeta1/n, ignoring the ensemble
// part) is emitted alongside for incomplete forms, labeled ks_projection,
// since both conventions appear in asymptotic statements.
inline ExperimentReport run_clt_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.R < 2) throw InvalidArgsError("need at least two replications");
    cfg.generator.validate();
    const std::vector<GridPoint> grid = detail::resolve_grid(cfg);

    ExperimentReport report;
    report.experiment = "clt";
    report.seed = cfg.seed;
    report.threads = cfg.threads;

    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const GridPoint gp = grid[gi];
        const std::uint64_t gp_seed = fold_in(cfg.seed, gi);
        const detail::Standardization std_info =
            detail::resolve_standardization(cfg, gp, gp_seed);
        const detail::ReplicateEstimates reps = detail::run_replicates(cfg, gp, gp_seed);

        const double s = static_cast<double>(gp.s);
        const double var_proj = s * s * std_info.zeta1 / static_cast<double>(gp.n);
        const double var_full =
            var_proj + (gp.N > 0 ? std_info.zeta_s / static_cast<double>(gp.N) : 0.0);
        if (!(var_full > 0.0)) throw NumericalError("standardization variance is not positive");

        std::vector<double> t_full, t_proj;
        t_full.reserve(cfg.R);
        std::uint64_t invalid = 0;
        NeumaierSum realized_sum;
        for (std::uint64_t r = 0; r < cfg.R; ++r) {
            if (!std::isfinite(reps.theta[r])) {
                ++invalid;
                continue;
            }
            t_full.push_back((reps.theta[r] - std_info.theta) / std::sqrt(var_full));
            if (gp.N > 0) {
                t_proj.push_back((reps.theta[r] - std_info.theta) / std::sqrt(var_proj));
            }
            realized_sum.add(reps.realized_n[r]);
        }
        if (t_full.size() < 2) throw NumericalError("too few valid replicates");

        const double gv = static_cast<double>(gp.n);
        auto push = [&](const std::string& stat, double value, double se) {
            report.rows.push_back({report.experiment, "n", gv, stat, value, se});
        };

        push("ks", ks_to_standard_normal(t_full),
             detail::ks_bootstrap_se(t_full, gp_seed));
        if (gp.N > 0) {
            push("ks_projection", ks_to_standard_normal(t_proj),
                 detail::ks_bootstrap_se(t_proj, fold_in(gp_seed, 1)));
        }
        push("std_mean", compensated_mean(t_full),
             std::sqrt(sample_variance(t_full) / static_cast<double>(t_full.size())));
        const EstimateWithSe sv = variance_with_jackknife_se(t_full);
        push("std_var", sv.value, sv.se);
        push("replicates", static_cast<double>(t_full.size()),
             std::numeric_limits<double>::quiet_NaN());
        if (invalid > 0) {
            push("invalid_replicates", static_cast<double>(invalid),
                 std::numeric_limits<double>::quiet_NaN());
        }
        push("realized_N_mean",
             realized_sum.value() / static_cast<double>(t_full.size()),
             std::numeric_limits<double>::quiet_NaN());
        if (std_info.theta_from_oracle) {
            push("theta_oracle", std_info.theta, std_info.theta_se);
        }

        if (cfg.emit_bounds) {
            BEInputs in;
            in.n = gp.n;
            in.s = gp.s;
            in.N = gp.N;
            in.zeta1 = std_info.zeta1;
            in.zeta_s = std_info.zeta_s;
            in.Eg2 = std_info.zeta1;
            in.p = detail::selection_probability(gp.n, gp.s, gp.N);
            bool have_g3 = false;
            if (std_info.analytic && cfg.kernel.kind == KernelKind::Mean) {
                const GeneratorMoments m = analytic_moments(cfg.generator);
                if (m.has_abs3) {
                    in.Eg3 = m.abs3_y / (s * s * s);
                    have_g3 = true;
                }
            }
            if (!have_g3) {
                const GMoments gm = estimate_g_moments(cfg.kernel, cfg.generator, gp.s,
                                                       cfg.zeta_m_outer,
                                                       fold_in(gp_seed, streams::kOmega),
                                                       cfg.zeta_m_inner, cfg.threads);
                in.Eg3 = gm.eg3.value;
            }
            const BoundResult bc = be_bound_complete(in);
            push("be_complete", bc.value, std::numeric_limits<double>::quiet_NaN());
            if (gp.N > 0) {
                const BoundResult bi = be_bound_incomplete_linear(in);
                push("be_incomplete", bi.value, std::numeric_limits<double>::quiet_NaN());
            }
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Coverage of the normal confidence interval against the declared truth
// oracle. A zero-variance configuration is reported with the degenerate flag:
// every interval has zero width, so coverage is the fraction of replicates
// landing exactly on the truth.
inline ExperimentReport run_coverage_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.R < 2) throw InvalidArgsError("need at least two replications");
    if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw InvalidArgsError("level must be in (0,1)");
    cfg.generator.validate();
    const std::vector<GridPoint> grid = detail::resolve_grid(cfg);

    ExperimentReport report;
    report.experiment = "coverage";
    report.seed = cfg.seed;
    report.threads = cfg.threads;

    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const GridPoint gp = grid[gi];
        const std::uint64_t gp_seed = fold_in(cfg.seed, gi);
        const detail::Standardization std_info =
            detail::resolve_standardization(cfg, gp, gp_seed);
        const detail::ReplicateEstimates reps = detail::run_replicates(cfg, gp, gp_seed);

        const double s = static_cast<double>(gp.s);
        const double variance = s * s * std_info.zeta1 / static_cast<double>(gp.n) +
                                (gp.N > 0 ? std_info.zeta_s / static_cast<double>(gp.N) : 0.0);
        const bool degenerate = !(variance > 0.0);

        std::uint64_t covered = 0, used = 0;
        NeumaierSum width_sum;
        for (std::uint64_t r = 0; r < cfg.R; ++r) {
            if (!std::isfinite(reps.theta[r])) continue;
            ++used;
            if (degenerate) {
                if (reps.theta[r] == std_info.theta) ++covered;
                continue;
            }
            const ConfidenceInterval ci =
                build_ci(reps.theta[r], std_info.zeta1, std_info.zeta_s, gp.n, gp.s, gp.N,
                         cfg.level);
            if (ci.covers(std_info.theta)) ++covered;
            width_sum.add(2.0 * ci.half_width);
        }
        if (used < 2) throw NumericalError("too few valid replicates");

        const double frac = static_cast<double>(covered) / static_cast<double>(used);
        const double gv = static_cast<double>(gp.n);
        auto push = [&](const std::string& stat, double value, double se) {
            report.rows.push_back({report.experiment, "n", gv, stat, value, se});
        };
        push("coverage", frac,
             std::sqrt(frac * (1.0 - frac) / static_cast<double>(used)));
        push("width_mean", degenerate ? 0.0 : width_sum.value() / static_cast<double>(used),
             std::numeric_limits<double>::quiet_NaN());
        push("degenerate", degenerate ? 1.0 : 0.0, std::numeric_limits<double>::quiet_NaN());
        push("replicates", static_cast<double>(used),
             std::numeric_limits<double>::quiet_NaN());
        if (std_info.theta_from_oracle) {
            push("theta_oracle", std_info.theta, std_info.theta_se);
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Monte-Carlo variance ratio across a grid of kernel orders, with exact or
// limiting overlays where the kernel admits them.
inline ExperimentReport run_ratio_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.s_grid.empty()) throw InvalidArgsError("s grid must be nonempty");
    cfg.generator.validate();

    ExperimentReport report;
    report.experiment = "ratio";
    report.seed = cfg.seed;
    report.threads = cfg.threads;

    for (std::size_t si = 0; si < cfg.s_grid.size(); ++si) {
        const std::uint32_t s = cfg.s_grid[si];
        const std::uint64_t gp_seed = fold_in(cfg.seed, si);
        ZetaConfig zc;
        zc.m_outer = cfg.zeta_m_outer;
        zc.m_inner = cfg.zeta_m_inner;
        zc.m_var = cfg.zeta_m_var;
        zc.seed = gp_seed;
        zc.threads = cfg.threads;
        const VarianceComponents comps = estimate_components(cfg.kernel, cfg.generator, s, zc);
        const EstimateWithSe ratio = variance_ratio_with_se(comps, s);

        const double gv = static_cast<double>(s);
        auto push = [&](const std::string& stat, double value, double se) {
            report.rows.push_back({report.experiment, "s", gv, stat, value, se});
        };
        push("ratio", ratio.value, ratio.se);
        push("zeta1_omega", comps.zeta1_omega.value, comps.zeta1_omega.se);
        push("zeta_s_omega", comps.zeta_s_omega.value, comps.zeta_s_omega.se);
        push("zeta_s", comps.zeta_s.value, comps.zeta_s.se);

        const double no_se = std::numeric_limits<double>::quiet_NaN();
        switch (cfg.kernel.kind) {
            case KernelKind::Mean:
                push("ratio_exact", 1.0, no_se);
                break;
            case KernelKind::Variance: {
                const GeneratorMoments m = analytic_moments(cfg.generator);
                RatioParams params;
                params.sigma2 = m.var_y;
                params.mu4 = m.mu4_y;
                params.s = s;
                push("ratio_exact",
                     closed_form_ratio(RatioExample::Variance, params).value, no_se);
                break;
            }
            case KernelKind::RandomK: {
                RatioParams params;
                params.s = s;
                params.k = cfg.kernel.k;
                push("ratio_exact", closed_form_ratio(RatioExample::RandomK, params).value,
                     no_se);
                break;
            }
            case KernelKind::Knn: {
                if (cfg.kernel.k == 1 &&
                    cfg.generator.family == GeneratorFamily::OneMinusX) {
                    RatioParams params;
                    params.sigma2 = cfg.generator.sigma * cfg.generator.sigma;
                    params.s = s;
                    push("ratio_exact",
                         closed_form_ratio(RatioExample::OneNN, params).value, no_se);
                }
                push("ratio_limit_bound", c_of_k(cfg.kernel.k, cfg.ck_s_approx), no_se);
                break;
            }
            default:
                break;
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// The limiting nearest-neighbor ratio curve, one row per neighbor count.
inline ExperimentReport run_ck_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.ck_k_max < 1) throw InvalidArgsError("k range must be nonempty");
    ExperimentReport report;
    report.experiment = "ck";
    report.seed = cfg.seed;
    report.threads = cfg.threads;
    for (std::uint64_t k = 1; k <= cfg.ck_k_max; ++k) {
        report.rows.push_back({report.experiment, "k", static_cast<double>(k), "c_k",
                               c_of_k(k, cfg.ck_s_approx),
                               std::numeric_limits<double>::quiet_NaN()});
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Long-format CSV with a fixed column order plus a JSON metadata sidecar at
// <path>.meta.json. The CSV is a pure function of (config, seed); wall time
// lives only in the sidecar.
inline void emit_report(const ExperimentReport& report, const std::string& path) {
    std::ofstream csv(path, std::ios::binary);
    if (!csv) throw IoError("cannot open output file: " + path);
    csv << "experiment,grid_key,grid_value,stat,value,se\n";
    for (const ReportRow& row : report.rows) {
        csv << row.experiment << ',' << row.grid_key << ',' << format_double(row.grid_value)
            << ',' << row.stat << ',' << format_double(row.value) << ',';
        if (std::isfinite(row.se)) csv << format_double(row.se);
        csv << '\n';
    }
    if (!csv.good()) throw IoError("failed writing output file: " + path);
    csv.close();

    std::ofstream meta(path + ".meta.json", std::ios::binary);
    if (!meta) throw IoError("cannot open metadata sidecar for: " + path);
    meta << "{\n"
         << "  \"experiment\": \"" << report.experiment << "\",\n"
         << "  \"seed\": " << report.seed << ",\n"
         << "  \"threads\": " << report.threads << ",\n"
         << "  \"rows\": " << report.rows.size() << ",\n"
         << "  \"wall_seconds\": " << format_double(report.wall_seconds) << "\n"
         << "}\n";
    if (!meta.good()) throw IoError("failed writing metadata sidecar for: " + path);
}

}  // namespace ustat
