// Command line front end. Every subcommand is a thin wrapper over the library:
// parse JSON specs, call one entry point, print JSON or write a report CSV.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include <ustat/ustat.hpp>

namespace {

using nlohmann::ordered_json;
using json = nlohmann::json;

struct Common {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--threads", c.threads, "worker threads (results do not depend on this)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", c.out, "output file path");
}

json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ustat::InvalidArgsError(what + ": " + e.what());
    }
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ustat::IoError("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_json_text(text, path);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& what) {
    if (!j.is_object()) throw ustat::InvalidArgsError(what + " must be a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw ustat::InvalidArgsError(what + ": unknown key '" + item.key() + "'");
    }
}

ustat::KernelSpec parse_kernel(const json& j) {
    check_keys(j, {"kind", "k", "mtry", "target_x"}, "kernel");
    if (!j.contains("kind")) throw ustat::InvalidArgsError("kernel: missing 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    ustat::KernelSpec spec;
    if (kind == "mean") spec.kind = ustat::KernelKind::Mean;
    else if (kind == "variance") spec.kind = ustat::KernelKind::Variance;
    else if (kind == "ols_predict") spec.kind = ustat::KernelKind::OlsPredict;
    else if (kind == "knn") spec.kind = ustat::KernelKind::Knn;
    else if (kind == "random_k") spec.kind = ustat::KernelKind::RandomK;
    else if (kind == "cart_tree") spec.kind = ustat::KernelKind::CartTree;
    else if (kind == "rp_tree") spec.kind = ustat::KernelKind::RpTree;
    else throw ustat::InvalidArgsError("kernel: unknown kind '" + kind + "'");
    if (j.contains("k")) spec.k = j.at("k").get<std::uint32_t>();
    if (j.contains("mtry")) spec.mtry = j.at("mtry").get<std::uint32_t>();
    if (j.contains("target_x")) spec.target_x = j.at("target_x").get<std::vector<double>>();
    if (spec.needs_target() && spec.target_x.empty()) {
        throw ustat::InvalidArgsError("kernel '" + kind + "' requires target_x");
    }
    return spec;
}

ustat::GeneratorSpec parse_generator(const json& j) {
    check_keys(j,
               {"family", "sigma", "beta", "covariates", "dim", "response", "values", "probs",
                "data"},
               "generator");
    if (!j.contains("family")) throw ustat::InvalidArgsError("generator: missing 'family'");
    const std::string family = j.at("family").get<std::string>();
    ustat::GeneratorSpec gen;
    if (family == "linear_gaussian") gen.family = ustat::GeneratorFamily::LinearGaussian;
    else if (family == "one_minus_x") gen.family = ustat::GeneratorFamily::OneMinusX;
    else if (family == "uniform_box") gen.family = ustat::GeneratorFamily::UniformBox;
    else if (family == "two_point") gen.family = ustat::GeneratorFamily::TwoPoint;
    else if (family == "empirical") gen.family = ustat::GeneratorFamily::Empirical;
    else throw ustat::InvalidArgsError("generator: unknown family '" + family + "'");
    if (j.contains("sigma")) gen.sigma = j.at("sigma").get<double>();
    if (j.contains("beta")) gen.beta = j.at("beta").get<std::vector<double>>();
    if (j.contains("covariates")) {
        const std::string law = j.at("covariates").get<std::string>();
        if (law == "normal") gen.covariates = ustat::CovariateLaw::StandardNormal;
        else if (law == "uniform") gen.covariates = ustat::CovariateLaw::UniformUnit;
        else throw ustat::InvalidArgsError("generator: unknown covariate law '" + law + "'");
    }
    if (j.contains("dim")) gen.dim = j.at("dim").get<std::uint32_t>();
    if (j.contains("response")) {
        const std::string r = j.at("response").get<std::string>();
        if (r == "linear") gen.response = ustat::BoxResponse::Linear;
        else if (r == "step") gen.response = ustat::BoxResponse::Step;
        else if (r == "constant") gen.response = ustat::BoxResponse::Constant;
        else throw ustat::InvalidArgsError("generator: unknown response '" + r + "'");
    }
    if (j.contains("values")) gen.values = j.at("values").get<std::vector<double>>();
    if (j.contains("probs")) gen.probs = j.at("probs").get<std::vector<double>>();
    if (j.contains("data")) {
        gen.source = std::make_shared<const ustat::Dataset>(
            ustat::read_dataset_csv(j.at("data").get<std::string>()));
    }
    gen.validate();
    return gen;
}

ustat::Scheme parse_scheme(const std::string& name) {
    if (name == "complete") return ustat::Scheme::Complete;
    if (name == "bernoulli") return ustat::Scheme::Bernoulli;
    if (name == "fixed") return ustat::Scheme::FixedN;
    throw ustat::InvalidArgsError("unknown scheme '" + name + "'");
}

ordered_json zeta_to_json(const ustat::ZetaEstimate& z) {
    return {{"value", z.value},
            {"se", z.se},
            {"m_used", z.m_used},
            {"eval_errors", z.eval_errors}};
}

void emit(const ordered_json& out, const std::string& path) {
    const std::string text = out.dump(2) + "\n";
    std::cout << text;
    if (!path.empty()) {
        std::ofstream f(path, std::ios::binary);
        if (!f || !(f << text)) throw ustat::IoError("cannot write " + path);
    }
}

double wall_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct PredictArgs {
    Common common;
    std::string data_path, kernel_text, scheme_name = "complete", dump_design;
    std::uint32_t s = 1;
    std::uint64_t N = 0;
    std::uint64_t capture_cap = 1u << 20;
    bool capture = false;
};

void dump_design_lines(const std::string& path, const ustat::Dataset& data,
                       const PredictArgs& a, ustat::Scheme scheme) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ustat::IoError("cannot write " + path);
    auto write_line = [&](std::uint64_t ordinal, std::span<const std::uint32_t> rows) {
        ordered_json line = {{"ordinal", ordinal},
                             {"indices", std::vector<std::uint32_t>(rows.begin(), rows.end())},
                             {"omega_seed", ustat::derive_omega(a.common.seed, ordinal)}};
        f << line.dump() << '\n';
    };
    const auto n = static_cast<std::uint32_t>(data.n_rows());
    if (scheme == ustat::Scheme::Complete) {
        const ustat::Binom128 c = ustat::binom128(n, a.s);
        if (c.saturated ||
            c.value > static_cast<unsigned __int128>(ustat::kDefaultEnumerationCap)) {
            throw ustat::CapExceededError("complete design too large to dump");
        }
        ustat::CombinationEnumerator en(n, a.s);
        const auto total = static_cast<std::uint64_t>(c.value);
        for (std::uint64_t i = 0; i < total; ++i) {
            write_line(i, en.current());
            if (i + 1 < total) en.next();
        }
    } else {
        const ustat::IncompleteDesign drawn =
            ustat::draw_incomplete_design(n, a.s, a.N, scheme, a.common.seed);
        for (std::uint64_t i = 0; i < drawn.design.count(); ++i) {
            write_line(i, drawn.design.subsample(i));
        }
    }
    if (!f) throw ustat::IoError("cannot write " + path);
}

void run_predict(const PredictArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const ustat::Dataset data = ustat::read_dataset_csv(a.data_path);
    const ustat::KernelSpec kernel = parse_kernel(parse_json_text(a.kernel_text, "--kernel"));
    const ustat::Scheme scheme = parse_scheme(a.scheme_name);

    ustat::EnsembleConfig config;
    config.s = a.s;
    config.n_subsamples = a.N;
    config.scheme = scheme;
    config.master_seed = a.common.seed;
    config.threads = a.common.threads;
    config.capture = a.capture;
    config.capture_cap = a.capture_cap;

    ustat::EnsembleResult result;
    if (scheme == ustat::Scheme::Complete) {
        if (a.N != 0) {
            throw ustat::InvalidArgsError("the complete form takes no ensemble size");
        }
        result = ustat::complete_u(data, kernel, a.s, config);
    } else {
        result = ustat::generalized_incomplete_u(data, kernel, config);
    }

    if (!a.dump_design.empty()) dump_design_lines(a.dump_design, data, a, scheme);

    ordered_json out = {{"command", "predict"},
                        {"n", data.n_rows()},
                        {"s", a.s},
                        {"scheme", a.scheme_name},
                        {"theta_hat", result.theta_hat},
                        {"realized_N", result.realized_n},
                        {"target_N", result.target_n},
                        {"complete", result.complete},
                        {"mean_identity", result.mean_identity},
                        {"evals", result.counters.evals},
                        {"rp_short_pnn", result.counters.rp_short_pnn},
                        {"wall_seconds", wall_since(t0)}};
    if (a.capture) {
        out["capture_complete"] = result.capture_complete;
        ordered_json values = ordered_json::array();
        for (const auto& sv : result.per_subsample) {
            values.push_back({{"ordinal", sv.ordinal}, {"value", sv.value}});
        }
        out["per_subsample"] = std::move(values);
    }
    emit(out, a.common.out);
}

struct ZetaArgs {
    Common common;
    std::string kernel_text, generator_text;
    std::uint32_t s = 1;
    std::uint64_t m_outer = 2000, m_inner = 1, m_var = 2000;
    bool force_deterministic = false;
};

void run_zeta(const ZetaArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const ustat::KernelSpec kernel = parse_kernel(parse_json_text(a.kernel_text, "--kernel"));
    const ustat::GeneratorSpec gen =
        parse_generator(parse_json_text(a.generator_text, "--generator"));

    ustat::VarianceComponents comps;
    comps.m_outer = a.m_outer;
    comps.m_inner = a.m_inner;
    comps.m_var = a.m_var;
    comps.zeta1_omega = ustat::estimate_zeta1_omega(kernel, gen, a.s, a.m_outer, a.m_inner,
                                                    ustat::fold_in(a.common.seed, 1),
                                                    a.common.threads);
    comps.zeta_s = ustat::estimate_zeta_s(kernel, gen, a.s, a.m_var,
                                          ustat::fold_in(a.common.seed, 2), a.common.threads);
    if (kernel.uses_omega() || a.force_deterministic) {
        comps.zeta_s_omega = ustat::estimate_zeta_s_omega(
            kernel, gen, a.s, a.m_var, ustat::fold_in(a.common.seed, 3), a.common.threads,
            a.force_deterministic);
    } else {
        comps.zeta_s_omega = comps.zeta_s;
    }

    ordered_json out = {{"command", "zeta"},
                        {"s", a.s},
                        {"m_outer", a.m_outer},
                        {"m_inner", a.m_inner},
                        {"m_var", a.m_var},
                        {"zeta1_omega", zeta_to_json(comps.zeta1_omega)},
                        {"zeta_s_omega", zeta_to_json(comps.zeta_s_omega)},
                        {"zeta_s", zeta_to_json(comps.zeta_s)}};
    try {
        const ustat::EstimateWithSe ratio = ustat::variance_ratio_with_se(comps, a.s);
        out["ratio"] = {{"value", ratio.value}, {"se", ratio.se}};
    } catch (const ustat::DegenerateProjectionError& e) {
        out["ratio"] = nullptr;
        out["ratio_error"] = e.what();
    }
    out["wall_seconds"] = wall_since(t0);
    emit(out, a.common.out);
}

struct CiArgs {
    Common common;
    double theta = 0.0, zeta1 = 0.0, zeta_s = 0.0, level = 0.95;
    std::uint64_t n = 0, N = 0;
    std::uint32_t s = 1;
};

void run_ci(const CiArgs& a) {
    const ustat::ConfidenceInterval ci =
        ustat::build_ci(a.theta, a.zeta1, a.zeta_s, a.n, a.s, a.N, a.level);
    emit({{"command", "ci"},
          {"center", ci.center},
          {"half_width", ci.half_width},
          {"lo", ci.lo()},
          {"hi", ci.hi()},
          {"level", ci.level},
          {"variance_used", ci.variance_used}},
         a.common.out);
}

struct BoundArgs {
    Common common;
    std::string form, inputs_path;
    double C = 1.0, eta = 0.25;
};

void run_bound(const BoundArgs& a) {
    const json j = read_json_file(a.inputs_path);
    check_keys(j,
               {"n", "s", "N", "zeta1", "zeta_s", "Eg2", "Eg3", "Eh2", "Eh3", "kur1", "kur2",
                "p"},
               "bound inputs");
    ustat::BEInputs in;
    in.n = j.value("n", std::uint64_t{0});
    in.s = j.value("s", std::uint32_t{0});
    in.N = j.value("N", std::uint64_t{0});
    in.zeta1 = j.value("zeta1", 0.0);
    in.zeta_s = j.value("zeta_s", 0.0);
    in.Eg2 = j.value("Eg2", 0.0);
    in.Eg3 = j.value("Eg3", 0.0);
    in.Eh2 = j.value("Eh2", 0.0);
    in.Eh3 = j.value("Eh3", 0.0);
    in.kur1 = j.value("kur1", 0.0);
    in.kur2 = j.value("kur2", 0.0);
    if (j.contains("p")) {
        in.p = j.at("p").get<double>();
    } else if (in.N > 0 && in.n > 0) {
        in.p = ustat::detail::selection_probability(in.n, in.s, in.N);
    }

    ustat::BoundResult r;
    if (a.form == "complete") r = ustat::be_bound_complete(in);
    else if (a.form == "incomplete") r = ustat::be_bound_incomplete_linear(in);
    else if (a.form == "convolution") r = ustat::be_bound_convolution(in, a.C);
    else if (a.form == "subgaussian") r = ustat::be_bound_subgaussian(in, a.C, a.eta);
    else throw ustat::InvalidArgsError("unknown bound form '" + a.form + "'");

    emit({{"command", "bound"},
          {"form", a.form},
          {"value", r.value},
          {"terms", r.terms},
          {"clamped", r.clamped}},
         a.common.out);
}

struct HdecompArgs {
    Common common;
    std::string kernel_text, support_text;
    std::uint32_t s = 1, rao_blackwell = 0;
    std::uint64_t n = 0;
    std::uint64_t cap = ustat::kDefaultEnumerationCap;
};

void run_hdecomp(const HdecompArgs& a) {
    const ustat::KernelSpec kernel = parse_kernel(parse_json_text(a.kernel_text, "--kernel"));
    const json js = parse_json_text(a.support_text, "--support");
    check_keys(js, {"x", "y", "probs"}, "support");
    const auto xs = js.at("x").get<std::vector<double>>();
    const auto ys = js.at("y").get<std::vector<double>>();
    const auto probs = js.at("probs").get<std::vector<double>>();
    const ustat::DiscreteSupport support = ustat::make_support_1d(xs, ys, probs);

    ustat::HDecomposition hd;
    double rb_max_se = -1.0;
    if (kernel.uses_omega()) {
        if (a.rao_blackwell < 2) {
            throw ustat::InvalidArgsError(
                "randomized kernel: pass --rao-blackwell M (M >= 2) to average it out");
        }
        ustat::RaoBlackwellKernel rb(kernel, support, a.rao_blackwell, a.common.seed);
        hd = ustat::h_decomposition_exact(support, a.s, rb.fn(), a.cap);
        rb_max_se = rb.max_se();
    } else {
        hd = ustat::h_decomposition_exact(support, a.s, ustat::support_kernel(kernel, support),
                                          a.cap);
    }

    std::vector<double> zetas(a.s);
    for (std::uint32_t c = 1; c <= a.s; ++c) zetas[c - 1] = ustat::zeta_from_components(hd, c);

    ordered_json out = {{"command", "hdecomp"},
                        {"s", a.s},
                        {"theta", hd.theta},
                        {"V", hd.V},
                        {"var_h", hd.var_h},
                        {"zeta", zetas}};
    if (a.n > 0) out["u_variance"] = ustat::u_variance_from_components(hd, a.n);
    if (rb_max_se >= 0.0) out["rao_blackwell_max_se"] = rb_max_se;
    emit(out, a.common.out);
}

struct ExperimentArgs {
    Common common;
    std::string config_path;
    bool seed_set = false, threads_set = false;
};

ustat::ExperimentConfig parse_experiment_config(const json& j, const std::string& experiment) {
    check_keys(j,
               {"experiment", "kernel",       "generator",      "n_grid",       "s_grid",
                "s_beta",     "N_grid",       "scheme",         "R",            "level",
                "seed",       "threads",      "zeta_source",    "theta",        "zeta1",
                "zeta_s",     "zeta_m_outer", "zeta_m_inner",   "zeta_m_var",   "theta_oracle_m",
                "emit_bounds", "bound_C",     "ck_k_max",       "ck_s_approx",  "out"},
               "config");
    if (j.contains("experiment") && j.at("experiment").get<std::string>() != experiment) {
        throw ustat::InvalidArgsError("config is for experiment '" +
                                      j.at("experiment").get<std::string>() + "', not '" +
                                      experiment + "'");
    }
    ustat::ExperimentConfig cfg;
    cfg.experiment = experiment;
    if (experiment != "ck") {
        if (!j.contains("kernel") || !j.contains("generator")) {
            throw ustat::InvalidArgsError("config: 'kernel' and 'generator' are required");
        }
        cfg.kernel = parse_kernel(j.at("kernel"));
        cfg.generator = parse_generator(j.at("generator"));
    }
    if (j.contains("n_grid")) cfg.n_grid = j.at("n_grid").get<std::vector<std::uint64_t>>();
    if (j.contains("s_grid")) cfg.s_grid = j.at("s_grid").get<std::vector<std::uint32_t>>();
    if (j.contains("s_beta")) cfg.s_beta = j.at("s_beta").get<double>();
    if (j.contains("N_grid")) cfg.N_grid = j.at("N_grid").get<std::vector<std::uint64_t>>();
    if (j.contains("scheme")) {
        cfg.scheme = parse_scheme(j.at("scheme").get<std::string>());
        if (cfg.scheme == ustat::Scheme::Complete) {
            throw ustat::InvalidArgsError("config scheme applies to N_grid draws; "
                                          "use an empty N_grid for the complete form");
        }
    }
    if (j.contains("R")) cfg.R = j.at("R").get<std::uint64_t>();
    if (j.contains("level")) cfg.level = j.at("level").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (j.contains("zeta_source")) {
        const std::string src = j.at("zeta_source").get<std::string>();
        if (src == "analytic") cfg.zeta_source = ustat::ZetaSource::Analytic;
        else if (src == "estimate") cfg.zeta_source = ustat::ZetaSource::Estimate;
        else if (src == "provided") cfg.zeta_source = ustat::ZetaSource::Provided;
        else throw ustat::InvalidArgsError("config: unknown zeta_source '" + src + "'");
    }
    if (j.contains("theta")) cfg.theta_provided = j.at("theta").get<double>();
    if (j.contains("zeta1")) cfg.zeta1_provided = j.at("zeta1").get<double>();
    if (j.contains("zeta_s")) cfg.zeta_s_provided = j.at("zeta_s").get<double>();
    if (j.contains("zeta_m_outer")) cfg.zeta_m_outer = j.at("zeta_m_outer").get<std::uint64_t>();
    if (j.contains("zeta_m_inner")) cfg.zeta_m_inner = j.at("zeta_m_inner").get<std::uint64_t>();
    if (j.contains("zeta_m_var")) cfg.zeta_m_var = j.at("zeta_m_var").get<std::uint64_t>();
    if (j.contains("theta_oracle_m")) {
        cfg.theta_oracle_m = j.at("theta_oracle_m").get<std::uint64_t>();
    }
    if (j.contains("emit_bounds")) cfg.emit_bounds = j.at("emit_bounds").get<bool>();
    if (j.contains("bound_C")) cfg.bound_C = j.at("bound_C").get<double>();
    if (j.contains("ck_k_max")) cfg.ck_k_max = j.at("ck_k_max").get<std::uint64_t>();
    if (j.contains("ck_s_approx")) cfg.ck_s_approx = j.at("ck_s_approx").get<std::uint64_t>();
    return cfg;
}

void run_experiment(const ExperimentArgs& a, const std::string& experiment) {
    const json j = read_json_file(a.config_path);
    ustat::ExperimentConfig cfg = parse_experiment_config(j, experiment);
    if (a.seed_set || !j.contains("seed")) cfg.seed = a.common.seed;
    if (a.threads_set || !j.contains("threads")) cfg.threads = a.common.threads;
    std::string out = a.common.out;
    if (out.empty() && j.contains("out")) out = j.at("out").get<std::string>();
    if (out.empty()) throw ustat::InvalidArgsError("experiments need --out (or 'out' in config)");

    ustat::ExperimentReport report;
    if (experiment == "clt") report = ustat::run_clt_experiment(cfg);
    else if (experiment == "coverage") report = ustat::run_coverage_experiment(cfg);
    else if (experiment == "ratio") report = ustat::run_ratio_experiment(cfg);
    else report = ustat::run_ck_experiment(cfg);
    ustat::emit_report(report, out);
}

struct CkArgs {
    Common common;
    std::uint64_t k_max = 50, s_approx = 2000;
};

void run_ck(const CkArgs& a) {
    if (a.common.out.empty()) throw ustat::InvalidArgsError("ck needs --out");
    ustat::ExperimentConfig cfg;
    cfg.experiment = "ck";
    cfg.seed = a.common.seed;
    cfg.threads = a.common.threads;
    cfg.ck_k_max = a.k_max;
    cfg.ck_s_approx = a.s_approx;
    ustat::emit_report(ustat::run_ck_experiment(cfg), a.common.out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"subsampled randomized ensembles: point estimates, variance components, "
                 "normal-approximation diagnostics"};
    app.require_subcommand(1);

    PredictArgs predict;
    auto* sub_predict = app.add_subcommand("predict", "evaluate an ensemble on a dataset");
    add_common(sub_predict, predict.common);
    sub_predict->add_option("--data", predict.data_path, "CSV with header x1,...,xp,y")
        ->required()
        ->check(CLI::ExistingFile);
    sub_predict->add_option("--kernel", predict.kernel_text, "kernel JSON")->required();
    sub_predict->add_option("--s", predict.s, "subsample size")->required();
    sub_predict->add_option("--N", predict.N, "target ensemble size");
    sub_predict->add_option("--scheme", predict.scheme_name, "complete|bernoulli|fixed");
    sub_predict->add_flag("--capture", predict.capture, "keep per-subsample values");
    sub_predict->add_option("--capture-cap", predict.capture_cap,
                            "max captured values; a uniform subset beyond this");
    sub_predict->add_option("--dump-design", predict.dump_design,
                            "write the realized design as JSON lines");
    sub_predict->callback([&] { run_predict(predict); });

    ZetaArgs zeta;
    auto* sub_zeta = app.add_subcommand("zeta", "Monte Carlo variance components and ratio");
    add_common(sub_zeta, zeta.common);
    sub_zeta->add_option("--kernel", zeta.kernel_text, "kernel JSON")->required();
    sub_zeta->add_option("--generator", zeta.generator_text, "generator JSON")->required();
    sub_zeta->add_option("--s", zeta.s, "subsample size")->required();
    sub_zeta->add_option("--m-outer", zeta.m_outer, "outer replicates for the shared-row term");
    sub_zeta->add_option("--m-inner", zeta.m_inner, "completion pairs per outer replicate");
    sub_zeta->add_option("--m-var", zeta.m_var, "replicates for the variance terms");
    sub_zeta->add_flag("--force-deterministic", zeta.force_deterministic,
                       "allow the shared-data covariance for a kernel with no randomization");
    sub_zeta->callback([&] { run_zeta(zeta); });

    CkArgs ck;
    auto* sub_ck = app.add_subcommand("ck", "limiting nearest-neighbor ratio curve");
    add_common(sub_ck, ck.common);
    sub_ck->add_option("--k-max", ck.k_max, "largest neighbor count");
    sub_ck->add_option("--s-approx", ck.s_approx, "subsample size standing in for the limit");
    sub_ck->callback([&] { run_ck(ck); });

    CiArgs ci;
    auto* sub_ci = app.add_subcommand("ci", "normal confidence interval from components");
    add_common(sub_ci, ci.common);
    sub_ci->add_option("--theta", ci.theta, "point estimate")->required();
    sub_ci->add_option("--zeta1", ci.zeta1, "shared-one-row covariance")->required();
    sub_ci->add_option("--zetas", ci.zeta_s, "kernel variance")->required();
    sub_ci->add_option("--n", ci.n, "sample size")->required();
    sub_ci->add_option("--s", ci.s, "subsample size")->required();
    sub_ci->add_option("--N", ci.N, "ensemble size; 0 = complete form");
    sub_ci->add_option("--level", ci.level, "confidence level");
    sub_ci->callback([&] { run_ci(ci); });

    BoundArgs bound;
    auto* sub_bound = app.add_subcommand("bound", "normal-approximation error bound");
    add_common(sub_bound, bound.common);
    sub_bound->add_option("--form", bound.form, "complete|incomplete|convolution|subgaussian")
        ->required();
    sub_bound->add_option("--inputs", bound.inputs_path, "JSON file with moment inputs")
        ->required()
        ->check(CLI::ExistingFile);
    sub_bound->add_option("--C", bound.C, "leading constant for the last two forms");
    sub_bound->add_option("--eta", bound.eta, "exponent in (0, 1/2) for the subgaussian form");
    sub_bound->callback([&] { run_bound(bound); });

    HdecompArgs hdecomp;
    auto* sub_hd = app.add_subcommand("hdecomp",
                                      "exact projection decomposition on a discrete support");
    add_common(sub_hd, hdecomp.common);
    sub_hd->add_option("--kernel", hdecomp.kernel_text, "kernel JSON")->required();
    sub_hd->add_option("--support", hdecomp.support_text, "JSON {x:[],y:[],probs:[]}")
        ->required();
    sub_hd->add_option("--s", hdecomp.s, "kernel order")->required();
    sub_hd->add_option("--n", hdecomp.n, "also report the exact estimator variance at this n");
    sub_hd->add_option("--rao-blackwell", hdecomp.rao_blackwell,
                       "average a randomized kernel over this many draws");
    sub_hd->add_option("--cap", hdecomp.cap, "enumeration size cap");
    sub_hd->callback([&] { run_hdecomp(hdecomp); });

    ExperimentArgs clt, coverage, ratio;
    for (auto [name, args, help] :
         {std::tuple{"clt", &clt, "sampling-distribution normality sweep"},
          std::tuple{"coverage", &coverage, "interval coverage sweep"},
          std::tuple{"ratio", &ratio, "variance-ratio sweep over subsample sizes"}}) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, args->common);
        sub->add_option("--config", args->config_path, "experiment config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        const std::string experiment = name;
        sub->callback([sub, args, experiment] {
            args->seed_set = sub->count("--seed") > 0;
            args->threads_set = sub->count("--threads") > 0;
            run_experiment(*args, experiment);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ustat::ExitCode::InvalidArgs);
    } catch (const ustat::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ustat::ExitCode::InvalidArgs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ustat::ExitCode::NumericalFailure);
    }
    return 0;
}
