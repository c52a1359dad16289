#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <ustat/error.hpp>
#include <ustat/experiments.hpp>

using namespace ustat;

namespace {

const ReportRow* find_row(const ExperimentReport& report, const std::string& stat,
                          double grid_value) {
    for (const ReportRow& row : report.rows) {
        if (row.stat == stat && row.grid_value == grid_value) return &row;
    }
    return nullptr;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

GeneratorSpec one_minus_x(double sigma) {
    GeneratorSpec g;
    g.family = GeneratorFamily::OneMinusX;
    g.sigma = sigma;
    return g;
}

}  // namespace

TEST_CASE("grid resolution broadcasts, pairs, and applies the order exponent") {
    ExperimentConfig cfg;
    cfg.n_grid = {100, 200};
    cfg.s_grid = {5};
    auto grid = detail::resolve_grid(cfg);
    REQUIRE(grid.size() == 2);
    CHECK(grid[0].s == 5);
    CHECK(grid[1].s == 5);
    CHECK(grid[0].N == 0);

    cfg.s_grid = {5, 9};
    cfg.N_grid = {30};
    grid = detail::resolve_grid(cfg);
    CHECK(grid[1].s == 9);
    CHECK(grid[0].N == 30);
    CHECK(grid[1].N == 30);

    cfg.N_grid = {30, 60};
    grid = detail::resolve_grid(cfg);
    CHECK(grid[1].N == 60);

    cfg.s_grid.clear();
    cfg.N_grid.clear();
    cfg.s_beta = 0.5;
    cfg.n_grid = {100, 1000};
    grid = detail::resolve_grid(cfg);
    CHECK(grid[0].s == 10);   // ceil(100^0.5)
    CHECK(grid[1].s == 32);   // ceil(1000^0.5)

    cfg.s_beta = 0.0;
    cfg.n_grid = {};
    CHECK_THROWS_AS(detail::resolve_grid(cfg), InvalidArgsError);
    cfg.n_grid = {100, 200, 300};
    cfg.s_grid = {2, 3};
    CHECK_THROWS_AS(detail::resolve_grid(cfg), InvalidArgsError);
    cfg.n_grid = {4};
    cfg.s_grid = {5};
    CHECK_THROWS_AS(detail::resolve_grid(cfg), InvalidArgsError);
}

TEST_CASE("sampling-distribution experiment on the complete mean") {
    ExperimentConfig cfg;
    cfg.generator = one_minus_x(1.0);
    cfg.n_grid = {30};
    cfg.s_grid = {2};
    cfg.R = 200;
    cfg.seed = 5;
    const ExperimentReport report = run_clt_experiment(cfg);

    CHECK(report.experiment == "clt");
    CHECK(report.seed == 5);
    CHECK(report.wall_seconds > 0.0);

    const ReportRow* ks = find_row(report, "ks", 30.0);
    REQUIRE(ks != nullptr);
    CHECK(ks->value > 0.0);
    CHECK(ks->value < 0.2);
    CHECK(ks->se > 0.0);
    CHECK(find_row(report, "ks_projection", 30.0) == nullptr);

    const ReportRow* mean = find_row(report, "std_mean", 30.0);
    REQUIRE(mean != nullptr);
    CHECK(std::abs(mean->value) < 0.5);
    const ReportRow* var = find_row(report, "std_var", 30.0);
    REQUIRE(var != nullptr);
    CHECK(std::abs(var->value - 1.0) < 0.5);

    const ReportRow* reps = find_row(report, "replicates", 30.0);
    REQUIRE(reps != nullptr);
    CHECK(reps->value == 200.0);
    const ReportRow* realized = find_row(report, "realized_N_mean", 30.0);
    REQUIRE(realized != nullptr);
    CHECK(realized->value == 435.0);  // C(30,2) evaluations per replicate
}

TEST_CASE("sampling-distribution experiment on an incomplete ensemble") {
    ExperimentConfig cfg;
    cfg.generator = one_minus_x(1.0);
    cfg.n_grid = {30};
    cfg.s_grid = {3};
    cfg.N_grid = {100};
    cfg.scheme = Scheme::FixedN;
    cfg.R = 100;
    cfg.seed = 6;
    const ExperimentReport report = run_clt_experiment(cfg);

    const ReportRow* proj = find_row(report, "ks_projection", 30.0);
    REQUIRE(proj != nullptr);
    CHECK(proj->value > 0.0);
    const ReportRow* realized = find_row(report, "realized_N_mean", 30.0);
    REQUIRE(realized != nullptr);
    CHECK(realized->value == 100.0);
}

TEST_CASE("emitted bound rows use the closed-form projection moments") {
    ExperimentConfig cfg;
    cfg.generator.family = GeneratorFamily::LinearGaussian;
    cfg.generator.beta = {0.0};
    cfg.generator.sigma = 1.0;
    cfg.n_grid = {100};
    cfg.s_grid = {2};
    cfg.R = 50;
    cfg.seed = 7;
    cfg.emit_bounds = true;
    const ExperimentReport report = run_clt_experiment(cfg);
    const ReportRow* bound = find_row(report, "be_complete", 100.0);
    REQUIRE(bound != nullptr);
    CHECK(bound->value == Catch::Approx(0.9734191641794958).epsilon(1e-12));
    CHECK(find_row(report, "be_incomplete", 100.0) == nullptr);

    cfg.N_grid = {50};
    const ExperimentReport inc = run_clt_experiment(cfg);
    const ReportRow* bi = find_row(inc, "be_incomplete", 100.0);
    REQUIRE(bi != nullptr);
    CHECK(bi->value > find_row(inc, "be_complete", 100.0)->value);
}

TEST_CASE("coverage experiment brackets the nominal level") {
    ExperimentConfig cfg;
    cfg.experiment = "coverage";
    cfg.generator = one_minus_x(1.0);
    cfg.n_grid = {30};
    cfg.s_grid = {2};
    cfg.R = 300;
    cfg.seed = 8;
    const ExperimentReport report = run_coverage_experiment(cfg);
    const ReportRow* cov = find_row(report, "coverage", 30.0);
    REQUIRE(cov != nullptr);
    CHECK(cov->value > 0.90);
    CHECK(cov->value < 0.99);
    CHECK(cov->se > 0.0);
    const ReportRow* deg = find_row(report, "degenerate", 30.0);
    REQUIRE(deg != nullptr);
    CHECK(deg->value == 0.0);
    const ReportRow* width = find_row(report, "width_mean", 30.0);
    REQUIRE(width != nullptr);
    CHECK(width->value > 0.0);
}

TEST_CASE("a zero-variance configuration reports the degenerate branch") {
    ExperimentConfig cfg;
    cfg.generator.family = GeneratorFamily::TwoPoint;
    cfg.generator.values = {3.0, 3.0};
    cfg.generator.probs = {0.5, 0.5};
    cfg.n_grid = {10};
    cfg.s_grid = {2};
    cfg.R = 50;
    const ExperimentReport report = run_coverage_experiment(cfg);
    CHECK(find_row(report, "coverage", 10.0)->value == 1.0);
    CHECK(find_row(report, "degenerate", 10.0)->value == 1.0);
    CHECK(find_row(report, "width_mean", 10.0)->value == 0.0);
}

TEST_CASE("provided standardization skips the truth oracle when theta is given") {
    ExperimentConfig cfg;
    cfg.generator = one_minus_x(1.0);
    cfg.n_grid = {30};
    cfg.s_grid = {2};
    cfg.R = 100;
    cfg.zeta_source = ZetaSource::Provided;
    cfg.theta_provided = 0.5;
    cfg.zeta1_provided = (1.0 / 12.0 + 1.0) / 4.0;
    cfg.zeta_s_provided = (1.0 / 12.0 + 1.0) / 2.0;
    const ExperimentReport report = run_coverage_experiment(cfg);
    CHECK(find_row(report, "theta_oracle", 30.0) == nullptr);
    CHECK(find_row(report, "coverage", 30.0) != nullptr);

    cfg.theta_provided = std::numeric_limits<double>::quiet_NaN();
    cfg.theta_oracle_m = 2000;
    const ExperimentReport oracle = run_coverage_experiment(cfg);
    const ReportRow* t = find_row(oracle, "theta_oracle", 30.0);
    REQUIRE(t != nullptr);
    CHECK(std::abs(t->value - 0.5) < 5.0 * t->se);

    cfg.zeta1_provided = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(run_coverage_experiment(cfg), InvalidArgsError);
}

TEST_CASE("estimated standardization flows through the sampling experiment") {
    ExperimentConfig cfg;
    cfg.generator = one_minus_x(1.0);
    cfg.n_grid = {30};
    cfg.s_grid = {2};
    cfg.R = 50;
    cfg.zeta_source = ZetaSource::Estimate;
    cfg.theta_provided = 0.5;
    cfg.zeta_m_outer = 200;
    cfg.zeta_m_inner = 4;
    cfg.zeta_m_var = 1000;
    const ExperimentReport report = run_clt_experiment(cfg);
    CHECK(find_row(report, "ks", 30.0) != nullptr);
}

TEST_CASE("analytic standardization rejects non-mean kernels") {
    ExperimentConfig cfg;
    cfg.generator = one_minus_x(1.0);
    cfg.kernel.kind = KernelKind::Variance;
    cfg.n_grid = {20};
    cfg.s_grid = {2};
    cfg.R = 10;
    CHECK_THROWS_AS(run_clt_experiment(cfg), InvalidArgsError);
    CHECK_THROWS_AS(run_coverage_experiment(cfg), InvalidArgsError);
}

TEST_CASE("experiment argument validation") {
    ExperimentConfig cfg;
    cfg.generator = one_minus_x(1.0);
    cfg.n_grid = {20};
    cfg.s_grid = {2};
    cfg.R = 1;
    CHECK_THROWS_AS(run_clt_experiment(cfg), InvalidArgsError);
    cfg.R = 10;
    cfg.level = 1.0;
    CHECK_THROWS_AS(run_coverage_experiment(cfg), InvalidArgsError);
    cfg.level = 0.95;
    cfg.s_grid.clear();
    CHECK_THROWS_AS(run_ratio_experiment(cfg), InvalidArgsError);
    cfg.ck_k_max = 0;
    CHECK_THROWS_AS(run_ck_experiment(cfg), InvalidArgsError);
}

TEST_CASE("variance-ratio experiment emits exact overlays per kernel") {
    ExperimentConfig cfg;
    cfg.generator = one_minus_x(0.5);
    cfg.s_grid = {4};
    cfg.seed = 12;
    cfg.zeta_m_outer = 400;
    cfg.zeta_m_inner = 8;
    cfg.zeta_m_var = 2000;

    const ExperimentReport mean = run_ratio_experiment(cfg);
    const ReportRow* ratio = find_row(mean, "ratio", 4.0);
    REQUIRE(ratio != nullptr);
    CHECK(std::abs(ratio->value - 1.0) < 4.0 * ratio->se);
    CHECK(find_row(mean, "ratio_exact", 4.0)->value == 1.0);
    CHECK(find_row(mean, "zeta1_omega", 4.0) != nullptr);
    CHECK(find_row(mean, "zeta_s_omega", 4.0) != nullptr);
    CHECK(find_row(mean, "zeta_s", 4.0) != nullptr);

    cfg.kernel.kind = KernelKind::RandomK;
    cfg.kernel.k = 2;
    const ExperimentReport rk = run_ratio_experiment(cfg);
    CHECK(find_row(rk, "ratio_exact", 4.0)->value == 2.0);
    const ReportRow* rk_ratio = find_row(rk, "ratio", 4.0);
    CHECK(std::abs(rk_ratio->value - 2.0) < 4.0 * rk_ratio->se);

    cfg.kernel.kind = KernelKind::Knn;
    cfg.kernel.k = 1;
    cfg.kernel.target_x = {0.0};
    const ExperimentReport nn = run_ratio_experiment(cfg);
    const ReportRow* exact = find_row(nn, "ratio_exact", 4.0);
    REQUIRE(exact != nullptr);
    RatioParams params;
    params.sigma2 = 0.25;
    params.s = 4;
    CHECK(exact->value == closed_form_ratio(RatioExample::OneNN, params).value);
    CHECK(find_row(nn, "ratio_limit_bound", 4.0)->value == 2.0);
}

TEST_CASE("neighbor-curve experiment lists one row per k") {
    ExperimentConfig cfg;
    cfg.ck_k_max = 12;
    const ExperimentReport report = run_ck_experiment(cfg);
    REQUIRE(report.rows.size() == 12);
    CHECK(report.rows[0].grid_key == "k");
    CHECK(report.rows[0].grid_value == 1.0);
    CHECK(report.rows[0].value == 2.0);
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
        CHECK(report.rows[i].value < report.rows[i - 1].value);
    }
}

TEST_CASE("report files are byte-stable and carry a metadata sidecar") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto csv_a = dir / "ustat_report_a.csv";
    const auto csv_b = dir / "ustat_report_b.csv";

    ExperimentConfig cfg;
    cfg.generator = one_minus_x(1.0);
    cfg.n_grid = {20};
    cfg.s_grid = {2};
    cfg.R = 60;
    cfg.seed = 9;
    const ExperimentReport one = run_clt_experiment(cfg);
    cfg.threads = 3;
    const ExperimentReport three = run_clt_experiment(cfg);
    emit_report(one, csv_a.string());
    emit_report(three, csv_b.string());

    const std::string a = slurp(csv_a);
    const std::string b = slurp(csv_b);
    CHECK(a == b);
    CHECK(a.rfind("experiment,grid_key,grid_value,stat,value,se\n", 0) == 0);

    const std::string meta = slurp(csv_a.string() + ".meta.json");
    CHECK(meta.find("\"experiment\": \"clt\"") != std::string::npos);
    CHECK(meta.find("\"rows\":") != std::string::npos);

    std::filesystem::remove(csv_a);
    std::filesystem::remove(csv_b);
    std::filesystem::remove(csv_a.string() + ".meta.json");
    std::filesystem::remove(csv_b.string() + ".meta.json");
}
