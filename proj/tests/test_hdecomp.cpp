#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <vector>

#include <ustat/error.hpp>
#include <ustat/hdecomp.hpp>
#include <ustat/kernels.hpp>

using namespace ustat;

namespace {

DiscreteSupport oracle_support() {
    const std::vector<double> xs = {-3.0, -1.0, 2.0};
    const std::vector<double> ys = {1.0, 5.0, 2.0};
    const std::vector<double> ps = {0.2, 0.5, 0.3};
    return make_support_1d(xs, ys, ps);
}

KernelSpec two_nn_at_origin() {
    KernelSpec spec;
    spec.kind = KernelKind::Knn;
    spec.k = 2;
    spec.target_x = {0.0};
    return spec;
}

}  // namespace

TEST_CASE("projection decomposition matches the frozen 2-NN fixture") {
    const DiscreteSupport support = oracle_support();
    const TupleKernel kernel = support_kernel(two_nn_at_origin(), support);
    const HDecomposition hd = h_decomposition_exact(support, 3, kernel);

    CHECK(hd.theta == Catch::Approx(4.0065).epsilon(1e-10));
    REQUIRE(hd.V.size() == 3);
    CHECK(hd.V[0] == Catch::Approx(0.36209025).epsilon(1e-9));
    CHECK(hd.V[1] == Catch::Approx(0.04525225).epsilon(1e-9));
    CHECK(hd.V[2] == Catch::Approx(0.03768025).epsilon(1e-9));
    CHECK(hd.var_h == Catch::Approx(1.25970775).epsilon(1e-9));

    CHECK(zeta_from_components(hd, 1) == Catch::Approx(0.36209025).epsilon(1e-9));
    CHECK(zeta_from_components(hd, 2) == Catch::Approx(0.76943275).epsilon(1e-9));
    CHECK(zeta_from_components(hd, 3) == Catch::Approx(1.25970775).epsilon(1e-9));

    CHECK(u_variance_from_components(hd, 5) == Catch::Approx(0.6962575).epsilon(1e-9));
    CHECK(enumerate_u_variance(support, 5, 3, kernel) == Catch::Approx(0.6962575).epsilon(1e-8));
}

TEST_CASE("mean kernel decomposition is rank one") {
    // Support y in {0,2,10} with p=(.5,.3,.2): mean 2.6, variance 14.44.
    const std::vector<double> xs = {0.0, 1.0, 2.0};
    const std::vector<double> ys = {0.0, 2.0, 10.0};
    const std::vector<double> ps = {0.5, 0.3, 0.2};
    const DiscreteSupport support = make_support_1d(xs, ys, ps);
    KernelSpec mean;
    const HDecomposition hd = h_decomposition_exact(support, 3, support_kernel(mean, support));

    CHECK(hd.theta == Catch::Approx(2.6).epsilon(1e-12));
    CHECK(hd.V[0] == Catch::Approx(14.44 / 9.0).epsilon(1e-12));
    CHECK(hd.V[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(hd.V[2] == Catch::Approx(0.0).margin(1e-12));
    CHECK(hd.var_h == Catch::Approx(14.44 / 3.0).epsilon(1e-12));
}

TEST_CASE("pairwise variance kernel first component equals mu4 minus sigma^4") {
    const std::vector<double> xs = {0.0, 1.0, 2.0};
    const std::vector<double> ys = {0.0, 2.0, 10.0};
    const std::vector<double> ps = {0.5, 0.3, 0.2};
    const DiscreteSupport support = make_support_1d(xs, ys, ps);

    double mu = 0.0;
    for (std::size_t i = 0; i < 3; ++i) mu += ps[i] * ys[i];
    double sigma2 = 0.0, mu4 = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double d = ys[i] - mu;
        sigma2 += ps[i] * d * d;
        mu4 += ps[i] * d * d * d * d;
    }

    KernelSpec var;
    var.kind = KernelKind::Variance;
    const HDecomposition hd = h_decomposition_exact(support, 2, support_kernel(var, support));
    CHECK(hd.theta == Catch::Approx(2.0 * sigma2).epsilon(1e-12));
    CHECK(hd.V[0] == Catch::Approx(mu4 - sigma2 * sigma2).epsilon(1e-12));
}

TEST_CASE("component tables are degenerate and symmetric") {
    const DiscreteSupport support = oracle_support();
    const TupleKernel kernel = support_kernel(two_nn_at_origin(), support);
    const HDecomposition hd =
        h_decomposition_exact(support, 3, kernel, kDefaultEnumerationCap, true);
    REQUIRE(hd.tables.size() == 3);
    const std::size_t m = support.size();

    double e1 = 0.0;
    for (std::size_t b = 0; b < m; ++b) e1 += support.probs[b] * hd.tables[0][b];
    CHECK(e1 == Catch::Approx(0.0).margin(1e-12));

    for (std::size_t a = 0; a < m; ++a) {
        double e2 = 0.0;
        for (std::size_t b = 0; b < m; ++b) e2 += support.probs[b] * hd.tables[1][a * m + b];
        CHECK(e2 == Catch::Approx(0.0).margin(1e-12));
        for (std::size_t b = 0; b < m; ++b) {
            CHECK(hd.tables[1][a * m + b] == Catch::Approx(hd.tables[1][b * m + a]).margin(1e-12));
        }
    }

    for (std::size_t a = 0; a < m * m; ++a) {
        double e3 = 0.0;
        for (std::size_t b = 0; b < m; ++b) e3 += support.probs[b] * hd.tables[2][a * m + b];
        CHECK(e3 == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("shared-row covariances grow along the documented chain") {
    const DiscreteSupport support = oracle_support();
    const TupleKernel kernel = support_kernel(two_nn_at_origin(), support);
    const HDecomposition hd = h_decomposition_exact(support, 3, kernel);
    const double z1 = zeta_from_components(hd, 1);
    const double z2 = zeta_from_components(hd, 2);
    const double z3 = zeta_from_components(hd, 3);
    CHECK(z1 <= z2 / 2.0 + 1e-12);
    CHECK(z2 / 2.0 <= z3 / 3.0 + 1e-12);
    CHECK(3.0 * z1 <= z3 + 1e-12);
}

TEST_CASE("randomization averaging recovers the conditional kernel") {
    // RandomK with k=2 on tuples of 3: averaging the pair means over the
    // selection randomness gives exactly the 3-point mean.
    const std::vector<double> xs = {0.0, 1.0, 2.0};
    const std::vector<double> ys = {0.0, 2.0, 10.0};
    const std::vector<double> ps = {0.5, 0.3, 0.2};
    const DiscreteSupport support = make_support_1d(xs, ys, ps);

    KernelSpec mean;
    const HDecomposition exact = h_decomposition_exact(support, 3, support_kernel(mean, support));

    KernelSpec rk;
    rk.kind = KernelKind::RandomK;
    rk.k = 2;
    RaoBlackwellKernel rb(rk, support, 20000, 17);
    const HDecomposition approx = h_decomposition_exact(support, 3, rb.fn());

    CHECK(rb.max_se() > 0.0);
    CHECK(rb.max_se() < 0.05);
    CHECK(approx.theta == Catch::Approx(exact.theta).margin(0.02));
    CHECK(approx.V[0] == Catch::Approx(exact.V[0]).margin(0.08));
    CHECK(approx.V[1] == Catch::Approx(exact.V[1]).margin(0.08));
    CHECK(approx.V[2] == Catch::Approx(exact.V[2]).margin(0.08));

    CHECK_THROWS_AS(RaoBlackwellKernel(rk, support, 1, 0), InvalidArgsError);
    CHECK_THROWS_AS(support_kernel(rk, support), InvalidArgsError);
}

TEST_CASE("decomposition caps and validation errors") {
    const DiscreteSupport support = oracle_support();
    const TupleKernel kernel = support_kernel(two_nn_at_origin(), support);
    CHECK_THROWS_AS(h_decomposition_exact(support, 26, kernel), CapExceededError);
    CHECK_THROWS_AS(h_decomposition_exact(support, 15, kernel), CapExceededError);
    CHECK_THROWS_AS(h_decomposition_exact(support, 0, kernel), InvalidArgsError);

    const HDecomposition hd = h_decomposition_exact(support, 3, kernel);
    CHECK_THROWS_AS(zeta_from_components(hd, 0), InvalidArgsError);
    CHECK_THROWS_AS(zeta_from_components(hd, 4), InvalidArgsError);
    CHECK_THROWS_AS(u_variance_from_components(hd, 2), InvalidArgsError);
    CHECK_THROWS_AS(enumerate_u_variance(support, 2, 3, kernel), InvalidArgsError);

    const std::vector<double> xs = {0.0, 1.0};
    const std::vector<double> ys = {1.0, 2.0};
    const std::vector<double> bad = {0.5, 0.6};
    CHECK_THROWS_AS(make_support_1d(xs, ys, bad), InvalidArgsError);
    const std::vector<double> neg = {1.5, -0.5};
    CHECK_THROWS_AS(make_support_1d(xs, ys, neg), InvalidArgsError);
    const std::vector<double> short_p = {1.0};
    CHECK_THROWS_AS(make_support_1d(xs, ys, short_p), InvalidArgsError);
}
