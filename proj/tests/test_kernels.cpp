#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include <ustat/dataset.hpp>
#include <ustat/error.hpp>
#include <ustat/kernels.hpp>
#include <ustat/rng.hpp>

using namespace ustat;

namespace {

Dataset make_1d(const std::vector<double>& x, const std::vector<double>& y) {
    Dataset d(x.size(), 1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        d.x_row(i)[0] = x[i];
        d.y(i) = y[i];
    }
    return d;
}

Dataset make_2d(const std::vector<std::pair<double, double>>& x, const std::vector<double>& y) {
    Dataset d(x.size(), 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        d.x_row(i)[0] = x[i].first;
        d.x_row(i)[1] = x[i].second;
        d.y(i) = y[i];
    }
    return d;
}

std::vector<std::uint32_t> iota_rows(std::uint32_t n) {
    std::vector<std::uint32_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0u);
    return rows;
}

double eval(const KernelSpec& spec, const Dataset& d, const std::vector<std::uint32_t>& rows,
            std::uint64_t omega = 0) {
    KernelWorkspace ws;
    return eval_kernel(spec, d, rows, omega, ws);
}

}  // namespace

TEST_CASE("mean kernel fixtures") {
    const Dataset d = make_1d({0, 0, 0}, {1, 2, 3});
    KernelSpec spec;
    CHECK(eval(spec, d, {0, 1, 2}) == 2.0);
    const Dataset c = make_1d({0, 0}, {7.5, 7.5});
    CHECK(eval(spec, c, {0, 1}) == 7.5);
}

TEST_CASE("pairwise variance kernel fixtures") {
    KernelSpec spec;
    spec.kind = KernelKind::Variance;
    CHECK(eval(spec, make_1d({0, 0}, {0, 2}), {0, 1}) == 4.0);
    CHECK(eval(spec, make_1d({0, 0, 0}, {3, 3, 3}), {0, 1, 2}) == 0.0);
    // Pairs: (1-2)^2, (1-3)^2, (2-3)^2 -> (1+4+1)/3 = 2.
    CHECK(eval(spec, make_1d({0, 0, 0}, {1, 2, 3}), {0, 1, 2}) == Catch::Approx(2.0).epsilon(1e-14));
    // (0,2,4): (4+16+4)/3 = 8.
    CHECK(eval(spec, make_1d({0, 0, 0}, {0, 2, 4}), {0, 1, 2}) == Catch::Approx(8.0).epsilon(1e-14));
    CHECK_THROWS_AS(eval(spec, make_1d({0}, {1}), {0}), InvalidArgsError);
}

TEST_CASE("least-squares kernel recovers exact linear structure") {
    KernelSpec spec;
    spec.kind = KernelKind::OlsPredict;

    spec.target_x = {3.0};
    const Dataset line = make_1d({1, 2, 3}, {2, 4, 6});
    CHECK(eval(spec, line, {0, 1, 2}) == Catch::Approx(6.0).epsilon(1e-12));

    spec.target_x = {1.0, 1.0};
    const Dataset plane = make_2d({{1, 0}, {0, 1}, {1, 1}, {2, 1}}, {1, 2, 3, 4});
    CHECK(eval(spec, plane, {0, 1, 2, 3}) == Catch::Approx(3.0).epsilon(1e-12));

    // s = p square system: interpolation.
    spec.target_x = {2.0, 3.0};
    const Dataset square = make_2d({{1, 0}, {0, 1}}, {5, 7});
    CHECK(eval(spec, square, {0, 1}) == Catch::Approx(31.0).epsilon(1e-12));
}

TEST_CASE("least-squares kernel with an explicit constant column") {
    // Fit of y on (1, x) for points (0,1),(1,3),(2,2): beta = (1.5, 0.5).
    KernelSpec spec;
    spec.kind = KernelKind::OlsPredict;
    spec.target_x = {1.0, 1.5};
    const Dataset d = make_2d({{1, 0}, {1, 1}, {1, 2}}, {1, 3, 2});
    CHECK(eval(spec, d, {0, 1, 2}) == Catch::Approx(2.25).epsilon(1e-12));
}

TEST_CASE("least-squares kernel error paths") {
    KernelSpec spec;
    spec.kind = KernelKind::OlsPredict;
    spec.target_x = {1.0, 1.0};
    const Dataset collinear = make_2d({{1, 2}, {2, 4}, {3, 6}}, {1, 2, 3});
    CHECK_THROWS_AS(eval(spec, collinear, {0, 1, 2}), SingularDesignError);
    const Dataset tiny = make_2d({{1, 0}, {0, 1}}, {1, 2});
    CHECK_THROWS_AS(eval(spec, tiny, {0}), InvalidArgsError);  // s < p
    spec.target_x = {1.0};
    CHECK_THROWS_AS(eval(spec, tiny, {0, 1}), InvalidArgsError);  // target length
}

TEST_CASE("kNN kernel fixtures and tie rule") {
    const Dataset d = make_1d({-3, -1, 1, 2, 5}, {0, 1, 2, 3, 4});
    KernelSpec spec;
    spec.kind = KernelKind::Knn;
    spec.target_x = {0.0};

    spec.k = 2;  // rows 1 and 2 both at distance 1
    CHECK(eval(spec, d, iota_rows(5)) == Catch::Approx(1.5).epsilon(1e-14));
    spec.k = 1;  // equidistant tie resolved to the smaller covariate
    CHECK(eval(spec, d, iota_rows(5)) == 1.0);

    spec.k = 6;
    CHECK_THROWS_AS(eval(spec, d, iota_rows(5)), InvalidArgsError);
    spec.k = 0;
    CHECK_THROWS_AS(eval(spec, d, iota_rows(5)), InvalidArgsError);
}

TEST_CASE("kNN distance ties break on row values, not storage order") {
    // All three rows sit at distance 1 from the target. Selection must depend
    // on the values alone: x = -1 first, then the x = 1 rows ordered by y.
    const Dataset d = make_1d({1, -1, 1}, {30, 10, 20});
    KernelSpec spec;
    spec.kind = KernelKind::Knn;
    spec.target_x = {0.0};
    spec.k = 2;
    CHECK(eval(spec, d, iota_rows(3)) == 15.0);

    // Bit-identical rows: either copy gives the same value.
    const Dataset dup = make_1d({0, 0, 1}, {5, 5, 9});
    spec.k = 1;
    CHECK(eval(spec, dup, iota_rows(3)) == 5.0);
}

TEST_CASE("kNN with k = s is bitwise the mean kernel") {
    Rng rng(11);
    Dataset d(12, 2);
    for (std::size_t i = 0; i < 12; ++i) {
        d.x_row(i)[0] = rng.normal();
        d.x_row(i)[1] = rng.normal();
        d.y(i) = rng.normal() * 3.7;
    }
    KernelSpec knn;
    knn.kind = KernelKind::Knn;
    knn.k = 7;
    knn.target_x = {0.2, -0.4};
    KernelSpec mean;
    const std::vector<std::uint32_t> rows = {3, 0, 9, 5, 11, 7, 2};
    CHECK(eval(knn, d, rows) == eval(mean, d, rows));
}

TEST_CASE("potential-nearest-neighbor sets on the 1D fixture") {
    const Dataset d = make_1d({-3, -1, 1, 2, 5}, {0, 1, 2, 3, 4});
    const auto rows = iota_rows(5);

    // Blocking counts per point at target 0: {1, 0, 0, 1, 2}.
    const PnnSet k1 = compute_kpnn(d, rows, std::vector<double>{0.0}, 1);
    CHECK(k1.members == std::vector<std::uint32_t>{1, 2});
    CHECK(k1.blocked_counts == std::vector<std::uint32_t>{0, 0});

    const PnnSet k2 = compute_kpnn(d, rows, std::vector<double>{0.0}, 2);
    CHECK(k2.members == std::vector<std::uint32_t>{0, 1, 2, 3});
    CHECK(k2.blocked_counts == std::vector<std::uint32_t>{1, 0, 0, 1});

    const PnnSet k3 = compute_kpnn(d, rows, std::vector<double>{0.0}, 3);
    CHECK(k3.members == std::vector<std::uint32_t>{0, 1, 2, 3, 4});
    CHECK(k3.blocked_counts == std::vector<std::uint32_t>{1, 0, 0, 1, 2});

    const PnnSet k5 = compute_kpnn(d, rows, std::vector<double>{0.0}, 5);
    CHECK(k5.members.size() == 5);

    CHECK_THROWS_AS(compute_kpnn(d, rows, std::vector<double>{0.0}, 0), InvalidArgsError);
}

TEST_CASE("PNN membership is monotone in k") {
    Rng rng(42);
    Dataset d(40, 2);
    for (std::size_t i = 0; i < 40; ++i) {
        d.x_row(i)[0] = rng.uniform01();
        d.x_row(i)[1] = rng.uniform01();
        d.y(i) = rng.normal();
    }
    const auto rows = iota_rows(40);
    const std::vector<double> target = {0.3, 0.7};
    std::set<std::uint32_t> prev;
    for (std::uint32_t k = 1; k <= 8; ++k) {
        const PnnSet pnn = compute_kpnn(d, rows, target, k);
        std::set<std::uint32_t> cur(pnn.members.begin(), pnn.members.end());
        for (const std::uint32_t m : prev) CHECK(cur.count(m) == 1);
        prev = std::move(cur);
    }
}

TEST_CASE("RP-tree kernel selection behaviour") {
    const Dataset d = make_1d({-1, 3}, {10, 20});
    KernelSpec spec;
    spec.kind = KernelKind::RpTree;
    spec.target_x = {0.0};
    KernelWorkspace ws;
    KernelCounters counters;

    // Both points are PNNs; |PNN| == k averages the whole set with no fallback.
    spec.k = 2;
    CHECK(eval_kernel(spec, d, iota_rows(2), 5, ws, &counters) == 15.0);
    CHECK(counters.rp_short_pnn == 0);

    // |PNN| < k triggers the documented whole-set fallback and the counter.
    spec.k = 5;
    CHECK(eval_kernel(spec, d, iota_rows(2), 5, ws, &counters) == 15.0);
    CHECK(counters.rp_short_pnn == 1);
}

TEST_CASE("RP-tree kernel survives an empty potential-neighbor set") {
    // Two atoms with k+1 exact copies each: every candidate is blocked k-fold,
    // so the PNN set is empty and the kernel averages the nearest rows instead.
    const Dataset d = make_1d({0, 0, 0, 1, 1, 1}, {0, 0, 0, 10, 10, 10});
    KernelSpec spec;
    spec.kind = KernelKind::RpTree;
    spec.k = 2;
    spec.target_x = {0.5};
    KernelWorkspace ws;
    KernelCounters counters;
    CHECK(compute_kpnn(d, iota_rows(6), spec.target_x, 2).members.empty());
    const double v = eval_kernel(spec, d, iota_rows(6), 9, ws, &counters);
    CHECK(v == 0.0);  // distance tie, so the smaller covariate wins
    CHECK(counters.rp_short_pnn == 1);
    for (std::uint64_t omega = 0; omega < 8; ++omega) {
        CHECK(eval_kernel(spec, d, iota_rows(6), omega, ws) == v);
    }
}

TEST_CASE("RP-tree kernel is deterministic in omega and varies across omega") {
    Rng rng(17);
    Dataset d(30, 1);
    for (std::size_t i = 0; i < 30; ++i) {
        d.x_row(i)[0] = rng.uniform01();
        d.y(i) = static_cast<double>(i);
    }
    KernelSpec spec;
    spec.kind = KernelKind::RpTree;
    spec.k = 2;
    spec.target_x = {0.5};
    const auto rows = iota_rows(30);
    CHECK(eval(spec, d, rows, 123) == eval(spec, d, rows, 123));
    std::set<double> values;
    for (std::uint64_t omega = 0; omega < 64; ++omega) values.insert(eval(spec, d, rows, omega));
    CHECK(values.size() > 1);
}

TEST_CASE("random selection kernel") {
    const Dataset d = make_1d({0, 0, 0, 0, 0, 0}, {0, 1, 2, 3, 4, 5});
    KernelSpec spec;
    spec.kind = KernelKind::RandomK;
    spec.k = 2;
    const auto rows = iota_rows(6);
    CHECK(eval(spec, d, rows, 99) == eval(spec, d, rows, 99));
    std::set<double> values;
    for (std::uint64_t omega = 0; omega < 64; ++omega) values.insert(eval(spec, d, rows, omega));
    CHECK(values.size() > 1);

    spec.k = 6;  // selecting everything reduces to the mean
    KernelSpec mean;
    CHECK(eval(spec, d, rows, 7) == eval(mean, d, rows, 0));

    spec.k = 7;
    CHECK_THROWS_AS(eval(spec, d, rows, 0), InvalidArgsError);
}

TEST_CASE("tree kernel recovers a step function") {
    const Dataset d = make_1d({0.1, 0.3, 0.6, 0.9}, {0, 0, 1, 1});
    KernelSpec spec;
    spec.kind = KernelKind::CartTree;
    spec.k = 1;
    spec.target_x = {0.2};
    CHECK(eval(spec, d, iota_rows(4)) == 0.0);
    spec.target_x = {0.7};
    CHECK(eval(spec, d, iota_rows(4)) == 1.0);
}

TEST_CASE("tree kernel fixtures") {
    const Dataset d = make_1d({0, 1, 2, 3}, {0, 0, 10, 10});
    KernelSpec spec;
    spec.kind = KernelKind::CartTree;
    spec.k = 1;
    spec.target_x = {2.9};
    CHECK(eval(spec, d, iota_rows(4)) == 10.0);
    spec.target_x = {0.2};
    CHECK(eval(spec, d, iota_rows(4)) == 0.0);

    // Constant response: no split improves the criterion.
    const Dataset flat = make_1d({0, 1, 2, 3}, {4, 4, 4, 4});
    CHECK(eval(spec, flat, iota_rows(4)) == 4.0);
}

TEST_CASE("tree kernel with mtry=0 ignores omega") {
    Rng rng(23);
    Dataset d(20, 2);
    for (std::size_t i = 0; i < 20; ++i) {
        d.x_row(i)[0] = rng.uniform01();
        d.x_row(i)[1] = rng.uniform01();
        d.y(i) = rng.normal();
    }
    KernelSpec spec;
    spec.kind = KernelKind::CartTree;
    spec.k = 3;
    spec.target_x = {0.4, 0.6};
    const auto rows = iota_rows(20);
    CHECK(eval(spec, d, rows, 1) == eval(spec, d, rows, 999));
}

TEST_CASE("tree kernel with mtry=1 is deterministic per omega") {
    Rng rng(29);
    Dataset d(24, 2);
    for (std::size_t i = 0; i < 24; ++i) {
        d.x_row(i)[0] = rng.uniform01();
        d.x_row(i)[1] = rng.uniform01();
        d.y(i) = d.x_at(i, 0) * 2.0 - d.x_at(i, 1) + 0.1 * rng.normal();
    }
    KernelSpec spec;
    spec.kind = KernelKind::CartTree;
    spec.k = 2;
    spec.mtry = 1;
    spec.target_x = {0.5, 0.5};
    const auto rows = iota_rows(24);
    CHECK(eval(spec, d, rows, 77) == eval(spec, d, rows, 77));
    std::set<double> values;
    for (std::uint64_t omega = 0; omega < 32; ++omega) values.insert(eval(spec, d, rows, omega));
    CHECK(values.size() > 1);

    spec.mtry = 3;
    CHECK_THROWS_AS(eval(spec, d, rows, 0), InvalidArgsError);
}

TEST_CASE("tree leaf inventory honours the cap") {
    Rng rng(31);
    Dataset d(30, 2);
    for (std::size_t i = 0; i < 30; ++i) {
        d.x_row(i)[0] = rng.uniform01();
        d.x_row(i)[1] = rng.uniform01();
        d.y(i) = rng.normal();
    }
    KernelSpec spec;
    spec.kind = KernelKind::CartTree;
    spec.k = 3;
    spec.target_x = {0.5, 0.5};
    const auto rows = iota_rows(30);
    const auto leaves = cart_leaf_stats(spec, d, rows, 0);
    std::uint64_t total = 0;
    for (const auto& leaf : leaves) {
        total += leaf.size;
        CHECK((leaf.size <= spec.k || leaf.constant_response));
    }
    CHECK(total == 30);
}

TEST_CASE("permutation symmetry holds bitwise for every kernel") {
    Rng rng(37);
    Dataset d(10, 2);
    for (std::size_t i = 0; i < 10; ++i) {
        d.x_row(i)[0] = rng.normal();
        d.x_row(i)[1] = rng.normal();
        d.y(i) = rng.normal() * 2.0 + 0.5;
    }

    std::vector<KernelSpec> specs;
    {
        KernelSpec s;
        specs.push_back(s);  // mean
        s.kind = KernelKind::Variance;
        specs.push_back(s);
        s = KernelSpec{};
        s.kind = KernelKind::OlsPredict;
        s.target_x = {0.3, -0.1};
        specs.push_back(s);
        s = KernelSpec{};
        s.kind = KernelKind::Knn;
        s.k = 2;
        s.target_x = {0.1, -0.2};
        specs.push_back(s);
        s = KernelSpec{};
        s.kind = KernelKind::RandomK;
        s.k = 3;
        specs.push_back(s);
        s = KernelSpec{};
        s.kind = KernelKind::CartTree;
        s.k = 2;
        s.target_x = {0.1, -0.2};
        specs.push_back(s);
        s.mtry = 1;
        specs.push_back(s);
        s = KernelSpec{};
        s.kind = KernelKind::RpTree;
        s.k = 2;
        s.target_x = {0.1, -0.2};
        specs.push_back(s);
    }

    std::vector<std::uint32_t> rows = {1, 3, 4, 6, 8, 9};
    const std::uint64_t omega = 4242;
    for (const auto& spec : specs) {
        const double reference = eval(spec, d, rows, omega);
        std::vector<std::uint32_t> perm = rows;
        std::sort(perm.begin(), perm.end());
        int checked = 0;
        do {
            CHECK(eval(spec, d, perm, omega) == reference);
            ++checked;
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(checked == 720);
    }
}

TEST_CASE("kernel flags and counters") {
    KernelSpec s;
    CHECK_FALSE(s.uses_omega());
    CHECK_FALSE(s.needs_target());
    s.kind = KernelKind::Variance;
    CHECK_FALSE(s.uses_omega());
    s.kind = KernelKind::OlsPredict;
    CHECK(s.needs_target());
    CHECK_FALSE(s.uses_omega());
    s.kind = KernelKind::Knn;
    CHECK(s.needs_target());
    s.kind = KernelKind::RandomK;
    CHECK(s.uses_omega());
    CHECK_FALSE(s.needs_target());
    s.kind = KernelKind::RpTree;
    CHECK(s.uses_omega());
    CHECK(s.needs_target());
    s.kind = KernelKind::CartTree;
    CHECK_FALSE(s.uses_omega());
    s.mtry = 2;
    CHECK(s.uses_omega());
    CHECK(s.needs_target());

    const Dataset d = make_1d({0, 1, 2}, {1, 2, 3});
    KernelSpec mean;
    KernelWorkspace ws;
    KernelCounters counters;
    eval_kernel(mean, d, std::vector<std::uint32_t>{0, 1}, 0, ws, &counters);
    eval_kernel(mean, d, std::vector<std::uint32_t>{1, 2}, 0, ws, &counters);
    CHECK(counters.evals == 2);

    CHECK_THROWS_AS(eval_kernel(mean, d, std::vector<std::uint32_t>{}, 0, ws, nullptr),
                    InvalidArgsError);
}
