#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ustat/dataset.hpp"
#include "ustat/error.hpp"
#include "ustat/rng.hpp"

namespace ustat {

enum class KernelKind { Mean, Variance, OlsPredict, Knn, RandomK, CartTree, RpTree };

struct KernelSpec {
    KernelKind kind = KernelKind::Mean;
    std::uint32_t k = 1;              // neighbors / leaf cap / selection size
    std::uint32_t mtry = 0;           // CartTree: features per split, 0 = all
    std::vector<double> target_x;     // prediction point (OlsPredict, Knn, CartTree, RpTree)

    bool uses_omega() const noexcept {
        switch (kind) {
            case KernelKind::RandomK:
            case KernelKind::RpTree:
                return true;
            case KernelKind::CartTree:
                return mtry > 0;
            default:
                return false;
        }
    }
    bool needs_target() const noexcept {
        switch (kind) {
            case KernelKind::OlsPredict:
            case KernelKind::Knn:
            case KernelKind::CartTree:
            case KernelKind::RpTree:
                return true;
            default:
                return false;
        }
    }
};

// Counts of noteworthy events during kernel evaluation; additive across calls.
struct KernelCounters {
    std::uint64_t evals = 0;
    std::uint64_t rp_short_pnn = 0;  // RP selection fell back to the whole PNN set

    KernelCounters& operator+=(const KernelCounters& o) noexcept {
        evals += o.evals;
        rp_short_pnn += o.rp_short_pnn;
        return *this;
    }
};

// Reusable scratch buffers so hot loops do not allocate per evaluation.
struct KernelWorkspace {
    std::vector<std::uint32_t> rows;
    std::vector<std::uint32_t> order;
    std::vector<double> dist;
    std::vector<std::uint32_t> pnn;
    std::vector<std::uint32_t> pnn_counts;
    std::vector<std::uint32_t> cart_rows;
    std::vector<std::uint32_t> cart_features;
    std::vector<std::uint32_t> cart_sorted;
    Eigen::MatrixXd ols_x;
    Eigen::VectorXd ols_y;
};

constexpr double kOlsConditionLimit = 1e12;

namespace detail {

inline double mean_response(const Dataset& data, std::span<const std::uint32_t> rows) {
    double sum = 0.0;
    for (const std::uint32_t r : rows) sum += data.y(r);
    return sum / static_cast<double>(rows.size());
}

inline double variance_kernel_eval(const Dataset& data, std::span<const std::uint32_t> rows) {
    const std::size_t s = rows.size();
    if (s < 2) throw InvalidArgsError("pairwise variance kernel requires s >= 2");
    // Average squared pairwise difference equals twice the unbiased sample
    // variance; computed via the stable two-pass form.
    const double mean = mean_response(data, rows);
    double ssq = 0.0;
    for (const std::uint32_t r : rows) {
        const double d = data.y(r) - mean;
        ssq += d * d;
    }
    return 2.0 * ssq / static_cast<double>(s - 1);
}

inline double ols_predict_eval(const Dataset& data, std::span<const std::uint32_t> rows,
                               const KernelSpec& spec, KernelWorkspace& ws) {
    const std::size_t s = rows.size();
    const std::size_t p = data.n_features();
    if (spec.target_x.size() != p) {
        throw InvalidArgsError("target_x length must equal the covariate dimension");
    }
    if (s < p) throw InvalidArgsError("least-squares kernel requires s >= p");
    ws.ols_x.resize(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(p));
    ws.ols_y.resize(static_cast<Eigen::Index>(s));
    for (std::size_t i = 0; i < s; ++i) {
        const auto xr = data.x_row(rows[i]);
        for (std::size_t j = 0; j < p; ++j) {
            ws.ols_x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xr[j];
        }
        ws.ols_y(static_cast<Eigen::Index>(i)) = data.y(rows[i]);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ws.ols_x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0) || smax / smin > kOlsConditionLimit) {
        throw SingularDesignError("least-squares design matrix is numerically singular");
    }
    const Eigen::VectorXd beta = svd.solve(ws.ols_y);
    double pred = 0.0;
    for (std::size_t j = 0; j < p; ++j) pred += spec.target_x[j] * beta(static_cast<Eigen::Index>(j));
    return pred;
}

inline double sq_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        d += diff * diff;
    }
    return d;
}

// Orders rows by covariates, then response; the dataset index enters only
// between bit-identical rows, where either choice yields the same value. This
// keeps distance-tied selections a symmetric function of the row values even
// when the covariate law has atoms and ties occur with positive probability.
inline bool row_value_less(const Dataset& data, std::uint32_t a, std::uint32_t b) {
    const auto xa = data.x_row(a);
    const auto xb = data.x_row(b);
    for (std::size_t j = 0; j < xa.size(); ++j) {
        if (xa[j] != xb[j]) return xa[j] < xb[j];
    }
    if (data.y(a) != data.y(b)) return data.y(a) < data.y(b);
    return a < b;
}

// Mean response over the k rows nearest to the target.
inline double knn_mean(const Dataset& data, std::span<const std::uint32_t> rows,
                       std::span<const double> target, std::uint32_t k, KernelWorkspace& ws) {
    const std::size_t s = rows.size();
    ws.dist.resize(s);
    ws.order.resize(s);
    for (std::size_t i = 0; i < s; ++i) {
        ws.dist[i] = sq_distance(data.x_row(rows[i]), target);
        ws.order[i] = static_cast<std::uint32_t>(i);
    }
    std::partial_sort(ws.order.begin(), ws.order.begin() + k, ws.order.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                          if (ws.dist[a] != ws.dist[b]) return ws.dist[a] < ws.dist[b];
                          return row_value_less(data, rows[a], rows[b]);
                      });
    double sum = 0.0;
    for (std::uint32_t i = 0; i < k; ++i) sum += data.y(rows[ws.order[i]]);
    return sum / static_cast<double>(k);
}

inline double knn_eval(const Dataset& data, std::span<const std::uint32_t> rows,
                       const KernelSpec& spec, KernelWorkspace& ws) {
    const std::size_t s = rows.size();
    if (spec.k < 1 || spec.k > s) throw InvalidArgsError("kNN kernel requires 1 <= k <= s");
    if (spec.target_x.size() != data.n_features()) {
        throw InvalidArgsError("target_x length must equal the covariate dimension");
    }
    // All rows selected: identical to the plain mean, summed in the same order.
    if (spec.k == s) return mean_response(data, rows);
    return knn_mean(data, rows, spec.target_x, spec.k, ws);
}

}  // namespace detail

// Potential-nearest-neighbor set: members are positions within `rows` whose
// blocking count is < k. A point blocks candidate i when it lies inside the
// closed axis-aligned box spanned by target and x_i (boundary blocks).
struct PnnSet {
    std::vector<std::uint32_t> members;         // positions within the subsample view
    std::vector<std::uint32_t> blocked_counts;  // blocking counts aligned with members
};

inline PnnSet compute_kpnn(const Dataset& data, std::span<const std::uint32_t> rows,
                           std::span<const double> target, std::uint32_t k) {
    if (k < 1) throw InvalidArgsError("potential-neighbor parameter k must be >= 1");
    if (target.size() != data.n_features()) {
        throw InvalidArgsError("target length must equal the covariate dimension");
    }
    const std::size_t s = rows.size();
    const std::size_t p = target.size();
    PnnSet out;
    for (std::size_t i = 0; i < s; ++i) {
        const auto xi = data.x_row(rows[i]);
        std::uint32_t blockers = 0;
        for (std::size_t j = 0; j < s && blockers < k; ++j) {
            if (j == i) continue;
            const auto xj = data.x_row(rows[j]);
            bool inside = true;
            for (std::size_t d = 0; d < p; ++d) {
                const double lo = std::min(xi[d], target[d]);
                const double hi = std::max(xi[d], target[d]);
                if (xj[d] < lo || xj[d] > hi) {
                    inside = false;
                    break;
                }
            }
            if (inside) ++blockers;
        }
        if (blockers < k) {
            out.members.push_back(static_cast<std::uint32_t>(i));
            out.blocked_counts.push_back(blockers);
        }
    }
    return out;
}

namespace detail {

inline double rp_tree_eval(const Dataset& data, std::span<const std::uint32_t> rows,
                           const KernelSpec& spec, std::uint64_t omega_seed, KernelWorkspace& ws,
                           KernelCounters* counters) {
    if (spec.k < 1) throw InvalidArgsError("RP-tree kernel requires k >= 1");
    const PnnSet pnn = compute_kpnn(data, rows, spec.target_x, spec.k);
    if (pnn.members.empty()) {
        // Every candidate is blocked k-fold, which takes exact duplicate
        // geometry; average the nearest rows outright.
        if (counters != nullptr) ++counters->rp_short_pnn;
        const std::uint32_t k =
            std::min(spec.k, static_cast<std::uint32_t>(rows.size()));
        return knn_mean(data, rows, spec.target_x, k, ws);
    }
    ws.pnn.assign(pnn.members.begin(), pnn.members.end());
    std::uint32_t take = spec.k;
    if (ws.pnn.size() <= spec.k) {
        // Fewer potential neighbors than requested: average the whole set.
        take = static_cast<std::uint32_t>(ws.pnn.size());
        if (ws.pnn.size() < spec.k && counters != nullptr) ++counters->rp_short_pnn;
    } else {
        Rng rng(fold_in(omega_seed, streams::kSelect));
        partial_fisher_yates(rng, ws.pnn, take);
    }
    double sum = 0.0;
    for (std::uint32_t i = 0; i < take; ++i) sum += data.y(rows[ws.pnn[i]]);
    return sum / static_cast<double>(take);
}

inline double random_k_eval(const Dataset& data, std::span<const std::uint32_t> rows,
                            const KernelSpec& spec, std::uint64_t omega_seed,
                            KernelWorkspace& ws) {
    const std::size_t s = rows.size();
    if (spec.k < 1 || spec.k > s) {
        throw InvalidArgsError("random-selection kernel requires 1 <= k <= s");
    }
    ws.order.resize(s);
    for (std::size_t i = 0; i < s; ++i) ws.order[i] = static_cast<std::uint32_t>(i);
    Rng rng(fold_in(omega_seed, streams::kSelect));
    partial_fisher_yates(rng, ws.order, spec.k);
    double sum = 0.0;
    for (std::uint32_t i = 0; i < spec.k; ++i) sum += data.y(rows[ws.order[i]]);
    return sum / static_cast<double>(spec.k);
}

struct CartContext {
    const Dataset* data;
    const KernelSpec* spec;
    std::uint64_t omega_seed;
    KernelWorkspace* ws;
    std::uint32_t depth_cap = 60;
};

inline bool cart_constant_response(const CartContext& ctx, std::span<const std::uint32_t> rows) {
    const double first = ctx.data->y(rows[0]);
    for (const std::uint32_t r : rows) {
        if (ctx.data->y(r) != first) return false;
    }
    return true;
}

struct CartSplit {
    bool found = false;
    std::uint32_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

// Best split of `rows` maximizing the variance-reduction criterion, scanning
// features in ascending index order and thresholds left to right; only strict
// improvements are accepted, which realizes the documented tie rule.
inline CartSplit cart_best_split(const CartContext& ctx, std::span<std::uint32_t> rows,
                                 std::span<const std::uint32_t> features) {
    const Dataset& data = *ctx.data;
    const std::size_t m = rows.size();
    double sum_all = 0.0;
    for (const std::uint32_t r : rows) sum_all += data.y(r);
    const double base = sum_all * sum_all / static_cast<double>(m);
    CartSplit best;
    auto& sorted = ctx.ws->cart_sorted;
    for (const std::uint32_t j : features) {
        sorted.assign(rows.begin(), rows.end());
        std::sort(sorted.begin(), sorted.end(), [&](std::uint32_t a, std::uint32_t b) {
            if (data.x_at(a, j) != data.x_at(b, j)) return data.x_at(a, j) < data.x_at(b, j);
            return a < b;
        });
        double sum_left = 0.0;
        for (std::size_t i = 0; i + 1 < m; ++i) {
            sum_left += data.y(sorted[i]);
            const double xl = data.x_at(sorted[i], j);
            const double xr = data.x_at(sorted[i + 1], j);
            if (xl == xr) continue;
            const double nl = static_cast<double>(i + 1);
            const double nr = static_cast<double>(m - i - 1);
            const double sum_right = sum_all - sum_left;
            const double gain = sum_left * sum_left / nl + sum_right * sum_right / nr - base;
            if (gain > best.gain) {
                best.found = true;
                best.gain = gain;
                best.feature = j;
                best.threshold = xl + 0.5 * (xr - xl);
            }
        }
    }
    return best;
}

inline double cart_leaf_mean(const Dataset& data, std::span<const std::uint32_t> rows) {
    double sum = 0.0;
    for (const std::uint32_t r : rows) sum += data.y(r);
    return sum / static_cast<double>(rows.size());
}

inline void cart_node_features(const CartContext& ctx, std::uint64_t node_id,
                               std::vector<std::uint32_t>& features) {
    const std::uint32_t p = static_cast<std::uint32_t>(ctx.data->n_features());
    features.clear();
    const std::uint32_t mtry = ctx.spec->mtry;
    if (mtry == 0 || mtry >= p) {
        for (std::uint32_t j = 0; j < p; ++j) features.push_back(j);
        return;
    }
    // Per-node feature draw keyed by the node's position in the binary tree,
    // so a prediction path is independent of whether siblings are visited.
    Rng rng(fold_in(fold_in(ctx.omega_seed, streams::kCartNode), node_id));
    std::vector<std::uint32_t> all(p);
    for (std::uint32_t j = 0; j < p; ++j) all[j] = j;
    partial_fisher_yates(rng, all, mtry);
    features.assign(all.begin(), all.begin() + mtry);
    std::sort(features.begin(), features.end());
}

// Descend only the branch containing the target; returns the leaf mean.
inline double cart_predict_node(const CartContext& ctx, std::span<std::uint32_t> rows,
                                std::uint64_t node_id, std::uint32_t depth) {
    const KernelSpec& spec = *ctx.spec;
    if (rows.size() <= spec.k || depth >= ctx.depth_cap ||
        cart_constant_response(ctx, rows)) {
        return cart_leaf_mean(*ctx.data, rows);
    }
    cart_node_features(ctx, node_id, ctx.ws->cart_features);
    const CartSplit split = cart_best_split(ctx, rows, ctx.ws->cart_features);
    if (!split.found) return cart_leaf_mean(*ctx.data, rows);
    const Dataset& data = *ctx.data;
    auto mid = std::stable_partition(rows.begin(), rows.end(), [&](std::uint32_t r) {
        return data.x_at(r, split.feature) < split.threshold;
    });
    const std::size_t n_left = static_cast<std::size_t>(mid - rows.begin());
    const bool go_left = spec.target_x[split.feature] < split.threshold;
    if (go_left) {
        return cart_predict_node(ctx, rows.subspan(0, n_left), node_id * 2, depth + 1);
    }
    return cart_predict_node(ctx, rows.subspan(n_left), node_id * 2 + 1, depth + 1);
}

inline double cart_tree_eval(const Dataset& data, std::span<const std::uint32_t> rows,
                             const KernelSpec& spec, std::uint64_t omega_seed,
                             KernelWorkspace& ws) {
    if (spec.k < 1) throw InvalidArgsError("tree kernel requires leaf cap k >= 1");
    if (spec.target_x.size() != data.n_features()) {
        throw InvalidArgsError("target_x length must equal the covariate dimension");
    }
    if (spec.mtry > data.n_features()) {
        throw InvalidArgsError("mtry must not exceed the covariate dimension");
    }
    ws.cart_rows.assign(rows.begin(), rows.end());
    CartContext ctx{&data, &spec, omega_seed, &ws};
    return cart_predict_node(ctx, ws.cart_rows, 1, 0);
}

}  // namespace detail

// Evaluate a kernel on a subsample view given by dataset row indices. The view
// is canonicalized (sorted by row index) first, which makes every kernel an
// exact function of the index set: permutation symmetry holds bitwise.
inline double eval_kernel(const KernelSpec& spec, const Dataset& data,
                          std::span<const std::uint32_t> rows, std::uint64_t omega_seed,
                          KernelWorkspace& ws, KernelCounters* counters = nullptr) {
    if (rows.empty()) throw InvalidArgsError("kernel evaluation needs a nonempty subsample");
    ws.rows.assign(rows.begin(), rows.end());
    std::sort(ws.rows.begin(), ws.rows.end());
    if (counters != nullptr) ++counters->evals;
    switch (spec.kind) {
        case KernelKind::Mean:
            return detail::mean_response(data, ws.rows);
        case KernelKind::Variance:
            return detail::variance_kernel_eval(data, ws.rows);
        case KernelKind::OlsPredict:
            return detail::ols_predict_eval(data, ws.rows, spec, ws);
        case KernelKind::Knn:
            return detail::knn_eval(data, ws.rows, spec, ws);
        case KernelKind::RandomK:
            return detail::random_k_eval(data, ws.rows, spec, omega_seed, ws);
        case KernelKind::RpTree:
            return detail::rp_tree_eval(data, ws.rows, spec, omega_seed, ws, counters);
        case KernelKind::CartTree:
            return detail::cart_tree_eval(data, ws.rows, spec, omega_seed, ws);
    }
    throw InvalidArgsError("unknown kernel kind");
}

// Leaf inventory of the full tree grown by the tree kernel's rules; sizes plus
// a constant-response flag per leaf. Diagnostic companion to the predictor.
struct CartLeafInfo {
    std::uint32_t size;
    bool constant_response;
};

namespace detail {

inline void cart_collect_leaves(const CartContext& ctx, std::span<std::uint32_t> rows,
                                std::uint64_t node_id, std::uint32_t depth,
                                std::vector<CartLeafInfo>& out) {
    const KernelSpec& spec = *ctx.spec;
    const bool constant = cart_constant_response(ctx, rows);
    if (rows.size() <= spec.k || depth >= ctx.depth_cap || constant) {
        out.push_back({static_cast<std::uint32_t>(rows.size()), constant});
        return;
    }
    cart_node_features(ctx, node_id, ctx.ws->cart_features);
    const CartSplit split = cart_best_split(ctx, rows, ctx.ws->cart_features);
    if (!split.found) {
        out.push_back({static_cast<std::uint32_t>(rows.size()), constant});
        return;
    }
    const Dataset& data = *ctx.data;
    auto mid = std::stable_partition(rows.begin(), rows.end(), [&](std::uint32_t r) {
        return data.x_at(r, split.feature) < split.threshold;
    });
    const std::size_t n_left = static_cast<std::size_t>(mid - rows.begin());
    cart_collect_leaves(ctx, rows.subspan(0, n_left), node_id * 2, depth + 1, out);
    cart_collect_leaves(ctx, rows.subspan(n_left), node_id * 2 + 1, depth + 1, out);
}

}  // namespace detail

inline std::vector<CartLeafInfo> cart_leaf_stats(const KernelSpec& spec, const Dataset& data,
                                                 std::span<const std::uint32_t> rows,
                                                 std::uint64_t omega_seed) {
    KernelWorkspace ws;
    ws.cart_rows.assign(rows.begin(), rows.end());
    std::sort(ws.cart_rows.begin(), ws.cart_rows.end());
    detail::CartContext ctx{&data, &spec, omega_seed, &ws};
    std::vector<CartLeafInfo> out;
    detail::cart_collect_leaves(ctx, ws.cart_rows, 1, 0, out);
    return out;
}

}  // namespace ustat
