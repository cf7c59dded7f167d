// SPDX-License-Identifier: Apache-2.0
#include "suica/metric_oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "suica/metrics.hpp"

namespace suica::oracles {

double naive_mae_pos(const Matrix<double>& y_hat, const Matrix<double>& y_gt) {
    double s = 0.0;
    int c = 0;
    for (Index i = 0; i < y_gt.rows(); ++i)
        for (Index j = 0; j < y_gt.cols(); ++j)
            if (y_gt(i, j) > 0) {
                s += std::fabs(y_hat(i, j) - y_gt(i, j));
                ++c;
            }
    return s / c;
}

double naive_mse_pos(const Matrix<double>& y_hat, const Matrix<double>& y_gt) {
    double s = 0.0;
    int c = 0;
    for (Index i = 0; i < y_gt.rows(); ++i)
        for (Index j = 0; j < y_gt.cols(); ++j)
            if (y_gt(i, j) > 0) {
                const double d = y_hat(i, j) - y_gt(i, j);
                s += d * d;
                ++c;
            }
    return s / c;
}

double naive_cosine(const Matrix<double>& y_hat, const Matrix<double>& y_gt) {
    double total = 0.0;
    int used = 0;
    for (Index i = 0; i < y_gt.rows(); ++i) {
        double dot = 0, nh = 0, ng = 0;
        for (Index j = 0; j < y_gt.cols(); ++j) {
            dot += y_hat(i, j) * y_gt(i, j);
            nh += y_hat(i, j) * y_hat(i, j);
            ng += y_gt(i, j) * y_gt(i, j);
        }
        if (ng == 0) continue;
        ++used;
        if (nh > 0) total += dot / std::sqrt(nh * ng);
    }
    return used ? total / used : 0.0;
}

double naive_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0 || vb == 0) return 0.0;
    return cov / std::sqrt(va * vb);
}

std::vector<double> naive_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        int less = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++equal;
        }
        r[i] = less + (equal + 1) / 2.0;
    }
    return r;
}

double naive_spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return naive_pearson(naive_ranks(a), naive_ranks(b));
}

double naive_zero_iou(const Matrix<double>& y_hat, const Matrix<double>& y_gt, double tau) {
    int inter = 0, uni = 0;
    for (Index i = 0; i < y_gt.rows(); ++i)
        for (Index j = 0; j < y_gt.cols(); ++j) {
            const bool p = y_hat(i, j) <= tau, t = y_gt(i, j) == 0;
            inter += p && t;
            uni += p || t;
        }
    return uni ? static_cast<double>(inter) / uni : 1.0;
}

double naive_ari(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    double both = 0, in_a = 0, in_b = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool sa = a[i] == a[j], sb = b[i] == b[j];
            both += sa && sb;
            in_a += sa;
            in_b += sb;
        }
    const double pairs = n * (n - 1) / 2.0;
    const double num = both * pairs - in_a * in_b;
    const double den = (in_a + in_b) / 2.0 * pairs - in_a * in_b;
    if (den == 0.0) return 1.0;
    return num / den;
}

std::vector<std::string> oracle_metric_names() {
    return {"masked_fidelity", "cosine", "pearson", "spearman", "zero_iou", "ari"};
}

namespace {

// Sparse nonnegative matrix with ties and exact zeros; at least one positive.
Matrix<double> random_expr(std::mt19937_64& rng, Index n, Index g, double zero_p) {
    std::bernoulli_distribution zero(zero_p);
    std::uniform_int_distribution<int> level(1, 6);
    Matrix<double> m(n, g);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < g; ++j) m(i, j) = zero(rng) ? 0.0 : level(rng) * 0.5;
    if (!(m.array() > 0).any()) m(0, 0) = 1.0;
    return m;
}

Matrix<double> random_pred(std::mt19937_64& rng, Index n, Index g) {
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::bernoulli_distribution zero(0.4);
    Matrix<double> m(n, g);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < g; ++j) m(i, j) = zero(rng) ? 0.0 : u(rng);
    return m;
}

std::vector<double> to_vec(const Vector<double>& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

OracleReport oracle_check(const std::string& metric_name, int trials, std::uint64_t seed) {
    OracleReport rep;
    rep.metric = metric_name;
    rep.trials = trials;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> dim(2, 12);
    bool known = true;
    for (int t = 0; t < trials && known; ++t) {
        const Index n = dim(rng), g = dim(rng);
        double diff = 0.0;
        if (metric_name == "masked_fidelity") {
            const auto y = random_expr(rng, n, g, 0.6);
            const auto h = random_pred(rng, n, g);
            const auto f = metrics::masked_fidelity(h, y);
            diff = std::max(std::fabs(f.mae_pos - naive_mae_pos(h, y)), std::fabs(f.mse_pos - naive_mse_pos(h, y)));
        } else if (metric_name == "cosine") {
            const auto y = random_expr(rng, n, g, 0.6);
            const auto h = random_pred(rng, n, g);
            diff = std::fabs(metrics::cosine_per_spot(h, y) - naive_cosine(h, y));
        } else if (metric_name == "pearson" || metric_name == "spearman") {
            // Integer-valued draws so that ties occur.
            std::uniform_int_distribution<int> level(0, 5);
            const Index len = 20;
            Vector<double> a(len), b(len);
            for (Index i = 0; i < len; ++i) {
                a(i) = level(rng);
                b(i) = level(rng) + 0.25 * level(rng);
            }
            diff = metric_name == "pearson" ? std::fabs(metrics::pearson(a, b) - naive_pearson(to_vec(a), to_vec(b)))
                                            : std::fabs(metrics::spearman(a, b) - naive_spearman(to_vec(a), to_vec(b)));
        } else if (metric_name == "zero_iou") {
            const auto y = random_expr(rng, n, g, 0.7);
            const auto h = random_pred(rng, n, g);
            const double tau = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            diff = std::fabs(metrics::zero_map_iou(h, y, tau) - naive_zero_iou(h, y, tau));
        } else if (metric_name == "ari") {
            const int points = 30;
            std::uniform_int_distribution<int> ka(1, 5);
            std::uniform_int_distribution<int> la(0, ka(rng) - 1), lb(0, ka(rng) - 1);
            std::vector<int> a(points), b(points);
            for (int i = 0; i < points; ++i) {
                a[static_cast<std::size_t>(i)] = la(rng);
                b[static_cast<std::size_t>(i)] = lb(rng);
            }
            diff = std::fabs(metrics::adjusted_rand_index(a, b) - naive_ari(a, b));
        } else {
            known = false;
            diff = INFINITY;
        }
        if (!(diff <= rep.max_abs_diff)) rep.max_abs_diff = diff;
    }
    rep.pass = known && rep.max_abs_diff <= rep.tolerance;
    return rep;
}

}  // namespace suica::oracles
