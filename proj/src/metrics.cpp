// SPDX-License-Identifier: Apache-2.0
#include "suica/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "suica/pca.hpp"

namespace suica::metrics {

Aggregation parse_aggregation(const std::string& name) {
    if (name == "per_spot_mean") return Aggregation::per_spot_mean;
    if (name == "global_flat") return Aggregation::global_flat;
    throw ConfigError("unknown aggregation '" + name + "'");
}

std::string to_string(Aggregation a) { return a == Aggregation::per_spot_mean ? "per_spot_mean" : "global_flat"; }

namespace {

void check_shapes(const Matrix<double>& a, const Matrix<double>& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError(std::string(what) + ": shape mismatch");
}

Vector<double> flatten(const Matrix<double>& m) {
    Vector<double> v(m.size());
    Index k = 0;
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) v(k++) = m(r, c);
    return v;
}

bool is_constant(const Vector<double>& v) {
    return v.size() == 0 || v.maxCoeff() == v.minCoeff();
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

Fidelity masked_fidelity(const Matrix<double>& y_hat, const Matrix<double>& y_gt) {
    check_shapes(y_hat, y_gt, "masked_fidelity");
    double abs_sum = 0.0, sq_sum = 0.0;
    Index count = 0;
    for (Index c = 0; c < y_gt.cols(); ++c)
        for (Index r = 0; r < y_gt.rows(); ++r)
            if (y_gt(r, c) > 0.0) {
                const double d = y_hat(r, c) - y_gt(r, c);
                abs_sum += std::abs(d);
                sq_sum += d * d;
                ++count;
            }
    if (count == 0) throw DataError("masked_fidelity: ground truth has no positive entry");
    return {abs_sum / static_cast<double>(count), sq_sum / static_cast<double>(count)};
}

double cosine_per_spot(const Matrix<double>& y_hat, const Matrix<double>& y_gt) {
    check_shapes(y_hat, y_gt, "cosine_per_spot");
    double acc = 0.0;
    Index used = 0;
    for (Index r = 0; r < y_gt.rows(); ++r) {
        const double gt_norm = y_gt.row(r).norm();
        if (gt_norm == 0.0) continue;
        const double hat_norm = y_hat.row(r).norm();
        ++used;
        if (hat_norm == 0.0) continue;
        acc += y_hat.row(r).dot(y_gt.row(r)) / (hat_norm * gt_norm);
    }
    return used ? acc / static_cast<double>(used) : 0.0;
}

double pearson(const Vector<double>& a, const Vector<double>& b) {
    if (a.size() != b.size()) throw DataError("pearson: length mismatch");
    if (a.size() < 2) return 0.0;
    const Vector<double> da = a.array() - a.mean();
    const Vector<double> db = b.array() - b.mean();
    const double denom = da.norm() * db.norm();
    if (denom == 0.0) return 0.0;
    return std::clamp(da.dot(db) / denom, -1.0, 1.0);
}

Vector<double> average_ranks(const Vector<double>& v) {
    const Index n = v.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return v(i) < v(j); });
    Vector<double> ranks(n);
    Index i = 0;
    while (i < n) {
        Index j = i;
        while (j + 1 < n && v(order[static_cast<std::size_t>(j + 1)]) == v(order[static_cast<std::size_t>(i)])) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Index k = i; k <= j; ++k) ranks(order[static_cast<std::size_t>(k)]) = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(const Vector<double>& a, const Vector<double>& b) {
    return pearson(average_ranks(a), average_ranks(b));
}

Correlations pearson_spearman(const Matrix<double>& y_hat, const Matrix<double>& y_gt, Aggregation mode) {
    check_shapes(y_hat, y_gt, "pearson_spearman");
    Correlations out;
    if (mode == Aggregation::global_flat) {
        const Vector<double> h = flatten(y_hat), g = flatten(y_gt);
        if (is_constant(g)) throw DataError("pearson_spearman: ground truth is constant");
        out.pearson = pearson(h, g);
        out.spearman = spearman(h, g);
        return out;
    }
    double p = 0.0, s = 0.0;
    Index used = 0;
    for (Index r = 0; r < y_gt.rows(); ++r) {
        const Vector<double> g = y_gt.row(r).transpose();
        if (is_constant(g)) {
            ++out.skipped;
            continue;
        }
        const Vector<double> h = y_hat.row(r).transpose();
        p += pearson(h, g);
        s += spearman(h, g);
        ++used;
    }
    if (used == 0) throw DataError("pearson_spearman: every ground-truth row is constant");
    out.pearson = p / static_cast<double>(used);
    out.spearman = s / static_cast<double>(used);
    return out;
}

double zero_map_iou(const Matrix<double>& y_hat, const Matrix<double>& y_gt, double tau) {
    check_shapes(y_hat, y_gt, "zero_map_iou");
    if (!(tau >= 0.0)) throw ConfigError("zero_map_iou: tau must be >= 0");
    const auto pred_zero = y_hat.array() <= tau;
    const auto true_zero = y_gt.array() == 0.0;
    const Index inter = (pred_zero && true_zero).count();
    const Index uni = (pred_zero || true_zero).count();
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw DataError("adjusted_rand_index: labelings differ in length");
    if (a.size() < 2) return 1.0;
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    double index = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, count] : table) index += choose2(count);
    for (const auto& [key, count] : rows) sum_a += choose2(count);
    for (const auto& [key, count] : cols) sum_b += choose2(count);
    // Scaled by the pair count so every term stays an exact integer.
    const double pairs = choose2(static_cast<double>(a.size()));
    const double num = index * pairs - sum_a * sum_b;
    const double den = 0.5 * (sum_a + sum_b) * pairs - sum_a * sum_b;
    if (den == 0.0) return 1.0;
    return num / den;
}

// ---- k-means -------------------------------------------------------------------

namespace {

KMeansResult lloyd(const Matrix<double>& x, Matrix<double> centers, int max_iter) {
    const Index n = x.rows();
    const Index k = centers.rows();
    KMeansResult r;
    r.assignment.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (Index i = 0; i < n; ++i) {
            Index best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Index c = 0; c < k; ++c) {
                const double d = (x.row(i) - centers.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (r.assignment[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
                r.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
        Matrix<double> sums = Matrix<double>::Zero(k, x.cols());
        std::vector<Index> counts(static_cast<std::size_t>(k), 0);
        for (Index i = 0; i < n; ++i) {
            sums.row(r.assignment[static_cast<std::size_t>(i)]) += x.row(i);
            ++counts[static_cast<std::size_t>(r.assignment[static_cast<std::size_t>(i)])];
        }
        for (Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            // Empty cluster: move it to the point farthest from its center.
            Index far = 0;
            double far_d = -1.0;
            for (Index i = 0; i < n; ++i) {
                const double d = (x.row(i) - centers.row(r.assignment[static_cast<std::size_t>(i)])).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            centers.row(c) = x.row(far);
        }
    }
    r.inertia = 0.0;
    for (Index i = 0; i < n; ++i)
        r.inertia += (x.row(i) - centers.row(r.assignment[static_cast<std::size_t>(i)])).squaredNorm();
    r.centers = std::move(centers);
    return r;
}

Matrix<double> plus_plus_seeds(const Matrix<double>& x, Index k, std::mt19937_64& rng) {
    const Index n = x.rows();
    Matrix<double> centers(k, x.cols());
    std::uniform_int_distribution<Index> first(0, n - 1);
    centers.row(0) = x.row(first(rng));
    Vector<double> d2(n);
    for (Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centers.row(0)).squaredNorm();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Index c = 1; c < k; ++c) {
        const double total = d2.sum();
        Index pick = 0;
        if (total > 0.0) {
            double u = unit(rng) * total;
            for (pick = 0; pick < n - 1; ++pick) {
                u -= d2(pick);
                if (u < 0.0) break;
            }
        } else {
            pick = std::uniform_int_distribution<Index>(0, n - 1)(rng);
        }
        centers.row(c) = x.row(pick);
        for (Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - centers.row(c)).squaredNorm());
    }
    return centers;
}

}  // namespace

KMeansResult kmeans(const Matrix<double>& x, Index k, std::uint64_t seed, int restarts, int max_iter) {
    if (k < 1) throw ConfigError("kmeans: k must be >= 1");
    if (k > x.rows()) throw DataError("kmeans: k=" + std::to_string(k) + " exceeds point count " + std::to_string(x.rows()));
    std::mt19937_64 rng(seed);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int run = 0; run < std::max(1, restarts); ++run) {
        auto r = lloyd(x, plus_plus_seeds(x, k, rng), max_iter);
        if (r.inertia < best.inertia) best = std::move(r);
    }
    return best;
}

double cluster_ari(const Matrix<double>& y_hat, const std::vector<int>& labels, Index clusters, std::uint64_t seed) {
    if (static_cast<Index>(labels.size()) != y_hat.rows()) throw DataError("cluster_ari: label count mismatch");
    if (clusters > y_hat.rows())
        throw DataError("cluster_ari: K=" + std::to_string(clusters) + " exceeds spot count " +
                        std::to_string(y_hat.rows()));
    const Matrix<double> centered = y_hat.rowwise() - y_hat.colwise().mean();
    std::vector<int> assignment(labels.size(), 0);
    if (centered.squaredNorm() > 0.0) {
        const Index comps = std::min<Index>({50, y_hat.cols(), y_hat.rows()});
        const auto fit = pca::fit(y_hat, comps);
        assignment = kmeans(fit.transform(y_hat), clusters, seed).assignment;
    }
    return adjusted_rand_index(assignment, labels);
}

// ---- reports -------------------------------------------------------------------

void MetricReport::validate() const {
    auto in = [](double v, double lo, double hi) { return std::isnan(v) || (v >= lo - 1e-12 && v <= hi + 1e-12); };
    if (!in(cosine_mean, -1, 1) || !in(pearson_mean, -1, 1) || !in(spearman_mean, -1, 1) || !in(zero_iou, 0, 1) ||
        !in(ari, -1, 1))
        throw NumericalError("metric report outside its valid ranges");
}

MetricReport evaluate(const Matrix<double>& y_hat, const Matrix<double>& y_gt, const std::vector<int>* labels,
                      const EvalOptions& options) {
    check_shapes(y_hat, y_gt, "evaluate");
    MetricReport r;
    const auto fid = masked_fidelity(y_hat, y_gt);
    r.mae_pos = fid.mae_pos;
    r.mse_pos = fid.mse_pos;
    r.cosine_mean = cosine_per_spot(y_hat, y_gt);
    const auto corr = pearson_spearman(y_hat, y_gt, options.aggregation);
    r.pearson_mean = corr.pearson;
    r.spearman_mean = corr.spearman;
    r.zero_iou = zero_map_iou(y_hat, y_gt, options.tau);
    r.ari = std::numeric_limits<double>::quiet_NaN();
    if (labels) {
        const std::set<int> distinct(labels->begin(), labels->end());
        r.ari = cluster_ari(y_hat, *labels, static_cast<Index>(distinct.size()), options.seed);
    }
    r.n_eval_spots = y_hat.rows();
    r.n_eval_genes = y_hat.cols();
    r.aggregation_mode = options.aggregation;
    r.validate();
    return r;
}

MetricReport evaluate_masked(const Matrix<double>& y_hat, const Matrix<double>& y_gt, const BoolMatrix& mask,
                             const EvalOptions& options) {
    check_shapes(y_hat, y_gt, "evaluate_masked");
    if (mask.rows() != y_gt.rows() || mask.cols() != y_gt.cols()) throw DataError("evaluate_masked: mask shape mismatch");
    const Index m = mask.count();
    Matrix<double> h(1, m), g(1, m);
    Index k = 0;
    for (Index r = 0; r < mask.rows(); ++r)
        for (Index c = 0; c < mask.cols(); ++c)
            if (mask(r, c)) {
                h(0, k) = y_hat(r, c);
                g(0, k) = y_gt(r, c);
                ++k;
            }
    MetricReport r;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.mae_pos = r.mse_pos = r.pearson_mean = r.spearman_mean = nan;
    if ((g.array() > 0.0).any()) {
        const auto fid = masked_fidelity(h, g);
        r.mae_pos = fid.mae_pos;
        r.mse_pos = fid.mse_pos;
    }
    r.cosine_mean = cosine_per_spot(h, g);
    if (m > 1 && !is_constant(g.row(0).transpose())) {
        const auto corr = pearson_spearman(h, g, Aggregation::global_flat);
        r.pearson_mean = corr.pearson;
        r.spearman_mean = corr.spearman;
    }
    r.zero_iou = zero_map_iou(h, g, options.tau);
    r.ari = nan;
    r.n_eval_spots = (mask.rowwise().count().array() > 0).count();
    r.n_eval_genes = (mask.colwise().count().array() > 0).count();
    r.aggregation_mode = Aggregation::global_flat;
    r.validate();
    return r;
}

namespace {

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw DataError("metric report: bad number '" + s + "'");
    return v;
}

}  // namespace

std::string to_key_value(const MetricReport& r) {
    std::ostringstream out;
    out << "mae_pos=" << exact(r.mae_pos) << '\n'
        << "mse_pos=" << exact(r.mse_pos) << '\n'
        << "cosine_mean=" << exact(r.cosine_mean) << '\n'
        << "pearson_mean=" << exact(r.pearson_mean) << '\n'
        << "spearman_mean=" << exact(r.spearman_mean) << '\n'
        << "zero_iou=" << exact(r.zero_iou) << '\n'
        << "ari=" << exact(r.ari) << '\n'
        << "n_eval_spots=" << r.n_eval_spots << '\n'
        << "n_eval_genes=" << r.n_eval_genes << '\n'
        << "aggregation_mode=" << to_string(r.aggregation_mode) << '\n';
    return out.str();
}

MetricReport parse_key_value(const std::string& text) {
    MetricReport r;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("metric report: expected key=value, got '" + line + "'");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "mae_pos") r.mae_pos = parse_double(value);
        else if (key == "mse_pos") r.mse_pos = parse_double(value);
        else if (key == "cosine_mean") r.cosine_mean = parse_double(value);
        else if (key == "pearson_mean") r.pearson_mean = parse_double(value);
        else if (key == "spearman_mean") r.spearman_mean = parse_double(value);
        else if (key == "zero_iou") r.zero_iou = parse_double(value);
        else if (key == "ari") r.ari = parse_double(value);
        else if (key == "n_eval_spots") r.n_eval_spots = std::stoll(value);
        else if (key == "n_eval_genes") r.n_eval_genes = std::stoll(value);
        else if (key == "aggregation_mode") r.aggregation_mode = parse_aggregation(value);
        else throw DataError("metric report: unknown key '" + key + "'");
    }
    return r;
}

std::string csv_header() {
    return "mae_pos,mse_pos,cosine_mean,pearson_mean,spearman_mean,zero_iou,ari,n_eval_spots,n_eval_genes,"
           "aggregation_mode";
}

std::string to_csv_row(const MetricReport& r) {
    std::ostringstream out;
    out << exact(r.mae_pos) << ',' << exact(r.mse_pos) << ',' << exact(r.cosine_mean) << ',' << exact(r.pearson_mean)
        << ',' << exact(r.spearman_mean) << ',' << exact(r.zero_iou) << ',' << exact(r.ari) << ',' << r.n_eval_spots
        << ',' << r.n_eval_genes << ',' << to_string(r.aggregation_mode);
    return out.str();
}

}  // namespace suica::metrics
