// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "suica/common.hpp"

namespace suica::metrics {

enum class Aggregation { per_spot_mean, global_flat };

Aggregation parse_aggregation(const std::string& name);
std::string to_string(Aggregation a);

struct Fidelity {
    double mae_pos = 0.0;
    double mse_pos = 0.0;
};

/// MAE and MSE over positions where y_gt > 0.
Fidelity masked_fidelity(const Matrix<double>& y_hat, const Matrix<double>& y_gt);

/// Mean per-spot cosine similarity. Spots whose ground truth is all zero are
/// skipped; spots with an all-zero prediction score 0.
double cosine_per_spot(const Matrix<double>& y_hat, const Matrix<double>& y_gt);

struct Correlations {
    double pearson = 0.0;
    double spearman = 0.0;
    Index skipped = 0;  // rows with constant ground truth (per-spot mode)
};

/**
 * Pearson and Spearman correlation. per_spot_mean averages the per-row
 * coefficients over rows with non-constant ground truth; global_flat
 * correlates the flattened matrices. A constant prediction row scores 0.
 */
Correlations pearson_spearman(const Matrix<double>& y_hat, const Matrix<double>& y_gt,
                              Aggregation mode = Aggregation::per_spot_mean);

double pearson(const Vector<double>& a, const Vector<double>& b);
/// Pearson correlation of average ranks.
double spearman(const Vector<double>& a, const Vector<double>& b);
/// 1-based ranks with ties sharing the mean of their positions.
Vector<double> average_ranks(const Vector<double>& v);

/// IoU of {y_hat <= tau} and {y_gt == 0}. Two empty sets give 1.
double zero_map_iou(const Matrix<double>& y_hat, const Matrix<double>& y_gt, double tau);

/// Chance-corrected agreement of two labelings (contingency-table formula).
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct KMeansResult {
    std::vector<int> assignment;
    Matrix<double> centers;
    double inertia = 0.0;
};

/// k-means++ seeding and Lloyd iterations; the best of `restarts` runs by inertia.
KMeansResult kmeans(const Matrix<double>& x, Index k, std::uint64_t seed, int restarts = 10, int max_iter = 300);

/// PCA to min(50, g, n) components, k-means with K clusters, ARI against labels.
double cluster_ari(const Matrix<double>& y_hat, const std::vector<int>& labels, Index clusters, std::uint64_t seed);

struct MetricReport {
    double mae_pos = 0.0;
    double mse_pos = 0.0;
    double cosine_mean = 0.0;
    double pearson_mean = 0.0;
    double spearman_mean = 0.0;
    double zero_iou = 0.0;
    double ari = 0.0;  // NaN without labels
    Index n_eval_spots = 0;
    Index n_eval_genes = 0;
    Aggregation aggregation_mode = Aggregation::per_spot_mean;

    void validate() const;
};

struct EvalOptions {
    double tau = 0.0;
    Aggregation aggregation = Aggregation::per_spot_mean;
    std::uint64_t seed = 0;
};

MetricReport evaluate(const Matrix<double>& y_hat, const Matrix<double>& y_gt, const std::vector<int>* labels,
                      const EvalOptions& options);

/// Metrics restricted to the positions where `mask` is true, flattened.
MetricReport evaluate_masked(const Matrix<double>& y_hat, const Matrix<double>& y_gt, const BoolMatrix& mask,
                             const EvalOptions& options);

/// "key=value" lines in a fixed field order.
std::string to_key_value(const MetricReport& r);
MetricReport parse_key_value(const std::string& text);
std::string csv_header();
std::string to_csv_row(const MetricReport& r);

}  // namespace suica::metrics
