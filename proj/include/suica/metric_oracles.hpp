// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "suica/common.hpp"

// Direct-definition reference implementations used to cross-check the metrics.
namespace suica::oracles {

struct OracleReport {
    std::string metric;
    int trials = 0;
    double max_abs_diff = 0.0;
    double tolerance = 1e-10;
    bool pass = false;
};

double naive_mae_pos(const Matrix<double>& y_hat, const Matrix<double>& y_gt);
double naive_mse_pos(const Matrix<double>& y_hat, const Matrix<double>& y_gt);
double naive_cosine(const Matrix<double>& y_hat, const Matrix<double>& y_gt);
double naive_pearson(const std::vector<double>& a, const std::vector<double>& b);
/// Ranks by counting smaller and equal elements.
std::vector<double> naive_ranks(const std::vector<double>& v);
double naive_spearman(const std::vector<double>& a, const std::vector<double>& b);
double naive_zero_iou(const Matrix<double>& y_hat, const Matrix<double>& y_gt, double tau);
/// Pair-counting over all unordered point pairs.
double naive_ari(const std::vector<int>& a, const std::vector<int>& b);

/// Names: masked_fidelity, cosine, pearson, spearman, zero_iou, ari.
OracleReport oracle_check(const std::string& metric_name, int trials, std::uint64_t seed);
std::vector<std::string> oracle_metric_names();

}  // namespace suica::oracles
