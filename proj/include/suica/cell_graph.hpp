// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "suica/common.hpp"

namespace suica::graph {

/**
 * @brief k-NN graph over spots with its GCN normalization.
 *
 * `neighbors` holds k entries per spot, self first. `adjacency` is
 * D^-1/2 (A + I) D^-1/2 where A is the symmetrized 0/1 k-NN adjacency.
 */
struct CellGraph {
    Index n = 0;
    Index k = 0;
    Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> neighbors;  // n x k
    SparseMatrix<double> adjacency;                                                  // n x n
    std::vector<std::vector<Index>> edges;  // symmetrized neighbor sets, self excluded, ascending
};

/// Brute-force k-NN (self included, ties broken by lower index).
CellGraph build_knn(const Matrix<double>& coords, Index k = 5);

/// D^-1/2 (A + I) D^-1/2 from the graph's symmetrized neighbor sets.
SparseMatrix<double> normalized_adjacency(const CellGraph& graph);

enum class VariationNorm { squared, absolute };

struct TotalVariation {
    Vector<double> per_vertex;
    double total = 0.0;
};

/**
 * Graph total variation of an n x d signal. per_vertex[i] sums
 * ||Z_i - Z_j||^2 (or ||Z_i - Z_j|| for the absolute variant) over the
 * undirected neighbors j of i; each edge therefore counts twice in `total`.
 */
TotalVariation graph_total_variation(const CellGraph& graph, const Matrix<double>& z,
                                     VariationNorm norm = VariationNorm::squared);

/// Population variance of every column. Requires at least two rows.
Vector<double> channelwise_variance(const Matrix<double>& z);

/// "i j weight" lines for the upper triangle (diagonal included) of the adjacency.
void write_edge_list(const std::filesystem::path& path, const CellGraph& graph);

/// CSV with columns spot,gtv for a variation result.
void write_variation_csv(const std::filesystem::path& path, const TotalVariation& tv);

}  // namespace suica::graph
