// SPDX-License-Identifier: Apache-2.0
#include "suica/cell_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "suica/st_data.hpp"

namespace suica::graph {

CellGraph build_knn(const Matrix<double>& coords, Index k) {
    const Index n = coords.rows();
    if (coords.cols() != 2) throw DataError("build_knn: coordinates must be n x 2");
    if (k < 1) throw ConfigError("build_knn: k must be >= 1");
    if (k > n) throw ConfigError("build_knn: k=" + std::to_string(k) + " exceeds spot count " + std::to_string(n));
    if (!coords.allFinite()) throw DataError("build_knn: non-finite coordinates");

    CellGraph graph;
    graph.n = n;
    graph.k = k;
    graph.neighbors.resize(n, k);
    std::vector<std::pair<double, Index>> cand(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
    for (Index i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            cand[c++] = {(coords.row(i) - coords.row(j)).squaredNorm(), j};
        }
        // Self is always first even when duplicates sit at distance 0.
        const auto take = static_cast<std::ptrdiff_t>(k - 1);
        std::partial_sort(cand.begin(), cand.begin() + take, cand.end());
        graph.neighbors(i, 0) = i;
        for (Index m = 1; m < k; ++m) graph.neighbors(i, m) = cand[static_cast<std::size_t>(m - 1)].second;
    }

    std::vector<std::set<Index>> sym(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        for (Index m = 1; m < k; ++m) {
            const Index j = graph.neighbors(i, m);
            sym[static_cast<std::size_t>(i)].insert(j);
            sym[static_cast<std::size_t>(j)].insert(i);
        }
    graph.edges.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        graph.edges[static_cast<std::size_t>(i)].assign(sym[static_cast<std::size_t>(i)].begin(),
                                                        sym[static_cast<std::size_t>(i)].end());
    graph.adjacency = normalized_adjacency(graph);
    return graph;
}

SparseMatrix<double> normalized_adjacency(const CellGraph& graph) {
    const Index n = graph.n;
    Vector<double> inv_sqrt_deg(n);
    for (Index i = 0; i < n; ++i)
        inv_sqrt_deg(i) = 1.0 / std::sqrt(static_cast<double>(graph.edges[static_cast<std::size_t>(i)].size() + 1));
    std::vector<Eigen::Triplet<double>> trips;
    for (Index i = 0; i < n; ++i) {
        trips.emplace_back(i, i, inv_sqrt_deg(i) * inv_sqrt_deg(i));
        for (Index j : graph.edges[static_cast<std::size_t>(i)]) trips.emplace_back(i, j, inv_sqrt_deg(i) * inv_sqrt_deg(j));
    }
    SparseMatrix<double> a(n, n);
    a.setFromTriplets(trips.begin(), trips.end());
    return a;
}

TotalVariation graph_total_variation(const CellGraph& graph, const Matrix<double>& z, VariationNorm norm) {
    if (z.rows() != graph.n)
        throw DataError("graph_total_variation: signal has " + std::to_string(z.rows()) + " rows, graph has " +
                        std::to_string(graph.n) + " vertices");
    TotalVariation tv;
    tv.per_vertex = Vector<double>::Zero(graph.n);
    for (Index i = 0; i < graph.n; ++i) {
        double acc = 0.0;
        for (Index j : graph.edges[static_cast<std::size_t>(i)]) {
            const double d2 = (z.row(i) - z.row(j)).squaredNorm();
            acc += norm == VariationNorm::squared ? d2 : std::sqrt(d2);
        }
        tv.per_vertex(i) = acc;
    }
    tv.total = tv.per_vertex.sum();
    return tv;
}

Vector<double> channelwise_variance(const Matrix<double>& z) {
    if (z.rows() < 2) throw DataError("channelwise_variance: need at least 2 rows");
    const Eigen::RowVectorXd mean = z.colwise().mean();
    return ((z.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(z.rows())).transpose();
}

void write_edge_list(const std::filesystem::path& path, const CellGraph& graph) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    for (Index i = 0; i < graph.adjacency.outerSize(); ++i)
        for (SparseMatrix<double>::InnerIterator it(graph.adjacency, i); it; ++it)
            if (it.col() >= i) out << i << ' ' << it.col() << ' ' << data::format_value(it.value()) << '\n';
}

void write_variation_csv(const std::filesystem::path& path, const TotalVariation& tv) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "spot,gtv\n";
    for (Index i = 0; i < tv.per_vertex.size(); ++i) out << i << ',' << data::format_value(tv.per_vertex(i)) << '\n';
}

}  // namespace suica::graph
