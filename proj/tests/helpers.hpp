// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "suica/st_data.hpp"

namespace suica::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("suica_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline SparseMatrix<double> sparse_of(const Matrix<double>& m) { return m.sparseView(); }

inline data::STSlice slice_of(const Matrix<double>& expr, const Matrix<double>& coords) {
    data::STSlice s;
    s.expr = sparse_of(expr);
    s.coords = coords;
    for (Index j = 0; j < expr.cols(); ++j) s.gene_names.push_back("g" + std::to_string(j));
    return s;
}

inline Matrix<double> random_matrix(Index r, Index c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix<double> m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
}

}  // namespace suica::testing
