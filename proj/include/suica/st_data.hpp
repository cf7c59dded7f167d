// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "suica/common.hpp"

namespace suica::data {

/// Categorical cell-type labels: one id per spot indexing into `names`.
struct Labels {
    std::vector<int> ids;
    std::vector<std::string> names;

    Index num_categories() const { return static_cast<Index>(names.size()); }
    bool operator==(const Labels&) const = default;
};

/**
 * @brief A spatial transcriptomics slice: n spots with 2D coordinates and a
 * sparse n x g expression matrix.
 *
 * Slices are plain values. Every operation in this module returns a new
 * slice and leaves its inputs untouched.
 */
struct STSlice {
    Matrix<double> coords;            // n x 2
    SparseMatrix<double> expr;        // n x g
    std::vector<std::string> gene_names;
    std::optional<Labels> labels;

    Index num_spots() const { return expr.rows(); }
    Index num_genes() const { return expr.cols(); }
    double sparsity() const;

    /// Checks shape consistency, finiteness and (unless allowed) nonnegativity.
    void validate(bool allow_negative = false) const;

    /// Rows `rows` of this slice, in the given order.
    STSlice select_spots(const std::vector<Index>& rows) const;
    STSlice select_genes(const std::vector<Index>& cols) const;
};

enum class DegradationKind { spatial_split, gene_mask, gaussian_noise };

struct DegradationSpec {
    DegradationKind kind = DegradationKind::spatial_split;
    double fraction = 0.8;
    double sigma = 1.0;
    bool clamp_nonnegative = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticParams {
    Index n_spots = 1000;
    Index n_genes = 300;
    Index n_types = 5;
    double target_sparsity = 0.9;
    Index signature_genes_per_type = 20;
    std::uint64_t seed = 7;

    void validate() const;
    bool operator==(const SyntheticParams&) const = default;
};

// ---- I/O -------------------------------------------------------------------

/**
 * Reads a slice from a sparse triplet expression file ("n g nnz" header, then
 * "row col value" lines, 0-indexed), a coordinate CSV/TSV and optional label
 * and gene-name lists. Errors carry file:line context.
 */
STSlice load_slice(const std::filesystem::path& expr_path,
                   const std::filesystem::path& coords_path,
                   const std::optional<std::filesystem::path>& labels_path = std::nullopt,
                   const std::optional<std::filesystem::path>& genes_path = std::nullopt);

SparseMatrix<double> read_triplets(const std::filesystem::path& path);
Matrix<double> read_coords(const std::filesystem::path& path);
Labels read_labels(const std::filesystem::path& path);
std::vector<std::string> read_names(const std::filesystem::path& path);

/// Values are written with 9 significant digits.
void write_triplets(const std::filesystem::path& path, const SparseMatrix<double>& m);
void write_coords(const std::filesystem::path& path, const Matrix<double>& coords);
void write_labels(const std::filesystem::path& path, const Labels& labels);
void write_names(const std::filesystem::path& path, const std::vector<std::string>& names);

/// Writes expr.txt, coords.csv, genes.txt and (if present) labels.txt into `dir`.
void save_slice(const std::filesystem::path& dir, const STSlice& slice);
/// Inverse of save_slice.
STSlice load_slice_dir(const std::filesystem::path& dir);

std::string format_value(double v);

// ---- preprocessing ----------------------------------------------------------

/// Drops all-zero spots and all-zero genes. Throws DataError if nothing remains.
STSlice filter_empty(const STSlice& slice);

struct NormalizeResult {
    STSlice slice;
    std::vector<std::string> removed_genes;
    std::vector<Index> dropped_spots;  // indices into the input slice
};

/**
 * Removes overly expressed genes, then scales every spot to `target_sum`.
 *
 * A gene is removed when it holds more than `high_expr_fraction` of some
 * spot's total. Removal is repeated until no gene qualifies, so a second
 * application is a no-op. Spots left empty by the removal are dropped and
 * reported.
 */
NormalizeResult normalize_total(const STSlice& slice, double target_sum = 1e4,
                                double high_expr_fraction = 0.5);

// ---- degradations -----------------------------------------------------------

struct SpatialSplit {
    STSlice train;
    STSlice test;
    std::vector<Index> train_rows;
    std::vector<Index> test_rows;
};

/// Disjoint spot partition with |train| = round(train_fraction * n).
SpatialSplit split_spatial(const STSlice& slice, double train_fraction, std::uint64_t seed);

struct GeneMask {
    STSlice degraded;
    BoolMatrix muted;  // n x g, true where an element was set to 0
};

/// Sets floor(fraction * n * g) uniformly chosen matrix elements to zero.
GeneMask mask_genes(const STSlice& slice, double fraction, std::uint64_t seed);

/// Adds i.i.d. N(0, sigma^2) to every element (zeros included).
STSlice add_noise(const STSlice& slice, double sigma, bool clamp_nonnegative, std::uint64_t seed);

// ---- synthetic data ---------------------------------------------------------

/**
 * Desk-scale zero-inflated slice. Spots are uniform in the unit square and
 * typed by their nearest region center. Each type raises the Poisson rate of
 * its signature genes over a shared background; Bernoulli dropout is then
 * calibrated so the realized zero fraction lands within 0.05 of the target.
 */
STSlice generate_synthetic(const SyntheticParams& params);

}  // namespace suica::data
