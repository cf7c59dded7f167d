// SPDX-License-Identifier: Apache-2.0
#include "suica/st_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace suica::data {

namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line) + ": ";
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == ',' || line[i] == '\r')) ++i;
        if (i >= line.size()) break;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != ',' && line[j] != '\r') ++j;
        out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool is_blank_or_comment(std::string_view line) {
    auto fields = split_fields(line);
    return fields.empty() || fields.front().front() == '#' || fields.front().front() == '%';
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open for reading");
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    return out;
}

std::vector<std::string> default_gene_names(Index g) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(g));
    for (Index j = 0; j < g; ++j) names.push_back("g" + std::to_string(j));
    return names;
}

SparseMatrix<double> from_dense(const Matrix<double>& dense) {
    return dense.sparseView(0.0, 0.0);
}

}  // namespace

// ---- STSlice ----------------------------------------------------------------

double STSlice::sparsity() const {
    const double total = static_cast<double>(num_spots()) * static_cast<double>(num_genes());
    if (total == 0.0) return 0.0;
    Index nnz = 0;
    for (Index k = 0; k < expr.outerSize(); ++k)
        for (SparseMatrix<double>::InnerIterator it(expr, k); it; ++it)
            if (it.value() != 0.0) ++nnz;
    return 1.0 - static_cast<double>(nnz) / total;
}

void STSlice::validate(bool allow_negative) const {
    if (coords.cols() != 2)
        throw DataError("coordinates must have 2 columns, got " + std::to_string(coords.cols()));
    if (coords.rows() != expr.rows())
        throw DataError("dimension mismatch: " + std::to_string(coords.rows()) + " coordinate rows vs " +
                        std::to_string(expr.rows()) + " expression rows");
    if (static_cast<Index>(gene_names.size()) != expr.cols())
        throw DataError("dimension mismatch: " + std::to_string(gene_names.size()) + " gene names vs " +
                        std::to_string(expr.cols()) + " expression columns");
    if (labels) {
        if (static_cast<Index>(labels->ids.size()) != expr.rows())
            throw DataError("dimension mismatch: " + std::to_string(labels->ids.size()) + " labels vs " +
                            std::to_string(expr.rows()) + " spots");
        for (int id : labels->ids)
            if (id < 0 || id >= labels->num_categories()) throw DataError("label id out of range");
    }
    if (!coords.allFinite()) throw DataError("non-finite coordinate");
    for (Index k = 0; k < expr.outerSize(); ++k)
        for (SparseMatrix<double>::InnerIterator it(expr, k); it; ++it) {
            if (!std::isfinite(it.value())) throw DataError("non-finite expression value");
            if (!allow_negative && it.value() < 0.0)
                throw DataError("negative expression value at (" + std::to_string(it.row()) + ", " +
                                std::to_string(it.col()) + ")");
        }
}

STSlice STSlice::select_spots(const std::vector<Index>& rows) const {
    STSlice out;
    out.coords.resize(static_cast<Index>(rows.size()), 2);
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Index src = rows[r];
        out.coords.row(static_cast<Index>(r)) = coords.row(src);
        for (SparseMatrix<double>::InnerIterator it(expr, src); it; ++it)
            trips.emplace_back(static_cast<Index>(r), it.col(), it.value());
    }
    out.expr.resize(static_cast<Index>(rows.size()), expr.cols());
    out.expr.setFromTriplets(trips.begin(), trips.end());
    out.gene_names = gene_names;
    if (labels) {
        Labels l;
        l.names = labels->names;
        for (Index r : rows) l.ids.push_back(labels->ids[static_cast<std::size_t>(r)]);
        out.labels = std::move(l);
    }
    return out;
}

STSlice STSlice::select_genes(const std::vector<Index>& cols) const {
    std::vector<Index> remap(static_cast<std::size_t>(expr.cols()), -1);
    for (std::size_t c = 0; c < cols.size(); ++c) remap[static_cast<std::size_t>(cols[c])] = static_cast<Index>(c);
    std::vector<Eigen::Triplet<double>> trips;
    for (Index k = 0; k < expr.outerSize(); ++k)
        for (SparseMatrix<double>::InnerIterator it(expr, k); it; ++it) {
            const Index c = remap[static_cast<std::size_t>(it.col())];
            if (c >= 0) trips.emplace_back(it.row(), c, it.value());
        }
    STSlice out;
    out.coords = coords;
    out.expr.resize(expr.rows(), static_cast<Index>(cols.size()));
    out.expr.setFromTriplets(trips.begin(), trips.end());
    for (Index c : cols) out.gene_names.push_back(gene_names[static_cast<std::size_t>(c)]);
    out.labels = labels;
    return out;
}

void DegradationSpec::validate() const {
    if (kind != DegradationKind::gaussian_noise && !(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("degradation fraction must lie in (0, 1)");
    if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
}

void SyntheticParams::validate() const {
    if (n_spots <= 0 || n_genes <= 0 || n_types <= 0 || signature_genes_per_type <= 0)
        throw ConfigError("synthetic sizes must be positive");
    if (n_types > n_spots) throw ConfigError("n_types must not exceed n_spots");
    if (signature_genes_per_type > n_genes) throw ConfigError("signature_genes_per_type exceeds n_genes");
    if (!(target_sparsity > 0.0 && target_sparsity < 1.0))
        throw ConfigError("target_sparsity must lie in (0, 1)");
}

// ---- I/O -------------------------------------------------------------------

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

SparseMatrix<double> read_triplets(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    Index n = -1, g = -1, nnz = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank_or_comment(line)) continue;
        auto f = split_fields(line);
        if (f.size() != 3 || !parse_number(f[0], n) || !parse_number(f[1], g) || !parse_number(f[2], nnz) || n < 0 ||
            g < 0 || nnz < 0)
            throw DataError(where(path, lineno) + "expected header 'n g nnz'");
        break;
    }
    if (n < 0) throw DataError(path.string() + ": missing 'n g nnz' header");

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(nnz));
    std::set<std::pair<Index, Index>> seen;
    Index entries = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank_or_comment(line)) continue;
        auto f = split_fields(line);
        Index r = 0, c = 0;
        double v = 0.0;
        if (f.size() != 3 || !parse_number(f[0], r) || !parse_number(f[1], c) || !parse_number(f[2], v))
            throw DataError(where(path, lineno) + "unparsable entry '" + line + "'");
        if (r < 0 || r >= n || c < 0 || c >= g)
            throw DataError(where(path, lineno) + "index (" + std::to_string(r) + ", " + std::to_string(c) +
                            ") outside " + std::to_string(n) + " x " + std::to_string(g));
        if (!std::isfinite(v)) throw DataError(where(path, lineno) + "non-finite value");
        if (v < 0.0) throw DataError(where(path, lineno) + "negative entry " + std::string(f[2]));
        if (!seen.emplace(r, c).second) throw DataError(where(path, lineno) + "duplicate entry");
        ++entries;
        if (v != 0.0) trips.emplace_back(r, c, v);
    }
    if (entries != nnz)
        throw DataError(path.string() + ": header declares " + std::to_string(nnz) + " entries, found " +
                        std::to_string(entries));
    SparseMatrix<double> m(n, g);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

Matrix<double> read_coords(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::array<double, 2>> rows;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank_or_comment(line)) continue;
        auto f = split_fields(line);
        std::array<double, 2> xy{};
        const bool ok = f.size() == 2 && parse_number(f[0], xy[0]) && parse_number(f[1], xy[1]);
        if (!ok) {
            if (first && f.size() == 2) {  // header row
                first = false;
                continue;
            }
            throw DataError(where(path, lineno) + "expected two numeric columns");
        }
        first = false;
        rows.push_back(xy);
    }
    Matrix<double> coords(static_cast<Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        coords(static_cast<Index>(i), 0) = rows[i][0];
        coords(static_cast<Index>(i), 1) = rows[i][1];
    }
    return coords;
}

std::vector<std::string> read_names(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<std::string> names;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto f = split_fields(line);
        if (f.empty()) continue;
        if (f.size() != 1) throw DataError(where(path, lineno) + "expected one token per line");
        names.emplace_back(f[0]);
    }
    return names;
}

Labels read_labels(const std::filesystem::path& path) {
    Labels labels;
    std::map<std::string, int> dict;
    for (auto& token : read_names(path)) {
        auto [it, inserted] = dict.emplace(token, static_cast<int>(labels.names.size()));
        if (inserted) labels.names.push_back(token);
        labels.ids.push_back(it->second);
    }
    return labels;
}

STSlice load_slice(const std::filesystem::path& expr_path, const std::filesystem::path& coords_path,
                   const std::optional<std::filesystem::path>& labels_path,
                   const std::optional<std::filesystem::path>& genes_path) {
    STSlice slice;
    slice.expr = read_triplets(expr_path);
    slice.coords = read_coords(coords_path);
    if (slice.coords.rows() != slice.expr.rows())
        throw DataError(coords_path.string() + ": dimension mismatch, " + std::to_string(slice.coords.rows()) +
                        " coordinate rows but " + expr_path.string() + " has " +
                        std::to_string(slice.expr.rows()) + " rows");
    if (genes_path) {
        slice.gene_names = read_names(*genes_path);
        if (static_cast<Index>(slice.gene_names.size()) != slice.expr.cols())
            throw DataError(genes_path->string() + ": dimension mismatch, " +
                            std::to_string(slice.gene_names.size()) + " names for " +
                            std::to_string(slice.expr.cols()) + " genes");
    } else {
        slice.gene_names = default_gene_names(slice.expr.cols());
    }
    if (labels_path) {
        slice.labels = read_labels(*labels_path);
        if (static_cast<Index>(slice.labels->ids.size()) != slice.expr.rows())
            throw DataError(labels_path->string() + ": dimension mismatch, " +
                            std::to_string(slice.labels->ids.size()) + " labels for " +
                            std::to_string(slice.expr.rows()) + " spots");
    }
    slice.validate();
    return slice;
}

void write_triplets(const std::filesystem::path& path, const SparseMatrix<double>& m) {
    auto out = open_out(path);
    Index nnz = 0;
    for (Index k = 0; k < m.outerSize(); ++k)
        for (SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
            if (it.value() != 0.0) ++nnz;
    out << m.rows() << ' ' << m.cols() << ' ' << nnz << '\n';
    for (Index k = 0; k < m.outerSize(); ++k)
        for (SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
            if (it.value() != 0.0) out << it.row() << ' ' << it.col() << ' ' << format_value(it.value()) << '\n';
    if (!out) throw DataError(path.string() + ": write failed");
}

void write_coords(const std::filesystem::path& path, const Matrix<double>& coords) {
    auto out = open_out(path);
    out << "x,y\n";
    for (Index i = 0; i < coords.rows(); ++i)
        out << format_value(coords(i, 0)) << ',' << format_value(coords(i, 1)) << '\n';
    if (!out) throw DataError(path.string() + ": write failed");
}

void write_names(const std::filesystem::path& path, const std::vector<std::string>& names) {
    auto out = open_out(path);
    for (const auto& n : names) out << n << '\n';
    if (!out) throw DataError(path.string() + ": write failed");
}

void write_labels(const std::filesystem::path& path, const Labels& labels) {
    auto out = open_out(path);
    for (int id : labels.ids) out << labels.names[static_cast<std::size_t>(id)] << '\n';
    if (!out) throw DataError(path.string() + ": write failed");
}

void save_slice(const std::filesystem::path& dir, const STSlice& slice) {
    std::filesystem::create_directories(dir);
    write_triplets(dir / "expr.txt", slice.expr);
    write_coords(dir / "coords.csv", slice.coords);
    write_names(dir / "genes.txt", slice.gene_names);
    if (slice.labels) write_labels(dir / "labels.txt", *slice.labels);
}

STSlice load_slice_dir(const std::filesystem::path& dir) {
    std::optional<std::filesystem::path> labels;
    if (std::filesystem::exists(dir / "labels.txt")) labels = dir / "labels.txt";
    std::optional<std::filesystem::path> genes;
    if (std::filesystem::exists(dir / "genes.txt")) genes = dir / "genes.txt";
    return load_slice(dir / "expr.txt", dir / "coords.csv", labels, genes);
}

// ---- preprocessing ----------------------------------------------------------

STSlice filter_empty(const STSlice& slice) {
    std::vector<char> col_used(static_cast<std::size_t>(slice.num_genes()), 0);
    std::vector<Index> rows;
    for (Index r = 0; r < slice.num_spots(); ++r) {
        bool any = false;
        for (SparseMatrix<double>::InnerIterator it(slice.expr, r); it; ++it)
            if (it.value() != 0.0) {
                any = true;
                col_used[static_cast<std::size_t>(it.col())] = 1;
            }
        if (any) rows.push_back(r);
    }
    if (rows.empty()) throw DataError("filter_empty: every spot is empty");
    std::vector<Index> cols;
    for (Index c = 0; c < slice.num_genes(); ++c)
        if (col_used[static_cast<std::size_t>(c)]) cols.push_back(c);
    if (static_cast<Index>(rows.size()) == slice.num_spots() && static_cast<Index>(cols.size()) == slice.num_genes())
        return slice;
    return slice.select_spots(rows).select_genes(cols);
}

NormalizeResult normalize_total(const STSlice& slice, double target_sum, double high_expr_fraction) {
    if (!(high_expr_fraction > 0.0 && high_expr_fraction <= 1.0))
        throw ConfigError("high_expr_fraction must lie in (0, 1]");
    if (!(target_sum > 0.0)) throw ConfigError("target_sum must be positive");

    NormalizeResult result;
    STSlice current = slice;
    std::vector<Index> alive(static_cast<std::size_t>(slice.num_spots()));
    std::iota(alive.begin(), alive.end(), Index{0});

    // Removing a gene shrinks totals, which can push another gene over the
    // threshold; iterate to a fixed point.
    for (;;) {
        const Vector<double> totals = current.expr * Vector<double>::Ones(current.num_genes());
        std::vector<char> remove(static_cast<std::size_t>(current.num_genes()), 0);
        bool any_removed = false;
        for (Index r = 0; r < current.num_spots(); ++r)
            for (SparseMatrix<double>::InnerIterator it(current.expr, r); it; ++it)
                if (it.value() > high_expr_fraction * totals(r)) {
                    remove[static_cast<std::size_t>(it.col())] = 1;
                    any_removed = true;
                }
        std::vector<Index> keep_cols;
        for (Index c = 0; c < current.num_genes(); ++c) {
            if (remove[static_cast<std::size_t>(c)])
                result.removed_genes.push_back(current.gene_names[static_cast<std::size_t>(c)]);
            else
                keep_cols.push_back(c);
        }
        if (keep_cols.empty()) throw DataError("normalize_total: every gene exceeds the high-expression threshold");
        if (any_removed) current = current.select_genes(keep_cols);

        const Vector<double> new_totals = current.expr * Vector<double>::Ones(current.num_genes());
        std::vector<Index> keep_rows;
        std::vector<Index> next_alive;
        for (Index r = 0; r < current.num_spots(); ++r) {
            if (new_totals(r) > 0.0) {
                keep_rows.push_back(r);
                next_alive.push_back(alive[static_cast<std::size_t>(r)]);
            } else {
                result.dropped_spots.push_back(alive[static_cast<std::size_t>(r)]);
            }
        }
        if (keep_rows.empty()) throw DataError("normalize_total: every spot became empty");
        if (static_cast<Index>(keep_rows.size()) != current.num_spots()) current = current.select_spots(keep_rows);
        alive = std::move(next_alive);
        if (!any_removed) break;
    }
    std::sort(result.dropped_spots.begin(), result.dropped_spots.end());

    const Vector<double> totals = current.expr * Vector<double>::Ones(current.num_genes());
    for (Index r = 0; r < current.expr.outerSize(); ++r) {
        const double scale = target_sum / totals(r);
        if (scale == 1.0) continue;
        for (SparseMatrix<double>::InnerIterator it(current.expr, r); it; ++it) it.valueRef() *= scale;
    }
    result.slice = std::move(current);
    return result;
}

// ---- degradations -----------------------------------------------------------

SpatialSplit split_spatial(const STSlice& slice, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    const Index n = slice.num_spots();
    const auto n_train = static_cast<Index>(std::llround(train_fraction * static_cast<double>(n)));
    if (n_train <= 0 || n_train >= n)
        throw DataError("split_spatial: empty partition (n=" + std::to_string(n) + ", train=" +
                        std::to_string(n_train) + ")");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    SpatialSplit split;
    split.train_rows.assign(order.begin(), order.begin() + n_train);
    split.test_rows.assign(order.begin() + n_train, order.end());
    std::sort(split.train_rows.begin(), split.train_rows.end());
    std::sort(split.test_rows.begin(), split.test_rows.end());
    split.train = slice.select_spots(split.train_rows);
    split.test = slice.select_spots(split.test_rows);
    return split;
}

GeneMask mask_genes(const STSlice& slice, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("mask fraction must lie in (0, 1)");
    const Index n = slice.num_spots();
    const Index g = slice.num_genes();
    const Index total = n * g;
    // The epsilon absorbs representation error, e.g. 0.7 * 100 = 69.999...
    const auto n_mute = static_cast<Index>(std::floor(fraction * static_cast<double>(total) + 1e-9));

    std::vector<Index> positions(static_cast<std::size_t>(total));
    std::iota(positions.begin(), positions.end(), Index{0});
    std::mt19937_64 rng(seed);
    for (Index i = 0; i < n_mute; ++i) {
        std::uniform_int_distribution<Index> pick(i, total - 1);
        std::swap(positions[static_cast<std::size_t>(i)], positions[static_cast<std::size_t>(pick(rng))]);
    }

    GeneMask out;
    out.muted = BoolMatrix::Constant(n, g, false);
    for (Index i = 0; i < n_mute; ++i) {
        const Index p = positions[static_cast<std::size_t>(i)];
        out.muted(p / g, p % g) = true;
    }
    std::vector<Eigen::Triplet<double>> trips;
    for (Index r = 0; r < slice.expr.outerSize(); ++r)
        for (SparseMatrix<double>::InnerIterator it(slice.expr, r); it; ++it)
            if (!out.muted(it.row(), it.col())) trips.emplace_back(it.row(), it.col(), it.value());
    out.degraded = slice;
    out.degraded.expr.setZero();
    out.degraded.expr.setFromTriplets(trips.begin(), trips.end());
    return out;
}

STSlice add_noise(const STSlice& slice, double sigma, bool clamp_nonnegative, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
    if (sigma == 0.0) return slice;
    Matrix<double> dense(slice.expr);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    // Row-major draw order so the stream is independent of storage layout.
    for (Index r = 0; r < dense.rows(); ++r)
        for (Index c = 0; c < dense.cols(); ++c) {
            double v = dense(r, c) + noise(rng);
            if (clamp_nonnegative && v < 0.0) v = 0.0;
            dense(r, c) = v;
        }
    STSlice out = slice;
    out.expr = from_dense(dense);
    return out;
}

// ---- synthetic data ---------------------------------------------------------

namespace {

constexpr double kSignatureRate = 12.0;
constexpr double kBackgroundRate = 0.05;

double expected_nonzero(const Matrix<double>& rates) {
    return (1.0 - (-rates.array()).exp()).mean();
}

}  // namespace

STSlice generate_synthetic(const SyntheticParams& params) {
    params.validate();
    const Index n = params.n_spots;
    const Index g = params.n_genes;
    const Index t = params.n_types;
    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    STSlice slice;
    slice.coords.resize(n, 2);
    for (Index i = 0; i < n; ++i) {
        slice.coords(i, 0) = unit(rng);
        slice.coords(i, 1) = unit(rng);
    }
    Matrix<double> centers(t, 2);
    for (Index c = 0; c < t; ++c) {
        centers(c, 0) = unit(rng);
        centers(c, 1) = unit(rng);
    }

    std::vector<int> type(static_cast<std::size_t>(n));
    std::vector<Index> counts(static_cast<std::size_t>(t), 0);
    for (Index i = 0; i < n; ++i) {
        Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < t; ++c) {
            const double d = (slice.coords.row(i) - centers.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        type[static_cast<std::size_t>(i)] = static_cast<int>(best);
        ++counts[static_cast<std::size_t>(best)];
    }
    // Every type gets at least one spot: an empty type claims the closest spot
    // whose type can spare it.
    for (Index c = 0; c < t; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) continue;
        Index best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index i = 0; i < n; ++i) {
            if (counts[static_cast<std::size_t>(type[static_cast<std::size_t>(i)])] < 2) continue;
            const double d = (slice.coords.row(i) - centers.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        --counts[static_cast<std::size_t>(type[static_cast<std::size_t>(best)])];
        type[static_cast<std::size_t>(best)] = static_cast<int>(c);
        ++counts[static_cast<std::size_t>(c)];
    }

    std::vector<Index> gene_order(static_cast<std::size_t>(g));
    std::iota(gene_order.begin(), gene_order.end(), Index{0});
    std::shuffle(gene_order.begin(), gene_order.end(), rng);

    Vector<double> background(g);
    for (Index j = 0; j < g; ++j) background(j) = kBackgroundRate * (0.5 + unit(rng));
    Matrix<double> signature = Matrix<double>::Zero(t, g);
    const Index s = params.signature_genes_per_type;
    for (Index c = 0; c < t; ++c)
        for (Index k = 0; k < s; ++k) {
            const Index j = gene_order[static_cast<std::size_t>((c * s + k) % g)];
            signature(c, j) = kSignatureRate * (0.5 + unit(rng));
        }
    // Smooth spatial modulation of signature intensity.
    const double phase_x = unit(rng) * 6.283185307179586;
    const double phase_y = unit(rng) * 6.283185307179586;

    Matrix<double> rates(n, g);
    for (Index i = 0; i < n; ++i) {
        const double mod = 0.75 + 0.25 * std::sin(6.283185307179586 * slice.coords(i, 0) + phase_x) *
                                       std::cos(6.283185307179586 * slice.coords(i, 1) + phase_y);
        rates.row(i) = background.transpose() + mod * signature.row(type[static_cast<std::size_t>(i)]);
    }

    const double target_nonzero = 1.0 - params.target_sparsity;
    double p_nonzero = expected_nonzero(rates);
    if (p_nonzero < target_nonzero) {
        // Raise the background until the undropped matrix is dense enough.
        double lo = 1.0, hi = 2.0;
        auto scaled = [&](double f) {
            Matrix<double> r = rates;
            r.rowwise() += ((f - 1.0) * background).transpose();
            return r;
        };
        while (expected_nonzero(scaled(hi)) < target_nonzero && hi < 1e8) hi *= 2.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (expected_nonzero(scaled(mid)) < target_nonzero ? lo : hi) = mid;
        }
        rates = scaled(hi);
        p_nonzero = expected_nonzero(rates);
    }
    const double keep = std::min(1.0, target_nonzero / p_nonzero);

    std::vector<Eigen::Triplet<double>> trips;
    std::bernoulli_distribution kept(keep);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < g; ++j) {
            std::poisson_distribution<int> draw(rates(i, j));
            const int count = draw(rng);
            const bool survive = kept(rng);
            if (count > 0 && survive) trips.emplace_back(i, j, static_cast<double>(count));
        }
    slice.expr.resize(n, g);
    slice.expr.setFromTriplets(trips.begin(), trips.end());
    slice.gene_names = default_gene_names(g);
    Labels labels;
    for (Index c = 0; c < t; ++c) labels.names.push_back("type" + std::to_string(c));
    labels.ids = std::move(type);
    slice.labels = std::move(labels);

    const double realized = slice.sparsity();
    if (std::abs(realized - params.target_sparsity) > 0.05)
        throw DataError("generate_synthetic: realized sparsity " + format_value(realized) + " outside target " +
                        format_value(params.target_sparsity) + " +/- 0.05");
    return slice;
}

}  // namespace suica::data
