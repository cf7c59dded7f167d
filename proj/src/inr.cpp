// SPDX-License-Identifier: Apache-2.0
#include "suica/inr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "suica/gae.hpp"
#include "suica/st_data.hpp"

namespace suica::inr {

using nn::Activation;
using nn::LayerKind;
using nn::LayerSpec;

Backbone parse_backbone(const std::string& name) {
    if (name == "ffn") return Backbone::ffn;
    if (name == "siren") return Backbone::siren;
    throw ConfigError("unknown backbone '" + name + "'");
}

std::string to_string(Backbone b) { return b == Backbone::ffn ? "ffn" : "siren"; }

CoordBounds CoordBounds::of(const Matrix<double>& coords) {
    if (coords.rows() == 0 || coords.cols() != 2) throw DataError("coordinate bounds need a non-empty n x 2 matrix");
    CoordBounds b;
    for (Index a = 0; a < 2; ++a) {
        b.min[static_cast<std::size_t>(a)] = coords.col(a).minCoeff();
        b.max[static_cast<std::size_t>(a)] = coords.col(a).maxCoeff();
    }
    b.validate();
    return b;
}

void CoordBounds::validate() const {
    for (std::size_t a = 0; a < 2; ++a) {
        if (!std::isfinite(min[a]) || !std::isfinite(max[a])) throw DataError("non-finite coordinate bounds");
        if (!(min[a] < max[a])) throw DataError("degenerate coordinate bounds on axis " + std::to_string(a));
    }
}

Matrix<double> normalize_coords(const Matrix<double>& coords, const CoordBounds& bounds) {
    bounds.validate();
    if (coords.cols() != 2) throw DataError("normalize_coords: coordinates must be n x 2");
    Matrix<double> out(coords.rows(), 2);
    for (Index a = 0; a < 2; ++a) {
        const auto i = static_cast<std::size_t>(a);
        const double mid = 0.5 * (bounds.min[i] + bounds.max[i]);
        const double half = 0.5 * (bounds.max[i] - bounds.min[i]);
        out.col(a) = (coords.col(a).array() - mid) / half;
    }
    return out;
}

std::vector<LayerSpec> inr_specs(const InrOptions& options, Index out_dim, Activation head) {
    if (options.hidden_layers < 1 || options.hidden_width < 1) throw ConfigError("INR needs at least one hidden layer");
    std::vector<LayerSpec> specs;
    const Index w = options.hidden_width;
    if (options.backbone == Backbone::siren) {
        specs.push_back({LayerKind::dense, 2, w, Activation::sine, options.omega});
        for (Index l = 1; l < options.hidden_layers; ++l) specs.push_back({LayerKind::dense, w, w, Activation::sine, options.omega});
    } else {
        specs.push_back({LayerKind::dense, 2 * options.fourier.mapping_size, w, Activation::relu});
        for (Index l = 1; l < options.hidden_layers; ++l) specs.push_back({LayerKind::dense, w, w, Activation::relu});
    }
    specs.push_back({LayerKind::dense, w, out_dim, head});
    return specs;
}

InrModel make_inr(const CoordBounds& bounds, Index out_dim, const InrOptions& options, Activation head) {
    bounds.validate();
    InrModel model;
    model.backbone = options.backbone;
    model.omega = options.omega;
    model.bounds = bounds;
    model.specs = inr_specs(options, out_dim, head);
    model.params = nn::init_params<float>(
        model.specs, options.backbone == Backbone::siren ? nn::InitScheme::siren : nn::InitScheme::ffn, options.seed,
        options.fourier);
    return model;
}

Matrix<float> inr_forward_float(const InrModel& model, const Matrix<double>& coords) {
    const Matrix<float> x = normalize_coords(coords, model.bounds).cast<float>();
    return nn::evaluate(model.params, model.specs, x);
}

Matrix<double> inr_forward(const InrModel& model, const Matrix<double>& coords) {
    return inr_forward_float(model, coords).cast<double>();
}

bool extrapolates(const InrModel& model, const Matrix<double>& coords) {
    for (Index i = 0; i < coords.rows(); ++i)
        for (Index a = 0; a < 2; ++a)
            if (coords(i, a) < model.bounds.min[static_cast<std::size_t>(a)] ||
                coords(i, a) > model.bounds.max[static_cast<std::size_t>(a)])
                return true;
    return false;
}

double embd_loss(const Matrix<double>& z_hat, const Matrix<double>& z_gt) {
    if (z_hat.rows() != z_gt.rows() || z_hat.cols() != z_gt.cols()) throw DataError("embd_loss: shape mismatch");
    return (z_hat - z_gt).squaredNorm() / static_cast<double>(z_hat.size());
}

InrModel train_inr(const Matrix<double>& coords, const Matrix<double>& targets, const InrOptions& options,
                   Activation head) {
    if (coords.rows() != targets.rows())
        throw DataError("train_inr: " + std::to_string(coords.rows()) + " coordinates for " +
                        std::to_string(targets.rows()) + " targets");
    InrModel model = make_inr(CoordBounds::of(coords), targets.cols(), options, head);
    if (options.epochs <= 0) return model;

    const Matrix<float> x = normalize_coords(coords, model.bounds).cast<float>();
    const Matrix<float> y = targets.cast<float>();
    auto state = nn::AdamState<float>::like(model.params);
    const Index n = x.rows();
    const bool full = options.batch_size <= 0 || options.batch_size >= n;
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(options.seed ^ 0x5bd1e995ULL);
    model.loss_trace.reserve(static_cast<std::size_t>(options.epochs));

    for (Index epoch = 0; epoch < options.epochs; ++epoch) {
        try {
            if (full) {
                auto acts = nn::forward(model.params, model.specs, x);
                auto loss = gae::gae_loss_value<float>(acts.output, y);
                model.loss_trace.push_back(loss.value);
                auto back = nn::backward(model.params, model.specs, acts, loss.grad);
                nn::adam_step(model.params, back.grads, state, options.lr);
            } else {
                std::shuffle(order.begin(), order.end(), rng);
                double epoch_loss = 0.0;
                for (Index start = 0; start < n; start += options.batch_size) {
                    const Index len = std::min(options.batch_size, n - start);
                    Matrix<float> xb(len, x.cols()), yb(len, y.cols());
                    for (Index r = 0; r < len; ++r) {
                        xb.row(r) = x.row(order[static_cast<std::size_t>(start + r)]);
                        yb.row(r) = y.row(order[static_cast<std::size_t>(start + r)]);
                    }
                    auto acts = nn::forward(model.params, model.specs, xb);
                    auto loss = gae::gae_loss_value<float>(acts.output, yb);
                    epoch_loss += loss.value * static_cast<double>(len);
                    auto back = nn::backward(model.params, model.specs, acts, loss.grad);
                    nn::adam_step(model.params, back.grads, state, options.lr);
                }
                model.loss_trace.push_back(epoch_loss / static_cast<double>(n));
            }
        } catch (const NumericalError& e) {
            throw NumericalError("INR epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(model.loss_trace.back()))
            throw NumericalError("INR epoch " + std::to_string(epoch) + ": non-finite loss");
    }
    return model;
}

double spacing_ratio(const Matrix<double>& coords) {
    const Index n = coords.rows();
    if (n < 2) return 1.0;
    std::vector<double> nearest(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < n; ++j)
            if (j != i) best = std::min(best, (coords.row(i) - coords.row(j)).squaredNorm());
        nearest[static_cast<std::size_t>(i)] = std::sqrt(best);
    }
    auto mid = nearest.begin() + static_cast<std::ptrdiff_t>(nearest.size() / 2);
    std::nth_element(nearest.begin(), mid, nearest.end());
    const double diameter = (coords.colwise().maxCoeff() - coords.colwise().minCoeff()).norm();
    return diameter > 0.0 ? *mid / diameter : 1.0;
}

Backbone choose_backbone(const Matrix<double>& coords, double threshold) {
    return spacing_ratio(coords) > threshold ? Backbone::siren : Backbone::ffn;
}

void save_inr(const std::filesystem::path& path, const InrModel& model) {
    nn::save_params(path, model.specs, model.params);
    std::ofstream out(path.string() + ".bounds", std::ios::binary);
    if (!out) throw DataError(path.string() + ".bounds: cannot open for writing");
    out << "backbone " << to_string(model.backbone) << '\n';
    for (std::size_t a = 0; a < 2; ++a) {
        char lo[32], hi[32];
        std::snprintf(lo, sizeof lo, "%.17g", model.bounds.min[a]);
        std::snprintf(hi, sizeof hi, "%.17g", model.bounds.max[a]);
        out << "axis " << a << ' ' << lo << ' ' << hi << '\n';
    }
}

InrModel load_inr(const std::filesystem::path& path, Index out_dim, const InrOptions& options, Activation head) {
    std::ifstream in(path.string() + ".bounds");
    if (!in) throw DataError(path.string() + ".bounds: cannot open for reading");
    std::string word, backbone;
    if (!(in >> word >> backbone) || word != "backbone") throw DataError(path.string() + ".bounds: bad header");
    InrOptions opts = options;
    opts.backbone = parse_backbone(backbone);
    InrModel model;
    for (std::size_t a = 0; a < 2; ++a) {
        std::size_t idx = 0;
        if (!(in >> word >> idx >> model.bounds.min[a] >> model.bounds.max[a]) || word != "axis" || idx != a)
            throw DataError(path.string() + ".bounds: bad axis line");
    }
    model.bounds.validate();
    model.backbone = opts.backbone;
    model.omega = opts.omega;
    model.specs = inr_specs(opts, out_dim, head);
    model.params = nn::load_params<float>(path, model.specs);
    if (model.backbone == Backbone::ffn && !model.params.fourier)
        throw DataError(path.string() + ": ffn checkpoint lacks a Fourier matrix");
    return model;
}

}  // namespace suica::inr
