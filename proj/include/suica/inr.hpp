// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "suica/neural_core.hpp"

namespace suica::inr {

enum class Backbone { ffn, siren };

Backbone parse_backbone(const std::string& name);
std::string to_string(Backbone b);

/// Per-axis bounds of the training coordinates.
struct CoordBounds {
    std::array<double, 2> min{0.0, 0.0};
    std::array<double, 2> max{1.0, 1.0};

    static CoordBounds of(const Matrix<double>& coords);
    void validate() const;
};

/// Affine map of each axis from [min, max] onto [-1, 1]. Points outside the
/// bounds map outside [-1, 1] and are not clamped.
Matrix<double> normalize_coords(const Matrix<double>& coords, const CoordBounds& bounds);

struct InrOptions {
    Backbone backbone = Backbone::siren;
    Index hidden_layers = 4;
    Index hidden_width = 256;
    double omega = 30.0;
    nn::FourierOptions fourier{};
    Index epochs = 1000;
    double lr = 1e-4;
    Index batch_size = 0;  // 0: full batch
    std::uint64_t seed = 0;
};

struct InrModel {
    Backbone backbone = Backbone::siren;
    std::vector<nn::LayerSpec> specs;
    nn::ParamSet<float> params;
    double omega = 30.0;
    CoordBounds bounds;
    std::vector<double> loss_trace;

    Index out_dim() const { return specs.back().out_dim; }
};

/**
 * Layer stack for a coordinate network with `out_dim` outputs.
 * siren: sine(2 -> w), (hidden_layers - 1) x sine(w -> w), dense(w -> out).
 * ffn: relu(2m -> w), (hidden_layers - 1) x relu(w -> w), dense(w -> out),
 * fed by a Fourier mapping of size m.
 */
std::vector<nn::LayerSpec> inr_specs(const InrOptions& options, Index out_dim,
                                     nn::Activation head = nn::Activation::identity);

InrModel make_inr(const CoordBounds& bounds, Index out_dim, const InrOptions& options,
                  nn::Activation head = nn::Activation::identity);

/// Evaluates the network at raw (unnormalized) coordinates.
Matrix<double> inr_forward(const InrModel& model, const Matrix<double>& coords);
Matrix<float> inr_forward_float(const InrModel& model, const Matrix<double>& coords);

/// True if any coordinate falls outside the training bounds.
bool extrapolates(const InrModel& model, const Matrix<double>& coords);

/// Element-wise mean squared error between embedding matrices.
double embd_loss(const Matrix<double>& z_hat, const Matrix<double>& z_gt);

/**
 * Fits the coordinate network to `targets` with mean squared error. Used for
 * embedding regression and, with a relu head, for direct expression
 * regression.
 */
InrModel train_inr(const Matrix<double>& coords, const Matrix<double>& targets, const InrOptions& options,
                   nn::Activation head = nn::Activation::identity);

/// Median nearest-neighbor spacing divided by the bounding-box diagonal.
double spacing_ratio(const Matrix<double>& coords);

/// siren when spacing_ratio > threshold (spatially sparse), ffn otherwise.
Backbone choose_backbone(const Matrix<double>& coords, double threshold = 0.01);

/// Writes the parameter checkpoint to `path` and the coordinate bounds to `path` + ".bounds".
void save_inr(const std::filesystem::path& path, const InrModel& model);
InrModel load_inr(const std::filesystem::path& path, Index out_dim, const InrOptions& options,
                  nn::Activation head = nn::Activation::identity);

}  // namespace suica::inr
