// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "suica/cell_graph.hpp"
#include "suica/neural_core.hpp"
#include "suica/st_data.hpp"

namespace suica::gae {

struct GaeOptions {
    Index hidden = 512;
    Index latent_dim = 32;
    bool use_graph = true;  // false: dense encoder (plain autoencoder)
    Index epochs = 200;
    double lr = 1e-5;
    double head_bias = 0.5;  // initial bias of the decoder's ReLU output layer
    std::uint64_t seed = 0;
};

/**
 * @brief Graph-augmented autoencoder.
 *
 * Encoder: gcn(g -> hidden, relu) -> gcn(hidden -> latent, identity), or the
 * dense equivalent without a graph. Decoder: dense(latent -> hidden, relu) ->
 * dense(hidden -> g, relu). The graph only ever enters the encoder.
 */
struct GaeModel {
    std::vector<nn::LayerSpec> encoder;
    std::vector<nn::LayerSpec> decoder;
    nn::ParamSet<float> encoder_params;
    nn::ParamSet<float> decoder_params;
    Index latent_dim = 32;
    std::vector<double> loss_trace;

    bool uses_graph() const;
    Index num_genes() const { return encoder.front().in_dim; }
    void validate() const;
};

std::vector<nn::LayerSpec> encoder_specs(Index n_genes, Index hidden, Index latent_dim, bool use_graph);
std::vector<nn::LayerSpec> decoder_specs(Index n_genes, Index hidden, Index latent_dim);

/// Freshly initialized (He) model.
GaeModel make_gae(Index n_genes, const GaeOptions& options);

/// n x latent embeddings z_gt. `graph` is required iff the encoder uses it.
Matrix<double> encode(const GaeModel& model, const data::STSlice& slice, const graph::CellGraph* graph);
Matrix<double> decode(const GaeModel& model, const Matrix<double>& z);

/// Mean squared error over every element.
double gae_loss(const Matrix<double>& y_hat, const Matrix<double>& y_gt);

template <class Scalar>
nn::LossValue<Scalar> gae_loss_value(const Matrix<Scalar>& y_hat, const Matrix<Scalar>& y_gt);

/// Full-batch Adam on the self-regression loss. epochs == 0 returns the initial model.
GaeModel train_gae(const data::STSlice& slice, const graph::CellGraph* graph, const GaeOptions& options);

void save_gae(const std::filesystem::path& dir, const GaeModel& model);
GaeModel load_gae(const std::filesystem::path& dir, Index n_genes, const GaeOptions& options);

/// CSV "epoch,loss".
void write_loss_trace(const std::filesystem::path& path, const std::vector<double>& trace);

Matrix<float> dense_expression(const data::STSlice& slice);

}  // namespace suica::gae
