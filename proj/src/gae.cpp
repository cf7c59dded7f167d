// SPDX-License-Identifier: Apache-2.0
#include "suica/gae.hpp"

#include <cmath>
#include <fstream>

namespace suica::gae {

using nn::Activation;
using nn::LayerKind;
using nn::LayerSpec;

std::vector<LayerSpec> encoder_specs(Index n_genes, Index hidden, Index latent_dim, bool use_graph) {
    const LayerKind kind = use_graph ? LayerKind::gcn : LayerKind::dense;
    return {{kind, n_genes, hidden, Activation::relu}, {kind, hidden, latent_dim, Activation::identity}};
}

std::vector<LayerSpec> decoder_specs(Index n_genes, Index hidden, Index latent_dim) {
    return {{LayerKind::dense, latent_dim, hidden, Activation::relu},
            {LayerKind::dense, hidden, n_genes, Activation::relu}};
}

bool GaeModel::uses_graph() const {
    for (const auto& s : encoder)
        if (s.kind == LayerKind::gcn) return true;
    return false;
}

void GaeModel::validate() const {
    nn::validate_specs(encoder);
    nn::validate_specs(decoder);
    if (encoder.back().out_dim != latent_dim || decoder.front().in_dim != latent_dim)
        throw ConfigError("encoder output and decoder input must equal latent_dim");
    for (const auto& s : decoder)
        if (s.kind == LayerKind::gcn) throw ConfigError("decoder must not contain gcn layers");
    if (decoder.back().activation != Activation::relu) throw ConfigError("decoder head must be relu");
}

GaeModel make_gae(Index n_genes, const GaeOptions& options) {
    if (options.latent_dim <= 0 || options.hidden <= 0) throw ConfigError("GAE dimensions must be positive");
    if (!std::isfinite(options.head_bias)) throw ConfigError("GAE head bias must be finite");
    GaeModel model;
    model.latent_dim = options.latent_dim;
    model.encoder = encoder_specs(n_genes, options.hidden, options.latent_dim, options.use_graph);
    model.decoder = decoder_specs(n_genes, options.hidden, options.latent_dim);
    model.encoder_params = nn::init_params<float>(model.encoder, nn::InitScheme::he, options.seed);
    model.decoder_params = nn::init_params<float>(model.decoder, nn::InitScheme::he, options.seed + 0x9e3779b9ULL);
    // The hidden ReLU output is nonnegative, so with a zero bias an output
    // column tends to share one sign across all spots; negative columns never
    // receive gradient. A positive head bias starts every column active.
    model.decoder_params.biases.back().setConstant(static_cast<float>(options.head_bias));
    model.validate();
    return model;
}

Matrix<float> dense_expression(const data::STSlice& slice) {
    return Matrix<double>(slice.expr).cast<float>();
}

namespace {

void check_inputs(const GaeModel& model, const data::STSlice& slice, const graph::CellGraph* graph) {
    if (slice.num_genes() != model.num_genes())
        throw DataError("GAE expects " + std::to_string(model.num_genes()) + " genes, slice has " +
                        std::to_string(slice.num_genes()));
    if (model.uses_graph()) {
        if (graph == nullptr) throw DataError("graph encoder requires a cell graph");
        if (graph->n != slice.num_spots()) throw DataError("cell graph does not match the slice");
    }
}

}  // namespace

Matrix<double> encode(const GaeModel& model, const data::STSlice& slice, const graph::CellGraph* graph) {
    check_inputs(model, slice, graph);
    SparseMatrix<float> adj;
    if (model.uses_graph()) adj = graph->adjacency.cast<float>();
    return nn::evaluate(model.encoder_params, model.encoder, dense_expression(slice),
                        model.uses_graph() ? &adj : nullptr)
        .cast<double>();
}

Matrix<double> decode(const GaeModel& model, const Matrix<double>& z) {
    if (z.cols() != model.latent_dim)
        throw DataError("decode: embeddings have " + std::to_string(z.cols()) + " columns, expected " +
                        std::to_string(model.latent_dim));
    return nn::evaluate(model.decoder_params, model.decoder, Matrix<float>(z.cast<float>())).cast<double>();
}

template <class Scalar>
nn::LossValue<Scalar> gae_loss_value(const Matrix<Scalar>& y_hat, const Matrix<Scalar>& y_gt) {
    if (y_hat.rows() != y_gt.rows() || y_hat.cols() != y_gt.cols())
        throw DataError("gae_loss: shape mismatch");
    const double count = static_cast<double>(y_hat.size());
    nn::LossValue<Scalar> out;
    const Matrix<Scalar> diff = y_hat - y_gt;
    out.value = diff.template cast<double>().squaredNorm() / count;
    out.grad = diff * static_cast<Scalar>(2.0 / count);
    return out;
}

double gae_loss(const Matrix<double>& y_hat, const Matrix<double>& y_gt) {
    return gae_loss_value<double>(y_hat, y_gt).value;
}

template nn::LossValue<float> gae_loss_value<float>(const Matrix<float>&, const Matrix<float>&);
template nn::LossValue<double> gae_loss_value<double>(const Matrix<double>&, const Matrix<double>&);

GaeModel train_gae(const data::STSlice& slice, const graph::CellGraph* graph, const GaeOptions& options) {
    GaeModel model = make_gae(slice.num_genes(), options);
    check_inputs(model, slice, graph);
    if (options.epochs <= 0) return model;

    const Matrix<float> y = dense_expression(slice);
    SparseMatrix<float> adj;
    const SparseMatrix<float>* adj_ptr = nullptr;
    if (model.uses_graph()) {
        adj = graph->adjacency.cast<float>();
        adj_ptr = &adj;
    }
    auto enc_state = nn::AdamState<float>::like(model.encoder_params);
    auto dec_state = nn::AdamState<float>::like(model.decoder_params);
    model.loss_trace.reserve(static_cast<std::size_t>(options.epochs));

    for (Index epoch = 0; epoch < options.epochs; ++epoch) {
        try {
            auto enc = nn::forward(model.encoder_params, model.encoder, y, adj_ptr);
            auto dec = nn::forward(model.decoder_params, model.decoder, enc.output);
            auto loss = gae_loss_value<float>(dec.output, y);
            if (!std::isfinite(loss.value)) throw NumericalError("non-finite loss");
            model.loss_trace.push_back(loss.value);
            auto dec_back = nn::backward(model.decoder_params, model.decoder, dec, loss.grad);
            auto enc_back = nn::backward(model.encoder_params, model.encoder, enc, dec_back.input_grad, adj_ptr);
            nn::adam_step(model.decoder_params, dec_back.grads, dec_state, options.lr);
            nn::adam_step(model.encoder_params, enc_back.grads, enc_state, options.lr);
        } catch (const NumericalError& e) {
            throw NumericalError("GAE epoch " + std::to_string(epoch) + ": " + e.what());
        }
    }
    return model;
}

void save_gae(const std::filesystem::path& dir, const GaeModel& model) {
    std::filesystem::create_directories(dir);
    nn::save_params(dir / "gae_encoder.ckpt", model.encoder, model.encoder_params);
    nn::save_params(dir / "gae_decoder.ckpt", model.decoder, model.decoder_params);
}

GaeModel load_gae(const std::filesystem::path& dir, Index n_genes, const GaeOptions& options) {
    GaeModel model;
    model.latent_dim = options.latent_dim;
    model.encoder = encoder_specs(n_genes, options.hidden, options.latent_dim, options.use_graph);
    model.decoder = decoder_specs(n_genes, options.hidden, options.latent_dim);
    model.encoder_params = nn::load_params<float>(dir / "gae_encoder.ckpt", model.encoder);
    model.decoder_params = nn::load_params<float>(dir / "gae_decoder.ckpt", model.decoder);
    model.validate();
    return model;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<double>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < trace.size(); ++e) out << e << ',' << data::format_value(trace[e]) << '\n';
}

}  // namespace suica::gae
