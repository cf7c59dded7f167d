// SPDX-License-Identifier: Apache-2.0
#include "suica/decode_head.hpp"

#include <cmath>
#include <fstream>

namespace suica::head {

void ReconsLossConfig::validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("Dice epsilon must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("Dice weight lambda must be >= 0");
    if (epochs < 0) throw ConfigError("decoder epochs must be >= 0");
}

Masks Masks::of(const Matrix<double>& y_gt) {
    Masks m;
    m.all_count = y_gt.size();
    m.positive = y_gt.array() > 0.0;
    return m;
}

namespace {

template <class Scalar>
void check_shapes(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError(std::string(what) + ": shape mismatch");
}

}  // namespace

template <class Scalar>
nn::LossValue<Scalar> dice_loss_value(const Matrix<Scalar>& y_hat, const Matrix<Scalar>& y_gt, double epsilon) {
    check_shapes(y_hat, y_gt, "dice_loss");
    if ((y_hat.array() < Scalar(0)).any()) throw DataError("dice_loss: predictions must be nonnegative");
    const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic> p = y_hat.template cast<double>().array().tanh();
    const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic> s = (y_gt.array() > Scalar(0)).template cast<double>();
    const double inter = (p * s).sum();
    const double num = 2.0 * inter + epsilon;
    const double den = p.sum() + s.sum() + epsilon;
    nn::LossValue<Scalar> out;
    out.value = 1.0 - num / den;
    // dL/dp = -(2 s den - num) / den^2, dp/dy = 1 - p^2
    out.grad = (-(2.0 * s * den - num) / (den * den) * (1.0 - p.square())).matrix().template cast<Scalar>();
    return out;
}

double dice_loss(const Matrix<double>& y_hat, const Matrix<double>& y_gt, double epsilon) {
    return dice_loss_value<double>(y_hat, y_gt, epsilon).value;
}

template <class Scalar>
nn::LossValue<Scalar> recons_loss_value(const Matrix<Scalar>& y_hat, const Matrix<Scalar>& y_gt, const Masks& masks,
                                        const ReconsLossConfig& cfg, ReconsParts* parts) {
    check_shapes(y_hat, y_gt, "recons_loss");
    if (masks.positive.rows() != y_gt.rows() || masks.positive.cols() != y_gt.cols())
        throw DataError("recons_loss: mask shape mismatch");
    const Index n_pos = masks.positive_count();
    if (n_pos == 0) throw DataError("recons_loss: ground truth has no positive entry");
    const double n_all = static_cast<double>(masks.all_count);
    const auto diff = (y_hat.template cast<double>() - y_gt.template cast<double>()).array();
    const auto pos = masks.positive.template cast<double>();

    ReconsParts r;
    r.mse_pos = (diff.square() * pos).sum() / static_cast<double>(n_pos);
    r.mae_all = diff.abs().sum() / n_all;
    auto dice = dice_loss_value<Scalar>(y_hat, y_gt, cfg.epsilon);
    r.dice = dice.value;
    r.total = r.mse_pos + r.mae_all + cfg.lambda * r.dice;

    nn::LossValue<Scalar> out;
    out.value = r.total;
    const Eigen::ArrayXXd g = 2.0 * diff * pos / static_cast<double>(n_pos) + diff.sign() / n_all;
    out.grad = g.matrix().template cast<Scalar>() + static_cast<Scalar>(cfg.lambda) * dice.grad;
    if (parts) *parts = r;
    return out;
}

ReconsParts recons_loss(const Matrix<double>& y_hat, const Matrix<double>& y_gt, const Masks& masks,
                        const ReconsLossConfig& cfg) {
    ReconsParts parts;
    recons_loss_value<double>(y_hat, y_gt, masks, cfg, &parts);
    return parts;
}

template nn::LossValue<float> dice_loss_value<float>(const Matrix<float>&, const Matrix<float>&, double);
template nn::LossValue<double> dice_loss_value<double>(const Matrix<double>&, const Matrix<double>&, double);
template nn::LossValue<float> recons_loss_value<float>(const Matrix<float>&, const Matrix<float>&, const Masks&,
                                                       const ReconsLossConfig&, ReconsParts*);
template nn::LossValue<double> recons_loss_value<double>(const Matrix<double>&, const Matrix<double>&, const Masks&,
                                                         const ReconsLossConfig&, ReconsParts*);

FinetuneResult finetune_decoder(const inr::InrModel& inr, const gae::GaeModel& gae, const data::STSlice& slice,
                                const ReconsLossConfig& cfg, [[maybe_unused]] std::uint64_t seed,
                                DecoderObjective objective) {
    cfg.validate();
    if (inr.out_dim() != gae.latent_dim) throw DataError("INR output does not match the decoder's latent size");
    if (slice.num_genes() != gae.decoder.back().out_dim) throw DataError("decoder does not match the slice genes");

    // Fine-tuning is full batch, so the run is deterministic without a stream.
    const Matrix<float> z_hat = inr::inr_forward_float(inr, slice.coords);
    const Matrix<float> y = gae::dense_expression(slice);
    const Masks masks = Masks::of(y.cast<double>());

    FinetuneResult result;
    result.decoder = gae.decoder_params;
    auto state = nn::AdamState<float>::like(result.decoder);
    result.trace.reserve(static_cast<std::size_t>(cfg.epochs));
    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
        try {
            auto acts = nn::forward(result.decoder, gae.decoder, z_hat);
            ReconsParts parts;
            nn::LossValue<float> loss;
            if (objective == DecoderObjective::recons) {
                loss = recons_loss_value<float>(acts.output, y, masks, cfg, &parts);
            } else {
                loss = gae::gae_loss_value<float>(acts.output, y);
                parts.total = loss.value;
            }
            if (!std::isfinite(loss.value)) throw NumericalError("non-finite loss");
            result.trace.push_back(parts);
            auto back = nn::backward(result.decoder, gae.decoder, acts, loss.grad);
            nn::adam_step(result.decoder, back.grads, state, cfg.lr);
        } catch (const NumericalError& e) {
            throw NumericalError("decoder epoch " + std::to_string(epoch) + ": " + e.what());
        }
    }
    return result;
}

Matrix<double> predict(const inr::InrModel& inr, const std::vector<nn::LayerSpec>& decoder_specs,
                       const nn::ParamSet<float>& decoder, const Matrix<double>& coords) {
    if (decoder_specs.front().in_dim != inr.out_dim())
        throw DataError("predict: INR output does not match the decoder input");
    return nn::evaluate(decoder, decoder_specs, inr::inr_forward_float(inr, coords)).cast<double>();
}

void write_recons_trace(const std::filesystem::path& path, const std::vector<ReconsParts>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "epoch,total,mse_pos,mae_all,dice\n";
    for (std::size_t e = 0; e < trace.size(); ++e)
        out << e << ',' << data::format_value(trace[e].total) << ',' << data::format_value(trace[e].mse_pos) << ','
            << data::format_value(trace[e].mae_all) << ',' << data::format_value(trace[e].dice) << '\n';
}

}  // namespace suica::head
