// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "suica/gae.hpp"
#include "suica/inr.hpp"
#include "suica/neural_core.hpp"
#include "suica/st_data.hpp"

namespace suica::head {

struct ReconsLossConfig {
    double lambda = 0.5;    // Dice weight
    double epsilon = 1e-7;  // Dice smoothing
    Index epochs = 1000;
    double lr = 1e-4;

    void validate() const;
};

/// M_y covers every element; M+_y marks y_gt > 0.
struct Masks {
    Index all_count = 0;
    BoolMatrix positive;

    static Masks of(const Matrix<double>& y_gt);
    Index positive_count() const { return positive.count(); }
};

/**
 * Soft Dice loss on pseudo-probabilities tanh(y_hat):
 *
 *   1 - (2 sum(tanh(y_hat) * [y_gt > 0]) + eps) / (sum tanh(y_hat) + sum [y_gt > 0] + eps)
 *
 * y_hat must be nonnegative (relu head). Result lies in [0, 1).
 */
double dice_loss(const Matrix<double>& y_hat, const Matrix<double>& y_gt, double epsilon = 1e-7);

template <class Scalar>
nn::LossValue<Scalar> dice_loss_value(const Matrix<Scalar>& y_hat, const Matrix<Scalar>& y_gt, double epsilon);

struct ReconsParts {
    double total = 0.0;
    double mse_pos = 0.0;  // squared error averaged over M+_y
    double mae_all = 0.0;  // absolute error averaged over M_y
    double dice = 0.0;
};

/// mse_pos + mae_all + lambda * dice. Throws DataError if y_gt has no positive entry.
ReconsParts recons_loss(const Matrix<double>& y_hat, const Matrix<double>& y_gt, const Masks& masks,
                        const ReconsLossConfig& cfg);

/// Same loss with its gradient; `parts` receives the breakdown when non-null.
template <class Scalar>
nn::LossValue<Scalar> recons_loss_value(const Matrix<Scalar>& y_hat, const Matrix<Scalar>& y_gt, const Masks& masks,
                                        const ReconsLossConfig& cfg, ReconsParts* parts = nullptr);

/// Loss driving decoder fine-tuning. `mse` is element-wise MSE over all entries.
enum class DecoderObjective { recons, mse };

struct FinetuneResult {
    nn::ParamSet<float> decoder;
    std::vector<ReconsParts> trace;  // per epoch; total only for the mse objective
};

/**
 * Fine-tunes a copy of the GAE's pre-trained decoder on frozen INR
 * embeddings of the slice coordinates. The INR is taken by const reference
 * and its outputs are computed once, so no gradient reaches it.
 */
FinetuneResult finetune_decoder(const inr::InrModel& inr, const gae::GaeModel& gae, const data::STSlice& slice,
                                const ReconsLossConfig& cfg, std::uint64_t seed,
                                DecoderObjective objective = DecoderObjective::recons);

/// decoder(inr(coords)); nonnegative through the relu head.
Matrix<double> predict(const inr::InrModel& inr, const std::vector<nn::LayerSpec>& decoder_specs,
                       const nn::ParamSet<float>& decoder, const Matrix<double>& coords);

/// CSV "epoch,total,mse_pos,mae_all,dice".
void write_recons_trace(const std::filesystem::path& path, const std::vector<ReconsParts>& trace);

}  // namespace suica::head
