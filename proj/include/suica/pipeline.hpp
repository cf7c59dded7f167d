// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "suica/config.hpp"
#include "suica/decode_head.hpp"
#include "suica/gae.hpp"
#include "suica/inr.hpp"
#include "suica/metrics.hpp"
#include "suica/pca.hpp"
#include "suica/st_data.hpp"

namespace suica::pipeline {

/// Per-stage seeds are mixed from the experiment seed and a stage tag.
std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage);

/// Loads (or generates) the slice named by the config, without preprocessing.
data::STSlice load_data(const config::ExperimentConfig& cfg);
/// Mean row sum of the expression matrix.
double mean_spot_total(const data::STSlice& slice);
/// The configured target, or the mean nonzero count per spot for "auto".
double resolve_target_sum(const config::ExperimentConfig& cfg, const data::STSlice& filtered);

/// filter_empty followed by normalize_total when enabled.
data::STSlice preprocess(const config::ExperimentConfig& cfg, const data::STSlice& raw);

/// Inputs of one task after degradation.
struct TaskData {
    data::STSlice train;            // what the model is fitted on
    data::STSlice truth;            // clean expressions at `truth.coords`
    std::optional<BoolMatrix> muted;  // gene imputation only
};

TaskData degrade(const config::ExperimentConfig& cfg, const data::STSlice& clean);

/// A fitted model of any variant.
struct Model {
    config::Variant variant = config::Variant::suica;
    Index n_genes = 0;
    double spot_total = 0.0;  // mean spot total of the training slice, for tau
    std::optional<gae::GaeModel> gae;
    inr::InrModel inr;
    std::optional<nn::ParamSet<float>> decoder;  // fine-tuned decoder
    std::optional<pca::Pca> pca;
    std::vector<head::ReconsParts> decoder_trace;
    std::optional<Matrix<double>> z_gt;  // encoder output on the training slice (not saved)
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

/// Trains `cfg.variant` on `train`. Timings are appended when non-null.
Model train(const config::ExperimentConfig& cfg, const data::STSlice& train, std::vector<StageTiming>* timing = nullptr);
/// Expression predictions at raw coordinates.
Matrix<double> infer(const Model& model, const Matrix<double>& coords);

/// Checkpoints and loss traces for the variant in `dir`, plus model.txt.
void save_model(const std::filesystem::path& dir, const Model& model);
/// Restores a model written by save_model; `cfg` supplies the layer sizes.
Model load_model(const std::filesystem::path& dir, const config::ExperimentConfig& cfg);

/// PCA to latent_dim components on the training slice, INR on the scores, linear decode.
Model pca_baseline(const data::STSlice& train, Index latent_dim, const inr::InrOptions& options);

inr::InrOptions inr_options(const config::ExperimentConfig& cfg, const Matrix<double>& train_coords,
                            std::uint64_t seed);

/// Scale and smoothness of latent embeddings over the spot graph.
struct EmbeddingStats {
    double mean = 0.0, std = 0.0, min = 0.0, max = 0.0;
    double channel_variance_mean = 0.0;
    double gtv_squared = 0.0;   // total over vertices, each edge counted twice
    double gtv_absolute = 0.0;
    Index n_spots = 0, dim = 0;
};

EmbeddingStats embedding_stats(const Matrix<double>& z, const graph::CellGraph& graph);
std::string to_key_value(const EmbeddingStats& s);

struct RunResult {
    metrics::MetricReport report;
    std::optional<EmbeddingStats> embedding;  // autoencoder variants only
    std::optional<metrics::MetricReport> muted_report;  // gene imputation: muted entries only
    std::vector<StageTiming> timing;
    std::filesystem::path dir;
};

/**
 * Runs one task end to end and writes into cfg.out: config.txt, seed.txt,
 * loss CSVs, checkpoints, predictions.txt, metrics.txt, metrics.csv,
 * timing.csv and heatmaps, plus embedding.txt and gtv.csv for autoencoder
 * variants. Stage failures are rethrown with the stage name.
 */
RunResult run_task(const config::ExperimentConfig& cfg);

struct AblationRow {
    std::string rung;
    config::Variant variant;
    RunResult result;
};

/// The four-rung ladder, each rung in cfg.out/<variant>; writes cfg.out/ablation.csv
/// and cfg.out/spectral.csv (embedding GTV for the autoencoder rungs).
std::vector<AblationRow> run_ablation(const config::ExperimentConfig& cfg);

/// Evaluation against the truth for the configured task.
metrics::MetricReport evaluate_prediction(const config::ExperimentConfig& cfg, const Matrix<double>& prediction,
                                          const data::STSlice& truth);

/// Dense rows written as triplets; entries <= tau are omitted.
void write_prediction(const std::filesystem::path& path, const Matrix<double>& prediction, double tau);

/// Spot scatter colored by value, as SVG. Byte-identical for identical input.
void emit_heatmap(const Matrix<double>& coords, const Vector<double>& values, const std::filesystem::path& path,
                  const std::string& title = "");

}  // namespace suica::pipeline
