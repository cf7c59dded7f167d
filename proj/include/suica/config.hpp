// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "suica/common.hpp"
#include "suica/st_data.hpp"

namespace suica::config {

enum class Task { spatial_imputation, gene_imputation, denoise };
enum class Variant { suica, vanilla_inr, ae_no_graph, ae_dice_no_graph, pca_baseline };
enum class DataSource { synthetic, files };

Task parse_task(const std::string& s);
Variant parse_variant(const std::string& s);
std::string to_string(Task t);
std::string to_string(Variant v);

/**
 * @brief Everything one experiment needs.
 *
 * The on-disk form is flat "key = value" text, one key per line, '#' starting
 * a comment. Keys not present keep their defaults, unknown keys are an error.
 * `backbone` is "auto" (pick from coordinate spacing), "siren" or "ffn".
 * `eval.tau` < 0 means derive it from the normalization target.
 * `preprocess.target_sum` may be "auto": the mean nonzero count per spot,
 * which puts a typical nonzero entry near 1.
 */
struct ExperimentConfig {
    Task task = Task::spatial_imputation;
    Variant variant = Variant::suica;
    std::string backbone = "auto";
    std::uint64_t seed = 0;
    std::string out = "runs/default";

    DataSource source = DataSource::synthetic;
    std::string data_dir;  // save_slice layout
    std::string data_expr, data_coords, data_labels, data_genes;

    data::SyntheticParams synthetic{};

    bool normalize = true;
    double target_sum = 0.0;  // 0 = "auto": mean nonzero count per spot

    double high_expr_fraction = 0.5;

    Index graph_k = 5;
    std::string gtv_norm = "squared";  // per-vertex column of gtv.csv: squared | absolute

    Index gae_hidden = 512;
    Index latent_dim = 32;
    Index gae_epochs = 200;
    double gae_lr = 1e-5;
    double gae_head_bias = 0.5;

    Index inr_hidden_layers = 4;
    Index inr_width = 256;
    double inr_omega = 30.0;
    Index fourier_size = 256;
    double fourier_sigma = 10.0;
    Index inr_epochs = 1000;
    double inr_lr = 1e-4;
    Index inr_batch_size = 0;
    double backbone_threshold = 0.01;

    double dice_lambda = 0.5;
    double dice_epsilon = 1e-7;
    Index decoder_epochs = 1000;
    double decoder_lr = 1e-4;

    double train_fraction = 0.8;
    double mask_fraction = 0.7;
    double noise_sigma = 1.0;
    bool noise_clamp = false;

    double tau = -1.0;
    std::string aggregation = "per_spot_mean";
    Index heatmap_gene = 0;  // -1 disables heatmaps

    void validate() const;
    /// tau, or 1e-3 x (mean spot total) / g when derived. For normalized
    /// data the mean spot total is the normalization target.
    double resolved_tau(double mean_spot_total, Index n_genes) const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// Every key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> to_pairs(const ExperimentConfig& cfg);
std::string to_text(const ExperimentConfig& cfg);
std::vector<std::string> known_keys();

/// Sets one key; throws ConfigError for unknown keys or malformed values.
void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Parses text on top of the defaults. Duplicate keys are an error.
ExperimentConfig parse(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load(const std::filesystem::path& path);
void save(const std::filesystem::path& path, const ExperimentConfig& cfg);

/// "gae.lr" -> "SUICA_GAE_LR".
std::string env_name(const std::string& key);
/// Applies SUICA_* variables present in `env` (defaults to the process environment).
void apply_env(ExperimentConfig& cfg);
void apply_env(ExperimentConfig& cfg, const std::map<std::string, std::string>& env);

}  // namespace suica::config
