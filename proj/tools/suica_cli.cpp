// SPDX-License-Identifier: Apache-2.0
// Command-line driver. Exit codes: 0 ok, 1 config, 2 data, 3 numerical.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "suica/config.hpp"
#include "suica/pipeline.hpp"

namespace fs = std::filesystem;
using namespace suica;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string task, variant, out;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "config file (key = value lines)");
    cmd->add_option("--seed", c.seed, "experiment seed");
    cmd->add_option("--task", c.task, "spatial_imputation | gene_imputation | denoise");
    cmd->add_option("--variant", c.variant, "suica | vanilla_inr | ae_no_graph | ae_dice_no_graph | pca_baseline");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--set", c.sets, "extra override, key=value (repeatable)");
}

// File, then SUICA_* environment, then command-line flags.
config::ExperimentConfig resolve(const Common& c) {
    auto cfg = c.config_path.empty() ? config::ExperimentConfig{} : config::load(c.config_path);
    config::apply_env(cfg);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.task.empty()) cfg.task = config::parse_task(c.task);
    if (!c.variant.empty()) cfg.variant = config::parse_variant(c.variant);
    if (!c.out.empty()) cfg.out = c.out;
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        config::set_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void print_report(const metrics::MetricReport& r) { std::cout << metrics::to_key_value(r); }

void write_mask(const fs::path& path, const BoolMatrix& mask) {
    std::vector<Eigen::Triplet<double>> trip;
    for (Index r = 0; r < mask.rows(); ++r)
        for (Index c = 0; c < mask.cols(); ++c)
            if (mask(r, c)) trip.emplace_back(r, c, 1.0);
    SparseMatrix<double> m(mask.rows(), mask.cols());
    m.setFromTriplets(trip.begin(), trip.end());
    data::write_triplets(path, m);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial transcriptomics as continuous coordinate functions"};
    app.require_subcommand(1);

    Common gen_c, pre_c, deg_c, train_c, eval_c, run_c, abl_c;
    auto* generate = app.add_subcommand("generate", "write the configured slice (synthetic or loaded) to --out");
    add_common(generate, gen_c);
    auto* prep = app.add_subcommand("preprocess", "filter and normalize the configured slice into --out");
    add_common(prep, pre_c);
    auto* degrade = app.add_subcommand("degrade", "write train/ and truth/ slices for the configured task");
    add_common(degrade, deg_c);
    auto* train = app.add_subcommand("train", "fit the configured variant and save checkpoints in --out");
    add_common(train, train_c);

    std::string model_dir, coords_path, pred_out;
    auto* infer = app.add_subcommand("infer", "predict expressions at coordinates from a trained model");
    infer->add_option("--model", model_dir, "directory written by train or run")->required();
    infer->add_option("--coords", coords_path, "coordinate CSV")->required();
    infer->add_option("--out", pred_out, "prediction triplet file")->required();

    std::string pred_path, truth_dir;
    auto* evaluate = app.add_subcommand("evaluate", "score a prediction file against a truth slice");
    add_common(evaluate, eval_c);
    evaluate->add_option("--pred", pred_path, "prediction triplet file")->required();
    evaluate->add_option("--truth", truth_dir, "truth slice directory")->required();

    auto* run = app.add_subcommand("run", "run the configured task end to end");
    add_common(run, run_c);
    bool with_pca = false;
    auto* ablate = app.add_subcommand("ablate", "run the four-rung ablation ladder");
    add_common(ablate, abl_c);
    ablate->add_flag("--with-pca", with_pca, "also run the PCA baseline");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*generate) {
            const auto cfg = resolve(gen_c);
            data::save_slice(cfg.out, pipeline::load_data(cfg));
        } else if (*prep) {
            const auto cfg = resolve(pre_c);
            data::save_slice(cfg.out, pipeline::preprocess(cfg, pipeline::load_data(cfg)));
        } else if (*degrade) {
            const auto cfg = resolve(deg_c);
            const auto t = pipeline::degrade(cfg, pipeline::preprocess(cfg, pipeline::load_data(cfg)));
            data::save_slice(fs::path(cfg.out) / "train", t.train);
            data::save_slice(fs::path(cfg.out) / "truth", t.truth);
            if (t.muted) write_mask(fs::path(cfg.out) / "muted.txt", *t.muted);
        } else if (*train) {
            const auto cfg = resolve(train_c);
            const auto t = pipeline::degrade(cfg, pipeline::preprocess(cfg, pipeline::load_data(cfg)));
            const auto model = pipeline::train(cfg, t.train);
            pipeline::save_model(cfg.out, model);
            config::save(fs::path(cfg.out) / "config.txt", cfg);
        } else if (*infer) {
            const auto cfg = config::load(fs::path(model_dir) / "config.txt");
            const auto model = pipeline::load_model(model_dir, cfg);
            const auto coords = data::read_coords(coords_path);
            const auto pred = pipeline::infer(model, coords);
            pipeline::write_prediction(pred_out, pred, cfg.resolved_tau(model.spot_total, model.n_genes));
        } else if (*evaluate) {
            const auto cfg = resolve(eval_c);
            const auto truth = data::load_slice_dir(truth_dir);
            const Matrix<double> pred(data::read_triplets(pred_path));
            const auto report = pipeline::evaluate_prediction(cfg, pred, truth);
            print_report(report);
            if (!eval_c.out.empty()) {
                fs::create_directories(cfg.out);
                std::ofstream(fs::path(cfg.out) / "metrics.txt", std::ios::binary) << metrics::to_key_value(report);
            }
        } else if (*run) {
            const auto res = pipeline::run_task(resolve(run_c));
            print_report(res.report);
            if (res.muted_report) {
                std::cout << "# muted entries only\n";
                print_report(*res.muted_report);
            }
        } else if (*ablate) {
            const auto cfg = resolve(abl_c);
            const auto rows = pipeline::run_ablation(cfg);
            std::cout << "rung,variant," << metrics::csv_header() << '\n';
            for (const auto& r : rows)
                std::cout << r.rung << ',' << config::to_string(r.variant) << ','
                          << metrics::to_csv_row(r.result.report) << '\n';
            if (with_pca) {
                auto c = cfg;
                c.variant = config::Variant::pca_baseline;
                c.out = (fs::path(cfg.out) / "pca_baseline").string();
                std::cout << "PCA,pca_baseline," << metrics::to_csv_row(pipeline::run_task(c).report) << '\n';
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
