// SPDX-License-Identifier: Apache-2.0
#include "suica/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "suica/cell_graph.hpp"

namespace suica::pipeline {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using config::Task;
using config::Variant;

std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage) {
    // FNV-1a over the tag, then a splitmix64 finalizer.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : stage) h = (h ^ c) * 0x100000001b3ULL;
    std::uint64_t z = seed + h + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

// Rethrows with the stage name prefixed, keeping the error category.
template <class F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(stage + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(stage + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(stage + ": " + e.what());
    }
}

class Stopwatch {
public:
    Stopwatch(std::vector<StageTiming>* sink, std::string stage)
        : sink_(sink), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~Stopwatch() {
        if (!sink_) return;
        const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start_;
        sink_->push_back({stage_, d.count()});
    }

private:
    std::vector<StageTiming>* sink_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

Matrix<double> dense(const data::STSlice& s) { return Matrix<double>(s.expr); }

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

gae::GaeOptions gae_options(const ExperimentConfig& cfg, bool use_graph) {
    gae::GaeOptions o;
    o.hidden = cfg.gae_hidden;
    o.latent_dim = cfg.latent_dim;
    o.use_graph = use_graph;
    o.epochs = cfg.gae_epochs;
    o.lr = cfg.gae_lr;
    o.head_bias = cfg.gae_head_bias;
    o.seed = stage_seed(cfg.seed, "gae");
    return o;
}

head::ReconsLossConfig recons_config(const ExperimentConfig& cfg) {
    head::ReconsLossConfig r;
    r.lambda = cfg.dice_lambda;
    r.epsilon = cfg.dice_epsilon;
    r.epochs = cfg.decoder_epochs;
    r.lr = cfg.decoder_lr;
    return r;
}

bool uses_gae(Variant v) { return v == Variant::suica || v == Variant::ae_no_graph || v == Variant::ae_dice_no_graph; }

void save_pca(const fs::path& path, const pca::Pca& p) {
    std::ostringstream s;
    s << "pca " << p.mean.size() << ' ' << p.num_components() << '\n';
    for (Index j = 0; j < p.mean.size(); ++j) s << (j ? " " : "") << fmt17(p.mean(j));
    s << '\n';
    for (Index j = 0; j < p.components.rows(); ++j) {
        for (Index c = 0; c < p.components.cols(); ++c) s << (c ? " " : "") << fmt17(p.components(j, c));
        s << '\n';
    }
    for (Index c = 0; c < p.num_components(); ++c) s << (c ? " " : "") << fmt17(p.explained_variance(c));
    s << '\n';
    write_text(path, s.str());
}

pca::Pca load_pca(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string tag;
    Index g = 0, k = 0;
    if (!(in >> tag >> g >> k) || tag != "pca" || g < 1 || k < 1) throw DataError(path.string() + ": bad PCA header");
    pca::Pca p;
    p.mean.resize(g);
    p.components.resize(g, k);
    p.explained_variance.resize(k);
    for (Index j = 0; j < g; ++j) in >> p.mean(j);
    for (Index j = 0; j < g; ++j)
        for (Index c = 0; c < k; ++c) in >> p.components(j, c);
    for (Index c = 0; c < k; ++c) in >> p.explained_variance(c);
    if (!in) throw DataError(path.string() + ": truncated PCA file");
    return p;
}

}  // namespace

// ---- data --------------------------------------------------------------------

data::STSlice load_data(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.source == config::DataSource::synthetic) return data::generate_synthetic(cfg.synthetic);
    if (!cfg.data_dir.empty()) return data::load_slice_dir(cfg.data_dir);
    std::optional<fs::path> labels, genes;
    if (!cfg.data_labels.empty()) labels = cfg.data_labels;
    if (!cfg.data_genes.empty()) genes = cfg.data_genes;
    return data::load_slice(cfg.data_expr, cfg.data_coords, labels, genes);
}

double mean_spot_total(const data::STSlice& slice) {
    if (slice.num_spots() == 0) throw DataError("empty slice");
    double total = 0.0;
    for (Index r = 0; r < slice.expr.outerSize(); ++r)
        for (SparseMatrix<double>::InnerIterator it(slice.expr, r); it; ++it) total += it.value();
    return total / static_cast<double>(slice.num_spots());
}

double resolve_target_sum(const ExperimentConfig& cfg, const data::STSlice& filtered) {
    if (cfg.target_sum > 0.0) return cfg.target_sum;
    if (filtered.num_spots() == 0) throw DataError("empty slice");
    return static_cast<double>(filtered.expr.nonZeros()) / static_cast<double>(filtered.num_spots());
}

data::STSlice preprocess(const ExperimentConfig& cfg, const data::STSlice& raw) {
    auto filtered = data::filter_empty(raw);
    if (!cfg.normalize) return filtered;
    return data::normalize_total(filtered, resolve_target_sum(cfg, filtered), cfg.high_expr_fraction).slice;
}

TaskData degrade(const ExperimentConfig& cfg, const data::STSlice& clean) {
    const std::uint64_t seed = stage_seed(cfg.seed, "degrade");
    TaskData t;
    switch (cfg.task) {
        case Task::spatial_imputation: {
            auto split = data::split_spatial(clean, cfg.train_fraction, seed);
            t.train = std::move(split.train);
            t.truth = std::move(split.test);
            break;
        }
        case Task::gene_imputation: {
            auto masked = data::mask_genes(clean, cfg.mask_fraction, seed);
            t.train = std::move(masked.degraded);
            t.truth = clean;
            t.muted = std::move(masked.muted);
            break;
        }
        case Task::denoise:
            t.train = data::add_noise(clean, cfg.noise_sigma, cfg.noise_clamp, seed);
            t.truth = clean;
            break;
    }
    return t;
}

// ---- training ------------------------------------------------------------------

inr::InrOptions inr_options(const ExperimentConfig& cfg, const Matrix<double>& train_coords, std::uint64_t seed) {
    inr::InrOptions o;
    o.backbone = cfg.backbone == "auto" ? inr::choose_backbone(train_coords, cfg.backbone_threshold)
                                        : inr::parse_backbone(cfg.backbone);
    o.hidden_layers = cfg.inr_hidden_layers;
    o.hidden_width = cfg.inr_width;
    o.omega = cfg.inr_omega;
    o.fourier.mapping_size = cfg.fourier_size;
    o.fourier.sigma = cfg.fourier_sigma;
    o.epochs = cfg.inr_epochs;
    o.lr = cfg.inr_lr;
    o.batch_size = cfg.inr_batch_size;
    o.seed = seed;
    return o;
}

Model pca_baseline(const data::STSlice& train, Index latent_dim, const inr::InrOptions& options) {
    if (latent_dim > std::min(train.num_spots(), train.num_genes()))
        throw ConfigError("pca_baseline: latent_dim " + std::to_string(latent_dim) + " exceeds min(n, g)");
    Model m;
    m.variant = Variant::pca_baseline;
    m.n_genes = train.num_genes();
    const Matrix<double> y = dense(train);
    m.pca = pca::fit(y, latent_dim);
    m.inr = inr::train_inr(train.coords, m.pca->transform(y), options);
    return m;
}

Model train(const ExperimentConfig& cfg, const data::STSlice& train, std::vector<StageTiming>* timing) {
    cfg.validate();
    const bool noisy = cfg.task == Task::denoise;
    train.validate(noisy);
    const double spot_total = mean_spot_total(train);
    const auto inr_opts = inr_options(cfg, train.coords, stage_seed(cfg.seed, "inr"));

    if (cfg.variant == Variant::vanilla_inr) {
        Model m;
        m.variant = cfg.variant;
        m.n_genes = train.num_genes();
        m.spot_total = spot_total;
        Stopwatch w(timing, "inr");
        m.inr = staged("inr", [&] { return inr::train_inr(train.coords, dense(train), inr_opts, nn::Activation::relu); });
        return m;
    }
    if (cfg.variant == Variant::pca_baseline) {
        Stopwatch w(timing, "pca_inr");
        auto m = staged("pca_baseline", [&] { return pca_baseline(train, cfg.latent_dim, inr_opts); });
        m.spot_total = spot_total;
        return m;
    }

    Model m;
    m.variant = cfg.variant;
    m.n_genes = train.num_genes();
    m.spot_total = spot_total;
    const bool use_graph = cfg.variant == Variant::suica;
    std::optional<graph::CellGraph> g;
    if (use_graph) {
        Stopwatch w(timing, "graph");
        g = staged("graph", [&] { return graph::build_knn(train.coords, cfg.graph_k); });
    }
    const graph::CellGraph* gp = g ? &*g : nullptr;
    Matrix<double> z;
    {
        Stopwatch w(timing, "gae");
        m.gae = staged("gae", [&] { return gae::train_gae(train, gp, gae_options(cfg, use_graph)); });
        z = staged("gae", [&] { return gae::encode(*m.gae, train, gp); });
    }
    m.z_gt = z;
    {
        Stopwatch w(timing, "inr");
        m.inr = staged("inr", [&] { return inr::train_inr(train.coords, z, inr_opts); });
    }
    {
        Stopwatch w(timing, "decoder");
        const auto objective =
            cfg.variant == Variant::ae_no_graph ? head::DecoderObjective::mse : head::DecoderObjective::recons;
        auto ft = staged("decoder", [&] {
            return head::finetune_decoder(m.inr, *m.gae, train, recons_config(cfg), stage_seed(cfg.seed, "decoder"),
                                          objective);
        });
        m.decoder = std::move(ft.decoder);
        m.decoder_trace = std::move(ft.trace);
    }
    return m;
}

Matrix<double> infer(const Model& model, const Matrix<double>& coords) {
    switch (model.variant) {
        case Variant::vanilla_inr: return inr::inr_forward(model.inr, coords);
        case Variant::pca_baseline: return model.pca->inverse(inr::inr_forward(model.inr, coords));
        default: return head::predict(model.inr, model.gae->decoder, *model.decoder, coords);
    }
}

void save_model(const fs::path& dir, const Model& model) {
    fs::create_directories(dir);
    std::ostringstream info;
    info << "variant = " << config::to_string(model.variant) << '\n'
         << "backbone = " << inr::to_string(model.inr.backbone) << '\n'
         << "n_genes = " << model.n_genes << '\n'
         << "spot_total = " << fmt17(model.spot_total) << '\n'
         << "inr_out = " << model.inr.out_dim() << '\n';
    write_text(dir / "model.txt", info.str());
    inr::save_inr(dir / "inr.ckpt", model.inr);
    gae::write_loss_trace(dir / "inr_loss.csv", model.inr.loss_trace);
    if (model.gae) {
        gae::save_gae(dir, *model.gae);
        gae::write_loss_trace(dir / "gae_loss.csv", model.gae->loss_trace);
    }
    if (model.decoder) {
        nn::save_params(dir / "decoder.ckpt", model.gae->decoder, *model.decoder);
        head::write_recons_trace(dir / "decoder_loss.csv", model.decoder_trace);
    }
    if (model.pca) save_pca(dir / "pca.txt", *model.pca);
}

Model load_model(const fs::path& dir, const ExperimentConfig& cfg) {
    std::istringstream info(read_text(dir / "model.txt"));
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(info, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    for (const char* k : {"variant", "backbone", "n_genes", "spot_total", "inr_out"})
        if (!kv.count(k)) throw DataError((dir / "model.txt").string() + ": missing '" + k + "'");
    Model m;
    m.variant = config::parse_variant(kv["variant"]);
    m.n_genes = std::stoll(kv["n_genes"]);
    m.spot_total = std::stod(kv["spot_total"]);
    auto opts = inr_options(cfg, Matrix<double>::Zero(0, 2), 0);
    opts.backbone = inr::parse_backbone(kv["backbone"]);
    const auto head_act = m.variant == Variant::vanilla_inr ? nn::Activation::relu : nn::Activation::identity;
    m.inr = inr::load_inr(dir / "inr.ckpt", std::stoll(kv["inr_out"]), opts, head_act);
    if (uses_gae(m.variant)) {
        m.gae = gae::load_gae(dir, m.n_genes, gae_options(cfg, m.variant == Variant::suica));
        m.decoder = nn::load_params<float>(dir / "decoder.ckpt", m.gae->decoder);
    }
    if (m.variant == Variant::pca_baseline) m.pca = load_pca(dir / "pca.txt");
    return m;
}

// ---- evaluation and output -------------------------------------------------------

EmbeddingStats embedding_stats(const Matrix<double>& z, const graph::CellGraph& graph) {
    EmbeddingStats s;
    s.n_spots = z.rows();
    s.dim = z.cols();
    s.mean = z.mean();
    s.std = std::sqrt((z.array() - s.mean).square().mean());
    s.min = z.minCoeff();
    s.max = z.maxCoeff();
    s.channel_variance_mean = graph::channelwise_variance(z).mean();
    s.gtv_squared = graph::graph_total_variation(graph, z, graph::VariationNorm::squared).total;
    s.gtv_absolute = graph::graph_total_variation(graph, z, graph::VariationNorm::absolute).total;
    return s;
}

std::string to_key_value(const EmbeddingStats& s) {
    std::ostringstream o;
    o << "n_spots=" << s.n_spots << "\ndim=" << s.dim << "\nmean=" << fmt17(s.mean) << "\nstd=" << fmt17(s.std)
      << "\nmin=" << fmt17(s.min) << "\nmax=" << fmt17(s.max)
      << "\nchannel_variance_mean=" << fmt17(s.channel_variance_mean) << "\ngtv_squared=" << fmt17(s.gtv_squared)
      << "\ngtv_absolute=" << fmt17(s.gtv_absolute) << '\n';
    return o.str();
}

metrics::MetricReport evaluate_prediction(const ExperimentConfig& cfg, const Matrix<double>& prediction,
                                          const data::STSlice& truth) {
    metrics::EvalOptions opts;
    opts.tau = cfg.resolved_tau(mean_spot_total(truth), truth.num_genes());
    opts.aggregation = metrics::parse_aggregation(cfg.aggregation);
    opts.seed = stage_seed(cfg.seed, "eval");
    const std::vector<int>* labels = truth.labels ? &truth.labels->ids : nullptr;
    return metrics::evaluate(prediction, dense(truth), labels, opts);
}

void write_prediction(const fs::path& path, const Matrix<double>& prediction, double tau) {
    std::vector<Eigen::Triplet<double>> trip;
    for (Index r = 0; r < prediction.rows(); ++r)
        for (Index c = 0; c < prediction.cols(); ++c)
            if (prediction(r, c) > tau) trip.emplace_back(r, c, prediction(r, c));
    SparseMatrix<double> m(prediction.rows(), prediction.cols());
    m.setFromTriplets(trip.begin(), trip.end());
    data::write_triplets(path, m);
}

RunResult run_task(const ExperimentConfig& cfg) {
    cfg.validate();
    RunResult res;
    res.dir = cfg.out;
    fs::create_directories(res.dir);
    config::save(res.dir / "config.txt", cfg);
    write_text(res.dir / "seed.txt", std::to_string(cfg.seed) + '\n');

    data::STSlice clean;
    {
        Stopwatch w(&res.timing, "data");
        clean = staged("data", [&] { return preprocess(cfg, load_data(cfg)); });
    }
    TaskData task;
    {
        Stopwatch w(&res.timing, "degrade");
        task = staged("degrade", [&] { return degrade(cfg, clean); });
    }
    const Model model = train(cfg, task.train, &res.timing);
    staged("save", [&] {
        save_model(res.dir, model);
        return 0;
    });

    Matrix<double> prediction;
    {
        Stopwatch w(&res.timing, "infer");
        prediction = staged("infer", [&] { return infer(model, task.truth.coords); });
    }
    const double tau = cfg.resolved_tau(mean_spot_total(task.truth), task.truth.num_genes());
    {
        Stopwatch w(&res.timing, "evaluate");
        res.report = staged("evaluate", [&] { return evaluate_prediction(cfg, prediction, task.truth); });
        if (task.muted) {
            metrics::EvalOptions opts;
            opts.tau = tau;
            opts.seed = stage_seed(cfg.seed, "eval");
            res.muted_report = staged("evaluate", [&] {
                return metrics::evaluate_masked(prediction, dense(task.truth), *task.muted, opts);
            });
        }
    }

    staged("write", [&] {
        // Same threshold as the infer command, which has no truth to consult.
        write_prediction(res.dir / "predictions.txt", prediction, cfg.resolved_tau(model.spot_total, model.n_genes));
        data::write_coords(res.dir / "prediction_coords.csv", task.truth.coords);
        write_text(res.dir / "metrics.txt", metrics::to_key_value(res.report));
        write_text(res.dir / "metrics.csv",
                   metrics::csv_header() + '\n' + metrics::to_csv_row(res.report) + '\n');
        if (res.muted_report) write_text(res.dir / "metrics_muted.txt", metrics::to_key_value(*res.muted_report));
        if (cfg.heatmap_gene >= 0 && cfg.heatmap_gene < prediction.cols()) {
            const auto gname = task.truth.gene_names.empty()
                                   ? "gene " + std::to_string(cfg.heatmap_gene)
                                   : task.truth.gene_names[static_cast<std::size_t>(cfg.heatmap_gene)];
            emit_heatmap(task.truth.coords, prediction.col(cfg.heatmap_gene), res.dir / "heatmap_pred.svg",
                         gname + " predicted");
            emit_heatmap(task.truth.coords, dense(task.truth).col(cfg.heatmap_gene), res.dir / "heatmap_truth.svg",
                         gname + " truth");
        }
        if (model.z_gt) {
            // Same kNN graph for every variant, so the GTV numbers are comparable.
            const auto g = graph::build_knn(task.train.coords, cfg.graph_k);
            res.embedding = embedding_stats(*model.z_gt, g);
            write_text(res.dir / "embedding.txt", to_key_value(*res.embedding));
            const auto norm = cfg.gtv_norm == "absolute" ? graph::VariationNorm::absolute : graph::VariationNorm::squared;
            graph::write_variation_csv(res.dir / "gtv.csv", graph::graph_total_variation(g, *model.z_gt, norm));
        }
        std::ostringstream t;
        t << "stage,seconds\n";
        for (const auto& s : res.timing) t << s.stage << ',' << fmt17(s.seconds) << '\n';
        write_text(res.dir / "timing.csv", t.str());
        return 0;
    });
    return res;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<std::pair<std::string, Variant>> ladder = {
        {"Vanilla INR", Variant::vanilla_inr},
        {"+AE", Variant::ae_no_graph},
        {"+Dice", Variant::ae_dice_no_graph},
        {"+Graph", Variant::suica},
    };
    std::vector<AblationRow> rows;
    for (const auto& [rung, variant] : ladder) {
        ExperimentConfig c = cfg;
        c.variant = variant;
        c.out = (fs::path(cfg.out) / config::to_string(variant)).string();
        rows.push_back({rung, variant, staged(rung, [&] { return run_task(c); })});
    }
    std::ostringstream csv;
    csv << "rung,variant," << metrics::csv_header() << '\n';
    for (const auto& r : rows)
        csv << r.rung << ',' << config::to_string(r.variant) << ',' << metrics::to_csv_row(r.result.report) << '\n';
    write_text(fs::path(cfg.out) / "ablation.csv", csv.str());
    std::ostringstream spectral;
    spectral << "rung,variant,gtv_squared,gtv_absolute,channel_variance_mean\n";
    for (const auto& r : rows)
        if (r.result.embedding)
            spectral << r.rung << ',' << config::to_string(r.variant) << ',' << fmt17(r.result.embedding->gtv_squared)
                     << ',' << fmt17(r.result.embedding->gtv_absolute) << ','
                     << fmt17(r.result.embedding->channel_variance_mean) << '\n';
    write_text(fs::path(cfg.out) / "spectral.csv", spectral.str());
    return rows;
}

}  // namespace suica::pipeline
