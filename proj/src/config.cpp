// SPDX-License-Identifier: Apache-2.0
#include "suica/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "suica/inr.hpp"
#include "suica/metrics.hpp"

namespace suica::config {

Task parse_task(const std::string& s) {
    if (s == "spatial_imputation" || s == "spatial") return Task::spatial_imputation;
    if (s == "gene_imputation" || s == "gene") return Task::gene_imputation;
    if (s == "denoise") return Task::denoise;
    throw ConfigError("unknown task '" + s + "'");
}

Variant parse_variant(const std::string& s) {
    if (s == "suica") return Variant::suica;
    if (s == "vanilla_inr") return Variant::vanilla_inr;
    if (s == "ae_no_graph") return Variant::ae_no_graph;
    if (s == "ae_dice_no_graph") return Variant::ae_dice_no_graph;
    if (s == "pca_baseline") return Variant::pca_baseline;
    throw ConfigError("unknown variant '" + s + "'");
}

std::string to_string(Task t) {
    switch (t) {
        case Task::spatial_imputation: return "spatial_imputation";
        case Task::gene_imputation: return "gene_imputation";
        case Task::denoise: return "denoise";
    }
    return "?";
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::suica: return "suica";
        case Variant::vanilla_inr: return "vanilla_inr";
        case Variant::ae_no_graph: return "ae_no_graph";
        case Variant::ae_dice_no_graph: return "ae_dice_no_graph";
        case Variant::pca_baseline: return "pca_baseline";
    }
    return "?";
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
}

template <class Int>
Int to_int(const std::string& key, const std::string& s) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

struct Key {
    std::string name;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define SUICA_REAL(k, field) \
    Key { k, [](const ExperimentConfig& c) { return fmt(c.field); }, \
          [](ExperimentConfig& c, const std::string& v) { c.field = to_double(k, v); } }
#define SUICA_INT(k, field) \
    Key { k, [](const ExperimentConfig& c) { return std::to_string(c.field); }, \
          [](ExperimentConfig& c, const std::string& v) { c.field = to_int<decltype(c.field)>(k, v); } }
#define SUICA_BOOL(k, field) \
    Key { k, [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }, \
          [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(k, v); } }
#define SUICA_STR(k, field) \
    Key { k, [](const ExperimentConfig& c) { return c.field; }, \
          [](ExperimentConfig& c, const std::string& v) { c.field = v; } }

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        Key{"task", [](const ExperimentConfig& c) { return to_string(c.task); },
            [](ExperimentConfig& c, const std::string& v) { c.task = parse_task(v); }},
        Key{"variant", [](const ExperimentConfig& c) { return to_string(c.variant); },
            [](ExperimentConfig& c, const std::string& v) { c.variant = parse_variant(v); }},
        SUICA_STR("backbone", backbone),
        SUICA_INT("seed", seed),
        SUICA_STR("out", out),
        Key{"data.source", [](const ExperimentConfig& c) {
                return std::string(c.source == DataSource::synthetic ? "synthetic" : "files");
            },
            [](ExperimentConfig& c, const std::string& v) {
                if (v == "synthetic") c.source = DataSource::synthetic;
                else if (v == "files") c.source = DataSource::files;
                else throw ConfigError("data.source: expected synthetic or files, got '" + v + "'");
            }},
        SUICA_STR("data.dir", data_dir),
        SUICA_STR("data.expr", data_expr),
        SUICA_STR("data.coords", data_coords),
        SUICA_STR("data.labels", data_labels),
        SUICA_STR("data.genes", data_genes),
        SUICA_INT("synthetic.n_spots", synthetic.n_spots),
        SUICA_INT("synthetic.n_genes", synthetic.n_genes),
        SUICA_INT("synthetic.n_types", synthetic.n_types),
        SUICA_REAL("synthetic.sparsity", synthetic.target_sparsity),
        SUICA_INT("synthetic.signature_genes", synthetic.signature_genes_per_type),
        SUICA_INT("synthetic.seed", synthetic.seed),
        SUICA_BOOL("preprocess.normalize", normalize),
        Key{"preprocess.target_sum",
            [](const ExperimentConfig& c) { return c.target_sum == 0.0 ? std::string("auto") : fmt(c.target_sum); },
            [](ExperimentConfig& c, const std::string& v) {
                c.target_sum = v == "auto" ? 0.0 : to_double("preprocess.target_sum", v);
            }},
        SUICA_REAL("preprocess.high_expr_fraction", high_expr_fraction),
        SUICA_INT("graph.k", graph_k),
        SUICA_STR("graph.gtv_norm", gtv_norm),
        SUICA_INT("gae.hidden", gae_hidden),
        SUICA_INT("gae.latent_dim", latent_dim),
        SUICA_INT("gae.epochs", gae_epochs),
        SUICA_REAL("gae.lr", gae_lr),
        SUICA_REAL("gae.head_bias", gae_head_bias),
        SUICA_INT("inr.hidden_layers", inr_hidden_layers),
        SUICA_INT("inr.width", inr_width),
        SUICA_REAL("inr.omega", inr_omega),
        SUICA_INT("inr.fourier_size", fourier_size),
        SUICA_REAL("inr.fourier_sigma", fourier_sigma),
        SUICA_INT("inr.epochs", inr_epochs),
        SUICA_REAL("inr.lr", inr_lr),
        SUICA_INT("inr.batch_size", inr_batch_size),
        SUICA_REAL("inr.backbone_threshold", backbone_threshold),
        SUICA_REAL("decoder.lambda", dice_lambda),
        SUICA_REAL("decoder.epsilon", dice_epsilon),
        SUICA_INT("decoder.epochs", decoder_epochs),
        SUICA_REAL("decoder.lr", decoder_lr),
        SUICA_REAL("degrade.train_fraction", train_fraction),
        SUICA_REAL("degrade.mask_fraction", mask_fraction),
        SUICA_REAL("degrade.noise_sigma", noise_sigma),
        SUICA_BOOL("degrade.noise_clamp", noise_clamp),
        SUICA_REAL("eval.tau", tau),
        SUICA_STR("eval.aggregation", aggregation),
        SUICA_INT("eval.heatmap_gene", heatmap_gene),
    };
    return table;
}

#undef SUICA_REAL
#undef SUICA_INT
#undef SUICA_BOOL
#undef SUICA_STR

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

void ExperimentConfig::validate() const {
    if (backbone != "auto") inr::parse_backbone(backbone);
    metrics::parse_aggregation(aggregation);
    require(!out.empty(), "out must not be empty");

    const bool has_dir = !data_dir.empty();
    const bool has_files = !data_expr.empty() || !data_coords.empty();
    if (source == DataSource::synthetic) {
        require(!has_dir && !has_files && data_labels.empty() && data_genes.empty(),
                "data.source=synthetic but data paths are also set; exactly one data source is allowed");
        synthetic.validate();
    } else {
        require(has_dir != has_files, "data.source=files needs exactly one of data.dir or data.expr + data.coords");
        if (has_files) require(!data_expr.empty() && !data_coords.empty(), "data.expr and data.coords go together");
        if (has_dir) require(data_labels.empty() && data_genes.empty(), "data.labels/data.genes conflict with data.dir");
    }

    require(target_sum >= 0.0, "preprocess.target_sum must be > 0 or auto");
    require(high_expr_fraction > 0.0 && high_expr_fraction <= 1.0, "preprocess.high_expr_fraction must be in (0, 1]");
    require(graph_k >= 1, "graph.k must be >= 1");
    require(gtv_norm == "squared" || gtv_norm == "absolute", "graph.gtv_norm must be squared or absolute");
    require(gae_hidden >= 1 && latent_dim >= 1, "gae.hidden and gae.latent_dim must be >= 1");
    require(gae_epochs >= 0 && inr_epochs >= 0 && decoder_epochs >= 0, "epoch counts must be >= 0");
    require(gae_lr > 0.0 && inr_lr > 0.0 && decoder_lr > 0.0, "learning rates must be > 0");
    require(inr_hidden_layers >= 1 && inr_width >= 1, "inr.hidden_layers and inr.width must be >= 1");
    require(inr_omega > 0.0, "inr.omega must be > 0");
    require(fourier_size >= 1 && fourier_sigma > 0.0, "inr.fourier_size must be >= 1 and inr.fourier_sigma > 0");
    require(inr_batch_size >= 0, "inr.batch_size must be >= 0");
    require(backbone_threshold > 0.0, "inr.backbone_threshold must be > 0");
    require(dice_lambda >= 0.0, "decoder.lambda must be >= 0");
    require(dice_epsilon > 0.0, "decoder.epsilon must be > 0");
    require(train_fraction > 0.0 && train_fraction < 1.0, "degrade.train_fraction must be in (0, 1)");
    require(mask_fraction > 0.0 && mask_fraction < 1.0, "degrade.mask_fraction must be in (0, 1)");
    require(noise_sigma >= 0.0, "degrade.noise_sigma must be >= 0");
    require(heatmap_gene >= -1, "eval.heatmap_gene must be >= -1");
}

double ExperimentConfig::resolved_tau(double mean_spot_total, Index n_genes) const {
    if (tau >= 0.0) return tau;
    if (n_genes < 1) throw DataError("cannot derive tau without genes");
    return 1e-3 * mean_spot_total / static_cast<double>(n_genes);
}

std::vector<std::pair<std::string, std::string>> to_pairs(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : keys()) out.emplace_back(k.name, k.get(cfg));
    return out;
}

std::string to_text(const ExperimentConfig& cfg) {
    std::ostringstream s;
    for (const auto& [k, v] : to_pairs(cfg)) s << k << " = " << v << '\n';
    return s.str();
}

std::vector<std::string> known_keys() {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.name);
    return out;
}

void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : keys())
        if (k.name == key) {
            k.set(cfg, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            set_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return cfg;
}

ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string() + ": cannot open config");
    std::ostringstream s;
    s << in.rdbuf();
    return parse(s.str(), path.string());
}

void save(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << to_text(cfg);
}

std::string env_name(const std::string& key) {
    std::string s = "SUICA_";
    for (char c : key) s += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

void apply_env(ExperimentConfig& cfg, const std::map<std::string, std::string>& env) {
    for (const auto& k : keys()) {
        const auto it = env.find(env_name(k.name));
        if (it == env.end()) continue;
        try {
            k.set(cfg, it->second);
        } catch (const ConfigError& e) {
            throw ConfigError(it->first + ": " + e.what());
        }
    }
}

void apply_env(ExperimentConfig& cfg) {
    std::map<std::string, std::string> env;
    for (const auto& k : keys()) {
        const std::string name = env_name(k.name);
        if (const char* v = std::getenv(name.c_str())) env[name] = v;
    }
    apply_env(cfg, env);
}

}  // namespace suica::config
