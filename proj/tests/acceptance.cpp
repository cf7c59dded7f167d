// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; no arguments runs all nine.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "suica/metric_oracles.hpp"
#include "suica/pipeline.hpp"

using namespace suica;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [fail]");
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Matrix<double> uniform(Index r, Index c, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix<double> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m(i) = u(rng);
    return m;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("suica_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// ---- 1: gradients ------------------------------------------------------------

Outcome gradient_correctness() {
    Outcome o;
    std::mt19937_64 rng(11);
    const Index n = 10;
    const Matrix<double> coords = uniform(n, 2, rng, -1, 1);
    const auto graph = graph::build_knn(coords, 3);
    const SparseMatrix<double> adj = graph::normalized_adjacency(graph);
    const Matrix<double> x = uniform(n, 4, rng, -1, 1);
    const Matrix<double> target = uniform(n, 3, rng, -1, 1);
    const nn::LossTail<double> mse = [&](const Matrix<double>& y) { return gae::gae_loss_value<double>(y, target); };

    auto check = [&](const std::string& name, const std::vector<nn::LayerSpec>& specs, nn::InitScheme scheme,
                     const Matrix<double>& input, const SparseMatrix<double>* a, const nn::LossTail<double>& tail) {
        const auto p = nn::init_params<double>(specs, scheme, 5);
        const auto rep = nn::finite_diff_check(p, specs, input, a, tail, 1e-4, 1e-5);
        o.require(rep.pass, name + " " + fmt(rep.max_rel_error));
    };
    using nn::Activation;
    using nn::LayerKind;
    for (auto act : {Activation::identity, Activation::relu, Activation::tanh, Activation::sine}) {
        const double omega = act == Activation::sine ? 3.0 : 1.0;
        check("dense+" + nn::to_string(act), {{LayerKind::dense, 4, 5, act, omega}, {LayerKind::dense, 5, 3}},
              nn::InitScheme::he, x, nullptr, mse);
        check("gcn+" + nn::to_string(act), {{LayerKind::gcn, 4, 5, act, omega}, {LayerKind::dense, 5, 3}},
              nn::InitScheme::he, x, &adj, mse);
    }

    // GAE reconstruction loss through the graph encoder and dense decoder.
    const Matrix<double> y_gt = uniform(n, 6, rng, 0, 2).cwiseMax(0.8).array() - 0.8;
    const auto enc = gae::encoder_specs(6, 8, 3, true);
    const auto dec = gae::decoder_specs(6, 8, 3);
    std::vector<nn::LayerSpec> gae_specs = enc;
    gae_specs.insert(gae_specs.end(), dec.begin(), dec.end());
    // The ReLU output head can pin entries at exactly 0, so the input is shifted
    // positive to keep the check away from the kink.
    check("gae loss", gae_specs, nn::InitScheme::he, y_gt.array() + 0.5, &adj,
          [&](const Matrix<double>& y) { return gae::gae_loss_value<double>(y, y_gt); });

    // Embedding loss through a SIREN coordinate network.
    inr::InrOptions io;
    io.hidden_layers = 2;
    io.hidden_width = 8;
    io.omega = 3.0;
    const Matrix<double> z_gt = uniform(n, 3, rng, -1, 1);
    check("embd loss", inr::inr_specs(io, 3), nn::InitScheme::siren, coords, nullptr,
          [&](const Matrix<double>& z) { return gae::gae_loss_value<double>(z, z_gt); });

    // Reconstruction loss with the Dice term through a decoder.
    const head::Masks masks = head::Masks::of(y_gt);
    head::ReconsLossConfig rc;
    const Matrix<double> z = uniform(n, 3, rng, 0.5, 1.5);
    std::vector<nn::LayerSpec> dspecs = {{LayerKind::dense, 3, 8, Activation::tanh}, {LayerKind::dense, 8, 6}};
    auto tail = [&](const Matrix<double>& y) {
        // Shift so every prediction is positive and no residual sits at 0.
        const Matrix<double> shifted = y.array() + 3.0;
        auto lv = head::recons_loss_value<double>(shifted, y_gt, masks, rc, nullptr);
        return lv;
    };
    check("recons loss (mse_pos + mae_all + dice)", dspecs, nn::InitScheme::he, z, nullptr, tail);
    rc.lambda = 0.0;
    const nn::LossTail<double> dice_only = [&](const Matrix<double>& y) {
        const Matrix<double> shifted = y.array().abs() + 0.1;
        auto lv = head::dice_loss_value<double>(shifted, y_gt, rc.epsilon);
        lv.grad = (lv.grad.array() * y.array().sign()).matrix();
        return lv;
    };
    check("dice term", dspecs, nn::InitScheme::he, z, nullptr, dice_only);
    return o;
}

// ---- 2: Dice -----------------------------------------------------------------

Outcome dice_suite() {
    Outcome o;
    const double eps = 1e-7;
    const Matrix<double> z = Matrix<double>::Zero(3, 4);
    o.require(head::dice_loss(z, z, eps) == 0.0, "empty-empty " + fmt(head::dice_loss(z, z, eps)));

    Matrix<double> gt = Matrix<double>::Zero(3, 4);
    gt(0, 0) = gt(1, 2) = gt(2, 3) = 1.0;
    const Matrix<double> confident = 20.0 * gt;
    const double exact = head::dice_loss(confident, gt, eps);
    o.require(exact < 1e-6, "exact support " + fmt(exact));

    Matrix<double> disjoint = Matrix<double>::Zero(3, 4);
    disjoint(0, 1) = disjoint(1, 0) = disjoint(2, 0) = 20.0;  // tanh ~ 1 per entry
    const double dj = head::dice_loss(disjoint, gt, eps);
    o.require(dj > 0.99, "disjoint " + fmt(dj));

    std::mt19937_64 rng(3);
    std::bernoulli_distribution on(0.3);
    std::exponential_distribution<double> mag(0.5);
    double lo = 1.0, hi = 0.0;
    for (int t = 0; t < 1000; ++t) {
        Matrix<double> y(4, 5), h(4, 5);
        for (Index i = 0; i < y.size(); ++i) {
            y(i) = on(rng) ? mag(rng) : 0.0;
            h(i) = on(rng) ? mag(rng) : 0.0;
        }
        const double d = head::dice_loss(h, y, eps);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    o.require(lo >= 0.0 && hi < 1.0, "1000 random in [" + fmt(lo) + ", " + fmt(hi) + "]");
    return o;
}

// ---- 3: metric oracles ---------------------------------------------------------

Outcome metric_oracles() {
    Outcome o;
    for (const auto& name : oracles::oracle_metric_names()) {
        const auto rep = oracles::oracle_check(name, 100, 2024);
        o.require(rep.pass && rep.trials >= 100, name + " " + fmt(rep.max_abs_diff));
    }
    const double ari = metrics::adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1});
    o.require(ari == -0.5, "ARI([0,0,1,1],[0,1,0,1]) = " + fmt(ari));
    return o;
}

// ---- 4: overfit ------------------------------------------------------------------

Outcome overfit() {
    Outcome o;
    config::ExperimentConfig cfg;
    cfg.synthetic.n_spots = 50;
    cfg.synthetic.n_genes = 100;
    const auto clean = pipeline::preprocess(cfg, pipeline::load_data(cfg));
    const auto model = pipeline::train(cfg, clean);
    const Matrix<double> y(clean.expr);
    const auto pred = pipeline::infer(model, clean.coords);
    const double cos = metrics::cosine_per_spot(pred, y);
    const double mse = metrics::masked_fidelity(pred, y).mse_pos;
    o.require(cos >= 0.99, "train cosine " + fmt(cos));
    o.require(mse < 1e-3, "train mse_pos " + fmt(mse));
    return o;
}

// ---- 5-7: scaled experiments -------------------------------------------------------

struct SeedRuns {
    metrics::MetricReport vanilla, ae, dice, suica, pca;
};

std::vector<SeedRuns> ladder_runs() {
    static std::vector<SeedRuns> cache;
    if (!cache.empty()) return cache;
    const auto root = scratch("ladder");
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        config::ExperimentConfig cfg;
        cfg.seed = seed;
        cfg.heatmap_gene = -1;
        SeedRuns r;
        auto run = [&](config::Variant v) {
            auto c = cfg;
            c.variant = v;
            c.out = (root / ("seed" + std::to_string(seed)) / config::to_string(v)).string();
            const auto rep = pipeline::run_task(c).report;
            std::printf("  seed %llu %-16s cosine %.4f  zero_iou %.4f  ari %.4f\n",
                        static_cast<unsigned long long>(seed), config::to_string(v).c_str(), rep.cosine_mean,
                        rep.zero_iou, rep.ari);
            std::fflush(stdout);
            return rep;
        };
        r.vanilla = run(config::Variant::vanilla_inr);
        r.ae = run(config::Variant::ae_no_graph);
        r.dice = run(config::Variant::ae_dice_no_graph);
        r.suica = run(config::Variant::suica);
        r.pca = run(config::Variant::pca_baseline);
        cache.push_back(r);
    }
    return cache;
}

template <class F>
double median_of(const std::vector<SeedRuns>& runs, F f) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(f(r));
    return median(v);
}

Outcome sparsity_preservation() {
    Outcome o;
    const auto runs = ladder_runs();
    const double iou = median_of(runs, [](const SeedRuns& r) { return r.suica.zero_iou; });
    const double gap = median_of(runs, [](const SeedRuns& r) { return r.suica.zero_iou - r.pca.zero_iou; });
    o.require(iou >= 0.8, "median SUICA IoU " + fmt(iou));
    o.require(gap >= 0.3, "median SUICA-PCA IoU " + fmt(gap));
    return o;
}

Outcome ablation_direction() {
    Outcome o;
    const auto runs = ladder_runs();
    const double cos_gap = median_of(runs, [](const SeedRuns& r) { return r.suica.cosine_mean - r.vanilla.cosine_mean; });
    const double iou_gap = median_of(runs, [](const SeedRuns& r) { return r.dice.zero_iou - r.ae.zero_iou; });
    o.require(cos_gap >= 0.02, "median SUICA-vanilla cosine " + fmt(cos_gap));
    o.require(iou_gap >= 0.05, "median +Dice - +AE IoU " + fmt(iou_gap));
    return o;
}

Outcome bio_conservation() {
    Outcome o;
    const auto runs = ladder_runs();
    const double ari = median_of(runs, [](const SeedRuns& r) { return r.suica.ari; });
    const double van = median_of(runs, [](const SeedRuns& r) { return r.vanilla.ari; });
    o.require(ari >= 0.6, "median SUICA ARI " + fmt(ari));
    o.require(ari >= van, "vanilla ARI " + fmt(van));
    return o;
}

// ---- 8: determinism ------------------------------------------------------------------

Outcome determinism() {
    Outcome o;
    config::ExperimentConfig cfg;
    cfg.synthetic.n_spots = 200;
    cfg.gae_epochs = 50;
    cfg.inr_epochs = 100;
    cfg.decoder_epochs = 100;
    cfg.inr_batch_size = 64;
    const auto a = scratch("det_a"), b = scratch("det_b");
    cfg.out = a.string();
    const auto ra = pipeline::run_task(cfg).report;
    cfg.out = b.string();
    const auto rb = pipeline::run_task(cfg).report;
    const std::vector<std::pair<const char*, std::pair<double, double>>> fields = {
        {"mae_pos", {ra.mae_pos, rb.mae_pos}},       {"mse_pos", {ra.mse_pos, rb.mse_pos}},
        {"cosine", {ra.cosine_mean, rb.cosine_mean}}, {"pearson", {ra.pearson_mean, rb.pearson_mean}},
        {"spearman", {ra.spearman_mean, rb.spearman_mean}}, {"zero_iou", {ra.zero_iou, rb.zero_iou}},
        {"ari", {ra.ari, rb.ari}}};
    double worst = 0.0;
    for (const auto& [name, v] : fields) worst = std::max(worst, std::fabs(v.first - v.second));
    o.require(worst <= 1e-6, "max report diff " + fmt(worst));
    int same = 0, total = 0;
    for (const char* f : {"gae_encoder.ckpt", "gae_decoder.ckpt", "inr.ckpt", "decoder.ckpt"}) {
        ++total;
        same += fs::exists(a / f) && read_bytes(a / f) == read_bytes(b / f);
    }
    o.require(same == total, std::to_string(same) + "/" + std::to_string(total) + " checkpoints byte-identical");
    return o;
}

// ---- 9: protocol ------------------------------------------------------------------------

Outcome protocol() {
    Outcome o;
    data::SyntheticParams p;
    const auto slice = data::filter_empty(data::generate_synthetic(p));
    const Index n = slice.num_spots(), g = slice.num_genes();

    const auto split = data::split_spatial(slice, 0.8, 1);
    std::set<Index> rows(split.train_rows.begin(), split.train_rows.end());
    rows.insert(split.test_rows.begin(), split.test_rows.end());
    o.require(split.train.num_spots() == 800 && split.test.num_spots() == 200 &&
                  static_cast<Index>(rows.size()) == n,
              "split " + std::to_string(split.train.num_spots()) + "/" + std::to_string(split.test.num_spots()));

    const auto mask = data::mask_genes(slice, 0.7, 1);
    const Index expected = static_cast<Index>(std::floor(0.7 * static_cast<double>(n) * static_cast<double>(g)));
    const Matrix<double> before(slice.expr), after(mask.degraded.expr);
    bool consistent = true;
    for (Index i = 0; i < before.size(); ++i)
        consistent &= mask.muted(i) ? after(i) == 0.0 : after(i) == before(i);
    o.require(mask.muted.count() == expected && consistent,
              "muted " + std::to_string(mask.muted.count()) + " of floor(0.7 n g) = " + std::to_string(expected));

    const auto noisy = data::add_noise(slice, 1.0, false, 1);
    const Matrix<double> noise = Matrix<double>(noisy.expr) - before;
    const double mean = noise.mean();
    const double sd = std::sqrt((noise.array() - mean).square().sum() / static_cast<double>(noise.size() - 1));
    // 3e5 samples: the standard error of the mean is ~0.002.
    o.require(std::fabs(mean) < 0.01 && std::fabs(sd - 1.0) < 0.01, "noise mean " + fmt(mean) + " sd " + fmt(sd));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradient_correctness},
        {"dice loss suite", dice_suite},
        {"metric oracles", metric_oracles},
        {"overfit check", overfit},
        {"sparsity preservation", sparsity_preservation},
        {"ablation direction", ablation_direction},
        {"bio-conservation", bio_conservation},
        {"determinism", determinism},
        {"protocol fidelity", protocol},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %d (%s): %s (%.1fs)\n", out.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    out.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !out.pass;
    }
    return failures == 0 ? 0 : 1;
}
