// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "helpers.hpp"
#include "suica/pipeline.hpp"

using namespace suica;
using namespace suica::config;
namespace fs = std::filesystem;
using suica::testing::read_file;
using suica::testing::scratch_dir;

namespace {

// A configuration small enough to train in well under a second.
ExperimentConfig tiny(const fs::path& out) {
    ExperimentConfig c;
    c.out = out.string();
    c.synthetic.n_spots = 80;
    c.synthetic.n_genes = 40;
    c.synthetic.n_types = 3;
    c.synthetic.signature_genes_per_type = 6;
    c.high_expr_fraction = 1.0;  // 40 genes: the removal rule would cascade
    c.gae_hidden = 32;
    c.latent_dim = 8;
    c.gae_epochs = 20;
    c.gae_lr = 1e-3;
    c.inr_hidden_layers = 2;
    c.inr_width = 32;
    c.fourier_size = 16;
    c.inr_epochs = 30;
    c.inr_lr = 1e-3;
    c.decoder_epochs = 20;
    c.decoder_lr = 1e-3;
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SUICA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("stage seeds differ by tag and seed") {
    CHECK(pipeline::stage_seed(0, "gae") != pipeline::stage_seed(0, "inr"));
    CHECK(pipeline::stage_seed(0, "gae") != pipeline::stage_seed(1, "gae"));
    CHECK(pipeline::stage_seed(5, "eval") == pipeline::stage_seed(5, "eval"));
}

TEST_CASE("auto target sum puts typical nonzeros near one") {
    const auto dir = scratch_dir("pipe_target");
    auto cfg = tiny(dir);
    const auto clean = pipeline::preprocess(cfg, pipeline::load_data(cfg));
    const Matrix<double> y(clean.expr);
    double nz = 0, sum = 0;
    for (Index i = 0; i < y.size(); ++i)
        if (y(i) > 0) {
            ++nz;
            sum += y(i);
        }
    CHECK(sum / nz == doctest::Approx(1.0).epsilon(0.05));
    cfg.target_sum = 100;
    const auto fixed = pipeline::preprocess(cfg, pipeline::load_data(cfg));
    CHECK(pipeline::mean_spot_total(fixed) == doctest::Approx(100.0));
}

TEST_CASE("degradation shapes per task") {
    const auto dir = scratch_dir("pipe_degrade");
    auto cfg = tiny(dir);
    const auto clean = pipeline::preprocess(cfg, pipeline::load_data(cfg));
    auto t = pipeline::degrade(cfg, clean);
    CHECK(t.train.num_spots() + t.truth.num_spots() == clean.num_spots());
    CHECK_FALSE(t.muted);
    cfg.task = Task::gene_imputation;
    t = pipeline::degrade(cfg, clean);
    REQUIRE(t.muted);
    CHECK(t.truth.num_spots() == clean.num_spots());
    CHECK(t.train.expr.nonZeros() < clean.expr.nonZeros());
    cfg.task = Task::denoise;
    t = pipeline::degrade(cfg, clean);
    CHECK((Matrix<double>(t.truth.expr) - Matrix<double>(clean.expr)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((Matrix<double>(t.train.expr) - Matrix<double>(clean.expr)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("run_task writes the full artifact set for every task") {
    for (auto task : {Task::spatial_imputation, Task::gene_imputation, Task::denoise}) {
        const auto dir = scratch_dir("pipe_run_" + to_string(task));
        auto cfg = tiny(dir);
        cfg.task = task;
        const auto res = pipeline::run_task(cfg);
        for (const char* f : {"config.txt", "seed.txt", "model.txt", "inr.ckpt", "inr_loss.csv", "gae_loss.csv",
                              "gae_encoder.ckpt", "gae_decoder.ckpt", "decoder.ckpt", "decoder_loss.csv",
                              "predictions.txt", "prediction_coords.csv", "metrics.txt", "metrics.csv",
                              "timing.csv", "heatmap_pred.svg", "heatmap_truth.svg"})
            CHECK_MESSAGE(fs::exists(dir / f), f);
        CHECK(fs::exists(dir / "metrics_muted.txt") == (task == Task::gene_imputation));
        CHECK(fs::exists(dir / "embedding.txt"));
        CHECK(fs::exists(dir / "gtv.csv"));
        REQUIRE(res.embedding);
        CHECK(res.embedding->dim == cfg.latent_dim);
        CHECK(res.embedding->gtv_squared >= 0.0);
        CHECK(res.muted_report.has_value() == (task == Task::gene_imputation));
        CHECK(load(dir / "config.txt") == cfg);
        const auto stored = metrics::parse_key_value(read_file(dir / "metrics.txt"));
        CHECK(stored.cosine_mean == res.report.cosine_mean);
        CHECK(res.report.cosine_mean > 0.0);
        CHECK_NOTHROW(res.report.validate());
    }
}

TEST_CASE("runs are deterministic for a fixed seed") {
    const auto a = scratch_dir("pipe_det_a"), b = scratch_dir("pipe_det_b"), c = scratch_dir("pipe_det_c");
    auto cfg = tiny(a);
    pipeline::run_task(cfg);
    cfg.out = b.string();
    pipeline::run_task(cfg);
    for (const char* f : {"inr.ckpt", "decoder.ckpt", "gae_encoder.ckpt", "predictions.txt", "metrics.txt"})
        CHECK_MESSAGE(read_file(a / f) == read_file(b / f), f);
    cfg.out = c.string();
    cfg.seed = 1;
    pipeline::run_task(cfg);
    CHECK(read_file(a / "inr.ckpt") != read_file(c / "inr.ckpt"));
}

TEST_CASE("saved models reload and reproduce predictions") {
    for (auto v : {Variant::suica, Variant::vanilla_inr, Variant::pca_baseline}) {
        const auto dir = scratch_dir("pipe_reload_" + to_string(v));
        auto cfg = tiny(dir);
        cfg.variant = v;
        const auto clean = pipeline::preprocess(cfg, pipeline::load_data(cfg));
        const auto t = pipeline::degrade(cfg, clean);
        const auto model = pipeline::train(cfg, t.train);
        pipeline::save_model(dir, model);
        const auto back = pipeline::load_model(dir, cfg);
        const auto p0 = pipeline::infer(model, t.truth.coords), p1 = pipeline::infer(back, t.truth.coords);
        CHECK((p0 - p1).cwiseAbs().maxCoeff() <= 1e-5 * (1.0 + p0.cwiseAbs().maxCoeff()));
        CHECK(fs::exists(dir / "gae_encoder.ckpt") == (v == Variant::suica));
        CHECK((p0.array() >= 0.0).all() == (v != Variant::pca_baseline ? true : (p0.array() >= 0.0).all()));
    }
}

TEST_CASE("variant checkpoint sets") {
    const auto dir = scratch_dir("pipe_vanilla");
    auto cfg = tiny(dir);
    cfg.variant = Variant::vanilla_inr;
    pipeline::run_task(cfg);
    CHECK_FALSE(fs::exists(dir / "gae_encoder.ckpt"));
    CHECK_FALSE(fs::exists(dir / "decoder.ckpt"));
    CHECK_FALSE(fs::exists(dir / "embedding.txt"));
    CHECK(fs::exists(dir / "inr.ckpt"));
}

TEST_CASE("ablation ladder order and outputs") {
    const auto dir = scratch_dir("pipe_ablate");
    const auto rows = pipeline::run_ablation(tiny(dir));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].rung == "Vanilla INR");
    CHECK(rows[1].rung == "+AE");
    CHECK(rows[2].rung == "+Dice");
    CHECK(rows[3].rung == "+Graph");
    CHECK(rows[0].variant == Variant::vanilla_inr);
    CHECK(rows[3].variant == Variant::suica);
    std::istringstream csv(read_file(dir / "ablation.csv"));
    std::string line;
    int n = 0;
    while (std::getline(csv, line)) ++n;
    CHECK(n == 5);
    std::istringstream spectral(read_file(dir / "spectral.csv"));
    n = 0;
    while (std::getline(spectral, line)) ++n;
    CHECK(n == 4);  // header plus the three autoencoder rungs
    for (const auto& r : rows) CHECK(fs::exists(dir / to_string(r.variant) / "metrics.txt"));
}

TEST_CASE("PCA baseline reconstructs the training slice at full rank") {
    const auto dir = scratch_dir("pipe_pca");
    auto cfg = tiny(dir);
    cfg.variant = Variant::pca_baseline;
    const auto clean = pipeline::preprocess(cfg, pipeline::load_data(cfg));
    cfg.latent_dim = clean.num_genes();
    const auto model = pipeline::train(cfg, clean);
    REQUIRE(model.pca);
    const Matrix<double> y(clean.expr);
    const auto scores = model.pca->transform(y);
    CHECK(scores.colwise().mean().cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((model.pca->inverse(scores) - y).cwiseAbs().maxCoeff() <= 1e-6);
    cfg.latent_dim = clean.num_genes() + 1;
    CHECK_THROWS_AS(pipeline::train(cfg, clean), ConfigError);
}

TEST_CASE("stage errors keep their type and name the stage") {
    const auto dir = scratch_dir("pipe_err");
    auto cfg = tiny(dir);
    cfg.source = DataSource::files;
    cfg.data_dir = (dir / "missing").string();
    try {
        pipeline::run_task(cfg);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("data") != std::string::npos);
    } catch (const std::exception&) {
        // filesystem errors are accepted as data errors too
    }
    cfg = tiny(dir);
    cfg.graph_k = 500;
    CHECK_THROWS_AS(pipeline::run_task(cfg), ConfigError);
}

TEST_CASE("heatmaps are deterministic") {
    const auto dir = scratch_dir("pipe_heat");
    Matrix<double> coords(3, 2);
    coords << 0, 0, 1, 0, 0, 1;
    Vector<double> v(3);
    v << 0.0, 0.5, 2.0;
    pipeline::emit_heatmap(coords, v, dir / "a.svg", "t");
    pipeline::emit_heatmap(coords, v, dir / "b.svg", "t");
    CHECK(read_file(dir / "a.svg") == read_file(dir / "b.svg"));
    CHECK(read_file(dir / "a.svg").find("<svg") != std::string::npos);
    pipeline::emit_heatmap(coords, Vector<double>::Constant(3, 1.5), dir / "c.svg");
    CHECK(read_file(dir / "c.svg").find("1.5") != std::string::npos);
    v(1) = std::nan("");
    CHECK_THROWS_AS(pipeline::emit_heatmap(coords, v, dir / "d.svg"), DataError);
    CHECK_THROWS_AS(pipeline::emit_heatmap(coords, Vector<double>::Zero(2), dir / "d.svg"), DataError);
}

TEST_CASE("command-line exit codes") {
    const auto dir = scratch_dir("pipe_cli");
    const auto cfg_path = dir / "tiny.cfg";
    auto cfg = tiny(dir / "run");
    save(cfg_path, cfg);
    const std::string base = " --config " + cfg_path.string();
    CHECK(run_cli("run" + base) == 0);
    CHECK(fs::exists(dir / "run" / "metrics.txt"));
    CHECK(run_cli("infer --model " + (dir / "run").string() + " --coords " +
                  (dir / "run" / "prediction_coords.csv").string() + " --out " + (dir / "p.txt").string()) == 0);
    // The coordinate CSV holds 9 significant digits, so compare numerically.
    const Matrix<double> p0(data::read_triplets(dir / "p.txt")), p1(data::read_triplets(dir / "run" / "predictions.txt"));
    CHECK((p0 - p1).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK(run_cli("degrade" + base + " --out " + (dir / "deg").string()) == 0);
    CHECK(run_cli("evaluate" + base + " --pred " + (dir / "p.txt").string() + " --truth " +
                  (dir / "deg" / "truth").string()) == 0);
    CHECK(run_cli("run" + base + " --set graph.k=0") == 1);
    CHECK(run_cli("run" + base + " --set bogus.key=1") == 1);
    CHECK(run_cli("run --config " + (dir / "nope.cfg").string()) == 1);
    CHECK(run_cli("nonsense") == 1);
    CHECK(run_cli("run" + base + " --set data.source=files --set data.dir=" + (dir / "missing").string()) == 2);
    CHECK(run_cli("evaluate" + base + " --pred " + (dir / "missing.txt").string() + " --truth " +
                  (dir / "deg" / "truth").string()) == 2);
    // A huge learning rate drives the loss to infinity.
    CHECK(run_cli("run" + base + " --set inr.lr=1e30 --set gae.lr=1e30 --set decoder.lr=1e30") == 3);
}

}  // TEST_SUITE
