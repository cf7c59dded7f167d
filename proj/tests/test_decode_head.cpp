// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "suica/cell_graph.hpp"
#include "suica/decode_head.hpp"

using namespace suica;
using namespace suica::head;

namespace {

Matrix<double> row(std::initializer_list<double> v) {
    Matrix<double> m(1, static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) m(0, i++) = x;
    return m;
}

}  // namespace

TEST_SUITE("decode_head") {

TEST_CASE("dice hand cases") {
    CHECK(dice_loss(Matrix<double>::Zero(2, 3), Matrix<double>::Zero(2, 3)) == 0.0);
    const double t = std::tanh(10.0);
    const double exact = 1.0 - (2 * t + 1e-7) / (t + 1 + 1e-7);
    const double d = dice_loss(row({10, 0, 0}), row({2, 0, 0}));
    CHECK(d == doctest::Approx(exact).epsilon(1e-12));
    CHECK(d < 1e-6);
    const double disjoint = dice_loss(row({0, 0}), row({1, 0}));
    CHECK(disjoint == doctest::Approx(1 - 1e-7 / (1 + 1e-7)));
    CHECK(disjoint > 0.99);
    CHECK_THROWS_AS(dice_loss(row({-0.1, 1}), row({1, 0})), DataError);
}

TEST_CASE("dice range on random nonnegative instances") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0, 3);
    std::bernoulli_distribution zero(0.6);
    std::uniform_int_distribution<int> dim(1, 8);
    for (int t = 0; t < 1000; ++t) {
        const Index r = dim(rng), c = dim(rng);
        Matrix<double> h(r, c), y(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) {
                h(i, j) = zero(rng) ? 0 : u(rng);
                y(i, j) = zero(rng) ? 0 : u(rng);
            }
        const double d = dice_loss(h, y);
        CHECK(d >= 0.0);
        CHECK(d < 1.0);
    }
}

TEST_CASE("dice increases with false-positive mass") {
    double prev = -1.0;
    for (double fp : {0.0, 0.1, 0.5, 1.0, 3.0}) {
        const double d = dice_loss(row({2, fp, fp}), row({1, 0, 0}));
        CHECK(d > prev);
        prev = d;
    }
}

TEST_CASE("recons loss hand cases") {
    ReconsLossConfig cfg;
    cfg.lambda = 0;
    const auto y = row({2, 0});
    auto p = recons_loss(row({0, 0}), y, Masks::of(y), cfg);
    CHECK(p.mse_pos == doctest::Approx(4));
    CHECK(p.mae_all == doctest::Approx(1));
    CHECK(p.total == doctest::Approx(5));

    Matrix<double> yy(2, 3);
    yy << 1, 0, 2, 0, 3, 0;
    cfg.lambda = 0.5;
    p = recons_loss(yy, yy, Masks::of(yy), cfg);
    CHECK(p.mse_pos == 0.0);
    CHECK(p.mae_all == 0.0);
    CHECK(p.dice < 0.1);

    const auto h = suica::testing::random_matrix(2, 3, 4, 0, 2);
    const auto a = recons_loss(h, yy, Masks::of(yy), cfg);
    cfg.lambda = 1.0;
    const auto b = recons_loss(h, yy, Masks::of(yy), cfg);
    CHECK(b.total - a.total == doctest::Approx(0.5 * a.dice).epsilon(1e-12));
    CHECK_THROWS_AS(recons_loss(h, Matrix<double>::Zero(2, 3), Masks::of(Matrix<double>::Zero(2, 3)), cfg), DataError);
    cfg.epsilon = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("masks") {
    Matrix<double> y(2, 2);
    y << 0, 1, 2, 0;
    const auto m = Masks::of(y);
    CHECK(m.all_count == 4);
    CHECK(m.positive_count() == 2);
    CHECK(m.positive(0, 1));
    CHECK_FALSE(m.positive(1, 1));
}

TEST_CASE("fine-tuning keeps the INR frozen and lowers the loss") {
    data::SyntheticParams sp;
    sp.n_spots = 60;
    sp.n_genes = 30;
    sp.n_types = 3;
    sp.signature_genes_per_type = 5;
    auto s = data::filter_empty(data::generate_synthetic(sp));
    s = data::normalize_total(s, static_cast<double>(s.expr.nonZeros()) / s.num_spots(), 1.0).slice;
    const auto g = graph::build_knn(s.coords, 5);
    gae::GaeOptions go;
    go.hidden = 32;
    go.latent_dim = 8;
    go.epochs = 30;
    go.lr = 1e-3;
    const auto model = gae::train_gae(s, &g, go);
    inr::InrOptions io;
    io.hidden_layers = 2;
    io.hidden_width = 32;
    io.epochs = 100;
    io.lr = 1e-3;
    const auto net = inr::train_inr(s.coords, gae::encode(model, s, &g), io);
    const auto frozen = net.params;

    ReconsLossConfig cfg;
    cfg.epochs = 100;
    cfg.lr = 1e-3;
    const auto ft = finetune_decoder(net, model, s, cfg, 1);
    CHECK(net.params == frozen);
    REQUIRE(ft.trace.size() == 100);
    CHECK(ft.trace.back().total < ft.trace.front().total);
    CHECK(!(ft.decoder == model.decoder_params));

    // Lambda only enters through the Dice term: the step-0 parts agree.
    cfg.lambda = 0.0;
    const auto ft0 = finetune_decoder(net, model, s, cfg, 1);
    CHECK(ft0.trace.front().mse_pos == ft.trace.front().mse_pos);
    CHECK(ft0.trace.front().mae_all == ft.trace.front().mae_all);
    CHECK(ft0.trace.front().dice == ft.trace.front().dice);

    const auto mse = finetune_decoder(net, model, s, cfg, 1, DecoderObjective::mse);
    CHECK(mse.trace.back().total < mse.trace.front().total);

    const auto pred = predict(net, model.decoder, ft.decoder, s.coords);
    CHECK(pred.minCoeff() >= 0.0);
    CHECK(predict(net, model.decoder, ft.decoder, s.coords) == pred);
    CHECK(predict(net, model.decoder, ft.decoder, suica::testing::random_matrix(7, 2, 3, -1, 2)).minCoeff() >= 0.0);

    const auto dir = suica::testing::scratch_dir("recons_trace");
    write_recons_trace(dir / "t.csv", ft.trace);
    CHECK(suica::testing::read_file(dir / "t.csv").rfind("epoch,total,mse_pos,mae_all,dice\n", 0) == 0);
}

}  // TEST_SUITE
