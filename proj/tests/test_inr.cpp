// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "suica/gae.hpp"
#include "suica/inr.hpp"

using namespace suica;
using namespace suica::inr;
using suica::testing::random_matrix;

namespace {

InrOptions small(Backbone b) {
    InrOptions o;
    o.backbone = b;
    o.hidden_layers = 2;
    o.hidden_width = 32;
    o.fourier.mapping_size = 16;
    o.fourier.sigma = 2;
    o.epochs = 200;
    o.lr = 1e-3;
    o.seed = 4;
    return o;
}

Matrix<double> grid(Index side) {
    Matrix<double> c(side * side, 2);
    for (Index i = 0; i < side; ++i)
        for (Index j = 0; j < side; ++j) c.row(i * side + j) << double(i) / double(side), double(j) / double(side);
    return c;
}

}  // namespace

TEST_SUITE("inr") {

TEST_CASE("normalize_coords") {
    CoordBounds b;
    b.min = {0, 0};
    b.max = {10, 10};
    Matrix<double> c(4, 2);
    c << 5, 5, 0, 0, 2.5, 7.5, 12, -1;
    const auto n = normalize_coords(c, b);
    CHECK(n(0, 0) == doctest::Approx(0));
    CHECK(n(0, 1) == doctest::Approx(0));
    CHECK(n(1, 0) == doctest::Approx(-1));
    CHECK(n(2, 0) == doctest::Approx(-0.5));
    CHECK(n(2, 1) == doctest::Approx(0.5));
    CHECK(n(3, 0) == doctest::Approx(1.4));  // not clamped
    b.max[1] = 0;
    CHECK_THROWS_AS(normalize_coords(c, b), DataError);
    Matrix<double> flat(3, 2);
    flat << 0, 1, 1, 1, 2, 1;
    CHECK_THROWS_AS(CoordBounds::of(flat).validate(), DataError);
}

TEST_CASE("embd_loss") {
    Matrix<double> a(1, 2), b = Matrix<double>::Zero(1, 2);
    a << 1, 1;
    CHECK(embd_loss(a, b) == doctest::Approx(1.0));
    CHECK(embd_loss(a, a) == 0.0);
    CHECK(embd_loss(a.array() + 3.0, b.array() + 3.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(embd_loss(a, Matrix<double>::Zero(2, 2)), DataError);
}

TEST_CASE("specs per backbone") {
    auto o = small(Backbone::siren);
    o.hidden_layers = 4;
    const auto s = inr_specs(o, 32);
    REQUIRE(s.size() == 5);
    CHECK(s[0].in_dim == 2);
    CHECK(s[0].activation == nn::Activation::sine);
    CHECK(s[0].omega == 30.0);
    CHECK(s.back().activation == nn::Activation::identity);
    CHECK(s.back().out_dim == 32);
    const auto f = inr_specs(small(Backbone::ffn), 8);
    CHECK(f[0].in_dim == 32);
    CHECK(f[0].activation == nn::Activation::relu);
    CHECK(parse_backbone("ffn") == Backbone::ffn);
    CHECK_THROWS_AS(parse_backbone("ngp"), ConfigError);
}

TEST_CASE("forward is a pure function of coordinates") {
    const auto c = random_matrix(20, 2, 1, 0, 5);
    for (auto bb : {Backbone::siren, Backbone::ffn}) {
        auto m = make_inr(CoordBounds::of(c), 6, small(bb));
        Matrix<double> twice(2, 2);
        twice << 1.5, 2.5, 1.5, 2.5;
        const auto z = inr_forward(m, twice);
        CHECK(z.row(0) == z.row(1));
        CHECK(inr_forward(m, c) == inr_forward(m, c));
        m.params.weights.back().setZero();
        m.params.biases.back().setZero();
        CHECK(inr_forward(m, c).isZero());
    }
}

TEST_CASE("siren Lipschitz probe") {
    const auto c = random_matrix(100, 2, 2, 0, 1);
    const auto o = small(Backbone::siren);
    const auto m = make_inr(CoordBounds::of(c), 4, o);
    // Bound: product of per-layer spectral norms (times omega for sine) and the coordinate scaling.
    const auto b = CoordBounds::of(c);
    double lip = 2.0 / std::min(b.max[0] - b.min[0], b.max[1] - b.min[1]);
    for (std::size_t l = 0; l < m.specs.size(); ++l) {
        const Matrix<double> w = m.params.weights[l].cast<double>();
        const double sigma = Eigen::JacobiSVD<Matrix<double>>(w).singularValues()(0);
        lip *= sigma * (m.specs[l].activation == nn::Activation::sine ? m.specs[l].omega : 1.0);
    }
    const double delta = 1e-3;
    Matrix<double> shifted = c;
    shifted.col(0).array() += delta;
    const auto z0 = inr_forward(m, c), z1 = inr_forward(m, shifted);
    for (Index i = 0; i < c.rows(); ++i) CHECK((z1.row(i) - z0.row(i)).norm() <= lip * delta * (1 + 1e-3) + 1e-5);
}

TEST_CASE("training both backbones") {
    const auto c = random_matrix(60, 2, 3, 0, 1);
    Matrix<double> z(60, 3);
    for (Index i = 0; i < 60; ++i) z.row(i) << std::sin(3 * c(i, 0)), std::cos(2 * c(i, 1)), c(i, 0) * c(i, 1);
    for (auto bb : {Backbone::siren, Backbone::ffn}) {
        auto o = small(bb);
        const auto m = train_inr(c, z, o);
        REQUIRE(m.loss_trace.size() == 200);
        CHECK(m.loss_trace.back() < 0.5 * m.loss_trace.front());
        CHECK(train_inr(c, z, o).params == m.params);
        o.epochs = 0;
        CHECK(train_inr(c, z, o).params == make_inr(CoordBounds::of(c), 3, o).params);
    }
    auto mb = small(Backbone::siren);
    mb.batch_size = 16;
    const auto m = train_inr(c, z, mb);
    CHECK(m.loss_trace.back() < m.loss_trace.front());
    CHECK_THROWS_AS(train_inr(c, z.topRows(10), mb), DataError);
}

TEST_CASE("gradient check for both backbones") {
    const auto c = random_matrix(10, 2, 5, -1, 1);
    const auto target = random_matrix(10, 3, 6);
    const nn::LossTail<double> tail = [&](const Matrix<double>& y) { return gae::gae_loss_value<double>(y, target); };
    for (auto bb : {Backbone::siren, Backbone::ffn}) {
        auto o = small(bb);
        o.hidden_width = 8;
        o.fourier.mapping_size = 4;
        o.omega = 3;
        const auto specs = inr_specs(o, 3);
        const auto scheme = bb == Backbone::siren ? nn::InitScheme::siren : nn::InitScheme::ffn;
        const auto p = nn::init_params<double>(specs, scheme, 7, o.fourier);
        const auto rep = nn::finite_diff_check(p, specs, c, nullptr, tail);
        INFO(to_string(bb) << " " << rep.max_rel_error);
        CHECK(rep.pass);
    }
}

TEST_CASE("backbone auto-selection") {
    CHECK(choose_backbone(grid(10)) == Backbone::siren);
    CHECK(choose_backbone(grid(100)) == Backbone::ffn);
    CHECK(spacing_ratio(grid(10)) == doctest::Approx(0.1 / std::sqrt(2 * 0.81)));
}

TEST_CASE("checkpoint round trip and extrapolation flag") {
    const auto c = random_matrix(30, 2, 8, 0, 1);
    const auto z = random_matrix(30, 4, 9);
    for (auto bb : {Backbone::siren, Backbone::ffn}) {
        auto o = small(bb);
        o.epochs = 5;
        const auto m = train_inr(c, z, o);
        const auto dir = suica::testing::scratch_dir("inr_ckpt");
        save_inr(dir / "inr.ckpt", m);
        const auto back = load_inr(dir / "inr.ckpt", 4, o);
        CHECK(back.params == m.params);
        CHECK(inr_forward(back, c) == inr_forward(m, c));
        CHECK_FALSE(extrapolates(m, c));
        Matrix<double> out(1, 2);
        out << 2, 0.5;
        CHECK(extrapolates(m, out));
    }
}

}  // TEST_SUITE
