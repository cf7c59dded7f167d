// SPDX-License-Identifier: Apache-2.0
#include "suica/neural_core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace suica::nn {

void LayerSpec::validate() const {
    if (in_dim <= 0 || out_dim <= 0) throw ConfigError("layer dimensions must be positive");
    if (activation == Activation::sine && !(omega > 0.0)) throw ConfigError("sine layers need omega > 0");
}

void validate_specs(const std::vector<LayerSpec>& specs) {
    if (specs.empty()) throw ConfigError("network needs at least one layer");
    for (std::size_t l = 0; l < specs.size(); ++l) {
        specs[l].validate();
        if (l > 0 && specs[l].in_dim != specs[l - 1].out_dim)
            throw ConfigError("layer " + std::to_string(l) + " expects " + std::to_string(specs[l].in_dim) +
                              " inputs, previous layer emits " + std::to_string(specs[l - 1].out_dim));
    }
}

InitScheme parse_init_scheme(const std::string& name) {
    if (name == "siren") return InitScheme::siren;
    if (name == "ffn") return InitScheme::ffn;
    if (name == "he") return InitScheme::he;
    throw ConfigError("unknown init scheme '" + name + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sine: return "sine";
    }
    return "?";
}

std::string to_string(LayerKind k) { return k == LayerKind::dense ? "dense" : "gcn"; }

// ---- ParamSet ---------------------------------------------------------------

template <class Scalar>
Index ParamSet<Scalar>::size() const {
    Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

template <class Scalar>
bool ParamSet<Scalar>::all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
        if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return !fourier || fourier->allFinite();
}

template <class Scalar>
ParamSet<Scalar> ParamSet<Scalar>::zeros_like() const {
    ParamSet out;
    for (const auto& w : weights) out.weights.push_back(Matrix<Scalar>::Zero(w.rows(), w.cols()));
    for (const auto& b : biases) out.biases.push_back(Vector<Scalar>::Zero(b.size()));
    return out;
}

// ---- init -------------------------------------------------------------------

template <class Scalar>
ParamSet<Scalar> init_params(const std::vector<LayerSpec>& specs, InitScheme scheme, std::uint64_t seed,
                             const FourierOptions& fourier) {
    validate_specs(specs);
    std::mt19937_64 rng(seed);
    ParamSet<Scalar> params;

    if (scheme == InitScheme::ffn) {
        if (fourier.mapping_size <= 0) throw ConfigError("Fourier mapping size must be positive");
        if (specs.front().in_dim != 2 * fourier.mapping_size)
            throw ConfigError("ffn: first layer must take 2 x mapping_size inputs");
        std::normal_distribution<double> normal(0.0, fourier.sigma);
        Matrix<Scalar> b(2, fourier.mapping_size);
        for (Index r = 0; r < 2; ++r)
            for (Index c = 0; c < b.cols(); ++c) b(r, c) = static_cast<Scalar>(normal(rng));
        params.fourier = std::move(b);
    }

    double siren_omega = 1.0;
    for (const auto& s : specs)
        if (s.activation == Activation::sine) {
            siren_omega = s.omega;
            break;
        }

    for (std::size_t l = 0; l < specs.size(); ++l) {
        const auto& s = specs[l];
        Matrix<Scalar> w(s.in_dim, s.out_dim);
        Vector<Scalar> b = Vector<Scalar>::Zero(s.out_dim);
        const double fan_in = static_cast<double>(s.in_dim);
        if (scheme == InitScheme::siren) {
            const double bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / siren_omega;
            std::uniform_real_distribution<double> uw(-bound, bound);
            for (Index c = 0; c < w.cols(); ++c)
                for (Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(uw(rng));
            const double bb = 1.0 / std::sqrt(fan_in);
            std::uniform_real_distribution<double> ub(-bb, bb);
            for (Index i = 0; i < b.size(); ++i) b(i) = static_cast<Scalar>(ub(rng));
        } else {
            std::normal_distribution<double> nw(0.0, std::sqrt(2.0 / fan_in));
            for (Index c = 0; c < w.cols(); ++c)
                for (Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(nw(rng));
        }
        params.weights.push_back(std::move(w));
        params.biases.push_back(std::move(b));
    }
    return params;
}

template <class Scalar>
Matrix<Scalar> fourier_map(const Matrix<Scalar>& coords, const Matrix<Scalar>& b) {
    if (coords.cols() != b.rows())
        throw DataError("fourier_map: coordinates have " + std::to_string(coords.cols()) + " columns, B has " +
                        std::to_string(b.rows()) + " rows");
    const Index m = b.cols();
    Matrix<Scalar> proj = (Scalar(2.0 * std::numbers::pi) * coords) * b;
    Matrix<Scalar> out(coords.rows(), 2 * m);
    out.leftCols(m) = proj.array().sin().matrix();
    out.rightCols(m) = proj.array().cos().matrix();
    return out;
}

// ---- forward / backward -------------------------------------------------------

namespace {

template <class Scalar>
void apply_activation(const LayerSpec& s, const Matrix<Scalar>& pre, Matrix<Scalar>& out) {
    switch (s.activation) {
        case Activation::identity: out = pre; break;
        case Activation::relu: out = pre.cwiseMax(Scalar(0)); break;
        case Activation::tanh: out = pre.array().tanh().matrix(); break;
        case Activation::sine: out = (Scalar(s.omega) * pre.array()).sin().matrix(); break;
    }
}

// d act / d pre, multiplied into `grad` in place.
template <class Scalar>
void activation_backward(const LayerSpec& s, const Matrix<Scalar>& pre, const Matrix<Scalar>& out,
                         Matrix<Scalar>& grad) {
    switch (s.activation) {
        case Activation::identity: break;
        case Activation::relu: grad.array() *= (pre.array() > Scalar(0)).template cast<Scalar>(); break;
        case Activation::tanh: grad.array() *= Scalar(1) - out.array().square(); break;
        case Activation::sine: {
            const Scalar w = Scalar(s.omega);
            grad.array() *= w * (w * pre.array()).cos();
            break;
        }
    }
}

template <class Scalar>
void check_layer_shapes(const ParamSet<Scalar>& params, const std::vector<LayerSpec>& specs) {
    if (params.num_layers() != specs.size())
        throw DataError("parameter set has " + std::to_string(params.num_layers()) + " layers, specs have " +
                        std::to_string(specs.size()));
    for (std::size_t l = 0; l < specs.size(); ++l)
        if (params.weights[l].rows() != specs[l].in_dim || params.weights[l].cols() != specs[l].out_dim ||
            params.biases[l].size() != specs[l].out_dim)
            throw DataError("layer " + std::to_string(l) + ": parameter shape does not match spec");
}

template <class Scalar>
Matrix<Scalar> network_input(const ParamSet<Scalar>& params, const Matrix<Scalar>& x) {
    if (params.fourier) return fourier_map<Scalar>(x, *params.fourier);
    return x;
}

template <class Scalar>
void layer_preact(const LayerSpec& s, const Matrix<Scalar>& w, const Vector<Scalar>& b, const Matrix<Scalar>& h,
                  const SparseMatrix<Scalar>* adjacency, std::size_t l, Matrix<Scalar>& pre) {
    if (h.cols() != s.in_dim)
        throw DataError("layer " + std::to_string(l) + ": input has " + std::to_string(h.cols()) +
                        " columns, expected " + std::to_string(s.in_dim));
    if (s.kind == LayerKind::gcn) {
        if (adjacency == nullptr) throw DataError("layer " + std::to_string(l) + ": gcn layer requires a graph");
        if (adjacency->rows() != h.rows())
            throw DataError("layer " + std::to_string(l) + ": graph has " + std::to_string(adjacency->rows()) +
                            " vertices, input has " + std::to_string(h.rows()) + " rows");
        Matrix<Scalar> hw;
        hw.noalias() = h * w;
        pre.noalias() = *adjacency * hw;
    } else {
        pre.noalias() = h * w;
    }
    pre.rowwise() += b.transpose();
}

}  // namespace

template <class Scalar>
Activations<Scalar> forward(const ParamSet<Scalar>& params, const std::vector<LayerSpec>& specs,
                            const Matrix<Scalar>& x, const SparseMatrix<Scalar>* adjacency) {
    check_layer_shapes(params, specs);
    Activations<Scalar> acts;
    acts.inputs.reserve(specs.size());
    acts.preacts.resize(specs.size());
    acts.inputs.push_back(network_input(params, x));
    for (std::size_t l = 0; l < specs.size(); ++l) {
        layer_preact(specs[l], params.weights[l], params.biases[l], acts.inputs[l], adjacency, l, acts.preacts[l]);
        Matrix<Scalar> out;
        apply_activation(specs[l], acts.preacts[l], out);
        if (!out.allFinite()) throw NumericalError("non-finite activation in layer " + std::to_string(l));
        if (l + 1 < specs.size())
            acts.inputs.push_back(std::move(out));
        else
            acts.output = std::move(out);
    }
    return acts;
}

template <class Scalar>
Matrix<Scalar> evaluate(const ParamSet<Scalar>& params, const std::vector<LayerSpec>& specs, const Matrix<Scalar>& x,
                        const SparseMatrix<Scalar>* adjacency) {
    check_layer_shapes(params, specs);
    Matrix<Scalar> h = network_input(params, x);
    Matrix<Scalar> pre;
    for (std::size_t l = 0; l < specs.size(); ++l) {
        layer_preact(specs[l], params.weights[l], params.biases[l], h, adjacency, l, pre);
        apply_activation(specs[l], pre, h);
        if (!h.allFinite()) throw NumericalError("non-finite activation in layer " + std::to_string(l));
    }
    return h;
}

template <class Scalar>
Backward<Scalar> backward(const ParamSet<Scalar>& params, const std::vector<LayerSpec>& specs,
                          const Activations<Scalar>& acts, const Matrix<Scalar>& output_grad,
                          const SparseMatrix<Scalar>* adjacency) {
    check_layer_shapes(params, specs);
    if (output_grad.rows() != acts.output.rows() || output_grad.cols() != acts.output.cols())
        throw DataError("backward: output gradient shape mismatch");
    Backward<Scalar> result;
    result.grads = params.zeros_like();
    Matrix<Scalar> grad = output_grad;
    for (std::size_t l = specs.size(); l-- > 0;) {
        const auto& s = specs[l];
        const Matrix<Scalar>& out = l + 1 < specs.size() ? acts.inputs[l + 1] : acts.output;
        activation_backward(s, acts.preacts[l], out, grad);
        result.grads.biases[l] = grad.colwise().sum().transpose();
        if (s.kind == LayerKind::gcn) {
            Matrix<Scalar> agrad;
            agrad.noalias() = adjacency->transpose() * grad;
            grad = std::move(agrad);
        }
        result.grads.weights[l].noalias() = acts.inputs[l].transpose() * grad;
        Matrix<Scalar> next;
        next.noalias() = grad * params.weights[l].transpose();
        grad = std::move(next);
        if (!result.grads.weights[l].allFinite())
            throw NumericalError("non-finite gradient in layer " + std::to_string(l));
    }
    result.input_grad = std::move(grad);
    return result;
}

template <class Scalar>
Gradients<Scalar> gradients(const ParamSet<Scalar>& params, const std::vector<LayerSpec>& specs,
                            const Matrix<Scalar>& x, const SparseMatrix<Scalar>* adjacency,
                            const LossTail<Scalar>& loss_tail) {
    auto acts = forward(params, specs, x, adjacency);
    auto loss = loss_tail(acts.output);
    if (!std::isfinite(loss.value)) throw NumericalError("non-finite loss");
    Gradients<Scalar> out;
    out.loss = loss.value;
    out.grads = backward(params, specs, acts, loss.grad, adjacency).grads;
    return out;
}

// ---- Adam ------------------------------------------------------------------

namespace {

template <class Scalar, class P>
void adam_update(P& param, const P& grad, P& m, P& v, double b1, double b2, Scalar c1, Scalar c2, Scalar lr,
                 Scalar eps) {
    m.array() = Scalar(b1) * m.array() + Scalar(1.0 - b1) * grad.array();
    v.array() = Scalar(b2) * v.array() + Scalar(1.0 - b2) * grad.array().square();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

}  // namespace

template <class Scalar>
void adam_step(ParamSet<Scalar>& params, const ParamSet<Scalar>& grads, AdamState<Scalar>& state, double lr) {
    if (grads.num_layers() != params.num_layers() || state.first.num_layers() != params.num_layers())
        throw DataError("adam_step: parameter/gradient layer count mismatch");
    ++state.step;
    const auto t = static_cast<double>(state.step);
    const auto c1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, t));
    const auto c2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, t));
    const auto eps = static_cast<Scalar>(state.epsilon);
    const auto step = static_cast<Scalar>(lr);
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        if (grads.weights[l].rows() != params.weights[l].rows() || grads.weights[l].cols() != params.weights[l].cols())
            throw DataError("adam_step: shape mismatch in layer " + std::to_string(l));
        adam_update(params.weights[l], grads.weights[l], state.first.weights[l], state.second.weights[l],
                    state.beta1, state.beta2, c1, c2, step, eps);
        adam_update(params.biases[l], grads.biases[l], state.first.biases[l], state.second.biases[l], state.beta1,
                    state.beta2, c1, c2, step, eps);
    }
}

// ---- finite differences --------------------------------------------------------

GradCheckReport finite_diff_compare(const ParamSet<double>& analytic, const ParamSet<double>& params,
                                    const std::vector<LayerSpec>& specs, const Matrix<double>& x,
                                    const SparseMatrix<double>* adjacency, const LossTail<double>& loss_tail,
                                    double tol, double step) {
    GradCheckReport report;
    report.tolerance = tol;
    report.layer_max_rel_error.assign(params.num_layers(), 0.0);
    ParamSet<double> probe = params;
    auto loss_at = [&]() { return loss_tail(evaluate(probe, specs, x, adjacency)).value; };
    auto check = [&](double& slot, double analytic_value, std::size_t layer, bool is_bias) {
        const double saved = slot;
        slot = saved + step;
        const double up = loss_at();
        slot = saved - step;
        const double down = loss_at();
        slot = saved;
        const double numeric = (up - down) / (2.0 * step);
        // Gradients below 1e-6 in magnitude are compared in absolute terms.
        const double denom = std::max({std::abs(analytic_value), std::abs(numeric), 1e-6});
        const double rel = std::abs(analytic_value - numeric) / denom;
        ++report.checked;
        report.layer_max_rel_error[layer] = std::max(report.layer_max_rel_error[layer], rel);
        if (rel > report.max_rel_error || !std::isfinite(rel)) {
            report.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
            report.worst_layer = layer;
            report.worst_is_bias = is_bias;
        }
    };
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        for (Index i = 0; i < probe.weights[l].size(); ++i)
            check(probe.weights[l].data()[i], analytic.weights[l].data()[i], l, false);
        for (Index i = 0; i < probe.biases[l].size(); ++i)
            check(probe.biases[l].data()[i], analytic.biases[l].data()[i], l, true);
    }
    report.pass = report.max_rel_error <= tol;
    return report;
}

GradCheckReport finite_diff_check(const ParamSet<double>& params, const std::vector<LayerSpec>& specs,
                                  const Matrix<double>& x, const SparseMatrix<double>* adjacency,
                                  const LossTail<double>& loss_tail, double tol, double step) {
    const auto analytic = gradients(params, specs, x, adjacency, loss_tail).grads;
    return finite_diff_compare(analytic, params, specs, x, adjacency, loss_tail, tol, step);
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

template <class Scalar>
constexpr const char* scalar_tag() {
    return sizeof(Scalar) == 4 ? "f32" : "f64";
}

template <class Scalar>
void write_values(std::ostream& out, const Matrix<Scalar>& m) {
    char buf[64];
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
            if (c) out << ' ';
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
}

template <class Scalar>
void read_values(std::istream& in, Matrix<Scalar>& m, const std::string& what) {
    std::string tok;
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) {
            if (!(in >> tok)) throw DataError("checkpoint: truncated " + what);
            Scalar v{};
            auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
                throw DataError("checkpoint: bad value '" + tok + "' in " + what);
            m(r, c) = v;
        }
}

void expect(std::istream& in, const std::string& word) {
    std::string tok;
    if (!(in >> tok) || tok != word) throw DataError("checkpoint: expected '" + word + "', got '" + tok + "'");
}

}  // namespace

template <class Scalar>
void save_params(const std::filesystem::path& path, const std::vector<LayerSpec>& specs,
                 const ParamSet<Scalar>& params) {
    check_layer_shapes(params, specs);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "suica-params 1 " << scalar_tag<Scalar>() << '\n';
    out << "layers " << specs.size() << '\n';
    if (params.fourier) {
        out << "fourier " << params.fourier->rows() << ' ' << params.fourier->cols() << '\n';
        write_values(out, *params.fourier);
    } else {
        out << "fourier 0 0\n";
    }
    for (std::size_t l = 0; l < specs.size(); ++l) {
        out << "layer " << l << ' ' << to_string(specs[l].kind) << ' ' << to_string(specs[l].activation) << ' '
            << specs[l].in_dim << ' ' << specs[l].out_dim << '\n';
        write_values(out, params.weights[l]);
        write_values<Scalar>(out, params.biases[l].transpose());
    }
    if (!out) throw DataError(path.string() + ": write failed");
}

template <class Scalar>
ParamSet<Scalar> load_params(const std::filesystem::path& path, const std::vector<LayerSpec>& specs) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open for reading");
    expect(in, "suica-params");
    expect(in, "1");
    expect(in, scalar_tag<Scalar>());
    expect(in, "layers");
    std::size_t layers = 0;
    if (!(in >> layers) || layers != specs.size())
        throw DataError(path.string() + ": layer count does not match the model");
    ParamSet<Scalar> params;
    expect(in, "fourier");
    Index fr = 0, fc = 0;
    if (!(in >> fr >> fc)) throw DataError(path.string() + ": bad fourier header");
    if (fr > 0) {
        Matrix<Scalar> b(fr, fc);
        read_values(in, b, "fourier matrix");
        params.fourier = std::move(b);
    }
    for (std::size_t l = 0; l < layers; ++l) {
        expect(in, "layer");
        std::size_t idx = 0;
        std::string kind, act;
        Index in_dim = 0, out_dim = 0;
        if (!(in >> idx >> kind >> act >> in_dim >> out_dim) || idx != l)
            throw DataError(path.string() + ": bad header for layer " + std::to_string(l));
        if (kind != to_string(specs[l].kind) || act != to_string(specs[l].activation) ||
            in_dim != specs[l].in_dim || out_dim != specs[l].out_dim)
            throw DataError(path.string() + ": layer " + std::to_string(l) + " shape does not match the model");
        Matrix<Scalar> w(in_dim, out_dim);
        read_values(in, w, "layer " + std::to_string(l) + " weights");
        Matrix<Scalar> b(1, out_dim);
        read_values(in, b, "layer " + std::to_string(l) + " bias");
        params.weights.push_back(std::move(w));
        params.biases.push_back(b.transpose());
    }
    return params;
}

#define SUICA_INSTANTIATE(S)                                                                                      \
    template struct ParamSet<S>;                                                                                  \
    template ParamSet<S> init_params<S>(const std::vector<LayerSpec>&, InitScheme, std::uint64_t,                \
                                        const FourierOptions&);                                                   \
    template Matrix<S> fourier_map<S>(const Matrix<S>&, const Matrix<S>&);                                       \
    template Activations<S> forward<S>(const ParamSet<S>&, const std::vector<LayerSpec>&, const Matrix<S>&,      \
                                       const SparseMatrix<S>*);                                                   \
    template Matrix<S> evaluate<S>(const ParamSet<S>&, const std::vector<LayerSpec>&, const Matrix<S>&,          \
                                   const SparseMatrix<S>*);                                                       \
    template Backward<S> backward<S>(const ParamSet<S>&, const std::vector<LayerSpec>&, const Activations<S>&,   \
                                     const Matrix<S>&, const SparseMatrix<S>*);                                  \
    template Gradients<S> gradients<S>(const ParamSet<S>&, const std::vector<LayerSpec>&, const Matrix<S>&,      \
                                       const SparseMatrix<S>*, const LossTail<S>&);                              \
    template void adam_step<S>(ParamSet<S>&, const ParamSet<S>&, AdamState<S>&, double);                        \
    template void save_params<S>(const std::filesystem::path&, const std::vector<LayerSpec>&, const ParamSet<S>&); \
    template ParamSet<S> load_params<S>(const std::filesystem::path&, const std::vector<LayerSpec>&);

SUICA_INSTANTIATE(float)
SUICA_INSTANTIATE(double)

#undef SUICA_INSTANTIATE

}  // namespace suica::nn
