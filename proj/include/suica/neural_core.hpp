// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "suica/common.hpp"

/**
 * @file neural_core.hpp
 *
 * @brief Layer stacks with explicit reverse-mode gradients and Adam.
 *
 * A network is a sequence of LayerSpec plus a ParamSet. Weights are stored
 * in x out, so a layer computes act(H W + b) (dense) or act(A H W + b) (gcn,
 * with A the normalized spot adjacency). Everything is templated on the
 * scalar type: training runs in float, gradient checks in double.
 */

namespace suica::nn {

enum class LayerKind { dense, gcn };
enum class Activation { identity, relu, tanh, sine };

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    Index in_dim = 0;
    Index out_dim = 0;
    Activation activation = Activation::identity;
    double omega = 1.0;  // sine only: sin(omega * x)

    void validate() const;
    bool operator==(const LayerSpec&) const = default;
};

/// Checks per-layer validity and that consecutive dimensions chain.
void validate_specs(const std::vector<LayerSpec>& specs);

enum class InitScheme { siren, ffn, he };

InitScheme parse_init_scheme(const std::string& name);
std::string to_string(Activation a);
std::string to_string(LayerKind k);

template <class Scalar>
struct ParamSet {
    std::vector<Matrix<Scalar>> weights;  // in x out per layer
    std::vector<Vector<Scalar>> biases;   // out per layer
    std::optional<Matrix<Scalar>> fourier;  // 2 x m, never trained

    std::size_t num_layers() const { return weights.size(); }
    /// Number of trainable scalars.
    Index size() const;
    bool all_finite() const;
    /// Same shapes, all zeros; the Fourier matrix is not carried over.
    ParamSet zeros_like() const;

    template <class Other>
    ParamSet<Other> cast() const {
        ParamSet<Other> out;
        for (const auto& w : weights) out.weights.push_back(w.template cast<Other>());
        for (const auto& b : biases) out.biases.push_back(b.template cast<Other>());
        if (fourier) out.fourier = fourier->template cast<Other>();
        return out;
    }

    bool operator==(const ParamSet& o) const {
        if (weights.size() != o.weights.size() || fourier.has_value() != o.fourier.has_value()) return false;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols()) return false;
            if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
        }
        if (fourier && (fourier->cols() != o.fourier->cols() || *fourier != *o.fourier)) return false;
        return true;
    }
};

struct FourierOptions {
    Index mapping_size = 256;
    double sigma = 10.0;
};

/**
 * siren: first layer U(-1/in, 1/in), later layers U(-sqrt(6/in)/omega,
 * sqrt(6/in)/omega) with omega taken from the first sine layer; biases
 * U(-1/sqrt(in), 1/sqrt(in)).
 * ffn: Fourier matrix N(0, sigma^2) of shape 2 x mapping_size, dense layers
 * He-initialized. The first spec must then take 2 * mapping_size inputs.
 * he: weights N(0, 2/in), zero biases.
 */
template <class Scalar>
ParamSet<Scalar> init_params(const std::vector<LayerSpec>& specs, InitScheme scheme, std::uint64_t seed,
                             const FourierOptions& fourier = {});

/// Row i = [sin(2 pi x_i B), cos(2 pi x_i B)].
template <class Scalar>
Matrix<Scalar> fourier_map(const Matrix<Scalar>& coords, const Matrix<Scalar>& b);

template <class Scalar>
struct Activations {
    std::vector<Matrix<Scalar>> inputs;   // input to each layer (after Fourier mapping)
    std::vector<Matrix<Scalar>> preacts;  // A H W + b or H W + b
    Matrix<Scalar> output;
};

/// Runs every layer. gcn layers require `adjacency`.
template <class Scalar>
Activations<Scalar> forward(const ParamSet<Scalar>& params, const std::vector<LayerSpec>& specs,
                            const Matrix<Scalar>& x, const SparseMatrix<Scalar>* adjacency = nullptr);

/// Output only; skips keeping intermediate activations.
template <class Scalar>
Matrix<Scalar> evaluate(const ParamSet<Scalar>& params, const std::vector<LayerSpec>& specs, const Matrix<Scalar>& x,
                        const SparseMatrix<Scalar>* adjacency = nullptr);

template <class Scalar>
struct Backward {
    ParamSet<Scalar> grads;
    Matrix<Scalar> input_grad;  // d loss / d inputs[0]
};

template <class Scalar>
Backward<Scalar> backward(const ParamSet<Scalar>& params, const std::vector<LayerSpec>& specs,
                          const Activations<Scalar>& acts, const Matrix<Scalar>& output_grad,
                          const SparseMatrix<Scalar>* adjacency = nullptr);

/// A scalar loss over the network output together with its gradient.
template <class Scalar>
struct LossValue {
    double value = 0.0;
    Matrix<Scalar> grad;
};

template <class Scalar>
using LossTail = std::function<LossValue<Scalar>(const Matrix<Scalar>&)>;

template <class Scalar>
struct Gradients {
    double loss = 0.0;
    ParamSet<Scalar> grads;
};

template <class Scalar>
Gradients<Scalar> gradients(const ParamSet<Scalar>& params, const std::vector<LayerSpec>& specs,
                            const Matrix<Scalar>& x, const SparseMatrix<Scalar>* adjacency,
                            const LossTail<Scalar>& loss_tail);

// ---- Adam ------------------------------------------------------------------

template <class Scalar>
struct AdamState {
    ParamSet<Scalar> first;
    ParamSet<Scalar> second;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState like(const ParamSet<Scalar>& params) {
        AdamState s;
        s.first = params.zeros_like();
        s.second = params.zeros_like();
        return s;
    }
};

/// One bias-corrected Adam update, in place. The Fourier matrix is untouched.
template <class Scalar>
void adam_step(ParamSet<Scalar>& params, const ParamSet<Scalar>& grads, AdamState<Scalar>& state, double lr);

// ---- finite differences ------------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_layer = 0;
    bool worst_is_bias = false;
    Index checked = 0;
    std::vector<double> layer_max_rel_error;
    double tolerance = 0.0;
    bool pass = false;
};

/// Compares `analytic` against central differences of the loss.
GradCheckReport finite_diff_compare(const ParamSet<double>& analytic, const ParamSet<double>& params,
                                    const std::vector<LayerSpec>& specs, const Matrix<double>& x,
                                    const SparseMatrix<double>* adjacency, const LossTail<double>& loss_tail,
                                    double tol = 1e-4, double step = 1e-5);

GradCheckReport finite_diff_check(const ParamSet<double>& params, const std::vector<LayerSpec>& specs,
                                  const Matrix<double>& x, const SparseMatrix<double>* adjacency,
                                  const LossTail<double>& loss_tail, double tol = 1e-4, double step = 1e-5);

// ---- checkpoints ---------------------------------------------------------------

/// Text dump: header, layer shapes, row-major values in shortest round-trip form.
template <class Scalar>
void save_params(const std::filesystem::path& path, const std::vector<LayerSpec>& specs,
                 const ParamSet<Scalar>& params);

/// Loads a checkpoint and validates it against `specs`.
template <class Scalar>
ParamSet<Scalar> load_params(const std::filesystem::path& path, const std::vector<LayerSpec>& specs);

}  // namespace suica::nn
