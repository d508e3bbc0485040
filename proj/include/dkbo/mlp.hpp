#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dkbo/numerics.hpp"

namespace dkbo {

// Fully-connected ReLU encoder. weights[l] maps layer_sizes[l] inputs to
// layer_sizes[l+1] outputs and is stored (out x in); hidden layers apply ReLU,
// the final (latent) layer is affine.
struct MlpParameters {
    std::vector<std::size_t> layer_sizes;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t latent_dim() const { return layer_sizes.back(); }
    std::size_t parameter_count() const;
};

struct ForwardCache {
    std::vector<Matrix> activations;     // activations[0] is the input batch
    std::vector<Matrix> pre_activations; // one per weight layer
};

struct BackwardResult {
    MlpParameters grads; // same shapes as the parameters
    Matrix input_grads;  // batch x input_dim
};

// Glorot-uniform weights, zero biases, deterministic per seed.
MlpParameters init_params(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);

std::pair<Matrix, ForwardCache> forward(const MlpParameters& p, const Matrix& input);

// Reverse-mode gradients of sum(upstream .* latent) w.r.t. every weight,
// bias and input. ReLU subgradient at exactly 0 is 0.
BackwardResult backward(const MlpParameters& p, const ForwardCache& cache, const Matrix& upstream);

// Flat parameter order: per layer, weight entries row-major, then biases.
std::vector<double> flatten(const MlpParameters& p);
MlpParameters unflatten(const std::vector<std::size_t>& layer_sizes, const std::vector<double>& flat);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam_state(std::size_t parameter_count);

// One bias-corrected Adam descent step in place. `grads` is the gradient of
// the loss being minimized. Throws NonFiniteGradient on NaN/Inf entries.
void adam_update(AdamState& state, std::vector<double>& params, const std::vector<double>& grads,
                 double lr);

// Value-typed variant over whole parameter structs.
std::pair<AdamState, MlpParameters> adam_step(AdamState state, const MlpParameters& p,
                                              const MlpParameters& grads, double lr);

} // namespace dkbo
