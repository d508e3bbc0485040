#include "dkbo/mlp.hpp"

#include <cmath>
#include <string>

#include "dkbo/random.hpp"

namespace dkbo {

std::size_t MlpParameters::parameter_count() const {
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        count += layer_sizes[l + 1] * layer_sizes[l] + layer_sizes[l + 1];
    return count;
}

MlpParameters init_params(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2)
        throw InvalidArchitecture("init_params: need at least input and latent layers");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw InvalidArchitecture("init_params: zero-width layer");

    MlpParameters p;
    p.layer_sizes = layer_sizes;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t fan_in = layer_sizes[l];
        const std::size_t fan_out = layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_out, fan_in);
        for (std::size_t i = 0; i < fan_out; ++i)
            for (std::size_t j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-limit, limit);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(fan_out, 0.0);
    }
    return p;
}

std::pair<Matrix, ForwardCache> forward(const MlpParameters& p, const Matrix& input) {
    if (input.rows() == 0 || input.cols() != p.input_dim())
        throw DimensionMismatch("forward: input width " + std::to_string(input.cols()) +
                                ", expected " + std::to_string(p.input_dim()));

    const std::size_t layers = p.weights.size();
    ForwardCache cache;
    cache.activations.reserve(layers + 1);
    cache.pre_activations.reserve(layers);
    cache.activations.push_back(input);

    for (std::size_t l = 0; l < layers; ++l) {
        const Matrix& a = cache.activations.back();
        const Matrix& w = p.weights[l];
        const std::vector<double>& b = p.biases[l];
        Matrix z(a.rows(), w.rows());
        for (std::size_t r = 0; r < a.rows(); ++r) {
            const double* arow = a.data() + r * a.cols();
            for (std::size_t o = 0; o < w.rows(); ++o) {
                const double* wrow = w.data() + o * w.cols();
                double sum = b[o];
                for (std::size_t i = 0; i < w.cols(); ++i) sum += arow[i] * wrow[i];
                z(r, o) = sum;
            }
        }
        cache.pre_activations.push_back(z);
        if (l + 1 < layers) {
            for (std::size_t idx = 0; idx < z.rows() * z.cols(); ++idx)
                z.data()[idx] = z.data()[idx] > 0.0 ? z.data()[idx] : 0.0;
        }
        cache.activations.push_back(std::move(z));
    }
    return {cache.activations.back(), std::move(cache)};
}

BackwardResult backward(const MlpParameters& p, const ForwardCache& cache, const Matrix& upstream) {
    const std::size_t layers = p.weights.size();
    if (cache.activations.size() != layers + 1 || cache.pre_activations.size() != layers)
        throw DimensionMismatch("backward: cache does not match parameters");
    const Matrix& latent = cache.activations.back();
    if (upstream.rows() != latent.rows() || upstream.cols() != latent.cols())
        throw DimensionMismatch("backward: upstream shape mismatch");

    BackwardResult out;
    out.grads.layer_sizes = p.layer_sizes;
    out.grads.weights.resize(layers);
    out.grads.biases.resize(layers);

    Matrix delta = upstream; // gradient w.r.t. the last pre-activation (affine output)
    for (std::size_t lp = layers; lp > 0; --lp) {
        const std::size_t l = lp - 1;
        const Matrix& a = cache.activations[l];
        const Matrix& w = p.weights[l];

        Matrix dw(w.rows(), w.cols());
        std::vector<double> db(w.rows(), 0.0);
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            const double* arow = a.data() + r * a.cols();
            for (std::size_t o = 0; o < w.rows(); ++o) {
                const double d = delta(r, o);
                if (d == 0.0) continue;
                double* dwrow = dw.data() + o * w.cols();
                for (std::size_t i = 0; i < w.cols(); ++i) dwrow[i] += d * arow[i];
                db[o] += d;
            }
        }
        out.grads.weights[l] = std::move(dw);
        out.grads.biases[l] = std::move(db);

        Matrix prev(delta.rows(), w.cols());
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            for (std::size_t o = 0; o < w.rows(); ++o) {
                const double d = delta(r, o);
                if (d == 0.0) continue;
                const double* wrow = w.data() + o * w.cols();
                double* prow = prev.data() + r * w.cols();
                for (std::size_t i = 0; i < w.cols(); ++i) prow[i] += d * wrow[i];
            }
        }
        if (l > 0) {
            const Matrix& pre = cache.pre_activations[l - 1];
            for (std::size_t idx = 0; idx < prev.rows() * prev.cols(); ++idx)
                prev.data()[idx] = pre.data()[idx] > 0.0 ? prev.data()[idx] : 0.0;
            delta = std::move(prev);
        } else {
            out.input_grads = std::move(prev);
        }
    }
    return out;
}

std::vector<double> flatten(const MlpParameters& p) {
    std::vector<double> flat;
    flat.reserve(p.parameter_count());
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const auto& vals = p.weights[l].values();
        flat.insert(flat.end(), vals.begin(), vals.end());
        flat.insert(flat.end(), p.biases[l].begin(), p.biases[l].end());
    }
    return flat;
}

MlpParameters unflatten(const std::vector<std::size_t>& layer_sizes, const std::vector<double>& flat) {
    if (layer_sizes.size() < 2)
        throw InvalidArchitecture("unflatten: need at least input and latent layers");
    MlpParameters p;
    p.layer_sizes = layer_sizes;
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t fan_in = layer_sizes[l];
        const std::size_t fan_out = layer_sizes[l + 1];
        if (pos + fan_out * fan_in + fan_out > flat.size())
            throw DimensionMismatch("unflatten: flat vector too short");
        Matrix w(fan_out, fan_in);
        for (std::size_t idx = 0; idx < fan_out * fan_in; ++idx) w.data()[idx] = flat[pos++];
        std::vector<double> b(fan_out);
        for (std::size_t i = 0; i < fan_out; ++i) b[i] = flat[pos++];
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    if (pos != flat.size()) throw DimensionMismatch("unflatten: flat vector too long");
    return p;
}

AdamState make_adam_state(std::size_t parameter_count) {
    AdamState s;
    s.m.assign(parameter_count, 0.0);
    s.v.assign(parameter_count, 0.0);
    return s;
}

void adam_update(AdamState& state, std::vector<double>& params, const std::vector<double>& grads,
                 double lr) {
    if (params.size() != state.m.size() || grads.size() != state.m.size())
        throw DimensionMismatch("adam_update: size mismatch");
    for (double g : grads)
        if (!std::isfinite(g)) throw NonFiniteGradient("adam_update: non-finite gradient");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

std::pair<AdamState, MlpParameters> adam_step(AdamState state, const MlpParameters& p,
                                              const MlpParameters& grads, double lr) {
    if (grads.layer_sizes != p.layer_sizes)
        throw DimensionMismatch("adam_step: gradient shape mismatch");
    std::vector<double> flat = flatten(p);
    const std::vector<double> g = flatten(grads);
    adam_update(state, flat, g, lr);
    return {std::move(state), unflatten(p.layer_sizes, flat)};
}

} // namespace dkbo
