#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "dkbo/mlp.hpp"
#include "dkbo/random.hpp"

using namespace dkbo;

TEST_CASE("init_params produces the benchmark architecture shapes") {
    const MlpParameters p = init_params({1, 100, 100, 100, 100, 10}, 42);
    REQUIRE(p.weights.size() == 5);
    CHECK(p.weights[0].rows() == 100);
    CHECK(p.weights[0].cols() == 1);
    for (int l : {1, 2, 3}) {
        CHECK(p.weights[static_cast<std::size_t>(l)].rows() == 100);
        CHECK(p.weights[static_cast<std::size_t>(l)].cols() == 100);
    }
    CHECK(p.weights[4].rows() == 10);
    CHECK(p.weights[4].cols() == 100);
    for (const auto& b : p.biases)
        for (double v : b) CHECK(v == 0.0);
    // Glorot bound per layer.
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        const double limit =
            std::sqrt(6.0 / static_cast<double>(p.layer_sizes[l] + p.layer_sizes[l + 1]));
        for (double v : p.weights[l].values()) CHECK(std::fabs(v) <= limit);
    }
}

TEST_CASE("init_params is deterministic per seed") {
    const MlpParameters a = init_params({2, 16, 4}, 7);
    const MlpParameters b = init_params({2, 16, 4}, 7);
    const MlpParameters c = init_params({2, 16, 4}, 8);
    CHECK(flatten(a) == flatten(b));
    CHECK(flatten(a) != flatten(c));
}

TEST_CASE("init_params rejects degenerate architectures") {
    CHECK_THROWS_AS(init_params({1}, 0), InvalidArchitecture);
    CHECK_THROWS_AS(init_params({}, 0), InvalidArchitecture);
    CHECK_THROWS_AS(init_params({2, 0, 3}, 0), InvalidArchitecture);
}

TEST_CASE("forward: zero parameters give zero latent") {
    MlpParameters p = init_params({2, 4, 3}, 1);
    for (auto& w : p.weights)
        for (std::size_t i = 0; i < w.rows() * w.cols(); ++i) w.data()[i] = 0.0;
    const Matrix out = forward(p, from_rows({{1.0, -2.0}, {0.5, 3.0}})).first;
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("forward: single affine layer has no activation") {
    MlpParameters p;
    p.layer_sizes = {1, 1};
    p.weights = {from_rows({{2.0}})};
    p.biases = {{1.0}};
    CHECK(forward(p, from_rows({{3.0}})).first(0, 0) == doctest::Approx(7.0));
    // Negative output stays negative: affine, not ReLU.
    CHECK(forward(p, from_rows({{-3.0}})).first(0, 0) == doctest::Approx(-5.0));
}

TEST_CASE("forward: hand-set negative hidden unit contributes nothing") {
    MlpParameters p;
    p.layer_sizes = {1, 2, 1};
    p.weights = {from_rows({{1.0}, {-1.0}}), from_rows({{1.0, 5.0}})};
    p.biases = {{0.0, 0.0}, {0.0}};
    // Input 2: hidden pre-activations (2, -2) -> ReLU (2, 0) -> output 2.
    CHECK(forward(p, from_rows({{2.0}})).first(0, 0) == doctest::Approx(2.0));
    // Input -2: hidden (-2, 2) -> (0, 2) -> output 10.
    CHECK(forward(p, from_rows({{-2.0}})).first(0, 0) == doctest::Approx(10.0));
}

TEST_CASE("forward rejects bad input width") {
    const MlpParameters p = init_params({2, 4, 3}, 1);
    CHECK_THROWS_AS(forward(p, Matrix(3, 5)), DimensionMismatch);
}

TEST_CASE("backward: zero upstream gives zero gradients") {
    const MlpParameters p = init_params({2, 4, 3}, 5);
    const Matrix input = from_rows({{0.3, -0.7}});
    const auto [latent, cache] = forward(p, input);
    const BackwardResult back = backward(p, cache, Matrix(1, 3, 0.0));
    for (double v : flatten(back.grads)) CHECK(v == 0.0);
    for (double v : back.input_grads.values()) CHECK(v == 0.0);
}

TEST_CASE("backward: scalar linear net") {
    MlpParameters p;
    p.layer_sizes = {1, 1};
    p.weights = {from_rows({{1.7}})};
    p.biases = {{0.4}};
    const Matrix input = from_rows({{2.5}});
    const auto [latent, cache] = forward(p, input);
    const BackwardResult back = backward(p, cache, Matrix(1, 1, 1.0));
    CHECK(back.grads.weights[0](0, 0) == doctest::Approx(2.5)); // dW = r
    CHECK(back.grads.biases[0][0] == doctest::Approx(1.0));     // db = 1
    CHECK(back.input_grads(0, 0) == doctest::Approx(1.7));      // dinput = w
}

namespace {

bool grads_match_fd(const MlpParameters& p, const Matrix& input, const Matrix& upstream,
                    double tol) {
    const auto [latent, cache] = forward(p, input);
    (void)latent;
    for (const Matrix& pre : cache.pre_activations)
        for (double v : pre.values())
            if (std::fabs(v) < 1e-6) return true; // skip near-kink instances

    const BackwardResult back = backward(p, cache, upstream);
    const auto objective = [&](const std::vector<double>& params) {
        const Matrix out = forward(unflatten(p.layer_sizes, params), input).first;
        double sum = 0.0;
        for (std::size_t i = 0; i < out.rows() * out.cols(); ++i)
            sum += upstream.data()[i] * out.data()[i];
        return sum;
    };
    const std::vector<double> fd = finite_diff_grad(objective, flatten(p), 1e-5);
    const std::vector<double> analytic = flatten(back.grads);
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double err = std::fabs(analytic[i] - fd[i]);
        if (err > 1e-7 && err > tol * std::max(std::fabs(analytic[i]), std::fabs(fd[i])))
            return false;
    }

    // Input gradients against the same oracle.
    std::vector<double> flat_input(input.values());
    const auto input_objective = [&](const std::vector<double>& in) {
        Matrix probe(input.rows(), input.cols());
        for (std::size_t i = 0; i < in.size(); ++i) probe.data()[i] = in[i];
        const Matrix out = forward(p, probe).first;
        double sum = 0.0;
        for (std::size_t i = 0; i < out.rows() * out.cols(); ++i)
            sum += upstream.data()[i] * out.data()[i];
        return sum;
    };
    const std::vector<double> fd_in = finite_diff_grad(input_objective, flat_input, 1e-5);
    for (std::size_t i = 0; i < fd_in.size(); ++i) {
        const double err = std::fabs(back.input_grads.data()[i] - fd_in[i]);
        if (err > 1e-7 &&
            err > tol * std::max(std::fabs(back.input_grads.data()[i]), std::fabs(fd_in[i])))
            return false;
    }
    return true;
}

} // namespace

TEST_CASE("property: backward matches finite differences on random nets") {
    Rng rng(2001);
    for (int trial = 0; trial < 5; ++trial) {
        // Up to 4 hidden layers.
        const MlpParameters p =
            init_params({3, 7, 6, 5, 4, 2}, derive_seed(2001, static_cast<std::uint64_t>(trial)));
        Matrix input(4, 3);
        for (std::size_t i = 0; i < 12; ++i) input.data()[i] = rng.uniform(-2.0, 2.0);
        Matrix upstream(4, 2);
        for (std::size_t i = 0; i < 8; ++i) upstream.data()[i] = rng.uniform(-1.0, 1.0);
        CHECK(grads_match_fd(p, input, upstream, 1e-5));
    }
}

TEST_CASE("property: positive homogeneity through bias-free hidden layers") {
    Rng rng(2002);
    MlpParameters p = init_params({2, 6, 3}, 17);
    for (auto& w : p.weights)
        for (std::size_t i = 0; i < w.rows() * w.cols(); ++i)
            w.data()[i] = std::fabs(w.data()[i]) + 0.01;
    Matrix input(3, 2);
    for (std::size_t i = 0; i < 6; ++i) input.data()[i] = rng.uniform(0.1, 2.0);
    Matrix doubled = input;
    for (std::size_t i = 0; i < 6; ++i) doubled.data()[i] *= 2.0;
    const Matrix a = forward(p, input).first;
    const Matrix b = forward(p, doubled).first;
    for (std::size_t i = 0; i < a.rows() * a.cols(); ++i)
        CHECK(b.data()[i] == doctest::Approx(2.0 * a.data()[i]).epsilon(1e-12));
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    const MlpParameters p = init_params({1, 3, 1}, 9);
    MlpParameters zero = p;
    for (auto& w : zero.weights)
        for (std::size_t i = 0; i < w.rows() * w.cols(); ++i) w.data()[i] = 0.0;
    for (auto& b : zero.biases)
        for (double& v : b) v = 0.0;
    const auto [state, updated] = adam_step(make_adam_state(p.parameter_count()), p, zero, 1e-3);
    CHECK(flatten(updated) == flatten(p));
    CHECK(state.t == 1);
}

TEST_CASE("adam: first-step delta is -lr * g / (|g| + eps)") {
    AdamState state = make_adam_state(1);
    std::vector<double> params{0.5};
    adam_update(state, params, {2.0}, 1e-3);
    CHECK(std::fabs(params[0] - (0.5 - 1e-3)) < 1e-10);
}

TEST_CASE("adam rejects non-finite gradients") {
    AdamState state = make_adam_state(2);
    std::vector<double> params{0.0, 0.0};
    CHECK_THROWS_AS(adam_update(state, params, {1.0, std::nan("")}, 1e-3), NonFiniteGradient);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(adam_update(state, params, {inf, 0.0}, 1e-3), NonFiniteGradient);
}

TEST_CASE("adam is deterministic") {
    const MlpParameters p = init_params({2, 5, 2}, 11);
    const MlpParameters g = init_params({2, 5, 2}, 12);
    const auto a = adam_step(make_adam_state(p.parameter_count()), p, g, 1e-2);
    const auto b = adam_step(make_adam_state(p.parameter_count()), p, g, 1e-2);
    CHECK(flatten(a.second) == flatten(b.second));
}

TEST_CASE("flatten and unflatten round trip") {
    const MlpParameters p = init_params({3, 5, 4, 2}, 13);
    const std::vector<double> flat = flatten(p);
    CHECK(flat.size() == p.parameter_count());
    const MlpParameters back = unflatten(p.layer_sizes, flat);
    CHECK(flatten(back) == flat);
    CHECK_THROWS_AS(unflatten(p.layer_sizes, std::vector<double>(flat.size() - 1)),
                    DimensionMismatch);
}
