#pragma once

#include <cstdint>
#include <vector>

#include "dkbo/kernels.hpp"
#include "dkbo/numerics.hpp"

namespace dkbo {

struct GpPosterior {
    std::vector<double> mean;
    std::vector<double> variance; // clamped at 0 from below
};

// Exact GP posterior with constant mean handled by centering. The training
// covariance is K(X,X) + noise*I (+ jitter inside the factorization); the
// predictive variance is the latent-function variance, without noise.
GpPosterior posterior(const KernelHyperparams& h, const Matrix& x_train,
                      const std::vector<double>& y_train, const Matrix& x_query,
                      double jitter = kDefaultJitter);

// Full Gaussian log-density of the training labels:
// -1/2 log|K| - 1/2 (y-c)^T K^-1 (y-c) - n/2 log(2 pi).
double log_marginal_likelihood(const KernelHyperparams& h, const Matrix& x_train,
                               const std::vector<double>& y_train, double jitter = kDefaultJitter);

struct HyperGradients {
    double raw_lengthscale = 0.0;
    double raw_outputscale = 0.0;
    double raw_noise = 0.0;
    double constant_mean = 0.0;
};

std::vector<double> to_vector(const HyperGradients& g);

struct LmlGradients {
    HyperGradients hyper;
    Matrix inputs; // n x d, gradient w.r.t. the training inputs
};

LmlGradients lml_gradients(const KernelHyperparams& h, const Matrix& x_train,
                           const std::vector<double>& y_train, double jitter = kDefaultJitter);

// Both at once; the gradients share the factorization with the value.
std::pair<double, LmlGradients> lml_value_and_gradients(const KernelHyperparams& h,
                                                        const Matrix& x_train,
                                                        const std::vector<double>& y_train,
                                                        double jitter = kDefaultJitter);

struct GpFitConfig {
    std::size_t iterations = 200;
    double learning_rate = 0.05;
    std::uint64_t seed = 0; // reserved; the full-batch ascent is deterministic
};

// Full-batch Adam ascent on the log-marginal likelihood; returns the
// hyperparameters with the best value seen. A NotPositiveDefinite evaluation
// rolls the step back and retries at 10x smaller rate, at most 5 times.
KernelHyperparams fit_hyperparameters(const Matrix& x_train, const std::vector<double>& y_train,
                                      const KernelHyperparams& init, const GpFitConfig& cfg);

} // namespace dkbo
