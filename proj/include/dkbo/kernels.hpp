#pragma once

#include <vector>

#include "dkbo/numerics.hpp"

namespace dkbo {

enum class KernelKind { Matern32, SquaredExponential };

// Raw values are unconstrained; the constrained accessors apply softplus with
// a small positive floor so gradient-based training never drives a scale to
// exactly zero.
struct KernelHyperparams {
    KernelKind kind = KernelKind::Matern32;
    double raw_lengthscale = 0.0;
    double raw_outputscale = 0.0;
    double raw_noise = 0.0;
    double constant_mean = 0.0;

    double lengthscale() const;    // softplus(raw) + 1e-4
    double outputscale() const;    // softplus(raw) + 1e-6, the kernel variance
    double noise_variance() const; // softplus(raw) + 1e-4
};

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

// Builds hyperparameters from constrained values (lengthscale, outputscale
// and noise_variance must exceed their floors by construction).
KernelHyperparams make_hyperparams(KernelKind kind, double lengthscale, double outputscale,
                                   double noise_variance, double constant_mean = 0.0);

// Raw parameter vector in the order raw_lengthscale, raw_outputscale,
// raw_noise, constant_mean (the trainable gamma group).
std::vector<double> raw_vector(const KernelHyperparams& h);
KernelHyperparams with_raw_vector(const KernelHyperparams& h, const std::vector<double>& raw);

// K(x_i, y_j) without observation noise; noise is added to the train-train
// diagonal by the GP layer only.
Matrix kernel_matrix(const KernelHyperparams& h, const Matrix& x, const Matrix& y);

struct KernelGrads {
    Matrix d_raw_lengthscale; // n x m
    Matrix d_raw_outputscale; // n x m
    // d_x[k](i,j) = d K(x_i, y_j) / d x_i[k]; the Matern-3/2 zero-distance
    // singularity is defined as 0 (its limit).
    std::vector<Matrix> d_x;
};

KernelGrads kernel_grads(const KernelHyperparams& h, const Matrix& x, const Matrix& y);

} // namespace dkbo
