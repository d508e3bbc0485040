#include "dkbo/gp.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "dkbo/mlp.hpp"

namespace dkbo {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

void check_training(const Matrix& x, const std::vector<double>& y) {
    if (x.rows() != y.size())
        throw DimensionMismatch("gp: " + std::to_string(x.rows()) + " inputs vs " +
                                std::to_string(y.size()) + " labels");
}

CholFactor train_factor(const KernelHyperparams& h, const Matrix& x, double jitter) {
    Matrix k = kernel_matrix(h, x, x);
    const double noise = h.noise_variance();
    for (std::size_t i = 0; i < k.rows(); ++i) k(i, i) += noise;
    return cholesky(SymMatrix(std::move(k)), jitter);
}

Matrix residual_column(const std::vector<double>& y, double c) {
    Matrix r(y.size(), 1);
    for (std::size_t i = 0; i < y.size(); ++i) r(i, 0) = y[i] - c;
    return r;
}

} // namespace

GpPosterior posterior(const KernelHyperparams& h, const Matrix& x_train,
                      const std::vector<double>& y_train, const Matrix& x_query, double jitter) {
    check_training(x_train, y_train);
    const std::size_t n = x_train.rows();
    const std::size_t m = x_query.rows();
    const double c = h.constant_mean;
    const double prior_var = h.outputscale();

    GpPosterior post;
    post.mean.assign(m, c);
    post.variance.assign(m, prior_var);
    if (n == 0) return post;

    const CholFactor l = train_factor(h, x_train, jitter);
    const Matrix alpha = chol_solve(l, residual_column(y_train, c));
    const Matrix kq = kernel_matrix(h, x_train, x_query); // n x m
    const Matrix v = forward_solve(l, kq);

    for (std::size_t q = 0; q < m; ++q) {
        double mean = c;
        double reduction = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean += kq(i, q) * alpha(i, 0);
            reduction += v(i, q) * v(i, q);
        }
        post.mean[q] = mean;
        const double var = prior_var - reduction;
        post.variance[q] = var > 0.0 ? var : 0.0;
    }
    return post;
}

double log_marginal_likelihood(const KernelHyperparams& h, const Matrix& x_train,
                               const std::vector<double>& y_train, double jitter) {
    check_training(x_train, y_train);
    const std::size_t n = x_train.rows();
    if (n == 0) throw DimensionMismatch("log_marginal_likelihood: empty training set");

    const CholFactor l = train_factor(h, x_train, jitter);
    const Matrix resid = residual_column(y_train, h.constant_mean);
    const Matrix alpha = chol_solve(l, resid);
    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) quad += resid(i, 0) * alpha(i, 0);
    return -0.5 * quad - 0.5 * logdet(l) - 0.5 * static_cast<double>(n) * kLog2Pi;
}

std::vector<double> to_vector(const HyperGradients& g) {
    return {g.raw_lengthscale, g.raw_outputscale, g.raw_noise, g.constant_mean};
}

std::pair<double, LmlGradients> lml_value_and_gradients(const KernelHyperparams& h,
                                                        const Matrix& x_train,
                                                        const std::vector<double>& y_train,
                                                        double jitter) {
    check_training(x_train, y_train);
    const std::size_t n = x_train.rows();
    if (n == 0) throw DimensionMismatch("lml_gradients: empty training set");
    const std::size_t dim = x_train.cols();

    const CholFactor l = train_factor(h, x_train, jitter);
    const Matrix resid = residual_column(y_train, h.constant_mean);
    const Matrix alpha = chol_solve(l, resid);
    const Matrix kinv = chol_solve(l, Matrix::identity(n));

    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) quad += resid(i, 0) * alpha(i, 0);
    const double value = -0.5 * quad - 0.5 * logdet(l) - 0.5 * static_cast<double>(n) * kLog2Pi;

    // dL/dK = 1/2 (alpha alpha^T - K^-1)
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            g(i, j) = 0.5 * (alpha(i, 0) * alpha(j, 0) - kinv(i, j));

    const KernelGrads kg = kernel_grads(h, x_train, x_train);

    LmlGradients out;
    double trace = 0.0;
    double sum_alpha = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        trace += g(i, i);
        sum_alpha += alpha(i, 0);
        for (std::size_t j = 0; j < n; ++j) {
            out.hyper.raw_lengthscale += g(i, j) * kg.d_raw_lengthscale(i, j);
            out.hyper.raw_outputscale += g(i, j) * kg.d_raw_outputscale(i, j);
        }
    }
    out.hyper.raw_noise = trace * sigmoid(h.raw_noise);
    out.hyper.constant_mean = sum_alpha;

    out.inputs = Matrix(n, dim);
    for (std::size_t k = 0; k < dim; ++k) {
        const Matrix& dxk = kg.d_x[k];
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) sum += g(i, j) * dxk(i, j);
            out.inputs(i, k) = 2.0 * sum;
        }
    }
    return {value, std::move(out)};
}

LmlGradients lml_gradients(const KernelHyperparams& h, const Matrix& x_train,
                           const std::vector<double>& y_train, double jitter) {
    return lml_value_and_gradients(h, x_train, y_train, jitter).second;
}

KernelHyperparams fit_hyperparameters(const Matrix& x_train, const std::vector<double>& y_train,
                                      const KernelHyperparams& init, const GpFitConfig& cfg) {
    check_training(x_train, y_train);
    if (cfg.iterations == 0) return init;
    if (x_train.rows() < 2)
        throw DimensionMismatch("fit_hyperparameters: need at least 2 points");

    KernelHyperparams current = init;
    KernelHyperparams best = init;
    double best_value = -std::numeric_limits<double>::infinity();
    AdamState adam = make_adam_state(4);

    std::vector<double> params = raw_vector(current);
    std::vector<double> prev_params;
    std::vector<double> prev_loss_grads;
    AdamState prev_adam = adam;
    bool have_prev = false;
    std::size_t retries = 0;

    std::size_t it = 0;
    while (it < cfg.iterations) {
        double value;
        LmlGradients grads;
        try {
            current = with_raw_vector(init, params);
            std::tie(value, grads) = lml_value_and_gradients(current, x_train, y_train);
        } catch (const NotPositiveDefinite&) {
            if (!have_prev) throw; // the init itself is not factorizable
            if (retries >= 5)
                throw TrainingFailed("fit_hyperparameters: repeated non-PSD kernel matrices");
            ++retries;
            // Roll back and retake the recorded step at a 10x smaller rate.
            params = prev_params;
            adam = prev_adam;
            adam_update(adam, params, prev_loss_grads,
                        cfg.learning_rate / std::pow(10.0, static_cast<double>(retries)));
            continue;
        }
        retries = 0;
        if (value > best_value) {
            best_value = value;
            best = current;
        }
        // Adam descends; pass the gradient of -LML to ascend.
        std::vector<double> loss_grads = to_vector(grads.hyper);
        for (double& g : loss_grads) g = -g;
        prev_params = params;
        prev_adam = adam;
        prev_loss_grads = loss_grads;
        have_prev = true;
        adam_update(adam, params, loss_grads, cfg.learning_rate);
        ++it;
    }

    // Score the final parameters as well.
    try {
        current = with_raw_vector(init, params);
        const double value = log_marginal_likelihood(current, x_train, y_train);
        if (value > best_value) best = current;
    } catch (const NotPositiveDefinite&) {
        // Keep the best seen so far.
    }
    return best;
}

} // namespace dkbo
