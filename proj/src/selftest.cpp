#include "dkbo/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dkbo/bo.hpp"
#include "dkbo/checkpoint.hpp"
#include "dkbo/dataset.hpp"
#include "dkbo/dkn.hpp"
#include "dkbo/experiment.hpp"
#include "dkbo/gp.hpp"
#include "dkbo/kernels.hpp"
#include "dkbo/mlp.hpp"
#include "dkbo/numerics.hpp"
#include "dkbo/plant.hpp"
#include "dkbo/random.hpp"

namespace dkbo {

namespace {

double rel_err(double got, double want) {
    const double scale = std::max({std::fabs(got), std::fabs(want), 1e-12});
    return std::fabs(got - want) / scale;
}

bool close(double got, double want, double rel_tol, double abs_tol = 0.0) {
    return std::fabs(got - want) <= abs_tol + rel_tol * std::max(std::fabs(got), std::fabs(want));
}

Matrix random_psd(Rng& rng, std::size_t n) {
    Matrix b(n, n);
    for (std::size_t i = 0; i < n * n; ++i) b.data()[i] = rng.uniform(-1.0, 1.0);
    Matrix a = multiply(transpose(b), b);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 0.1;
    return a;
}

// Cofactor-expansion determinant, independent of the Cholesky path.
double brute_det(const Matrix& a) {
    const std::size_t n = a.rows();
    if (n == 1) return a(0, 0);
    double det = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        Matrix minor(n - 1, n - 1);
        for (std::size_t i = 1; i < n; ++i) {
            std::size_t mc = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == c) continue;
                minor(i - 1, mc++) = a(i, j);
            }
        }
        const double sign = (c % 2 == 0) ? 1.0 : -1.0;
        det += sign * a(0, c) * brute_det(minor);
    }
    return det;
}

// Gauss-Jordan inverse, independent of the Cholesky path.
Matrix brute_inverse(const Matrix& a) {
    const std::size_t n = a.rows();
    Matrix work = a;
    Matrix inv = Matrix::identity(n);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(work(r, col)) > std::fabs(work(pivot, col))) pivot = r;
        for (std::size_t j = 0; j < n; ++j) {
            std::swap(work(col, j), work(pivot, j));
            std::swap(inv(col, j), inv(pivot, j));
        }
        const double d = work(col, col);
        for (std::size_t j = 0; j < n; ++j) {
            work(col, j) /= d;
            inv(col, j) /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = work(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                work(r, j) -= f * work(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }
    return inv;
}

struct BruteGp {
    std::vector<double> mean;
    std::vector<double> variance;
    double lml;
};

// Direct evaluation of the posterior/evidence with an explicit inverse.
BruteGp brute_gp(const KernelHyperparams& h, const Matrix& x, const std::vector<double>& y,
                 const Matrix& xq, double jitter) {
    const std::size_t n = x.rows();
    Matrix k = kernel_matrix(h, x, x);
    for (std::size_t i = 0; i < n; ++i) k(i, i) += h.noise_variance() + jitter;
    const Matrix kinv = brute_inverse(k);
    const Matrix kq = kernel_matrix(h, x, xq);

    BruteGp out;
    out.mean.assign(xq.rows(), h.constant_mean);
    out.variance.assign(xq.rows(), h.outputscale());
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - h.constant_mean;
    for (std::size_t q = 0; q < xq.rows(); ++q) {
        double mean = h.constant_mean;
        double red = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double kinv_r = 0.0;
            double kinv_k = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                kinv_r += kinv(i, j) * resid[j];
                kinv_k += kinv(i, j) * kq(j, q);
            }
            mean += kq(i, q) * kinv_r;
            red += kq(i, q) * kinv_k;
        }
        out.mean[q] = mean;
        out.variance[q] = h.outputscale() - red;
    }

    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) quad += resid[i] * kinv(i, j) * resid[j];
    out.lml = -0.5 * quad - 0.5 * std::log(brute_det(k)) -
              0.5 * static_cast<double>(n) * std::log(2.0 * 3.14159265358979323846);
    return out;
}

// Plain Monte-Carlo estimate of E[max(J - best - xi, 0)], antithetic pairs.
double mc_expected_improvement(double mean, double stddev, double best, double xi,
                               std::size_t samples, std::uint64_t seed) {
    Rng rng(seed);
    double sum = 0.0;
    for (std::size_t i = 0; i < samples / 2; ++i) {
        const double z = rng.normal();
        const double a = mean + stddev * z - best - xi;
        const double b = mean - stddev * z - best - xi;
        sum += (a > 0.0 ? a : 0.0) + (b > 0.0 ? b : 0.0);
    }
    return sum / static_cast<double>(2 * (samples / 2));
}

bool check_numerics_roundtrip() {
    Rng rng(11);
    for (std::size_t n : {1u, 3u, 8u, 17u, 32u}) {
        const Matrix a = random_psd(rng, n);
        const CholFactor l = cholesky(SymMatrix(a), kDefaultJitter);
        const Matrix back = multiply(l.lower, transpose(l.lower));
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double want = a(i, j) + (i == j ? kDefaultJitter : 0.0);
                num += (back(i, j) - want) * (back(i, j) - want);
                den += want * want;
            }
        }
        if (std::sqrt(num / den) > 1e-10) return false;
    }
    return true;
}

bool check_numerics_solve() {
    Rng rng(12);
    for (std::size_t n : {2u, 7u, 16u, 32u}) {
        const Matrix a = random_psd(rng, n);
        Matrix b(n, 3);
        for (std::size_t i = 0; i < n * 3; ++i) b.data()[i] = rng.uniform(-2.0, 2.0);
        const CholFactor l = cholesky(SymMatrix(a), 0.0);
        const Matrix x = chol_solve(l, b);
        const Matrix back = multiply(a, x);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n * 3; ++i) {
            num += (back.data()[i] - b.data()[i]) * (back.data()[i] - b.data()[i]);
            den += b.data()[i] * b.data()[i];
        }
        if (std::sqrt(num / den) > 1e-9) return false;
    }
    return true;
}

bool check_numerics_logdet() {
    Rng rng(13);
    for (std::size_t n : {1u, 2u, 3u, 4u}) {
        const Matrix a = random_psd(rng, n);
        const double got = logdet(cholesky(SymMatrix(a), 0.0));
        const double want = std::log(brute_det(a));
        if (std::fabs(got - want) > 1e-10 * std::max(1.0, std::fabs(want))) return false;
    }
    return true;
}

bool mlp_grads_match_fd(const MlpParameters& p, const Matrix& input, const Matrix& upstream,
                        double tol) {
    auto [latent, cache] = forward(p, input);
    (void)latent;
    for (const Matrix& pre : cache.pre_activations)
        for (double v : pre.values())
            if (std::fabs(v) < 1e-6) return true; // too close to a ReLU kink; skip instance
    const BackwardResult back = backward(p, cache, upstream);

    const std::vector<double> flat = flatten(p);
    const auto objective = [&](const std::vector<double>& params) {
        const MlpParameters probe = unflatten(p.layer_sizes, params);
        const Matrix out = forward(probe, input).first;
        double sum = 0.0;
        for (std::size_t i = 0; i < out.rows() * out.cols(); ++i)
            sum += upstream.data()[i] * out.data()[i];
        return sum;
    };
    const std::vector<double> fd = finite_diff_grad(objective, flat, 1e-5);
    const std::vector<double> analytic = flatten(back.grads);
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double err = std::fabs(analytic[i] - fd[i]);
        if (err > 1e-7 && err > tol * std::max(std::fabs(analytic[i]), std::fabs(fd[i])))
            return false;
    }
    return true;
}

bool check_mlp_grad_fd() {
    Rng rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        const MlpParameters p =
            init_params({2, 8, 6, 5, 4, 3}, derive_seed(21, static_cast<std::uint64_t>(trial)));
        Matrix input(4, 2);
        for (std::size_t i = 0; i < 8; ++i) input.data()[i] = rng.uniform(-2.0, 2.0);
        Matrix upstream(4, 3);
        for (std::size_t i = 0; i < 12; ++i) upstream.data()[i] = rng.uniform(-1.0, 1.0);
        if (!mlp_grads_match_fd(p, input, upstream, 1e-5)) return false;
    }
    return true;
}

bool check_mlp_homogeneity() {
    Rng rng(22);
    MlpParameters p = init_params({2, 5, 4}, 7);
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
        if (!close(b.data()[i], 2.0 * a.data()[i], 1e-12, 1e-12)) return false;
    return true;
}

bool check_mlp_adam_deterministic() {
    const MlpParameters p = init_params({2, 4, 2}, 3);
    MlpParameters grads = p; // any same-shape values work
    const auto once = adam_step(make_adam_state(p.parameter_count()), p, grads, 1e-2);
    const auto twice = adam_step(make_adam_state(p.parameter_count()), p, grads, 1e-2);
    return flatten(once.second) == flatten(twice.second);
}

bool check_kernels_psd() {
    Rng rng(31);
    for (KernelKind kind : {KernelKind::Matern32, KernelKind::SquaredExponential}) {
        const KernelHyperparams h = make_hyperparams(kind, 0.7, 1.3, 0.01);
        Matrix x(64, 3);
        for (std::size_t i = 0; i < 64 * 3; ++i) x.data()[i] = rng.uniform(-3.0, 3.0);
        const Matrix k = kernel_matrix(h, x, x);
        for (std::size_t i = 0; i < 64; ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (k(i, j) != k(j, i)) return false;
        try {
            cholesky(SymMatrix(k), 1e-6);
        } catch (const NotPositiveDefinite&) {
            return false;
        }
    }
    return true;
}

bool check_kernels_diag() {
    for (KernelKind kind : {KernelKind::Matern32, KernelKind::SquaredExponential}) {
        const KernelHyperparams h = make_hyperparams(kind, 0.5, 2.25, 0.01);
        const Matrix x = from_rows({{0.3, -1.2}});
        const Matrix k = kernel_matrix(h, x, x);
        if (k(0, 0) != h.outputscale()) return false;
    }
    return true;
}

bool check_kernels_monotone() {
    for (KernelKind kind : {KernelKind::Matern32, KernelKind::SquaredExponential}) {
        const KernelHyperparams h = make_hyperparams(kind, 1.0, 1.0, 0.01);
        double prev = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 100; ++i) {
            const double d = 0.1 * i;
            const Matrix k =
                kernel_matrix(h, from_rows({{0.0}}), from_rows({{d}}));
            if (i > 0 && !(k(0, 0) < prev)) return false;
            prev = k(0, 0);
        }
    }
    return true;
}

bool check_kernels_grad_fd() {
    Rng rng(32);
    for (KernelKind kind : {KernelKind::Matern32, KernelKind::SquaredExponential}) {
        KernelHyperparams h = make_hyperparams(kind, 0.8, 1.4, 0.01);
        Matrix x(3, 2), y(4, 2);
        for (std::size_t i = 0; i < 6; ++i) x.data()[i] = rng.uniform(-2.0, 2.0);
        for (std::size_t i = 0; i < 8; ++i) y.data()[i] = rng.uniform(-2.0, 2.0);
        const KernelGrads g = kernel_grads(h, x, y);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                const auto entry = [&](const KernelHyperparams& hp, const Matrix& xp) {
                    return kernel_matrix(hp, xp, y)(i, j);
                };
                {
                    const std::vector<double> fd = finite_diff_grad(
                        [&](const std::vector<double>& v) {
                            KernelHyperparams hp = h;
                            hp.raw_lengthscale = v[0];
                            hp.raw_outputscale = v[1];
                            return entry(hp, x);
                        },
                        {h.raw_lengthscale, h.raw_outputscale}, 1e-5);
                    if (rel_err(g.d_raw_lengthscale(i, j), fd[0]) > 1e-5 &&
                        std::fabs(g.d_raw_lengthscale(i, j) - fd[0]) > 1e-8)
                        return false;
                    if (rel_err(g.d_raw_outputscale(i, j), fd[1]) > 1e-5 &&
                        std::fabs(g.d_raw_outputscale(i, j) - fd[1]) > 1e-8)
                        return false;
                }
                for (std::size_t k = 0; k < 2; ++k) {
                    const std::vector<double> fd = finite_diff_grad(
                        [&](const std::vector<double>& v) {
                            Matrix xp = x;
                            xp(i, k) = v[0];
                            return entry(h, xp);
                        },
                        {x(i, k)}, 1e-5);
                    if (rel_err(g.d_x[k](i, j), fd[0]) > 1e-5 &&
                        std::fabs(g.d_x[k](i, j) - fd[0]) > 1e-8)
                        return false;
                }
            }
        }
    }
    return true;
}

bool check_gp_interpolation() {
    Rng rng(41);
    const KernelHyperparams h = make_hyperparams(KernelKind::Matern32, 1.0, 1.0, 1e-4);
    Matrix x(8, 1);
    std::vector<double> y(8);
    for (std::size_t i = 0; i < 8; ++i) {
        x(i, 0) = 6.0 * static_cast<double>(i) + rng.uniform(-0.5, 0.5); // well separated
        y[i] = rng.uniform(-1.0, 1.0);
    }
    const GpPosterior post = posterior(h, x, y, x);
    for (std::size_t i = 0; i < 8; ++i) {
        if (std::fabs(post.mean[i] - y[i]) > 2e-4 * std::fabs(y[i]) + 1e-6) return false;
        if (post.variance[i] > h.noise_variance() + 1e-6) return false;
    }
    return true;
}

bool check_gp_prior_far() {
    const KernelHyperparams h = make_hyperparams(KernelKind::SquaredExponential, 1.0, 1.7, 1e-3);
    const Matrix x = from_rows({{0.0}, {1.0}, {2.0}});
    const std::vector<double> y{0.5, -0.3, 0.9};
    const Matrix xq = from_rows({{25.0}, {40.0}});
    const GpPosterior post = posterior(h, x, y, xq);
    for (double v : post.variance)
        if (std::fabs(v - h.outputscale()) > 1e-6) return false;
    return true;
}

bool check_gp_brute_equivalence() {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(6);
        const std::size_t d = 1 + rng.uniform_index(3);
        const KernelKind kind =
            trial % 2 == 0 ? KernelKind::Matern32 : KernelKind::SquaredExponential;
        const KernelHyperparams h =
            make_hyperparams(kind, rng.uniform(0.4, 2.0), rng.uniform(0.5, 2.0),
                             rng.uniform(0.01, 0.2), rng.uniform(-0.5, 0.5));
        Matrix x(n, d);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n * d; ++i) x.data()[i] = rng.uniform(-2.0, 2.0);
        for (std::size_t i = 0; i < n; ++i) y[i] = rng.uniform(-2.0, 2.0);
        Matrix xq(4, d);
        for (std::size_t i = 0; i < 4 * d; ++i) xq.data()[i] = rng.uniform(-2.0, 2.0);

        const GpPosterior post = posterior(h, x, y, xq);
        const double lml = log_marginal_likelihood(h, x, y);
        const BruteGp brute = brute_gp(h, x, y, xq, kDefaultJitter);
        for (std::size_t q = 0; q < 4; ++q) {
            if (rel_err(post.mean[q], brute.mean[q]) > 1e-9) return false;
            const double bv = brute.variance[q] > 0.0 ? brute.variance[q] : 0.0;
            if (std::fabs(post.variance[q] - bv) > 1e-9 * std::max(1.0, bv)) return false;
        }
        if (rel_err(lml, brute.lml) > 1e-9) return false;
    }
    return true;
}

bool check_gp_variance_monotone() {
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        const KernelHyperparams h =
            make_hyperparams(KernelKind::Matern32, rng.uniform(0.5, 1.5), 1.0, 0.05);
        Matrix x(5, 1);
        std::vector<double> y(5);
        for (std::size_t i = 0; i < 5; ++i) {
            x(i, 0) = rng.uniform(-3.0, 3.0);
            y[i] = rng.uniform(-1.0, 1.0);
        }
        Matrix xq(6, 1);
        for (std::size_t i = 0; i < 6; ++i) xq(i, 0) = rng.uniform(-3.0, 3.0);

        const GpPosterior before = posterior(h, x, y, xq);
        Matrix x2(6, 1);
        for (std::size_t i = 0; i < 5; ++i) x2(i, 0) = x(i, 0);
        x2(5, 0) = rng.uniform(-3.0, 3.0);
        std::vector<double> y2 = y;
        y2.push_back(rng.uniform(-1.0, 1.0));
        const GpPosterior after = posterior(h, x2, y2, xq);
        for (std::size_t q = 0; q < 6; ++q)
            if (after.variance[q] > before.variance[q] + 1e-8) return false;
    }
    return true;
}

bool check_dkn_psd() {
    Rng rng(51);
    for (int trial = 0; trial < 5; ++trial) {
        DknParameters p;
        p.encoder = init_params({1, 12, 6}, derive_seed(51, static_cast<std::uint64_t>(trial)));
        p.base = make_hyperparams(KernelKind::Matern32, 1.0, 1.0, 0.01);
        Matrix r(20, 1);
        for (std::size_t i = 0; i < 20; ++i) r(i, 0) = rng.uniform(-10.0, 10.0);
        const DeepKernelResult dk = deep_kernel_matrix(p, r, r);
        try {
            cholesky(SymMatrix(dk.k), 1e-6);
        } catch (const NotPositiveDefinite&) {
            return false;
        }
    }
    return true;
}

bool check_dkn_grad_fd() {
    Rng rng(52);
    for (int trial = 0; trial < 5; ++trial) {
        DknParameters p;
        p.encoder = init_params({1, 4, 2}, derive_seed(52, static_cast<std::uint64_t>(trial)));
        p.base = make_hyperparams(KernelKind::Matern32, rng.uniform(0.5, 1.5), 1.0, 0.05,
                                  rng.uniform(-0.2, 0.2));
        Matrix r(5, 1);
        std::vector<double> j(5);
        for (std::size_t i = 0; i < 5; ++i) {
            r(i, 0) = rng.uniform(-10.0, 10.0);
            j[i] = rng.uniform(0.0, 1.0);
        }
        const auto cache = forward(p.encoder, r).second;
        bool near_kink = false;
        for (const Matrix& pre : cache.pre_activations)
            for (double v : pre.values())
                if (std::fabs(v) < 1e-6) near_kink = true;
        if (near_kink) continue;

        const DknLossGrads lg = dkn_loss_and_grads(p, r, j);

        const std::vector<double> flat = flatten(p.encoder);
        const auto loss_of_encoder = [&](const std::vector<double>& params) {
            DknParameters probe = p;
            probe.encoder = unflatten(p.encoder.layer_sizes, params);
            const Matrix latent = forward(probe.encoder, r).first;
            return -log_marginal_likelihood(probe.base, latent, j);
        };
        const std::vector<double> fd_enc = finite_diff_grad(loss_of_encoder, flat, 1e-5);
        const std::vector<double> analytic_enc = flatten(lg.encoder_grads);
        for (std::size_t i = 0; i < fd_enc.size(); ++i) {
            const double err = std::fabs(analytic_enc[i] - fd_enc[i]);
            if (err > 1e-7 &&
                err > 1e-4 * std::max(std::fabs(analytic_enc[i]), std::fabs(fd_enc[i])))
                return false;
        }

        const auto loss_of_base = [&](const std::vector<double>& raw) {
            DknParameters probe = p;
            probe.base = with_raw_vector(p.base, raw);
            const Matrix latent = forward(probe.encoder, r).first;
            return -log_marginal_likelihood(probe.base, latent, j);
        };
        const std::vector<double> fd_base = finite_diff_grad(loss_of_base, raw_vector(p.base), 1e-5);
        const std::vector<double> analytic_base = to_vector(lg.base_grads);
        for (std::size_t i = 0; i < 4; ++i) {
            const double err = std::fabs(analytic_base[i] - fd_base[i]);
            if (err > 1e-7 &&
                err > 1e-4 * std::max(std::fabs(analytic_base[i]), std::fabs(fd_base[i])))
                return false;
        }
    }
    return true;
}

std::vector<TaskDataset> tiny_source(std::uint64_t seed, std::size_t tasks, std::size_t points) {
    Rng rng(seed);
    std::vector<TaskDataset> out;
    for (std::size_t t = 0; t < tasks; ++t) {
        TaskDataset task;
        task.task_id = "t" + std::to_string(t);
        const double a = rng.uniform(0.5, 2.0);
        const double b = rng.uniform(-1.0, 1.0);
        for (std::size_t i = 0; i < points; ++i) {
            const double r = rng.uniform(-10.0, 10.0);
            task.points.push_back(Observation{{r}, 1.0 - a * r / 6.0 - b * r * r / 36.0});
        }
        out.push_back(std::move(task));
    }
    return out;
}

MetaTrainConfig tiny_meta_config() {
    MetaTrainConfig cfg;
    cfg.hidden_layers = {8};
    cfg.latent_dim = 3;
    cfg.iterations = 60;
    cfg.batch_size = 4;
    cfg.lr_schedule = {{60, 1e-3, 1e-2}};
    cfg.checkpoint_every = 20;
    cfg.seed = 99;
    return cfg;
}

bool check_dkn_meta_determinism() {
    const auto source = tiny_source(61, 3, 12);
    const MetaTrainConfig cfg = tiny_meta_config();
    const MetaTrainResult a = meta_train(source, cfg);
    const MetaTrainResult b = meta_train(source, cfg);
    if (flatten(a.params.encoder) != flatten(b.params.encoder)) return false;
    if (raw_vector(a.params.base) != raw_vector(b.params.base)) return false;
    if (a.loss_trace.size() != b.loss_trace.size()) return false;
    for (std::size_t i = 0; i < a.loss_trace.size(); ++i)
        if (a.loss_trace[i] != b.loss_trace[i] &&
            !(std::isnan(a.loss_trace[i]) && std::isnan(b.loss_trace[i])))
            return false;
    return true;
}

bool check_dkn_scale_invariance() {
    Rng rng(62);
    DknParameters p;
    p.encoder = init_params({1, 10, 4}, 5);
    p.base = make_hyperparams(KernelKind::Matern32, 1.0, 1.0, 0.01);

    TaskDataset target;
    std::vector<double> raw_labels;
    for (int i = 0; i < 6; ++i) {
        const double r = rng.uniform(-10.0, 10.0);
        const double j = rng.uniform(-2.0, 2.0);
        target.points.push_back(Observation{{r}, j});
        raw_labels.push_back(j);
    }
    Matrix queries(50, 1);
    for (std::size_t i = 0; i < 50; ++i) queries(i, 0) = -10.0 + 20.0 * i / 49.0;

    const double lo = *std::min_element(raw_labels.begin(), raw_labels.end());
    const double hi = *std::max_element(raw_labels.begin(), raw_labels.end());
    const LabelScaler s1(lo, hi);
    const GpPosterior p1 = predict(p, s1, target, queries);

    const double a = 3.7, b = -11.0;
    TaskDataset scaled = target;
    for (auto& obs : scaled.points) obs.j = a * obs.j + b;
    const LabelScaler s2(a * lo + b, a * hi + b);
    const GpPosterior p2 = predict(p, s2, scaled, queries);

    const auto argmax = [](const std::vector<double>& v) {
        return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
    };
    return argmax(p1.mean) == argmax(p2.mean);
}

bool check_bo_ei_properties() {
    Rng rng(71);
    for (int i = 0; i < 200; ++i) {
        const double mean = rng.uniform(-3.0, 3.0);
        const double sd = rng.uniform(0.0, 3.0);
        const double best = rng.uniform(-3.0, 3.0);
        const double xi = rng.uniform(0.0, 0.1);
        if (expected_improvement(mean, sd, best, xi) < 0.0) return false;
    }
    for (int i = 0; i < 50; ++i) {
        const double mean = rng.uniform(-3.0, 3.0);
        const double best = rng.uniform(-3.0, 3.0);
        const double gain = mean - best;
        const double limit = gain > 0.0 ? gain : 0.0;
        if (std::fabs(expected_improvement(mean, 1e-12, best, 0.0) - limit) > 1e-9) return false;
    }
    return true;
}

bool check_bo_ei_monte_carlo() {
    std::uint64_t seed = 7100;
    for (double delta = -3.0; delta <= 3.0 + 1e-9; delta += 0.5) {
        for (double sd : {0.1, 1.0, 3.0}) {
            const double analytic = expected_improvement(delta, sd, 0.0, 0.0);
            const double mc = mc_expected_improvement(delta, sd, 0.0, 0.0, 1000000, seed++);
            if (std::fabs(analytic - mc) > 3e-3) return false;
        }
    }
    return true;
}

bool check_bo_propose_invariance() {
    Rng rng(72);
    GpPosterior post;
    for (int i = 0; i < 64; ++i) {
        post.mean.push_back(rng.uniform(-2.0, 2.0));
        post.variance.push_back(rng.uniform(0.0, 2.0));
    }
    AcquisitionConfig acq;
    const std::vector<double> values = acquisition_values(post, acq, 0.5);
    const auto argmax = [](const std::vector<double>& v) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < v.size(); ++i)
            if (v[i] > v[best]) best = i;
        return best;
    };
    const std::size_t base = argmax(values);
    if (base != propose_index(post, acq, 0.5)) return false;
    const std::vector<std::pair<double, double>> maps = {{2.0, 0.0}, {0.5, 3.0}, {10.0, -7.0}};
    for (const auto& [a, b] : maps) {
        std::vector<double> mapped = values;
        for (double& v : mapped) v = a * v + b;
        if (argmax(mapped) != base) return false;
    }
    return true;
}

bool check_bo_history_contract() {
    const auto toy = [](const std::vector<double>& r) {
        return 4.0 - 0.1 * (r[0] - 2.0) * (r[0] - 2.0);
    };
    const Box bounds{{-10.0}, {10.0}};
    TaskDataset init;
    init.points.push_back(Observation{{-5.0}, toy({-5.0})});
    init.points.push_back(Observation{{5.0}, toy({5.0})});

    AcquisitionConfig acq;
    acq.seed = 7;
    BaselineConfig baseline;
    baseline.fit.iterations = 40;
    const BoHistory gp = run_gp_bo(toy, init, 6, acq, baseline, bounds, 4.0);
    if (gp.records.size() != 6) return false;

    DknParameters p;
    p.encoder = init_params({1, 8, 3}, 9);
    p.base = make_hyperparams(KernelKind::Matern32, 1.0, 1.0, 0.01);
    const LabelScaler s(-12.0, 4.0);
    const BoHistory dkn = run_dkn_bo(p, s, toy, init, 6, acq, bounds, 4.0);
    if (dkn.records.size() != 6) return false;

    for (const BoHistory* h : {&gp, &dkn}) {
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& rec : h->records) {
            if (!bounds.contains(rec.r)) return false;
            if (rec.regret < -1e-9) return false;
            if (rec.regret > prev + 1e-12) return false;
            prev = rec.regret;
        }
    }
    return true;
}

bool check_plant_steady_grid() {
    const SimConfig sim;
    for (const PlantParams theta :
         {PlantParams{1, 1}, PlantParams{1, 6}, PlantParams{6, 1}, PlantParams{6, 6},
          PlantParams{2, 5}}) {
        for (int ri = -10; ri <= 10; ri += 2) {
            const double r = static_cast<double>(ri);
            const double j = evaluate_performance(PlantState{}, r, theta, sim).first;
            if (std::fabs(j - steady_state_oracle(r, theta).j) > 1e-3) return false;
        }
    }
    return true;
}

bool check_plant_equilibrium() {
    for (const PlantParams theta : {PlantParams{2, 5}, PlantParams{1, 6}, PlantParams{4.5, 3.3}}) {
        for (double r : {-7.0, -1.2, 0.0, 3.0, 10.0}) {
            const SteadyState eq = steady_state_oracle(r, theta);
            const PlantDerivatives d = derivatives(PlantState{eq.x1, eq.x2, 0.0}, r, theta);
            if (std::fabs(d.dx1) > 1e-12 || std::fabs(d.dx2) > 1e-12) return false;
        }
    }
    return true;
}

bool check_plant_optimal_oracle() {
    for (const PlantParams theta : {PlantParams{2, 5}, PlantParams{3, 3}, PlantParams{6, 1}}) {
        const PlantOptimum opt = optimal_oracle(theta);
        for (int i = 0; i < 100000; ++i) {
            const double r = -10.0 + 20.0 * i / 99999.0;
            if (steady_state_oracle(r, theta).j > opt.j + 1e-8) return false;
        }
    }
    return true;
}

bool check_plant_rk4_order() {
    const PlantParams theta{2.0, 5.0};
    const double r = -1.2;
    // Exact x1(t): the loop reduces to x1'' + 5 x1' + 6 x1 = r from the origin.
    const auto exact_x1 = [&](double t) {
        return r / 6.0 - (r / 2.0) * std::exp(-2.0 * t) + (r / 3.0) * std::exp(-3.0 * t);
    };
    const auto endpoint_error = [&](double h) {
        PlantState s;
        const long long steps = std::llround(1.0 / h);
        for (long long i = 0; i < steps; ++i) s = rk4_step(s, r, theta, h);
        return std::fabs(s.x1 - exact_x1(1.0));
    };
    const double factor = endpoint_error(0.1) / endpoint_error(0.05);
    return factor >= 12.0 && factor <= 20.0;
}

bool check_harness_dataset_roundtrip() {
    Rng rng(81);
    std::vector<TaskDataset> tasks;
    for (int t = 0; t < 3; ++t) {
        TaskDataset task;
        task.task_id = "task" + std::to_string(t);
        if (t != 1) task.theta = PlantParams{rng.uniform(1.0, 6.0), rng.uniform(1.0, 6.0)};
        for (int i = 0; i < 5; ++i)
            task.points.push_back(
                Observation{{rng.uniform(-10.0, 10.0)}, rng.uniform(-100.0, 10.0)});
        tasks.push_back(std::move(task));
    }
    const auto path =
        (std::filesystem::temp_directory_path() / "dkbo_selftest_roundtrip.txt").string();
    write_datasets(path, tasks);
    const auto back = read_datasets(path);
    std::filesystem::remove(path);
    if (back.size() != tasks.size()) return false;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (back[t].task_id != tasks[t].task_id) return false;
        if (back[t].theta.has_value() != tasks[t].theta.has_value()) return false;
        if (tasks[t].theta &&
            (back[t].theta->theta1 != tasks[t].theta->theta1 ||
             back[t].theta->theta2 != tasks[t].theta->theta2))
            return false;
        if (back[t].points.size() != tasks[t].points.size()) return false;
        for (std::size_t i = 0; i < tasks[t].points.size(); ++i) {
            if (back[t].points[i].r != tasks[t].points[i].r) return false;
            if (back[t].points[i].j != tasks[t].points[i].j) return false;
        }
    }
    return true;
}

bool check_harness_checkpoint_roundtrip() {
    Checkpoint c;
    c.params.encoder = init_params({1, 6, 4}, 17);
    c.params.base = make_hyperparams(KernelKind::Matern32, 0.77, 1.31, 0.013, -0.21);
    c.scaler = LabelScaler(-109.3341, 8.2217);
    c.config = tiny_meta_config();
    c.best_lml = -12.345678901234567;
    c.final_lml = -13.0;
    const auto path =
        (std::filesystem::temp_directory_path() / "dkbo_selftest_checkpoint.txt").string();
    write_checkpoint(path, c);
    const Checkpoint back = read_checkpoint(path);
    std::filesystem::remove(path);
    return flatten(back.params.encoder) == flatten(c.params.encoder) &&
           raw_vector(back.params.base) == raw_vector(c.params.base) &&
           back.scaler.j_min() == c.scaler.j_min() && back.scaler.j_max() == c.scaler.j_max() &&
           back.best_lml == c.best_lml && back.final_lml == c.final_lml;
}

bool check_scaler_roundtrip() {
    const LabelScaler s(-109.25, 8.5);
    for (double j : {-109.25, -50.0, 0.0, 1.2, 8.5}) {
        const auto [mean, variance] = s.unscale(s.rescale(j), 1.0);
        if (std::fabs(mean - j) > 1e-12 * std::max(1.0, std::fabs(j))) return false;
        if (std::fabs(variance - s.width() * s.width()) > 1e-9) return false;
    }
    return s.rescale(s.j_min()) == 0.0 && s.rescale(s.j_max()) == 1.0;
}

ExperimentConfig micro_experiment_config() {
    ExperimentConfig cfg;
    cfg.n_source_tasks = 2;
    cfg.t_k = 10;
    cfg.t_init = 2;
    cfg.bo_budget = 2;
    cfg.repeats = 2;
    cfg.source_random_points = 4;
    cfg.meta.hidden_layers = {8};
    cfg.meta.latent_dim = 3;
    cfg.meta.iterations = 30;
    cfg.meta.batch_size = 4;
    cfg.meta.lr_schedule = {{30, 1e-3, 1e-2}};
    cfg.meta.checkpoint_every = 10;
    cfg.baseline.fit.iterations = 30;
    cfg.acq.candidate_count = 64;
    cfg.master_seed = 7;
    return cfg;
}

bool check_harness_experiment_determinism() {
    const ExperimentConfig cfg = micro_experiment_config();
    const ExperimentResult a = run_experiment(cfg);
    const ExperimentResult b = run_experiment(cfg);
    if (a.summary.dkn.median != b.summary.dkn.median) return false;
    if (a.summary.baseline.median != b.summary.baseline.median) return false;
    if (a.summary.dkn.p05 != b.summary.dkn.p05 || a.summary.dkn.p95 != b.summary.dkn.p95)
        return false;
    for (const auto& histories : {a.dkn_histories, a.baseline_histories}) {
        for (const auto& h : histories) {
            for (const auto& rec : h.records) {
                if (rec.regret < -1e-9) return false;
                if (rec.r[0] < cfg.r_bounds.lo[0] || rec.r[0] > cfg.r_bounds.hi[0]) return false;
            }
        }
    }
    return true;
}

} // namespace

int run_selftest(std::ostream& out) {
    struct Check {
        const char* name;
        std::function<bool()> fn;
    };
    const std::vector<Check> checks = {
        {"numerics: cholesky multiply-back", check_numerics_roundtrip},
        {"numerics: chol_solve residual", check_numerics_solve},
        {"numerics: logdet vs cofactor determinant", check_numerics_logdet},
        {"nn_encoder: backward matches finite differences", check_mlp_grad_fd},
        {"nn_encoder: positive homogeneity", check_mlp_homogeneity},
        {"nn_encoder: adam determinism", check_mlp_adam_deterministic},
        {"kernels: PSD with jitter", check_kernels_psd},
        {"kernels: k(x,x) equals outputscale", check_kernels_diag},
        {"kernels: monotone decay", check_kernels_monotone},
        {"kernels: gradients match finite differences", check_kernels_grad_fd},
        {"gp: interpolation at the noise floor", check_gp_interpolation},
        {"gp: prior variance far from data", check_gp_prior_far},
        {"gp: cholesky path equals explicit inverse", check_gp_brute_equivalence},
        {"gp: variance monotone in data", check_gp_variance_monotone},
        {"dkn: deep kernel PSD", check_dkn_psd},
        {"dkn: loss gradients match finite differences", check_dkn_grad_fd},
        {"dkn: meta_train deterministic", check_dkn_meta_determinism},
        {"dkn: label-scale invariance of predicted argmax", check_dkn_scale_invariance},
        {"bo: EI nonnegative and std->0 limit", check_bo_ei_properties},
        {"bo: EI matches Monte-Carlo", check_bo_ei_monte_carlo},
        {"bo: proposal invariant under monotone maps", check_bo_propose_invariance},
        {"bo: history length, bounds, regret monotone", check_bo_history_contract},
        {"plant: simulated J matches steady-state oracle", check_plant_steady_grid},
        {"plant: equilibrium residual", check_plant_equilibrium},
        {"plant: optimal oracle vs brute-force grid", check_plant_optimal_oracle},
        {"plant: RK4 order-4 factor", check_plant_rk4_order},
        {"harness: dataset file round trip", check_harness_dataset_roundtrip},
        {"harness: checkpoint round trip", check_harness_checkpoint_roundtrip},
        {"harness: label scaler round trip", check_scaler_roundtrip},
        {"harness: experiment determinism and regret bounds", check_harness_experiment_determinism},
    };

    int failures = 0;
    for (const auto& check : checks) {
        bool ok = false;
        try {
            ok = check.fn();
        } catch (const std::exception& e) {
            out << "[FAIL] " << check.name << " (exception: " << e.what() << ")\n";
            ++failures;
            continue;
        }
        out << (ok ? "[PASS] " : "[FAIL] ") << check.name << "\n";
        if (!ok) ++failures;
    }
    out << (failures == 0 ? "selftest: all checks passed\n"
                          : "selftest: " + std::to_string(failures) + " check(s) failed\n");
    return failures;
}

} // namespace dkbo
