#include "dkbo/kernels.hpp"

#include <cmath>
#include <string>

namespace dkbo {

namespace {

constexpr double kLengthscaleFloor = 1e-4;
constexpr double kOutputscaleFloor = 1e-6;
constexpr double kNoiseFloor = 1e-4;
constexpr double kSqrt3 = 1.7320508075688772;

double distance(const Matrix& x, std::size_t i, const Matrix& y, std::size_t j) {
    double sq = 0.0;
    const double* xr = x.data() + i * x.cols();
    const double* yr = y.data() + j * y.cols();
    for (std::size_t k = 0; k < x.cols(); ++k) {
        const double d = xr[k] - yr[k];
        sq += d * d;
    }
    return std::sqrt(sq);
}

void check_dims(const Matrix& x, const Matrix& y) {
    if (x.cols() != y.cols())
        throw DimensionMismatch("kernel: input dims " + std::to_string(x.cols()) + " vs " +
                                std::to_string(y.cols()));
}

} // namespace

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
    // log(exp(y) - 1), stable for large y
    return y > 20.0 ? y : std::log(std::expm1(y));
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double KernelHyperparams::lengthscale() const { return softplus(raw_lengthscale) + kLengthscaleFloor; }
double KernelHyperparams::outputscale() const { return softplus(raw_outputscale) + kOutputscaleFloor; }
double KernelHyperparams::noise_variance() const { return softplus(raw_noise) + kNoiseFloor; }

KernelHyperparams make_hyperparams(KernelKind kind, double lengthscale, double outputscale,
                                   double noise_variance, double constant_mean) {
    constexpr double kTiny = 1e-12;
    KernelHyperparams h;
    h.kind = kind;
    h.raw_lengthscale = softplus_inverse(std::max(lengthscale - kLengthscaleFloor, kTiny));
    h.raw_outputscale = softplus_inverse(std::max(outputscale - kOutputscaleFloor, kTiny));
    h.raw_noise = softplus_inverse(std::max(noise_variance - kNoiseFloor, kTiny));
    h.constant_mean = constant_mean;
    return h;
}

std::vector<double> raw_vector(const KernelHyperparams& h) {
    return {h.raw_lengthscale, h.raw_outputscale, h.raw_noise, h.constant_mean};
}

KernelHyperparams with_raw_vector(const KernelHyperparams& h, const std::vector<double>& raw) {
    if (raw.size() != 4) throw DimensionMismatch("with_raw_vector: expected 4 entries");
    KernelHyperparams out = h;
    out.raw_lengthscale = raw[0];
    out.raw_outputscale = raw[1];
    out.raw_noise = raw[2];
    out.constant_mean = raw[3];
    return out;
}

Matrix kernel_matrix(const KernelHyperparams& h, const Matrix& x, const Matrix& y) {
    check_dims(x, y);
    const double ls = h.lengthscale();
    const double os = h.outputscale();
    Matrix k(x.rows(), y.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < y.rows(); ++j) {
            const double d = distance(x, i, y, j);
            if (h.kind == KernelKind::Matern32) {
                const double s = kSqrt3 * d / ls;
                k(i, j) = os * (1.0 + s) * std::exp(-s);
            } else {
                const double u = d / ls;
                k(i, j) = os * std::exp(-0.5 * u * u);
            }
        }
    }
    return k;
}

KernelGrads kernel_grads(const KernelHyperparams& h, const Matrix& x, const Matrix& y) {
    check_dims(x, y);
    const std::size_t n = x.rows();
    const std::size_t m = y.rows();
    const std::size_t dim = x.cols();
    const double ls = h.lengthscale();
    const double os = h.outputscale();
    const double dls = sigmoid(h.raw_lengthscale); // softplus chain factor
    const double dos = sigmoid(h.raw_outputscale);

    KernelGrads g;
    g.d_raw_lengthscale = Matrix(n, m);
    g.d_raw_outputscale = Matrix(n, m);
    g.d_x.assign(dim, Matrix(n, m));

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = distance(x, i, y, j);
            double dk_dl;     // d k / d lengthscale
            double radial;    // d k / d x_i[k] = radial * (x_i[k] - y_j[k])
            double unit;      // k / outputscale
            if (h.kind == KernelKind::Matern32) {
                const double s = kSqrt3 * d / ls;
                const double e = std::exp(-s);
                unit = (1.0 + s) * e;
                dk_dl = os * s * s * e / ls;
                radial = -3.0 * os * e / (ls * ls);
            } else {
                const double u = d / ls;
                const double e = std::exp(-0.5 * u * u);
                unit = e;
                dk_dl = os * e * u * u / ls;
                radial = -os * e / (ls * ls);
            }
            g.d_raw_lengthscale(i, j) = dk_dl * dls;
            g.d_raw_outputscale(i, j) = unit * dos;
            if (d > 0.0) {
                const double* xr = x.data() + i * dim;
                const double* yr = y.data() + j * dim;
                for (std::size_t k = 0; k < dim; ++k)
                    g.d_x[k](i, j) = radial * (xr[k] - yr[k]);
            }
        }
    }
    return g;
}

} // namespace dkbo
