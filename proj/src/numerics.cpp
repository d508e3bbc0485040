#include "dkbo/numerics.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace dkbo {

std::vector<double> Matrix::row(std::size_t i) const {
    return std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(i * cols_),
                               data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols_));
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionMismatch("multiply: " + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()));
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix();
    Matrix out(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != out.cols())
            throw DimensionMismatch("from_rows: ragged row " + std::to_string(i));
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = rows[i][j];
    }
    return out;
}

Matrix column_vector(const std::vector<double>& v) {
    Matrix out(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) out(i, 0) = v[i];
    return out;
}

SymMatrix::SymMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() != values_.cols())
        throw DimensionMismatch("SymMatrix: not square");
    if (!values_.all_finite())
        throw std::invalid_argument("SymMatrix: non-finite entry");
    for (std::size_t i = 0; i < values_.rows(); ++i) {
        for (std::size_t j = i + 1; j < values_.cols(); ++j) {
            const double a = values_(i, j);
            const double b = values_(j, i);
            const double scale = std::max({std::fabs(a), std::fabs(b), 1.0});
            if (std::fabs(a - b) > 1e-12 * scale)
                throw std::invalid_argument("SymMatrix: asymmetric at (" + std::to_string(i) +
                                            "," + std::to_string(j) + ")");
        }
    }
}

CholFactor cholesky(const SymMatrix& a, double jitter) {
    const std::size_t n = a.size();
    Matrix m = a.values();
    for (std::size_t i = 0; i < n; ++i) m(i, i) += jitter;

    Matrix lower(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double pivot = m(j, j);
        for (std::size_t k = 0; k < j; ++k) pivot -= lower(j, k) * lower(j, k);
        if (!(pivot > 0.0))
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(pivot) +
                                      " at index " + std::to_string(j));
        const double diag = std::sqrt(pivot);
        lower(j, j) = diag;
        for (std::size_t i = j + 1; i < n; ++i) {
            double sum = m(i, j);
            for (std::size_t k = 0; k < j; ++k) sum -= lower(i, k) * lower(j, k);
            lower(i, j) = sum / diag;
        }
    }
    return CholFactor{std::move(lower)};
}

Matrix forward_solve(const CholFactor& l, const Matrix& b) {
    const std::size_t n = l.size();
    if (b.rows() != n)
        throw DimensionMismatch("forward_solve: factor " + std::to_string(n) + " vs rhs " +
                                std::to_string(b.rows()));
    Matrix y = b;
    const Matrix& low = l.lower;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double sum = y(i, c);
            for (std::size_t k = 0; k < i; ++k) sum -= low(i, k) * y(k, c);
            y(i, c) = sum / low(i, i);
        }
    }
    return y;
}

Matrix chol_solve(const CholFactor& l, const Matrix& b) {
    const std::size_t n = l.size();
    Matrix x = forward_solve(l, b);
    const Matrix& low = l.lower;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t ip = n; ip > 0; --ip) {
            const std::size_t i = ip - 1;
            double sum = x(i, c);
            for (std::size_t k = i + 1; k < n; ++k) sum -= low(k, i) * x(k, c);
            x(i, c) = sum / low(i, i);
        }
    }
    return x;
}

double logdet(const CholFactor& l) {
    double sum = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) sum += std::log(l.lower(i, i));
    return 2.0 * sum;
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h) {
    std::vector<double> grad(x.size());
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

} // namespace dkbo
