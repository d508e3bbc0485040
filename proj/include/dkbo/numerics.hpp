#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dkbo/errors.hpp"

namespace dkbo {

inline constexpr double kDefaultJitter = 1e-6;

// Dense row-major matrix of doubles. Sized for exact GP inference on at most
// a few thousand points; no BLAS behind it.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, value) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    std::vector<double> row(std::size_t i) const;
    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix multiply(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix from_rows(const std::vector<std::vector<double>>& rows);
Matrix column_vector(const std::vector<double>& v);

// Square matrix validated symmetric (1e-12 relative) and finite on
// construction.
class SymMatrix {
public:
    explicit SymMatrix(Matrix values);
    const Matrix& values() const { return values_; }
    std::size_t size() const { return values_.rows(); }

private:
    Matrix values_;
};

// Lower-triangular Cholesky factor with strictly positive diagonal.
struct CholFactor {
    Matrix lower;
    std::size_t size() const { return lower.rows(); }
};

// L with L*L^T = a + jitter*I; jitter is added to the diagonal once, before
// factorization. Throws NotPositiveDefinite when a pivot fails.
CholFactor cholesky(const SymMatrix& a, double jitter = 0.0);

// Solves L*y = b column by column.
Matrix forward_solve(const CholFactor& l, const Matrix& b);

// Solves (L*L^T)*x = b.
Matrix chol_solve(const CholFactor& l, const Matrix& b);

// log|L*L^T| = 2 * sum(log diag L).
double logdet(const CholFactor& l);

// Central finite differences, one coordinate at a time.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h);

} // namespace dkbo
