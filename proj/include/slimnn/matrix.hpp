#pragma once

#include <cstddef>
#include <vector>

namespace slimnn {

// Dense row-major matrix of doubles. Sized for desk-scale networks; masks
// from pruning are materialized as explicit zeros.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows*cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const double& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    const double* row(std::size_t i) const { return data.data() + i * cols; }
    double* row(std::size_t i) { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

using Vector = std::vector<double>;

// y = W x
Vector matvec(const Matrix& w, const Vector& x);

// y = W^T x
Vector matvec_transposed(const Matrix& w, const Vector& x);

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& v);
double squared_distance(const Vector& a, const Vector& b);

// Checks every entry with std::isfinite.
bool all_finite(const Matrix& w);

// Largest absolute entry (entrywise max norm).
double inf_norm(const Matrix& w);

struct SpectralNormResult {
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Power iteration on W^T W from a fixed-seed start vector, so repeated
// calls on the same matrix return the same value. Structured deterministic
// starts (all-ones, ramps) are eigenvectors of circulant matrices and trap
// the iteration on a non-maximal eigenvalue.
SpectralNormResult spectral_norm_detailed(const Matrix& w, double tol = 1e-10,
                                          int max_iter = 10000);
double spectral_norm(const Matrix& w, double tol = 1e-10, int max_iter = 10000);

}  // namespace slimnn
