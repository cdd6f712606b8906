#include "slimnn/matrix.hpp"

#include <cmath>
#include <stdexcept>

#include "slimnn/rng.hpp"

namespace slimnn {

Vector matvec(const Matrix& w, const Vector& x) {
    if (x.size() != w.cols) throw std::invalid_argument("matvec: dimension mismatch");
    Vector y(w.rows, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* r = w.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) acc += r[j] * x[j];
        y[i] = acc;
    }
    return y;
}

Vector matvec_transposed(const Matrix& w, const Vector& x) {
    if (x.size() != w.rows) throw std::invalid_argument("matvec_transposed: dimension mismatch");
    Vector y(w.cols, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* r = w.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < w.cols; ++j) y[j] += r[j] * xi;
    }
    return y;
}

double dot(const Vector& a, const Vector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

double squared_distance(const Vector& a, const Vector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

bool all_finite(const Matrix& w) {
    for (double v : w.data)
        if (!std::isfinite(v)) return false;
    return true;
}

double inf_norm(const Matrix& w) {
    double m = 0.0;
    for (double v : w.data) m = std::max(m, std::fabs(v));
    return m;
}

namespace {

Vector apply_gram(const Matrix& w, const Vector& v) {
    return matvec_transposed(w, matvec(w, v));
}

SpectralNormResult power_iterate(const Matrix& w, Vector v, double tol, int max_iter) {
    SpectralNormResult res;
    double sigma = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        Vector u = apply_gram(w, v);
        const double n = norm2(u);
        res.iterations = it;
        if (n == 0.0) {
            res.value = 0.0;
            res.converged = false;  // collapsed: caller may restart
            return res;
        }
        for (double& e : u) e /= n;
        const double new_sigma = std::sqrt(n);  // ||W^T W v|| -> sigma^2 at fixpoint
        if (it > 1 && std::fabs(new_sigma - sigma) <= tol * std::max(new_sigma, 1e-300)) {
            res.value = new_sigma;
            res.converged = true;
            return res;
        }
        sigma = new_sigma;
        v = std::move(u);
    }
    res.value = sigma;
    res.converged = false;
    return res;
}

}  // namespace

SpectralNormResult spectral_norm_detailed(const Matrix& w, double tol, int max_iter) {
    if (w.rows == 0 || w.cols == 0) throw std::invalid_argument("spectral_norm: empty matrix");
    if (inf_norm(w) == 0.0) return {0.0, true, 0};

    // Fixed-seed start vector: deterministic across calls, yet with a
    // component on every singular direction in practice. Structured starts
    // (all-ones, ramps) are exact eigenvectors of circulant matrices and
    // stall the iteration there.
    std::uint64_t state = 0x5eed5eedULL;
    Vector v(w.cols);
    for (double& e : v) {
        state = splitmix64(state);
        e = static_cast<double>(state >> 11) * 0x1.0p-53 - 0.5;
    }
    const double n0 = norm2(v);
    for (double& e : v) e /= n0;

    SpectralNormResult res = power_iterate(w, v, tol, max_iter);
    if (!res.converged && res.value == 0.0) {
        Vector ones(w.cols, 1.0 / std::sqrt(static_cast<double>(w.cols)));
        res = power_iterate(w, ones, tol, max_iter);
    }
    return res;
}

double spectral_norm(const Matrix& w, double tol, int max_iter) {
    return spectral_norm_detailed(w, tol, max_iter).value;
}

}  // namespace slimnn
