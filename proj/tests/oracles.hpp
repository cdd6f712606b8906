#pragma once

// Test-only oracles, kept independent of the library code paths they check:
// a straight-line forward pass, a one-sided Jacobi SVD, a brute-force
// two-point scorer that materializes whole perturbed networks, and central
// finite differences.

#include <cmath>
#include <vector>

#include "slimnn/compress.hpp"
#include "slimnn/mlp.hpp"
#include "slimnn/rng.hpp"

namespace oracles {

using slimnn::Matrix;
using slimnn::Mlp;
using slimnn::Vector;

// Plain nested-loop evaluation of the activation/affine chain.
inline Vector straight_line_forward(const Mlp& net, const Vector& x, std::size_t depth) {
    Vector cur = x;
    for (std::size_t l = 0; l < depth; ++l) {
        const Matrix& w = net.layers[l].weights;
        Vector next(w.rows, 0.0);
        for (std::size_t i = 0; i < w.rows; ++i)
            for (std::size_t j = 0; j < w.cols; ++j) next[i] += w(i, j) * cur[j];
        for (double& v : next) v = net.layers[l].activation(v);
        cur = next;
    }
    return cur;
}

// Largest singular value by one-sided Jacobi: rotate column pairs of a copy
// of A until all are orthogonal, then the largest column norm is sigma_max.
inline double jacobi_largest_singular_value(const Matrix& a) {
    const std::size_t n = a.cols;
    std::vector<Vector> col(n, Vector(a.rows));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < a.rows; ++i) col[j][i] = a(i, j);

    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < a.rows; ++i) {
                    app += col[p][i] * col[p][i];
                    aqq += col[q][i] * col[q][i];
                    apq += col[p][i] * col[q][i];
                }
                if (std::fabs(apq) <= 1e-15 * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < a.rows; ++i) {
                    const double vp = col[p][i], vq = col[q][i];
                    col[p][i] = c * vp - s * vq;
                    col[q][i] = s * vp + c * vq;
                }
            }
        if (!rotated) break;
    }
    double best = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double nn = 0.0;
        for (double v : col[j]) nn += v * v;
        best = std::max(best, std::sqrt(nn));
    }
    return best;
}

// Mean squared distance at the given depth between reference outputs and a
// fully materialized network.
inline double mean_discrepancy(const Mlp& net, const std::vector<Vector>& batch,
                               const std::vector<Vector>& targets, std::size_t depth) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Vector out = straight_line_forward(net, batch[b], depth);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = targets[b][i] - out[i];
            acc += d * d;
        }
    }
    return acc / static_cast<double>(batch.size());
}

// Brute-force two-point score: builds both perturbed networks whole and
// averages their discrepancies.
inline double brute_force_score(const Mlp& working, const std::vector<Vector>& batch,
                                const std::vector<Vector>& targets, std::size_t compare_depth,
                                std::size_t layer, std::size_t i, std::size_t j,
                                const slimnn::TwoPoint& t) {
    auto with_site = [&](double v) {
        Mlp net = working;
        net.layers[layer - 1].weights(i, j) = v;
        return net;
    };
    const double d_cur = mean_discrepancy(working, batch, targets, compare_depth);
    const double d0 = mean_discrepancy(with_site(t.v0), batch, targets, compare_depth);
    const double d1 = mean_discrepancy(with_site(t.v1), batch, targets, compare_depth);
    return std::fabs((1.0 - t.p1) * d0 + t.p1 * d1 - d_cur);
}

// Same for a whole column/row block scaled by t in {0, 1/p}.
inline double brute_force_block_score(const Mlp& working, const std::vector<Vector>& batch,
                                      const std::vector<Vector>& targets,
                                      std::size_t compare_depth, std::size_t layer,
                                      const std::vector<std::size_t>& idx, bool rows,
                                      double p) {
    auto with_scale = [&](double t) {
        Mlp net = working;
        Matrix& w = net.layers[layer - 1].weights;
        if (rows) {
            for (std::size_t r : idx)
                for (std::size_t c = 0; c < w.cols; ++c) w(r, c) *= t;
        } else {
            for (std::size_t r = 0; r < w.rows; ++r)
                for (std::size_t c : idx) w(r, c) *= t;
        }
        return net;
    };
    const double d_cur = mean_discrepancy(working, batch, targets, compare_depth);
    const double d0 = mean_discrepancy(with_scale(0.0), batch, targets, compare_depth);
    const double d1 = mean_discrepancy(with_scale(1.0 / p), batch, targets, compare_depth);
    return std::fabs((1.0 - p) * d0 + p * d1 - d_cur);
}

// Central finite difference of a scalar function of one weight.
template <typename F>
double central_difference(F&& f, double& w, double h = 1e-5) {
    const double saved = w;
    w = saved + h;
    const double up = f();
    w = saved - h;
    const double down = f();
    w = saved;
    return (up - down) / (2.0 * h);
}

// --- random instance helpers -----------------------------------------------

inline Matrix random_matrix(std::size_t rows, std::size_t cols, slimnn::Rng& rng,
                            double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.uniform(-scale, scale);
    return m;
}

inline Vector random_unit_ball(std::size_t dim, slimnn::Rng& rng) {
    Vector v(dim);
    double n = 0.0;
    do {
        for (double& e : v) e = rng.normal();
        n = slimnn::norm2(v);
    } while (n == 0.0);
    const double r = std::pow(rng.uniform01(), 1.0 / static_cast<double>(dim));
    for (double& e : v) e *= r / n;
    return v;
}

inline Mlp random_mlp(const std::vector<std::size_t>& dims,
                      const std::vector<slimnn::Activation>& acts, slimnn::Rng& rng,
                      double scale = 1.0) {
    Mlp net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double bound = scale / std::sqrt(static_cast<double>(dims[l]));
        net.layers.push_back({random_matrix(dims[l + 1], dims[l], rng, bound), acts[l]});
    }
    return net;
}

}  // namespace oracles
