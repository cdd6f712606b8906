#pragma once

#include <vector>

#include "slimnn/matrix.hpp"
#include "slimnn/rng.hpp"

namespace slimnn {

// Symmetric quantization grid {+-i*M/k : i in 1..k}. The scale M is frozen
// per layer at compression start so every greedy replacement in that layer
// lands on one consistent grid.
struct QuantGrid {
    double M = 1.0;
    int k = 1;

    QuantGrid(double scale, int levels);

    double step() const { return M / static_cast<double>(k); }
    // The 2k signed grid values, sorted ascending.
    std::vector<double> values() const;
};

// Two-point rounding distribution for a weight w with |w| <= M:
// value `high` (= sign(w) * l_w * M/k) with probability prob_high,
// value `low` (= sign(w) * (l_w - 1) * M/k) otherwise. low may be 0.
struct RoundingLevels {
    double low = 0.0;
    double high = 0.0;
    double prob_high = 0.0;
};

// l_w is the smallest level index whose grid value reaches |w|, determined
// by direct comparison against computed grid values so that
// |low| <= |w| <= |high| holds exactly in floating point.
RoundingLevels rounding_levels(double w, double M, int k);

// Samples the two-point distribution. Unbiased (mean w) with |q - w| <= M/k.
double quantize_stochastic(double w, double M, int k, Rng& rng);

// Fraction of entries farther than 1e-12 from every reachable level
// ({0} union {+-i*M/k : i in 1..k}).
double discreteness_report(const Matrix& w, const QuantGrid& grid);

}  // namespace slimnn
