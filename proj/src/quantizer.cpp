#include "slimnn/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slimnn {

QuantGrid::QuantGrid(double scale, int levels) : M(scale), k(levels) {
    if (!(M > 0.0)) throw std::invalid_argument("quant grid: M must be positive");
    if (k < 1) throw std::invalid_argument("quant grid: k must be >= 1");
}

std::vector<double> QuantGrid::values() const {
    std::vector<double> v;
    v.reserve(2 * static_cast<std::size_t>(k));
    const double h = step();
    for (int i = k; i >= 1; --i) v.push_back(-static_cast<double>(i) * h);
    for (int i = 1; i <= k; ++i) v.push_back(static_cast<double>(i) * h);
    return v;
}

RoundingLevels rounding_levels(double w, double M, int k) {
    if (!(M > 0.0)) throw std::invalid_argument("rounding_levels: M must be positive");
    if (k < 1) throw std::invalid_argument("rounding_levels: k must be >= 1");
    const double aw = std::fabs(w);
    if (aw > M) throw std::invalid_argument("rounding_levels: |w| > M; rescale or clamp first");

    const double h = M / static_cast<double>(k);
    // l_w = min{l in [k] : |w| <= l*M/k}, found against the computed grid
    // so the two levels bracket w exactly.
    const double s = static_cast<double>(k) * (aw / M);
    int lw = static_cast<int>(std::ceil(s));
    lw = std::clamp(lw, 1, k);
    while (lw > 1 && aw <= static_cast<double>(lw - 1) * h) --lw;
    while (lw < k && aw > static_cast<double>(lw) * h) ++lw;

    const double sign = w < 0.0 ? -1.0 : 1.0;
    RoundingLevels out;
    out.low = sign * static_cast<double>(lw - 1) * h;
    out.high = sign * static_cast<double>(lw) * h;
    // a tie on a computed grid value is deterministic
    if (aw == static_cast<double>(lw) * h) out.prob_high = 1.0;
    else out.prob_high = std::clamp(s - static_cast<double>(lw - 1), 0.0, 1.0);
    return out;
}

double quantize_stochastic(double w, double M, int k, Rng& rng) {
    const RoundingLevels lv = rounding_levels(w, M, k);
    return rng.bernoulli(lv.prob_high) ? lv.high : lv.low;
}

double discreteness_report(const Matrix& w, const QuantGrid& grid) {
    if (w.data.empty()) return 0.0;
    const double h = grid.step();
    std::size_t off = 0;
    for (double v : w.data) {
        const double av = std::fabs(v);
        // nearest reachable level: 0 or i*h for i in 1..k
        double best = av;  // distance to 0
        for (int i = 1; i <= grid.k; ++i)
            best = std::min(best, std::fabs(av - static_cast<double>(i) * h));
        if (best > 1e-12) ++off;
    }
    return static_cast<double>(off) / static_cast<double>(w.data.size());
}

}  // namespace slimnn
