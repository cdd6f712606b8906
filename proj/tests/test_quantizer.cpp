#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "slimnn/quantizer.hpp"

using namespace slimnn;

TEST_CASE("rounding_levels: boundary, zero and interior") {
    // w = M: top level with certainty
    auto lv = rounding_levels(1.5, 1.5, 4);
    CHECK(lv.high == doctest::Approx(1.5));
    CHECK(lv.low == doctest::Approx(3.0 * 1.5 / 4.0));
    CHECK(lv.prob_high == doctest::Approx(1.0));

    // w = 0: level index 1, never moves up
    lv = rounding_levels(0.0, 2.0, 5);
    CHECK(lv.low == 0.0);
    CHECK(lv.high == doctest::Approx(0.4));
    CHECK(lv.prob_high == 0.0);

    // w = 0.3, M = 1, k = 2: levels (0, 0.5), p_high = 0.6
    lv = rounding_levels(0.3, 1.0, 2);
    CHECK(lv.low == 0.0);
    CHECK(lv.high == doctest::Approx(0.5));
    CHECK(lv.prob_high == doctest::Approx(0.6));

    CHECK_THROWS(rounding_levels(2.0, 1.0, 4));   // |w| > M
    CHECK_THROWS(rounding_levels(0.5, 0.0, 4));
    CHECK_THROWS(rounding_levels(0.5, 1.0, 0));
}

TEST_CASE("rounding_levels: negative weights mirror positive ones") {
    Rng rng(9);
    for (int i = 0; i < 2000; ++i) {
        const double m = rng.uniform(0.1, 5.0);
        const int k = 1 + static_cast<int>(rng.index(16));
        const double w = rng.uniform(0.0, m);
        const auto pos = rounding_levels(w, m, k);
        const auto neg = rounding_levels(-w, m, k);
        CHECK(neg.low == -pos.low);
        CHECK(neg.high == -pos.high);
        CHECK(neg.prob_high == pos.prob_high);
    }
}

TEST_CASE("unbiased mean and hard error bound") {
    // mean of 1e5 draws at w = 0.3 lands within 4 sigma of w
    Rng rng(1);
    double acc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += quantize_stochastic(0.3, 1.0, 2, rng);
    CHECK(std::fabs(acc / n - 0.3) <= 0.006);

    // every sample sits on one of the two bracketing levels
    for (int i = 0; i < 3000; ++i) {
        const double m = rng.uniform(0.1, 3.0);
        const int k = 1 + static_cast<int>(rng.index(16));
        const double w = rng.uniform(-m, m);
        const auto lv = rounding_levels(w, m, k);
        const double q = quantize_stochastic(w, m, k, rng);
        CHECK((q == lv.low || q == lv.high));
        CHECK(std::fabs(q - w) <= m / k);
    }
}

TEST_CASE("grid points are fixed points") {
    Rng rng(2);
    for (int k : {1, 2, 5, 8}) {
        const double m = 2.0;
        const double h = m / k;
        for (int i = 1; i <= k; ++i) {
            const double w = static_cast<double>(i) * h;
            const auto lv = rounding_levels(w, m, k);
            CHECK(lv.prob_high == 1.0);
            CHECK(quantize_stochastic(w, m, k, rng) == lv.high);
            CHECK(lv.high == w);
        }
    }
}

TEST_CASE("two-point variance stays under (M/k)^2 / 4") {
    Rng rng(3);
    for (int i = 0; i < 5000; ++i) {
        const double m = rng.uniform(0.1, 4.0);
        const int k = 1 + static_cast<int>(rng.index(16));
        const double w = rng.uniform(-m, m);
        const auto lv = rounding_levels(w, m, k);
        const double span = lv.high - lv.low;
        const double var = lv.prob_high * (1.0 - lv.prob_high) * span * span;
        CHECK(var <= (m / k) * (m / k) / 4.0 + 1e-15);
    }
}

TEST_CASE("sample-mean bias over many random settings") {
    Rng rng(4);
    for (int rep = 0; rep < 40; ++rep) {
        const double m = rng.uniform(0.2, 3.0);
        const int k = 1 + static_cast<int>(rng.index(16));
        const double w = rng.uniform(-m, m);
        const int n = 20000;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += quantize_stochastic(w, m, k, rng);
        CHECK(std::fabs(acc / n - w) <= 4.0 * (m / k) / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("discreteness_report counts off-grid entries") {
    const QuantGrid grid(1.0, 4);
    CHECK(grid.step() == 0.25);
    const auto vals = grid.values();
    REQUIRE(vals.size() == 8);
    CHECK(vals.front() == -1.0);
    CHECK(vals.back() == 1.0);

    Matrix quantized(3, 3);
    Rng rng(5);
    for (double& v : quantized.data) v = quantize_stochastic(rng.uniform(-1.0, 1.0), 1.0, 4, rng);
    CHECK(discreteness_report(quantized, grid) == 0.0);

    Matrix raw(10, 10);
    for (double& v : raw.data) v = rng.uniform(-1.0, 1.0) + 1e-3;
    CHECK(discreteness_report(raw, grid) > 0.9);

    Matrix mixed(10, 10);
    for (double& v : mixed.data) v = 0.123456;
    mixed(0, 0) = 0.25;
    mixed(3, 4) = -0.75;
    mixed(9, 9) = 1.0;
    CHECK(discreteness_report(mixed, grid) == doctest::Approx(0.97));
}
