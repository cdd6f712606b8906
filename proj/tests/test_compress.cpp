#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "slimnn/compress.hpp"

using namespace slimnn;

namespace {

std::vector<Vector> make_batch(std::size_t n, std::size_t dim, Rng& rng) {
    std::vector<Vector> batch;
    for (std::size_t i = 0; i < n; ++i) batch.push_back(oracles::random_unit_ball(dim, rng));
    return batch;
}

CompressionPlan base_plan(std::vector<std::size_t> w_set, std::vector<std::size_t> b_set,
                          std::vector<Vector> batch) {
    CompressionPlan plan;
    plan.sets.w_set = std::move(w_set);
    plan.sets.b_set = std::move(b_set);
    plan.score_batch = std::move(batch);
    return plan;
}

bool bitwise_equal(const Mlp& a, const Mlp& b) {
    if (a.depth() != b.depth()) return false;
    for (std::size_t l = 0; l < a.depth(); ++l)
        if (a.layers[l].weights.data != b.layers[l].weights.data) return false;
    return true;
}

}  // namespace

TEST_CASE("layer sets: disjointness and successor rules") {
    LayerSets sets;
    sets.w_set = {1};
    sets.b_set = {3};
    sets.validate(5);

    sets.b_set = {1};
    CHECK_THROWS(sets.validate(5));  // overlap with w
    sets = LayerSets{{2}, {1}};      // 2 = b+1
    CHECK_THROWS(sets.validate(5));
    sets = LayerSets{{}, {1, 2}};  // 2 = b+1 of 1
    CHECK_THROWS(sets.validate(5));
    sets = LayerSets{{}, {3}};  // b needs a successor
    CHECK_THROWS(sets.validate(3));
    sets = LayerSets{{7}, {}};
    CHECK_THROWS(sets.validate(3));
}

TEST_CASE("reference outputs cache") {
    Rng rng(2);
    // identity chain: every cached depth equals the input
    Mlp id;
    id.layers.push_back({Matrix::identity(3), Activation(ActKind::Identity)});
    id.layers.push_back({Matrix::identity(3), Activation(ActKind::Identity)});
    const auto batch = make_batch(4, 3, rng);
    const ReferenceOutputs ref = reference_outputs(id, batch);
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t b = 0; b < batch.size(); ++b) CHECK(ref[l][b] == batch[b]);

    const std::vector<Activation> acts = {Activation(ActKind::Tanh),
                                          Activation(ActKind::Relu)};
    Mlp net = oracles::random_mlp({3, 5, 4}, acts, rng);
    const ReferenceOutputs r2 = reference_outputs(net, batch);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto zs = forward(net, batch[b]);
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t i = 0; i < zs[l].size(); ++i)
                CHECK(std::fabs(r2[l][b][i] - zs[l][i]) <= 1e-12);
    }
}

TEST_CASE("two-point distributions are unbiased") {
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const double w = rng.uniform(-2.0, 2.0);
        const double p = rng.uniform(0.05, 0.95);
        const TwoPoint pr = prune_two_point(w, p);
        CHECK(std::fabs(pr.mean() - w) <= 1e-12 * std::max(1.0, std::fabs(w)));

        const double m = std::fabs(w) + rng.uniform(0.1, 1.0);
        const int k = 1 + static_cast<int>(rng.index(8));
        const TwoPoint qt = quantize_two_point(w, m, k);
        CHECK(std::fabs(qt.mean() - w) <= 1e-9 * std::max(1.0, std::fabs(w)));
    }
}

TEST_CASE("score of an already-zero site in prune mode is zero") {
    Rng rng(5);
    Mlp net = oracles::random_mlp({3, 4}, {Activation(ActKind::Identity)}, rng);
    net.layers[0].weights(1, 2) = 0.0;
    const auto batch = make_batch(6, 3, rng);
    const ReferenceOutputs ref = reference_outputs(net, batch);
    const TwoPoint t = prune_two_point(0.0, 0.3);
    CHECK(two_point_score(net, ref, 1, 1, 1, 2, t, batch) == 0.0);
}

TEST_CASE("closed form on a single linear layer: w^2 (1-p)/p mean(x_j^2)") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n_in = 2 + rng.index(5), n_out = 1 + rng.index(4);
        Mlp net = oracles::random_mlp({n_in, n_out}, {Activation(ActKind::Identity)}, rng);
        const auto batch = make_batch(5, n_in, rng);
        const ReferenceOutputs ref = reference_outputs(net, batch);
        const double p = rng.uniform(0.1, 0.9);
        const std::size_t i = rng.index(n_out), j = rng.index(n_in);
        const double w = net.layers[0].weights(i, j);

        double mean_xj2 = 0.0;
        for (const Vector& x : batch) mean_xj2 += x[j] * x[j];
        mean_xj2 /= static_cast<double>(batch.size());
        const double expected = w * w * (1.0 - p) / p * mean_xj2;

        const double got = two_point_score(net, ref, 1, 1, i, j, prune_two_point(w, p), batch);
        CHECK(std::fabs(got - expected) <= 1e-10 * std::max(1.0, expected));
    }
}

TEST_CASE("the closed form persists mid-run because E[t] cancels the cross term") {
    Rng rng(8);
    Mlp net = oracles::random_mlp({5, 3}, {Activation(ActKind::Identity)}, rng);
    const auto batch = make_batch(4, 5, rng);
    const ReferenceOutputs ref = reference_outputs(net, batch);
    const double p = 0.3;
    // perturb some weights as if a few greedy steps already happened
    net.layers[0].weights(0, 0) = 0.0;
    net.layers[0].weights(2, 4) /= p;
    const std::size_t i = 1, j = 2;
    const double w = net.layers[0].weights(i, j);
    double mean_xj2 = 0.0;
    for (const Vector& x : batch) mean_xj2 += x[j] * x[j];
    mean_xj2 /= static_cast<double>(batch.size());
    const double got = two_point_score(net, ref, 1, 1, i, j, prune_two_point(w, p), batch);
    CHECK(std::fabs(got - w * w * (1.0 - p) / p * mean_xj2) <= 1e-10);
}

TEST_CASE("two_point_score equals the brute-force two-network oracle") {
    Rng rng(9);
    const std::vector<Activation> acts = {Activation(ActKind::Tanh),
                                          Activation(ActKind::Relu)};
    for (int rep = 0; rep < 20; ++rep) {
        Mlp net = oracles::random_mlp({4, 6, 3}, acts, rng);
        const auto batch = make_batch(5, 4, rng);
        const ReferenceOutputs ref = reference_outputs(net, batch);
        for (std::size_t depth : {std::size_t{1}, std::size_t{2}}) {
            const std::size_t i = rng.index(6), j = rng.index(4);
            const double w = net.layers[0].weights(i, j);
            const TwoPoint t = rep % 2 == 0 ? prune_two_point(w, 0.3)
                                            : quantize_two_point(w, std::fabs(w) + 0.5, 4);
            const double got = two_point_score(net, ref, depth, 1, i, j, t, batch);
            const double want =
                oracles::brute_force_score(net, batch, ref[depth - 1], depth, 1, i, j, t);
            CHECK(std::fabs(got - want) <= 1e-12);
        }
    }
}

TEST_CASE("labeled-loss score variant matches its brute force") {
    Rng rng(10);
    const std::vector<Activation> acts = {Activation(ActKind::Tanh),
                                          Activation(ActKind::Identity)};
    Mlp net = oracles::random_mlp({3, 5, 2}, acts, rng);
    const auto batch = make_batch(4, 3, rng);
    std::vector<Vector> labels;
    for (std::size_t b = 0; b < batch.size(); ++b)
        labels.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    const std::size_t i = 2, j = 1;
    const double w = net.layers[0].weights(i, j);
    const TwoPoint t = prune_two_point(w, 0.4);
    const double got = two_point_score_labeled(net, labels, 1, i, j, t, batch);
    const double want = oracles::brute_force_score(net, batch, labels, 2, 1, i, j, t);
    CHECK(std::fabs(got - want) <= 1e-12);
}

TEST_CASE("score errors: out-of-range site and biased distribution") {
    Rng rng(11);
    Mlp net = oracles::random_mlp({3, 2}, {Activation(ActKind::Identity)}, rng);
    const auto batch = make_batch(2, 3, rng);
    const ReferenceOutputs ref = reference_outputs(net, batch);
    CHECK_THROWS(two_point_score(net, ref, 1, 1, 5, 0, TwoPoint{0, 0, 0.5}, batch));
    const double w = net.layers[0].weights(0, 0);
    CHECK_THROWS(two_point_score(net, ref, 1, 1, 0, 0, TwoPoint{w + 1.0, w + 1.0, 0.5}, batch));
}

TEST_CASE("greedy pass: alpha small enough compresses exactly one site") {
    Rng rng(12);
    Mlp net = oracles::random_mlp({4, 4}, {Activation(ActKind::Identity)}, rng);
    auto plan = base_plan({1}, {}, make_batch(3, 4, rng));
    plan.alpha = 0.11;  // floor(0.11 * 16) = 1
    plan.seed = 3;
    const Mlp before = net;
    Rng step_rng(derive_seed(plan.seed, {0xC0u, 1}));
    const ReferenceOutputs ref = reference_outputs(net, plan.score_batch);
    const LayerLog log = compress_layer_unstructured(net, plan, 1, step_rng, ref);
    CHECK(log.steps == 1);
    std::size_t changed = 0;
    for (std::size_t e = 0; e < 16; ++e)
        changed += net.layers[0].weights.data[e] != before.layers[0].weights.data[e];
    CHECK(changed <= 1);
    CHECK(log.num_compressed == 1);
}

TEST_CASE("greedy minimality: the engine always picks the smallest brute-force score") {
    Rng rng(13);
    const std::vector<Activation> acts = {Activation(ActKind::Tanh)};
    Mlp net = oracles::random_mlp({4, 4}, acts, rng);
    auto plan = base_plan({1}, {}, make_batch(4, 4, rng));
    plan.alpha = 0.6;
    plan.rescore_every = 1;
    plan.p = 0.3;
    plan.seed = 17;

    const ReferenceOutputs ref = reference_outputs(net, plan.score_batch);
    Mlp working = net;
    Rng engine_rng(derive_seed(plan.seed, {0xC0u, 1}));
    // replay manually: at each step the engine's chosen site must be a
    // brute-force argmin over live sites
    std::set<std::size_t> live;
    for (std::size_t e = 0; e < 16; ++e) live.insert(e);

    Mlp engine_net = net;
    Rng replay_rng(derive_seed(plan.seed, {0xC0u, 1}));
    const LayerLog log = compress_layer_unstructured(engine_net, plan, 1, replay_rng, ref);
    REQUIRE(log.steps == 9);

    // re-run the greedy loop step by step against brute force
    for (std::size_t step = 0; step < log.steps; ++step) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t idx : live) {
            const std::size_t i = idx / 4, j = idx % 4;
            const double w = working.layers[0].weights(i, j);
            best = std::min(best, oracles::brute_force_score(working, plan.score_batch, ref[0],
                                                             1, 1, i, j,
                                                             prune_two_point(w, plan.p)));
        }
        CHECK(log.score_trace[step] <= best + 1e-12);
        // advance the replay: locate the argmin with the library scorer and
        // take the value the engine wrote there (sites are written once)
        double lib_best = std::numeric_limits<double>::infinity();
        std::size_t lib_idx = 0;
        for (std::size_t idx : live) {
            const std::size_t i = idx / 4, j = idx % 4;
            const double w = working.layers[0].weights(i, j);
            const double s = two_point_score(working, ref, 1, 1, i, j,
                                             prune_two_point(w, plan.p), plan.score_batch);
            if (s < lib_best) {
                lib_best = s;
                lib_idx = idx;
            }
        }
        CHECK(std::fabs(lib_best - log.score_trace[step]) <= 1e-11);
        // engine and replay share the rng stream, so the written value is
        // whatever the engine wrote at this site
        working.layers[0].weights.data[lib_idx] = engine_net.layers[0].weights.data[lib_idx];
        live.erase(lib_idx);
    }
    CHECK(bitwise_equal(working, engine_net));
}

TEST_CASE("quantize pass lands on the frozen per-layer grid") {
    Rng rng(14);
    Mlp net = oracles::random_mlp({5, 5}, {Activation(ActKind::Identity)}, rng);
    auto plan = base_plan({1}, {}, make_batch(3, 5, rng));
    plan.mode = CompressMode::Quantize;
    plan.k = 4;
    plan.alpha = 0.9;
    plan.seed = 5;
    const double m_frozen = inf_norm(net.layers[0].weights);

    const ReferenceOutputs ref = reference_outputs(net, plan.score_batch);
    Rng step_rng(derive_seed(plan.seed, {0xC0u, 1}));
    const LayerLog log = compress_layer_unstructured(net, plan, 1, step_rng, ref);
    CHECK(log.grid_scale == m_frozen);
    CHECK(log.steps == 22);  // floor(0.9 * 25)

    const QuantGrid grid(m_frozen, 4);
    const double off = discreteness_report(net.layers[0].weights, grid);
    CHECK(off <= 1.0 - 22.0 / 25.0 + 1e-12);
}

TEST_CASE("compress_network: empty sets copy everything, no radii") {
    Rng rng(15);
    const std::vector<Activation> acts = {Activation(ActKind::Relu),
                                          Activation(ActKind::Identity)};
    Mlp net = oracles::random_mlp({3, 5, 2}, acts, rng);
    auto plan = base_plan({}, {}, make_batch(3, 3, rng));
    const CompressedNetwork cn = compress_network(net, plan);
    CHECK(bitwise_equal(cn.net, net));
    for (double k : cn.kappa) CHECK(std::isinf(k));
    CHECK(cn.logs.size() == 2);
    CHECK(cn.logs[0].mode == "copy");
}

TEST_CASE("compress_network: w={1} on a 2-layer net protects layer 2 and sets kappa") {
    Rng rng(16);
    const std::vector<Activation> acts = {Activation(ActKind::Relu),
                                          Activation(ActKind::Identity)};
    Mlp net = oracles::random_mlp({4, 8, 2}, acts, rng);
    auto plan = base_plan({1}, {}, make_batch(4, 4, rng));
    plan.seed = 7;
    const CompressedNetwork cn = compress_network(net, plan);
    CHECK(cn.net.layers[1].weights.data == net.layers[1].weights.data);
    const double c = std::max(spectral_norm(net.layers[0].weights),
                              spectral_norm(net.layers[1].weights));
    CHECK(cn.c == doctest::Approx(c));
    CHECK(cn.kappa[0] == doctest::Approx(c));
    CHECK(std::isinf(cn.kappa[1]));
}

TEST_CASE("compress_network: b-layer protection and kappa at l+1") {
    Rng rng(17);
    const std::vector<Activation> acts = {Activation(ActKind::Tanh),
                                          Activation(ActKind::Tanh),
                                          Activation(ActKind::Identity)};
    Mlp net = oracles::random_mlp({3, 4, 6, 2}, acts, rng);
    auto plan = base_plan({}, {2}, make_batch(4, 3, rng));
    plan.seed = 11;
    const CompressedNetwork cn = compress_network(net, plan);
    // layers 1 and 3 bitwise untouched
    CHECK(cn.net.layers[0].weights.data == net.layers[0].weights.data);
    CHECK(cn.net.layers[2].weights.data == net.layers[2].weights.data);
    CHECK(cn.net.layers[1].weights.data != net.layers[1].weights.data);
    CHECK(std::isinf(cn.kappa[0]));
    CHECK(std::isinf(cn.kappa[1]));
    CHECK(cn.kappa[2] == doctest::Approx(std::pow(cn.c, 3.0)));
}

TEST_CASE("compress_network is deterministic per (plan, net, seed)") {
    Rng rng(18);
    const std::vector<Activation> acts = {Activation(ActKind::Relu),
                                          Activation(ActKind::Identity)};
    Mlp net = oracles::random_mlp({4, 10, 3}, acts, rng);
    auto plan = base_plan({1}, {}, make_batch(5, 4, rng));
    plan.seed = 99;
    plan.rescore_every = 0;
    const CompressedNetwork a = compress_network(net, plan);
    const CompressedNetwork b = compress_network(net, plan);
    CHECK(bitwise_equal(a.net, b.net));
    CHECK(a.kappa == b.kappa);
    CHECK(a.logs[0].score_trace == b.logs[0].score_trace);

    plan.seed = 100;
    const CompressedNetwork c = compress_network(net, plan);
    CHECK_FALSE(bitwise_equal(a.net, c.net));
}

TEST_CASE("expected surviving fraction 1 - alpha + alpha p") {
    Rng rng(19);
    Mlp net = oracles::random_mlp({100, 40}, {Activation(ActKind::Identity)}, rng);
    auto plan = base_plan({1}, {}, make_batch(2, 100, rng));
    plan.alpha = 0.9;
    plan.p = 0.3;
    plan.rescore_every = 0;  // speed mode
    plan.seed = 23;
    const CompressedNetwork cn = compress_network(net, plan);
    const double nnz = sparsity_report(cn.net)[0].nnz_fraction;
    const double steps = std::floor(0.9 * 4000);
    const double sigma = std::sqrt(steps * 0.3 * 0.7) / 4000.0;
    CHECK(std::fabs(nnz - 0.37) <= 4.0 * sigma);
    CHECK(cn.logs[0].nnz_fraction == nnz);
    CHECK(cn.logs[0].num_zeroed ==
          static_cast<std::size_t>(std::lround((1.0 - nnz) * 4000.0)));
}

TEST_CASE("structured: zero column scores zero, closed form, brute force") {
    Rng rng(20);
    Mlp net = oracles::random_mlp({6, 3}, {Activation(ActKind::Identity)}, rng);
    for (std::size_t r = 0; r < 3; ++r) net.layers[0].weights(r, 2) = 0.0;
    const auto batch = make_batch(4, 6, rng);
    const ReferenceOutputs ref = reference_outputs(net, batch);
    CHECK(structured_score_column(net, ref, 1, 2, 1, 0.3, batch) == 0.0);

    // closed form ||W_col||^2 (1-p)/p mean(x_j^2) on a single linear layer
    for (std::size_t j : {std::size_t{0}, std::size_t{4}}) {
        double col_sq = 0.0;
        for (std::size_t r = 0; r < 3; ++r)
            col_sq += net.layers[0].weights(r, j) * net.layers[0].weights(r, j);
        double mean_xj2 = 0.0;
        for (const Vector& x : batch) mean_xj2 += x[j] * x[j];
        mean_xj2 /= static_cast<double>(batch.size());
        const double expected = col_sq * (1.0 - 0.3) / 0.3 * mean_xj2;
        const double got = structured_score_column(net, ref, 1, j, 1, 0.3, batch);
        CHECK(std::fabs(got - expected) <= 1e-10 * std::max(1.0, expected));
    }

    // block version against brute force, including rows through the next layer
    const std::vector<Activation> acts = {Activation(ActKind::Tanh),
                                          Activation(ActKind::Identity)};
    Mlp deep = oracles::random_mlp({6, 4, 3}, acts, rng);
    const auto batch6 = make_batch(4, 6, rng);
    const ReferenceOutputs dref = reference_outputs(deep, batch6);
    const double col = structured_score_column(deep, dref, 1, 1, 2, 0.4, batch6);
    const double col_bf = oracles::brute_force_block_score(deep, batch6, dref[0], 1, 1, {2, 3},
                                                           false, 0.4);
    CHECK(std::fabs(col - col_bf) <= 1e-12);

    const double row = structured_score_row(deep, dref, 1, 1, 2, 0.4, batch6);
    const double row_bf =
        oracles::brute_force_block_score(deep, batch6, dref[1], 2, 1, {2, 3}, true, 0.4);
    CHECK(std::fabs(row - row_bf) <= 1e-12);
}

TEST_CASE("structured pass: survivors are exact 1/p multiples, fraction lands near 0.37") {
    Rng rng(21);
    Mlp net = oracles::random_mlp({500, 8}, {Activation(ActKind::Identity)}, rng);
    const Mlp before = net;
    auto plan = base_plan({1}, {}, make_batch(2, 500, rng));
    plan.structured = true;
    plan.block = 1;
    plan.alpha = 0.9;
    plan.p = 0.3;
    plan.rescore_every = 0;
    plan.seed = 31;
    const CompressedNetwork cn = compress_network(net, plan);
    const LayerLog& log = cn.logs[0];
    CHECK(log.mode == "prune-columns");
    CHECK(log.steps == 450);

    std::size_t surviving = 0;
    for (std::size_t j = 0; j < 500; ++j) {
        bool zero = true;
        for (std::size_t r = 0; r < 8; ++r) zero = zero && cn.net.layers[0].weights(r, j) == 0.0;
        if (!zero) ++surviving;
    }
    const double frac = surviving / 500.0;
    const double sigma = std::sqrt(450.0 * 0.3 * 0.7) / 500.0;
    CHECK(std::fabs(frac - 0.37) <= 4.0 * sigma);

    for (std::size_t bi : log.scaled_blocks)
        for (std::size_t r = 0; r < 8; ++r)
            CHECK(cn.net.layers[0].weights(r, bi) ==
                  before.layers[0].weights(r, bi) * (1.0 / 0.3));
}

TEST_CASE("structured pass with a single block changes exactly that block") {
    Rng rng(22);
    Mlp net = oracles::random_mlp({10, 4}, {Activation(ActKind::Identity)}, rng);
    auto plan = base_plan({1}, {}, make_batch(3, 10, rng));
    plan.structured = true;
    plan.block = 2;  // 5 blocks
    plan.alpha = 0.21;  // floor(0.21*5) = 1
    plan.seed = 4;
    const Mlp before = net;
    const CompressedNetwork cn = compress_network(net, plan);
    std::size_t changed_cols = 0;
    for (std::size_t j = 0; j < 10; ++j)
        for (std::size_t r = 0; r < 4; ++r)
            if (cn.net.layers[0].weights(r, j) != before.layers[0].weights(r, j)) {
                ++changed_cols;
                break;
            }
    CHECK(changed_cols <= 2);
    CHECK(cn.logs[0].steps == 1);
}

TEST_CASE("gate matrix algebra") {
    GateMatrix id{4, {1, 3}, 1.0};
    const Vector v{1.0, 2.0, 3.0, 4.0};
    CHECK(id.apply(v) == v);

    GateMatrix zero{4, {1, 3}, 0.0};
    const Vector gv = zero.apply(v);
    CHECK(gv == Vector{1.0, 0.0, 3.0, 0.0});

    Rng rng(23);
    Matrix w = oracles::random_matrix(4, 6, rng);
    GateMatrix colgate{6, {0, 5}, 0.0};
    colgate.scale_columns(w);
    const auto rep = sparsity_report([&] {
        Mlp net;
        net.layers.push_back({w, Activation(ActKind::Identity)});
        return net;
    }());
    CHECK(rep[0].zero_cols == 2);

    Matrix w2 = oracles::random_matrix(5, 3, rng);
    GateMatrix rowgate{5, {2}, 0.0};
    rowgate.scale_rows(w2);
    std::size_t zr = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        bool z = true;
        for (std::size_t j = 0; j < 3; ++j) z = z && w2(i, j) == 0.0;
        zr += z;
    }
    CHECK(zr == 1);
}

TEST_CASE("bottleneck merge: relu drops the sum, sigmoid keeps it, outputs agree") {
    Rng rng(24);
    for (ActKind kind : {ActKind::Relu, ActKind::Sigmoid}) {
        const std::vector<Activation> acts = {Activation(kind), Activation(ActKind::Identity)};
        Mlp net = oracles::random_mlp({3, 6, 2}, acts, rng);
        // zero rows 1 and 4 of layer 1
        const std::vector<std::size_t> zeroed = {1, 4};
        for (std::size_t r : zeroed)
            for (std::size_t j = 0; j < 3; ++j) net.layers[0].weights(r, j) = 0.0;

        Mlp merged = net;
        merge_bottleneck_columns(merged, 1, zeroed);
        if (kind == ActKind::Relu) {
            for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t c : zeroed) CHECK(merged.layers[1].weights(i, c) == 0.0);
        } else {
            for (std::size_t i = 0; i < 2; ++i) {
                CHECK(merged.layers[1].weights(i, 1) ==
                      doctest::Approx(net.layers[1].weights(i, 1) +
                                      net.layers[1].weights(i, 4)));
                CHECK(merged.layers[1].weights(i, 4) == 0.0);
            }
        }
        for (int rep = 0; rep < 100; ++rep) {
            const Vector x = oracles::random_unit_ball(3, rng);
            const Vector a = forward_output(net, x);
            const Vector b = forward_output(merged, x);
            for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-12);
        }
    }

    // no-op and rejection paths
    Mlp net = oracles::random_mlp({3, 4, 2},
                                  {Activation(ActKind::Relu), Activation(ActKind::Identity)},
                                  rng);
    Mlp copy = net;
    merge_bottleneck_columns(copy, 1, {});
    CHECK(bitwise_equal(copy, net));
    CHECK_THROWS(merge_bottleneck_columns(copy, 1, {0}));  // row 0 not zero
}

TEST_CASE("structured b-layer with merge keeps the network output") {
    Rng rng(25);
    const std::vector<Activation> acts = {Activation(ActKind::Relu),
                                          Activation(ActKind::Relu),
                                          Activation(ActKind::Identity)};
    Mlp net = oracles::random_mlp({4, 5, 12, 3}, acts, rng);
    auto plan = base_plan({}, {2}, make_batch(4, 4, rng));
    plan.structured = true;
    plan.block = 1;
    plan.alpha = 0.8;
    plan.p = 0.3;
    plan.seed = 13;

    CompressionPlan no_merge = plan;
    const CompressedNetwork a = compress_network(net, no_merge);
    plan.merge_bottleneck = true;
    const CompressedNetwork b = compress_network(net, plan);
    CHECK(b.logs[1].merged_into.has_value());
    for (int rep = 0; rep < 100; ++rep) {
        const Vector x = oracles::random_unit_ball(4, rng);
        const Vector ya = forward_output(a.net, x);
        const Vector yb = forward_output(b.net, x);
        for (std::size_t i = 0; i < ya.size(); ++i) CHECK(std::fabs(ya[i] - yb[i]) <= 1e-12);
    }
    // merge must zero the columns of layer 3 that read zeroed rows
    const auto rep3 = sparsity_report(b.net)[2];
    CHECK(rep3.zero_cols >= b.logs[1].zeroed_blocks.size() - 1);
}

TEST_CASE("sparsity report") {
    Mlp net;
    net.layers.push_back({Matrix(3, 3), Activation(ActKind::Identity)});
    auto rep = sparsity_report(net);
    CHECK(rep[0].nnz_fraction == 0.0);
    CHECK(rep[0].zero_rows == 3);
    CHECK(rep[0].zero_cols == 3);

    Rng rng(26);
    net.layers[0].weights = oracles::random_matrix(3, 3, rng);
    rep = sparsity_report(net);
    CHECK(rep[0].nnz_fraction == 1.0);
}

TEST_CASE("plan validation") {
    Rng rng(27);
    Mlp net = oracles::random_mlp({3, 4, 2},
                                  {Activation(ActKind::Relu), Activation(ActKind::Identity)},
                                  rng);
    auto plan = base_plan({1}, {}, make_batch(2, 3, rng));
    plan.validate(net);

    CompressionPlan bad = plan;
    bad.alpha = 1.0;
    CHECK_THROWS(bad.validate(net));
    bad = plan;
    bad.score_batch.clear();
    CHECK_THROWS(bad.validate(net));
    bad = plan;
    bad.score_batch[0] = Vector{3.0, 0.0, 0.0};  // outside the unit ball
    CHECK_THROWS(bad.validate(net));
    bad = plan;
    bad.alpha = 0.05;  // floor(0.05 * 12) = 0
    CHECK_THROWS(bad.validate(net));
    bad = plan;
    bad.merge_bottleneck = true;  // without structured
    CHECK_THROWS(bad.validate(net));
    bad = plan;
    bad.structured = true;
    bad.block = 2;  // does not divide n_1 = 3
    CHECK_THROWS(bad.validate(net));
    bad = plan;
    bad.score_target = ScoreTarget::LabeledLoss;  // no labels
    CHECK_THROWS(bad.validate(net));
}

TEST_CASE("compression log json carries the pinned sidecar fields") {
    Rng rng(28);
    Mlp net = oracles::random_mlp({4, 6, 2},
                                  {Activation(ActKind::Relu), Activation(ActKind::Identity)},
                                  rng);
    auto plan = base_plan({1}, {}, make_batch(3, 4, rng));
    plan.seed = 8;
    const CompressedNetwork cn = compress_network(net, plan);
    const std::string json = compression_log_json(cn, plan);
    CHECK(json.find("\"alpha\"") != std::string::npos);
    CHECK(json.find("\"p\"") != std::string::npos);
    CHECK(json.find("\"seed\"") != std::string::npos);
    CHECK(json.find("\"nnz_fraction\"") != std::string::npos);
    CHECK(json.find("\"steps\"") != std::string::npos);
}
