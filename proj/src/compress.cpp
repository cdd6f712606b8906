#include "slimnn/compress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace slimnn {

namespace {

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

bool LayerSets::in_w(std::size_t layer) const { return contains(w_set, layer); }
bool LayerSets::in_b(std::size_t layer) const { return contains(b_set, layer); }
bool LayerSets::in_b_successor(std::size_t layer) const {
    return layer >= 2 && contains(b_set, layer - 1);
}

void LayerSets::validate(std::size_t depth) const {
    for (std::size_t l : w_set)
        if (l < 1 || l > depth) throw std::invalid_argument("layer sets: w index out of range");
    for (std::size_t l : b_set) {
        if (l < 1 || l > depth) throw std::invalid_argument("layer sets: b index out of range");
        if (l + 1 > depth)
            throw std::invalid_argument("layer sets: b layer needs a successor layer");
    }
    for (std::size_t l : w_set)
        if (contains(b_set, l)) throw std::invalid_argument("layer sets: w and b overlap");
    for (std::size_t l : b_set) {
        if (contains(w_set, l + 1) || contains(b_set, l + 1))
            throw std::invalid_argument("layer sets: successor of a b layer must stay untouched");
    }
}

void CompressionPlan::validate(const Mlp& net) const {
    net.validate();
    sets.validate(net.depth());
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("plan: alpha must lie in (0,1)");
    if (mode == CompressMode::Prune && !(p > 0.0 && p < 1.0))
        throw std::invalid_argument("plan: p must lie in (0,1)");
    if (mode == CompressMode::Quantize && k < 1)
        throw std::invalid_argument("plan: k must be >= 1");
    if (score_batch.empty()) throw std::invalid_argument("plan: empty score batch");
    for (const Vector& x : score_batch) {
        if (x.size() != net.input_dim())
            throw std::invalid_argument("plan: score batch dim mismatch");
        if (norm2(x) > 1.0 + 1e-9)
            throw std::invalid_argument("plan: score batch input outside the unit ball");
    }
    if (score_target == ScoreTarget::LabeledLoss) {
        if (structured)
            throw std::invalid_argument("plan: labeled-loss scoring is unstructured-only");
        if (score_labels.size() != score_batch.size())
            throw std::invalid_argument("plan: labels must pair with the score batch");
        for (const Vector& y : score_labels)
            if (y.size() != net.output_dim())
                throw std::invalid_argument("plan: label dim mismatch");
    }
    if (merge_bottleneck && !structured)
        throw std::invalid_argument("plan: bottleneck merge requires structured mode");
    if (structured && block < 1) throw std::invalid_argument("plan: block must be >= 1");

    const auto dims = net.dims();
    auto check_layer = [&](std::size_t l, bool rows) {
        const std::size_t n_in = dims[l - 1], n_out = dims[l];
        std::size_t candidates = n_in * n_out;
        if (structured) {
            const std::size_t along = rows ? n_out : n_in;
            if (along % block != 0)
                throw std::invalid_argument("plan: block size does not divide layer " +
                                            std::to_string(l));
            candidates = along / block;
        }
        if (static_cast<std::size_t>(alpha * static_cast<double>(candidates)) < 1)
            throw std::invalid_argument("plan: floor(alpha * candidates) < 1 at layer " +
                                        std::to_string(l));
    };
    for (std::size_t l : sets.w_set) check_layer(l, false);
    for (std::size_t l : sets.b_set) check_layer(l, true);
}

Vector GateMatrix::apply(const Vector& v) const {
    Vector out(v);
    for (std::size_t i : indices) out[i] *= z;
    return out;
}

void GateMatrix::scale_columns(Matrix& w) const {
    for (std::size_t r = 0; r < w.rows; ++r) {
        double* row = w.row(r);
        for (std::size_t j : indices) row[j] *= z;
    }
}

void GateMatrix::scale_rows(Matrix& w) const {
    for (std::size_t i : indices) {
        double* row = w.row(i);
        for (std::size_t j = 0; j < w.cols; ++j) row[j] *= z;
    }
}

ReferenceOutputs reference_outputs(const Mlp& dense, const std::vector<Vector>& batch) {
    ReferenceOutputs ref(dense.depth(), std::vector<Vector>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        auto zs = forward(dense, batch[b]);
        for (std::size_t l = 0; l < zs.size(); ++l) ref[l][b] = std::move(zs[l]);
    }
    return ref;
}

TwoPoint prune_two_point(double w, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("prune: p must lie in (0,1)");
    return TwoPoint{0.0, w / p, p};
}

TwoPoint quantize_two_point(double w, double grid_scale, int k) {
    const RoundingLevels lv = rounding_levels(w, grid_scale, k);
    return TwoPoint{lv.low, lv.high, lv.prob_high};
}

namespace {

void check_unbiased(const TwoPoint& t, double w) {
    if (std::fabs(t.mean() - w) > 1e-9 * std::max(1.0, std::fabs(w)))
        throw std::invalid_argument("two-point distribution is not unbiased for the site");
}

// Forward from the post-activation output of layer l0 (0-based) down to the
// post-activation output of layer d0 (0-based, d0 >= l0).
Vector continue_forward(const Mlp& net, Vector z, std::size_t l0, std::size_t d0) {
    for (std::size_t l = l0 + 1; l <= d0; ++l) {
        z = matvec(net.layers[l].weights, z);
        for (double& v : z) v = net.layers[l].activation(v);
    }
    return z;
}

// Shared state for fresh (non-incremental) scoring of a single site/block.
struct FreshScorer {
    const Mlp& net;
    std::size_t l0;  // 0-based target layer
    std::size_t d0;  // 0-based compare depth
    const std::vector<Vector>& batch;
    const std::vector<Vector>& targets;  // one per batch point, dim n_{d0+2}?? (z^{d0+1})
    std::vector<Vector> u;  // inputs to layer l0
    std::vector<Vector> s;  // pre-activations at l0

    FreshScorer(const Mlp& n, std::size_t l0_, std::size_t d0_,
                const std::vector<Vector>& batch_, const std::vector<Vector>& targets_)
        : net(n), l0(l0_), d0(d0_), batch(batch_), targets(targets_) {
        u.reserve(batch.size());
        s.reserve(batch.size());
        for (const Vector& x : batch) {
            Vector in = x;
            for (std::size_t l = 0; l < l0; ++l) {
                in = matvec(net.layers[l].weights, in);
                for (double& v : in) v = net.layers[l].activation(v);
            }
            s.push_back(matvec(net.layers[l0].weights, in));
            u.push_back(std::move(in));
        }
    }

    // D with site (i, j) of the target layer set to v.
    double site_discrepancy(std::size_t i, std::size_t j, double v) const {
        const Activation& act = net.layers[l0].activation;
        const double w = net.layers[l0].weights(i, j);
        double acc = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            Vector z(s[b].size());
            for (std::size_t r = 0; r < z.size(); ++r) z[r] = act(s[b][r]);
            z[i] = act(s[b][i] + (v - w) * u[b][j]);
            acc += squared_distance(targets[b], continue_forward(net, std::move(z), l0, d0));
        }
        return acc / static_cast<double>(batch.size());
    }

    // D with the column block E scaled by t.
    double column_block_discrepancy(const std::vector<std::size_t>& cols, double t) const {
        const Activation& act = net.layers[l0].activation;
        const Matrix& w = net.layers[l0].weights;
        double acc = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            Vector z(s[b].size());
            for (std::size_t r = 0; r < z.size(); ++r) {
                double g = 0.0;
                for (std::size_t j : cols) g += w(r, j) * u[b][j];
                z[r] = act(s[b][r] + (t - 1.0) * g);
            }
            acc += squared_distance(targets[b], continue_forward(net, std::move(z), l0, d0));
        }
        return acc / static_cast<double>(batch.size());
    }

    // D with the row block E scaled by t.
    double row_block_discrepancy(const std::vector<std::size_t>& rows, double t) const {
        const Activation& act = net.layers[l0].activation;
        double acc = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            Vector z(s[b].size());
            for (std::size_t r = 0; r < z.size(); ++r) z[r] = act(s[b][r]);
            for (std::size_t r : rows) z[r] = act(t * s[b][r]);
            acc += squared_distance(targets[b], continue_forward(net, std::move(z), l0, d0));
        }
        return acc / static_cast<double>(batch.size());
    }
};

std::vector<std::size_t> block_indices(std::size_t block_index, std::size_t block) {
    std::vector<std::size_t> idx(block);
    std::iota(idx.begin(), idx.end(), block_index * block);
    return idx;
}

}  // namespace

double two_point_score(const Mlp& working, const ReferenceOutputs& ref,
                       std::size_t compare_depth, std::size_t layer, std::size_t i,
                       std::size_t j, const TwoPoint& t, const std::vector<Vector>& batch) {
    if (layer < 1 || layer > working.depth())
        throw std::invalid_argument("two_point_score: layer out of range");
    if (compare_depth < layer || compare_depth > working.depth())
        throw std::invalid_argument("two_point_score: compare depth out of range");
    const Matrix& w = working.layers[layer - 1].weights;
    if (i >= w.rows || j >= w.cols) throw std::invalid_argument("two_point_score: site out of range");
    check_unbiased(t, w(i, j));

    FreshScorer sc(working, layer - 1, compare_depth - 1, batch, ref[compare_depth - 1]);
    const double d_cur = sc.site_discrepancy(i, j, w(i, j));
    const double d0 = sc.site_discrepancy(i, j, t.v0);
    const double d1 = sc.site_discrepancy(i, j, t.v1);
    return std::fabs((1.0 - t.p1) * d0 + t.p1 * d1 - d_cur);
}

double two_point_score_labeled(const Mlp& working, const std::vector<Vector>& labels,
                               std::size_t layer, std::size_t i, std::size_t j,
                               const TwoPoint& t, const std::vector<Vector>& batch) {
    if (layer < 1 || layer > working.depth())
        throw std::invalid_argument("two_point_score: layer out of range");
    const Matrix& w = working.layers[layer - 1].weights;
    if (i >= w.rows || j >= w.cols) throw std::invalid_argument("two_point_score: site out of range");
    check_unbiased(t, w(i, j));

    FreshScorer sc(working, layer - 1, working.depth() - 1, batch, labels);
    const double d_cur = sc.site_discrepancy(i, j, w(i, j));
    const double d0 = sc.site_discrepancy(i, j, t.v0);
    const double d1 = sc.site_discrepancy(i, j, t.v1);
    return std::fabs((1.0 - t.p1) * d0 + t.p1 * d1 - d_cur);
}

double structured_score_column(const Mlp& working, const ReferenceOutputs& ref,
                               std::size_t layer, std::size_t block_index, std::size_t block,
                               double p, const std::vector<Vector>& batch) {
    const Matrix& w = working.layers[layer - 1].weights;
    if ((block_index + 1) * block > w.cols)
        throw std::invalid_argument("structured score: block out of range");
    FreshScorer sc(working, layer - 1, layer - 1, batch, ref[layer - 1]);
    const auto cols = block_indices(block_index, block);
    const double d_cur = sc.column_block_discrepancy(cols, 1.0);
    const double d0 = sc.column_block_discrepancy(cols, 0.0);
    const double d1 = sc.column_block_discrepancy(cols, 1.0 / p);
    return std::fabs((1.0 - p) * d0 + p * d1 - d_cur);
}

double structured_score_row(const Mlp& working, const ReferenceOutputs& ref,
                            std::size_t layer, std::size_t block_index, std::size_t block,
                            double p, const std::vector<Vector>& batch) {
    const Matrix& w = working.layers[layer - 1].weights;
    if ((block_index + 1) * block > w.rows)
        throw std::invalid_argument("structured score: block out of range");
    if (layer >= working.depth())
        throw std::invalid_argument("structured score: row mode needs a successor layer");
    FreshScorer sc(working, layer - 1, layer, batch, ref[layer]);
    const auto rows = block_indices(block_index, block);
    const double d_cur = sc.row_block_discrepancy(rows, 1.0);
    const double d0 = sc.row_block_discrepancy(rows, 0.0);
    const double d1 = sc.row_block_discrepancy(rows, 1.0 / p);
    return std::fabs((1.0 - p) * d0 + p * d1 - d_cur);
}

namespace {

// Incremental scoring engine for one layer's greedy pass. Forward state for
// the score batch is rebuilt from the live weights at every full refresh;
// between refreshes only the stale ranking is consumed.
class LayerPass {
public:
    LayerPass(Mlp& net, const CompressionPlan& plan, std::size_t layer,
              const ReferenceOutputs& ref)
        : net_(net),
          plan_(plan),
          l0_(layer - 1),
          w_(net.layers[l0_].weights) {
        if (plan.score_target == ScoreTarget::LabeledLoss) {
            d0_ = net.depth() - 1;
            targets_ = &plan.score_labels;
        } else {
            d0_ = plan.sets.in_b(layer) ? l0_ + 1 : l0_;
            targets_ = &ref[d0_];
        }
        const std::vector<Vector>& batch = plan.score_batch;
        u_.reserve(batch.size());
        for (const Vector& x : batch) {
            Vector in = x;
            for (std::size_t l = 0; l < l0_; ++l) {
                in = matvec(net.layers[l].weights, in);
                for (double& v : in) v = net.layers[l].activation(v);
            }
            u_.push_back(std::move(in));
        }
        s_.resize(batch.size());
        zcur_.resize(batch.size());
        if (next_depth()) tpre_.resize(batch.size());
    }

    std::size_t batch_size() const { return u_.size(); }

    // Rebuilds s, the current depth-d outputs, and D(current).
    void refresh_state() {
        const Activation& act = net_.layers[l0_].activation;
        d_cur_ = 0.0;
        for (std::size_t b = 0; b < u_.size(); ++b) {
            s_[b] = matvec(w_, u_[b]);
            zcur_[b] = s_[b];
            for (double& v : zcur_[b]) v = act(v);
            if (next_depth()) {
                tpre_[b] = matvec(next().weights, zcur_[b]);
                Vector out = tpre_[b];
                for (double& v : out) v = next().activation(v);
                d_cur_ += squared_distance((*targets_)[b], out);
            } else if (same_depth()) {
                d_cur_ += squared_distance((*targets_)[b], zcur_[b]);
            } else {
                d_cur_ += squared_distance(
                    (*targets_)[b], continue_forward(net_, zcur_[b], l0_, d0_));
            }
        }
        d_cur_ /= static_cast<double>(u_.size());
    }

    // Exact two-point score of site (i, j) against the refreshed state.
    double score_site(std::size_t i, std::size_t j, const TwoPoint& t) const {
        const double cur = w_(i, j);
        const double d0v = site_discrepancy(i, j, t.v0 - cur);
        const double d1v = site_discrepancy(i, j, t.v1 - cur);
        return std::fabs((1.0 - t.p1) * d0v + t.p1 * d1v - d_cur_);
    }

    double score_column_block(const std::vector<std::size_t>& cols, double p) const {
        const double d0v = column_discrepancy(cols, 0.0);
        const double d1v = column_discrepancy(cols, 1.0 / p);
        return std::fabs((1.0 - p) * d0v + p * d1v - d_cur_);
    }

    double score_row_block(const std::vector<std::size_t>& rows, double p) const {
        const double d0v = row_discrepancy(rows, 0.0);
        const double d1v = row_discrepancy(rows, 1.0 / p);
        return std::fabs((1.0 - p) * d0v + p * d1v - d_cur_);
    }

private:
    bool same_depth() const { return d0_ == l0_; }
    bool next_depth() const { return d0_ == l0_ + 1; }
    const Layer& next() const { return net_.layers[l0_ + 1]; }

    // D with site (i, j) shifted by delta_w = v - w_cur.
    double site_discrepancy(std::size_t i, std::size_t j, double delta_w) const {
        const Activation& act = net_.layers[l0_].activation;
        double acc = 0.0;
        if (same_depth()) {
            // only output coordinate i changes
            acc = d_cur_ * static_cast<double>(u_.size());
            for (std::size_t b = 0; b < u_.size(); ++b) {
                const double tgt = (*targets_)[b][i];
                const double zo = zcur_[b][i];
                const double zn = act(s_[b][i] + delta_w * u_[b][j]);
                acc += (tgt - zn) * (tgt - zn) - (tgt - zo) * (tgt - zo);
            }
        } else if (next_depth()) {
            const Matrix& wn = next().weights;
            const Activation& nact = next().activation;
            for (std::size_t b = 0; b < u_.size(); ++b) {
                const double delta_z = act(s_[b][i] + delta_w * u_[b][j]) - zcur_[b][i];
                const Vector& tgt = (*targets_)[b];
                double d = 0.0;
                for (std::size_t r = 0; r < wn.rows; ++r) {
                    const double o = nact(tpre_[b][r] + wn(r, i) * delta_z);
                    d += (tgt[r] - o) * (tgt[r] - o);
                }
                acc += d;
            }
        } else {
            for (std::size_t b = 0; b < u_.size(); ++b) {
                Vector z = zcur_[b];
                z[i] = act(s_[b][i] + delta_w * u_[b][j]);
                acc += squared_distance((*targets_)[b],
                                        continue_forward(net_, std::move(z), l0_, d0_));
            }
        }
        return acc / static_cast<double>(u_.size());
    }

    double column_discrepancy(const std::vector<std::size_t>& cols, double t) const {
        const Activation& act = net_.layers[l0_].activation;
        double acc = 0.0;
        for (std::size_t b = 0; b < u_.size(); ++b) {
            Vector z(s_[b].size());
            for (std::size_t r = 0; r < z.size(); ++r) {
                double g = 0.0;
                for (std::size_t j : cols) g += w_(r, j) * u_[b][j];
                z[r] = act(s_[b][r] + (t - 1.0) * g);
            }
            acc += squared_distance((*targets_)[b],
                                    continue_forward(net_, std::move(z), l0_, d0_));
        }
        return acc / static_cast<double>(u_.size());
    }

    double row_discrepancy(const std::vector<std::size_t>& rows, double t) const {
        const Activation& act = net_.layers[l0_].activation;
        const Matrix& wn = next().weights;
        const Activation& nact = next().activation;
        double acc = 0.0;
        for (std::size_t b = 0; b < u_.size(); ++b) {
            const Vector& tgt = (*targets_)[b];
            Vector delta(rows.size());
            for (std::size_t e = 0; e < rows.size(); ++e)
                delta[e] = act(t * s_[b][rows[e]]) - zcur_[b][rows[e]];
            double d = 0.0;
            for (std::size_t r = 0; r < wn.rows; ++r) {
                double pre = tpre_[b][r];
                for (std::size_t e = 0; e < rows.size(); ++e)
                    pre += wn(r, rows[e]) * delta[e];
                const double o = nact(pre);
                d += (tgt[r] - o) * (tgt[r] - o);
            }
            acc += d;
        }
        return acc / static_cast<double>(u_.size());
    }

    Mlp& net_;
    const CompressionPlan& plan_;
    std::size_t l0_;
    std::size_t d0_ = 0;
    Matrix& w_;
    const std::vector<Vector>* targets_ = nullptr;
    std::vector<Vector> u_, s_, zcur_, tpre_;
    double d_cur_ = 0.0;
};

std::size_t effective_cadence(std::size_t rescore_every, std::size_t candidates) {
    if (rescore_every > 0) return rescore_every;
    return (candidates + 99) / 100;  // speed mode
}

struct RankedEntry {
    double score;
    std::size_t index;  // linear site index (row-major) or block index
};

void sort_ranking(std::vector<RankedEntry>& ranking) {
    std::sort(ranking.begin(), ranking.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.index < b.index;
    });
}

}  // namespace

LayerLog compress_layer_unstructured(Mlp& working, const CompressionPlan& plan,
                                     std::size_t layer, Rng& rng,
                                     const ReferenceOutputs& ref) {
    Matrix& w = working.layers[layer - 1].weights;
    const std::size_t candidates = w.rows * w.cols;
    if (candidates == 0) throw std::invalid_argument("compress layer: empty candidate set");
    const std::size_t steps =
        static_cast<std::size_t>(plan.alpha * static_cast<double>(candidates));
    if (steps == 0) throw std::invalid_argument("compress layer: floor(alpha*candidates) == 0");

    LayerLog log;
    log.layer = layer;
    log.mode = plan.mode == CompressMode::Prune ? "prune" : "quantize";
    log.candidates = candidates;
    if (plan.mode == CompressMode::Quantize) log.grid_scale = inf_norm(w);

    auto two_point_for = [&](double cur) {
        return plan.mode == CompressMode::Prune ? prune_two_point(cur, plan.p)
                                                : quantize_two_point(cur, log.grid_scale, plan.k);
    };

    LayerPass pass(working, plan, layer, ref);
    std::vector<char> compressed(candidates, 0);
    std::vector<RankedEntry> ranking;
    std::size_t cursor = 0;
    const std::size_t cadence = effective_cadence(plan.rescore_every, candidates);

    for (std::size_t step = 0; step < steps; ++step) {
        if (step % cadence == 0) {
            pass.refresh_state();
            ranking.clear();
            ranking.reserve(candidates - step);
            for (std::size_t idx = 0; idx < candidates; ++idx) {
                if (compressed[idx]) continue;
                const std::size_t i = idx / w.cols, j = idx % w.cols;
                ranking.push_back({pass.score_site(i, j, two_point_for(w.data[idx])), idx});
            }
            sort_ranking(ranking);
            cursor = 0;
        }
        while (compressed[ranking[cursor].index]) ++cursor;
        const RankedEntry chosen = ranking[cursor++];
        const std::size_t i = chosen.index / w.cols, j = chosen.index % w.cols;

        const TwoPoint t = two_point_for(w(i, j));
        const double value = t.sample(rng);
        w(i, j) = value;
        compressed[chosen.index] = 1;
        ++log.num_compressed;
        if (value == 0.0) ++log.num_zeroed;
        log.score_trace.push_back(chosen.score);
        ++log.steps;
    }

    std::size_t nnz = 0;
    for (double v : w.data) nnz += v != 0.0;
    log.nnz_fraction = static_cast<double>(nnz) / static_cast<double>(candidates);
    return log;
}

LayerLog compress_layer_structured(Mlp& working, const CompressionPlan& plan,
                                   std::size_t layer, Rng& rng, const ReferenceOutputs& ref) {
    Matrix& w = working.layers[layer - 1].weights;
    const bool rows_mode = plan.sets.in_b(layer);
    const std::size_t along = rows_mode ? w.rows : w.cols;
    if (along % plan.block != 0)
        throw std::invalid_argument("compress layer: block size does not divide dimension");
    const std::size_t nblocks = along / plan.block;
    const std::size_t steps =
        static_cast<std::size_t>(plan.alpha * static_cast<double>(nblocks));
    if (steps == 0) throw std::invalid_argument("compress layer: floor(alpha*blocks) == 0");
    if (plan.mode != CompressMode::Prune)
        throw std::invalid_argument("compress layer: structured mode supports pruning only");

    LayerLog log;
    log.layer = layer;
    log.mode = rows_mode ? "prune-rows" : "prune-columns";
    log.candidates = nblocks;

    LayerPass pass(working, plan, layer, ref);
    std::vector<char> compressed(nblocks, 0);
    std::vector<RankedEntry> ranking;
    std::size_t cursor = 0;
    const std::size_t cadence = effective_cadence(plan.rescore_every, nblocks);

    for (std::size_t step = 0; step < steps; ++step) {
        if (step % cadence == 0) {
            pass.refresh_state();
            ranking.clear();
            for (std::size_t bi = 0; bi < nblocks; ++bi) {
                if (compressed[bi]) continue;
                const auto idx = block_indices(bi, plan.block);
                const double sc = rows_mode ? pass.score_row_block(idx, plan.p)
                                            : pass.score_column_block(idx, plan.p);
                ranking.push_back({sc, bi});
            }
            sort_ranking(ranking);
            cursor = 0;
        }
        while (compressed[ranking[cursor].index]) ++cursor;
        const RankedEntry chosen = ranking[cursor++];

        const double t = rng.bernoulli(plan.p) ? 1.0 / plan.p : 0.0;
        GateMatrix gate{along, block_indices(chosen.index, plan.block), t};
        if (rows_mode) gate.scale_rows(w);
        else gate.scale_columns(w);

        compressed[chosen.index] = 1;
        ++log.num_compressed;
        if (t == 0.0) {
            ++log.num_zeroed;
            log.zeroed_blocks.push_back(chosen.index);
        } else {
            log.scaled_blocks.push_back(chosen.index);
        }
        log.score_trace.push_back(chosen.score);
        ++log.steps;
    }

    std::size_t nnz = 0;
    for (double v : w.data) nnz += v != 0.0;
    log.nnz_fraction = static_cast<double>(nnz) / static_cast<double>(w.data.size());
    return log;
}

void merge_bottleneck_columns(Mlp& net, std::size_t layer,
                              const std::vector<std::size_t>& zeroed_rows, LayerLog* log) {
    if (layer >= net.depth())
        throw std::invalid_argument("merge: layer has no successor");
    if (zeroed_rows.empty()) return;
    const Matrix& wl = net.layers[layer - 1].weights;
    for (std::size_t r : zeroed_rows) {
        if (r >= wl.rows) throw std::invalid_argument("merge: row index out of range");
        for (std::size_t j = 0; j < wl.cols; ++j)
            if (wl(r, j) != 0.0)
                throw std::invalid_argument("merge: row " + std::to_string(r) +
                                            " is not fully zero");
    }

    Matrix& wn = net.layers[layer].weights;
    const std::size_t keep = *std::min_element(zeroed_rows.begin(), zeroed_rows.end());
    const bool drop_sum = net.layers[layer - 1].activation.zero_at_zero();
    for (std::size_t r = 0; r < wn.rows; ++r) {
        double* row = wn.row(r);
        double sum = 0.0;
        for (std::size_t c : zeroed_rows) {
            sum += row[c];
            row[c] = 0.0;
        }
        if (!drop_sum) row[keep] = sum;
    }
    if (log) log->merged_into = keep;
}

CompressedNetwork compress_network(const Mlp& dense, const CompressionPlan& plan) {
    plan.validate(dense);
    const std::size_t m = dense.depth();

    CompressedNetwork cn;
    cn.net = dense;
    cn.kappa.assign(m, kNoProjection);
    for (const Layer& l : dense.layers) cn.c = std::max(cn.c, spectral_norm(l.weights));

    const ReferenceOutputs ref = reference_outputs(dense, plan.score_batch);

    for (std::size_t layer = 1; layer <= m; ++layer) {
        Rng rng(derive_seed(plan.seed, {0xC0u, layer}));
        if (plan.sets.in_w(layer)) {
            LayerLog log =
                plan.structured
                    ? compress_layer_structured(cn.net, plan, layer, rng, ref)
                    : compress_layer_unstructured(cn.net, plan, layer, rng, ref);
            cn.kappa[layer - 1] = std::pow(cn.c, static_cast<double>(layer));
            cn.logs.push_back(std::move(log));
        } else if (plan.sets.in_b(layer)) {
            LayerLog log =
                plan.structured
                    ? compress_layer_structured(cn.net, plan, layer, rng, ref)
                    : compress_layer_unstructured(cn.net, plan, layer, rng, ref);
            if (plan.structured && plan.merge_bottleneck) {
                std::vector<std::size_t> rows;
                for (std::size_t bi : log.zeroed_blocks)
                    for (std::size_t r : block_indices(bi, plan.block)) rows.push_back(r);
                merge_bottleneck_columns(cn.net, layer, rows, &log);
            }
            cn.kappa[layer] = std::pow(cn.c, static_cast<double>(layer + 1));
            cn.logs.push_back(std::move(log));
        } else {
            LayerLog log;
            log.layer = layer;
            log.mode = "copy";
            log.candidates = dense.layers[layer - 1].weights.data.size();
            std::size_t nnz = 0;
            for (double v : dense.layers[layer - 1].weights.data) nnz += v != 0.0;
            log.nnz_fraction =
                static_cast<double>(nnz) / static_cast<double>(log.candidates);
            cn.logs.push_back(std::move(log));
        }
    }
    return cn;
}

std::vector<Vector> forward_compressed(const CompressedNetwork& cn, const Vector& x,
                                       bool apply_projections) {
    if (apply_projections) return forward_projected(cn.net, cn.kappa, x);
    return forward(cn.net, x);
}

std::vector<LayerSparsity> sparsity_report(const Mlp& net) {
    std::vector<LayerSparsity> out;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const Matrix& w = net.layers[l].weights;
        LayerSparsity s;
        s.layer = l + 1;
        for (double v : w.data) s.nnz += v != 0.0;
        s.nnz_fraction = static_cast<double>(s.nnz) / static_cast<double>(w.data.size());
        for (std::size_t i = 0; i < w.rows; ++i) {
            bool zero = true;
            for (std::size_t j = 0; j < w.cols && zero; ++j) zero = w(i, j) == 0.0;
            s.zero_rows += zero;
        }
        for (std::size_t j = 0; j < w.cols; ++j) {
            bool zero = true;
            for (std::size_t i = 0; i < w.rows && zero; ++i) zero = w(i, j) == 0.0;
            s.zero_cols += zero;
        }
        out.push_back(s);
    }
    return out;
}

std::string compression_log_json(const CompressedNetwork& cn, const CompressionPlan& plan) {
    nlohmann::json j;
    j["seed"] = plan.seed;
    j["c"] = cn.c;
    j["alpha"] = plan.alpha;
    j["mode"] = plan.mode == CompressMode::Prune ? "prune" : "quantize";
    if (plan.mode == CompressMode::Prune) j["p"] = plan.p;
    else j["k"] = plan.k;
    j["structured"] = plan.structured;
    j["block"] = plan.block;
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerLog& log : cn.logs) {
        nlohmann::json e;
        e["layer"] = log.layer;
        e["mode"] = log.mode;
        e["steps"] = log.steps;
        e["num_compressed"] = log.num_compressed;
        e["num_zeroed"] = log.num_zeroed;
        e["nnz_fraction"] = log.nnz_fraction;
        if (log.grid_scale > 0.0) e["grid_scale"] = log.grid_scale;
        if (!log.zeroed_blocks.empty()) e["zeroed_blocks"] = log.zeroed_blocks;
        if (log.merged_into) e["merged_into"] = *log.merged_into;
        layers.push_back(std::move(e));
    }
    j["layers"] = std::move(layers);
    return j.dump(2);
}

}  // namespace slimnn
