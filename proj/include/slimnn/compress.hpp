#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slimnn/mlp.hpp"
#include "slimnn/quantizer.hpp"
#include "slimnn/rng.hpp"

namespace slimnn {

// Which layers the compression pass touches. Indices are 1-based as in the
// rest of the toolkit's configs. Layers in b_set are scored through the
// following layer, which is itself left untouched, so b_set+1 must not
// intersect either set.
struct LayerSets {
    std::vector<std::size_t> w_set;
    std::vector<std::size_t> b_set;

    bool in_w(std::size_t layer) const;
    bool in_b(std::size_t layer) const;
    bool in_b_successor(std::size_t layer) const;
    void validate(std::size_t depth) const;
};

enum class CompressMode { Prune, Quantize };

// Greedy ranking target: discrepancy against the cached dense reference
// outputs (what the error analysis controls), or the plain l2 loss against
// labels at full depth (exploration variant).
enum class ScoreTarget { DenseReference, LabeledLoss };

struct CompressionPlan {
    LayerSets sets;
    CompressMode mode = CompressMode::Prune;
    double p = 0.3;   // prune: surviving weight keeps value w/p with prob. p
    int k = 4;        // quantize: 2k grid levels per layer
    double alpha = 0.9;
    std::vector<Vector> score_batch;   // inputs with ||x|| <= 1
    std::vector<Vector> score_labels;  // required for ScoreTarget::LabeledLoss
    // Full rescoring cadence in greedy steps. 1 = rescore every step
    // (paper-faithful); 0 = speed mode, ceil(#candidates / 100).
    std::size_t rescore_every = 1;
    std::uint64_t seed = 0;
    bool structured = false;
    std::size_t block = 1;  // structured group size: 1 for neurons, r^2 for filters
    bool merge_bottleneck = false;  // structured b_set layers: fold zeroed rows
    ScoreTarget score_target = ScoreTarget::DenseReference;

    void validate(const Mlp& net) const;
};

struct LayerLog {
    std::size_t layer = 0;  // 1-based
    std::string mode = "copy";
    std::size_t candidates = 0;
    std::size_t steps = 0;
    std::size_t num_compressed = 0;
    std::size_t num_zeroed = 0;  // sites (or blocks) that received the zero branch
    double nnz_fraction = 1.0;
    double grid_scale = 0.0;  // quantize: frozen per-layer M
    std::vector<double> score_trace;            // chosen score at each step
    std::vector<std::size_t> zeroed_blocks;     // structured: gate t = 0
    std::vector<std::size_t> scaled_blocks;     // structured: gate t = 1/p
    std::optional<std::size_t> merged_into;     // structured b: receiving column
};

struct CompressedNetwork {
    Mlp net;
    std::vector<double> kappa;  // per layer, kNoProjection where absent
    double c = 0.0;             // max spectral norm over the dense layers
    std::vector<LayerLog> logs;
};

std::vector<Vector> forward_compressed(const CompressedNetwork& cn, const Vector& x,
                                       bool apply_projections);

// G(z; S) = I + (z-1) P_S, kept as (S, z) and applied in place.
struct GateMatrix {
    std::size_t n = 0;
    std::vector<std::size_t> indices;  // 0-based coordinates in S
    double z = 1.0;

    Vector apply(const Vector& v) const;      // G v
    void scale_columns(Matrix& w) const;      // w <- w G
    void scale_rows(Matrix& w) const;         // w <- G w
};

// Dense per-depth outputs for the whole score batch, cached once per
// compression run; cache[l][b] is z^{l+1} of batch point b (0-based l).
using ReferenceOutputs = std::vector<std::vector<Vector>>;
ReferenceOutputs reference_outputs(const Mlp& dense, const std::vector<Vector>& batch);

// Two-point replacement distribution: value v1 with probability p1, else v0.
// Callers must keep it unbiased for the site it targets.
struct TwoPoint {
    double v0 = 0.0;
    double v1 = 0.0;
    double p1 = 0.0;

    double mean() const { return (1.0 - p1) * v0 + p1 * v1; }
    double sample(Rng& rng) const { return rng.bernoulli(p1) ? v1 : v0; }
};

TwoPoint prune_two_point(double w, double p);
TwoPoint quantize_two_point(double w, double grid_scale, int k);

// Exact two-point expectation of the depth-d discrepancy when site (i, j) of
// layer `layer` (all 1-based; i, j 0-based) is replaced by t:
//   | (1-p1) D(v0) + p1 D(v1) - D(current) |
// where D(v) averages, over the batch, the squared distance between the
// reference output at depth `compare_depth` and the working network's output
// with the site set to v. No sampling is involved.
double two_point_score(const Mlp& working, const ReferenceOutputs& ref,
                       std::size_t compare_depth, std::size_t layer, std::size_t i,
                       std::size_t j, const TwoPoint& t, const std::vector<Vector>& batch);

// Same expectation with D(v) = mean ||output(x_b) - label_b||^2 at full depth.
double two_point_score_labeled(const Mlp& working, const std::vector<Vector>& labels,
                               std::size_t layer, std::size_t i, std::size_t j,
                               const TwoPoint& t, const std::vector<Vector>& batch);

// Structured scores: the whole column block (w_set) or row block (b_set) of
// size `block` is scaled by t in {0, 1/p}; comparison depth is `layer` for
// columns and `layer`+1 for rows.
double structured_score_column(const Mlp& working, const ReferenceOutputs& ref,
                               std::size_t layer, std::size_t block_index, std::size_t block,
                               double p, const std::vector<Vector>& batch);
double structured_score_row(const Mlp& working, const ReferenceOutputs& ref,
                            std::size_t layer, std::size_t block_index, std::size_t block,
                            double p, const std::vector<Vector>& batch);

// One greedy pass over layer `layer` (1-based) of `working`:
// floor(alpha * #candidates) steps, each compressing the live site (or
// block) with the smallest score; ties break on the lowest (i, j) / block
// index. Scores are recomputed from the live weights every
// `rescore_every` steps and the stale ranking is consumed in between.
LayerLog compress_layer_unstructured(Mlp& working, const CompressionPlan& plan,
                                     std::size_t layer, Rng& rng,
                                     const ReferenceOutputs& ref);
LayerLog compress_layer_structured(Mlp& working, const CompressionPlan& plan,
                                   std::size_t layer, Rng& rng, const ReferenceOutputs& ref);

// Folds the columns of layer `layer`+1 that read from zeroed rows of layer
// `layer` into a single summed column (dropped entirely when the activation
// maps 0 to 0). Output-preserving for entrywise activations.
void merge_bottleneck_columns(Mlp& net, std::size_t layer,
                              const std::vector<std::size_t>& zeroed_rows,
                              LayerLog* log = nullptr);

// Top-bottom dispatch over all layers per the plan; computes the projection
// radii c^l from the dense network before any weight changes.
CompressedNetwork compress_network(const Mlp& dense, const CompressionPlan& plan);

struct LayerSparsity {
    std::size_t layer = 0;
    std::size_t nnz = 0;
    double nnz_fraction = 1.0;
    std::size_t zero_rows = 0;
    std::size_t zero_cols = 0;
};

// Exact counts; pruning writes exact zeros so the threshold is 0.0.
std::vector<LayerSparsity> sparsity_report(const Mlp& net);

std::string compression_log_json(const CompressedNetwork& cn, const CompressionPlan& plan);

}  // namespace slimnn
