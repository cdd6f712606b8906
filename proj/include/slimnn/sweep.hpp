#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slimnn/compress.hpp"
#include "slimnn/dataset.hpp"
#include "slimnn/trainer.hpp"

namespace slimnn {

// Adjusted squared output distance c^{-2m} E[||dense(x) - compressed(x)||^2]
// over the given inputs, with c the dense network's largest layer operator
// norm (taken from the compression record). Projections are off by default
// to match how the sweep evaluates; pass apply_projections to re-enable.
double delta_metric(const Mlp& dense, const CompressedNetwork& compressed,
                    const std::vector<Vector>& inputs, bool apply_projections = false);

// R^2 on regression targets, accuracy on classification targets.
double task_metric(const Mlp& net, const std::vector<Vector>& xs,
                   const std::vector<Vector>& ys, TaskKind kind);

struct SweepConfig {
    std::vector<std::size_t> widths;  // strictly increasing
    int trials_per_width = 3;         // independently trained networks
    int prunes_per_trial = 20;
    std::uint64_t master_seed = 1;
    std::vector<std::size_t> dims_template;  // 0 marks the width slot
    std::vector<Activation> activations;
    TrainConfig train;     // per-cell seeds are derived, cfg.seed is ignored
    CompressionPlan plan;  // template; seed and score batch filled per cell
    std::size_t score_batch_size = 32;
    bool projected_metric = false;
    int best_of = 1;  // keep the lowest-delta of this many compression seeds
    std::string metric = "delta";  // headline metric for report summaries
    int threads = 1;

    void validate() const;
    std::vector<std::size_t> dims_for(std::size_t width) const;
};

struct SweepRow {
    std::size_t width = 0;
    int trial = 0;
    int rep = 0;
    double delta = 0.0;
    double task = 0.0;
    double nnz_fraction = 0.0;
    std::uint64_t seed = 0;
    bool diverged = false;  // metrics are NaN when the cell's training failed
};

std::uint64_t sweep_cell_seed(std::uint64_t master, std::size_t width, int trial, int rep);

// Trains trials_per_width networks per width and compresses each
// prunes_per_trial times with derived seeds. Rows come back sorted by
// (width order, trial, rep) regardless of worker scheduling, so a fixed
// master seed reproduces the CSV byte for byte. Cells whose training
// diverges are flagged and the sweep continues.
std::vector<SweepRow> run_width_sweep(const SweepConfig& cfg, const Dataset& data);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string sweep_plan_listing(const SweepConfig& cfg);  // --dry-run output

// Per-width mean and 2*stderr spread over prune reps, as a printable table.
std::string summarize_sweep_csv(const std::string& csv_text);

}  // namespace slimnn
