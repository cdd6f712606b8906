#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slimnn/matrix.hpp"

namespace slimnn {

enum class TaskKind { Regression, Classification };

// In-memory dataset. Classification targets are stored as a single-element
// vector holding the class index; one-hot encoding happens at the loss.
struct Dataset {
    std::vector<Vector> X;
    std::vector<Vector> Y;
    TaskKind kind = TaskKind::Regression;
    double norm_scale = 1.0;           // factor applied to inputs
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    std::size_t rescaled_rows = 0;     // rows individually pulled back to the unit ball

    std::size_t size() const { return X.size(); }
    std::size_t input_dim() const { return X.empty() ? 0 : X.front().size(); }
    std::size_t target_dim() const { return Y.empty() ? 0 : Y.front().size(); }
    std::size_t num_classes() const;
};

// Rectangular numeric CSV with a header row. target_cols select the label
// columns (0-based); the remaining columns become features. Ragged rows and
// non-numeric cells raise with row/column coordinates.
Dataset load_csv(const std::string& path, const std::vector<std::size_t>& target_cols,
                 TaskKind kind);

// In-memory variant of load_csv for tests.
Dataset parse_csv(const std::string& text, const std::vector<std::size_t>& target_cols,
                  TaskKind kind);

// Scales every input by 1 / (max train ||x||), computed over train_idx when a
// split exists (all rows otherwise). Rows still exceeding the unit ball after
// the global scaling are pulled back individually and counted.
Dataset normalize_unit_ball(Dataset ds);

// Seeded shuffle into |train| = ceil(0.8 n) and the rest. Needs >= 5 rows.
Dataset split_80_20(Dataset ds, std::uint64_t seed);

// x uniform in the unit ball, y = teacher(x) + N(0, noise_sigma^2 I) where
// the teacher is a fixed 2-layer tanh net drawn from the seed stream.
Dataset synthetic_teacher(std::size_t dim_in, std::size_t dim_out, std::size_t width,
                          std::size_t n, double noise_sigma, std::uint64_t seed);

std::string dataset_manifest_json(const Dataset& ds, const std::string& source,
                                  std::uint64_t split_seed);

}  // namespace slimnn
