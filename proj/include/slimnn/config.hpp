#pragma once

#include <string>

#include "json.hpp"
#include "slimnn/bounds.hpp"
#include "slimnn/compress.hpp"
#include "slimnn/dataset.hpp"
#include "slimnn/sweep.hpp"
#include "slimnn/trainer.hpp"

namespace slimnn {

// JSON config readers used by the CLI. Missing fields fall back to the
// documented defaults; unknown activation or mode strings raise.

TrainConfig train_config_from_json(const nlohmann::json& j);
CompressionPlan plan_from_json(const nlohmann::json& j);
BoundInputs bound_inputs_from_json(const nlohmann::json& j);
SweepConfig sweep_config_from_json(const nlohmann::json& j);

// {"synthetic": {...}} or {"csv": ..., "target_cols": [...], "task": ...};
// the result is split (seeded) and normalized to the unit ball.
Dataset dataset_from_json(const nlohmann::json& j);

std::vector<Activation> activations_from_json(const nlohmann::json& j,
                                              double softplus_beta = 10.0);

nlohmann::json load_json_file(const std::string& path);

}  // namespace slimnn
