#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slimnn/mlp.hpp"

namespace slimnn {

// Shared on-disk model format:
//   {"dims": [n1,...,n_{m+1}],
//    "activations": ["relu", ...],          // one per layer
//    "weights": [[row-major doubles], ...], // one array per layer
//    "kappa": [1.5, null, ...] | null,      // per-layer radius, null = none
//    "softplus_beta": 10.0}                 // optional, applies to softplus
// Numbers round-trip bit-exactly (shortest decimal form on write).
struct ModelFile {
    Mlp net;
    std::optional<std::vector<double>> kappa;  // kNoProjection where null
};

std::string model_to_json(const Mlp& net,
                          const std::optional<std::vector<double>>& kappa = std::nullopt);
ModelFile model_from_json(const std::string& text);

void save_model(const std::string& path, const Mlp& net,
                const std::optional<std::vector<double>>& kappa = std::nullopt);
ModelFile load_model(const std::string& path);

}  // namespace slimnn
