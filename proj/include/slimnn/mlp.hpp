#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "slimnn/activation.hpp"
#include "slimnn/matrix.hpp"

namespace slimnn {

constexpr double kNoProjection = std::numeric_limits<double>::infinity();

struct Layer {
    Matrix weights;
    Activation activation;
};

// Bias-free multilayer perceptron x -> act_m(W_m act_{m-1}(... act_1(W_1 x))).
struct Mlp {
    std::vector<Layer> layers;

    std::size_t depth() const { return layers.size(); }
    std::size_t input_dim() const { return layers.front().weights.cols; }
    std::size_t output_dim() const { return layers.back().weights.rows; }

    // n_1 .. n_{m+1}
    std::vector<std::size_t> dims() const {
        std::vector<std::size_t> d;
        d.push_back(input_dim());
        for (const Layer& l : layers) d.push_back(l.weights.rows);
        return d;
    }

    // Consecutive layer shapes must chain and entries must be finite.
    void validate() const;
};

// Post-activation outputs z^1 .. z^m.
std::vector<Vector> forward(const Mlp& net, const Vector& x);

// Convenience: last layer output only.
Vector forward_output(const Mlp& net, const Vector& x);

// Euclidean-ball projection [v]_kappa: v unchanged when ||v|| <= kappa,
// otherwise scaled radially onto the sphere of radius kappa.
Vector project_ball(const Vector& v, double kappa);

// Forward pass with a per-layer projection radius applied after the layer's
// activation; kNoProjection entries leave that layer unprojected. Returns
// the per-layer vectors as they feed forward (post-projection). Inputs with
// ||x|| > 1 are accepted; *warned is set when provided.
std::vector<Vector> forward_projected(const Mlp& net, const std::vector<double>& kappa,
                                      const Vector& x, bool* warned = nullptr);

Vector forward_projected_output(const Mlp& net, const std::vector<double>& kappa,
                                const Vector& x);

}  // namespace slimnn
