#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slimnn/compress.hpp"
#include "slimnn/matrix.hpp"
#include "slimnn/mlp.hpp"

namespace slimnn {

// Square convolution kernel stack: d_out x d_in kernels of size q x q,
// applied with unit stride and circular padding on r x r feature maps.
struct ConvLayer {
    std::size_t d_out = 0;
    std::size_t d_in = 0;
    std::size_t q = 0;
    std::size_t r = 0;
    std::vector<double> k;  // d_out*d_in*q*q, indexed [o][i][a][b]

    ConvLayer() = default;
    ConvLayer(std::size_t dout, std::size_t din, std::size_t q_, std::size_t r_);

    double& at(std::size_t o, std::size_t i, std::size_t a, std::size_t b) {
        return k[((o * d_in + i) * q + a) * q + b];
    }
    double at(std::size_t o, std::size_t i, std::size_t a, std::size_t b) const {
        return k[((o * d_in + i) * q + a) * q + b];
    }
};

// d x r x r tensor stored flat, indexed [c][u][v].
struct FeatureMap {
    std::size_t d = 0;
    std::size_t r = 0;
    std::vector<double> x;

    FeatureMap() = default;
    FeatureMap(std::size_t d_, std::size_t r_) : d(d_), r(r_), x(d_ * r_ * r_, 0.0) {}

    double& at(std::size_t c, std::size_t u, std::size_t v) { return x[(c * r + u) * r + v]; }
    double at(std::size_t c, std::size_t u, std::size_t v) const { return x[(c * r + u) * r + v]; }
};

// Convolutional network: conv layers with entrywise activations, followed by
// an optional dense head applied to the flattened last feature map.
struct Cnn {
    std::vector<ConvLayer> conv_layers;
    std::vector<Activation> conv_activations;  // one per conv layer
    bool has_head = false;
    Matrix head;  // rows x (d_last * r^2)
    Activation head_activation;

    std::size_t depth() const { return conv_layers.size() + (has_head ? 1 : 0); }
    void validate() const;
};

// Z_{o,u,v} = sum_{i,a,b} K_{o,i,a,b} X_{i,<u+a>,<v+b>} with circular
// indexing <t>_r = ((t-1) mod r) + 1; the kernel acts as if zero-extended
// to r x r.
FeatureMap conv_forward(const ConvLayer& layer, const FeatureMap& x);

// Flattening x_{(u-1)r+v} = X_{u,v}, channel blocks concatenated.
Vector flatten_feature_map(const FeatureMap& x);
FeatureMap unflatten_feature_map(const Vector& x, std::size_t d, std::size_t r);

// Doubly block circulant matrix of an r x r kernel slice:
// C(U)[phi(u,v)][phi(u',v')] = U_{<u'-u>_r, <v'-v>_r}.
Matrix circulant_block(const Matrix& u);

// Block matrix of circulant blocks; W(K) * flatten(X) = flatten(conv(K, X)).
Matrix conv_to_matrix(const ConvLayer& layer);

// max_{k,l} |sum_{a,b} U_{a,b} w^{ka+lb}| with w = exp(-2 pi i / r); equals
// the operator norm of circulant_block(u). Direct O(r^4) double sum.
double circulant_spectral_norm(const Matrix& u);

// Equivalent MLP: one conv_to_matrix layer per conv layer plus the head.
Mlp cnn_to_mlp(const Cnn& cnn);

FeatureMap cnn_forward(const Cnn& cnn, const FeatureMap& x0);  // conv part only
Vector cnn_forward_output(const Cnn& cnn, const FeatureMap& x0);

// Structured filter pruning on the MLP representation with block = r^2.
// Column blocks of W_l are input filters K_{:,i}; row blocks are output
// filters K_{o,:}.
CompressedNetwork prune_cnn_structured(const Cnn& cnn, CompressionPlan plan);

// Reads gate logs back onto kernels: zeroed blocks clear the filter slice,
// surviving blocks scale it by 1/p. conv_to_matrix of the result reproduces
// the compressed MLP layer exactly.
Cnn apply_filter_gates(const Cnn& cnn, const CompressedNetwork& cn, double p);

// Filter-block weight-scale check: ||W(K_l)||_inf <= c2 / (q sqrt(d_l v d_{l+1})).
struct WeightScaleCheck {
    std::size_t layer = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};
std::vector<WeightScaleCheck> cnn_weight_scale_report(const Cnn& cnn, double c2);

std::string cnn_to_json(const Cnn& cnn);
Cnn cnn_from_json(const std::string& text);
void save_cnn(const std::string& path, const Cnn& cnn);
Cnn load_cnn(const std::string& path);

// --- training support: circular convolution adjoints -----------------------

// dX and dK of sum-of-products Z = K * X given upstream gradient dZ.
FeatureMap conv_backward_input(const ConvLayer& layer, const FeatureMap& dz);
ConvLayer conv_backward_kernel(const ConvLayer& shape, const FeatureMap& x,
                               const FeatureMap& dz);

struct CnnTrainResult {
    Cnn net;
    std::vector<double> train_loss;  // per epoch
};

// Adam over the kernel entries and the head, gradients via the convolution
// adjoint; same loss conventions as the MLP trainer.
CnnTrainResult train_cnn(Cnn net, const std::vector<FeatureMap>& xs,
                         const std::vector<Vector>& ys, int epochs, int batch_size,
                         double lr, bool cross_entropy, std::uint64_t seed);

}  // namespace slimnn
