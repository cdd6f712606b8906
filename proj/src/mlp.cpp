#include "slimnn/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace slimnn {

void Mlp::validate() const {
    if (layers.empty()) throw std::invalid_argument("mlp: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Matrix& w = layers[l].weights;
        if (w.rows == 0 || w.cols == 0) throw std::invalid_argument("mlp: empty layer matrix");
        if (w.data.size() != w.rows * w.cols)
            throw std::invalid_argument("mlp: data length != rows*cols");
        if (!all_finite(w)) throw std::invalid_argument("mlp: non-finite weight entry");
        if (l + 1 < layers.size() && layers[l + 1].weights.cols != w.rows)
            throw std::invalid_argument("mlp: layer shapes do not chain");
    }
}

std::vector<Vector> forward(const Mlp& net, const Vector& x) {
    if (x.size() != net.input_dim()) throw std::invalid_argument("forward: input dim mismatch");
    std::vector<Vector> zs;
    zs.reserve(net.depth());
    const Vector* cur = &x;
    for (const Layer& layer : net.layers) {
        Vector z = matvec(layer.weights, *cur);
        for (double& v : z) v = layer.activation(v);
        zs.push_back(std::move(z));
        cur = &zs.back();
    }
    return zs;
}

Vector forward_output(const Mlp& net, const Vector& x) {
    const Vector* cur = &x;
    Vector z;
    for (const Layer& layer : net.layers) {
        z = matvec(layer.weights, *cur);
        for (double& v : z) v = layer.activation(v);
        cur = &z;
    }
    return z;
}

Vector project_ball(const Vector& v, double kappa) {
    if (!(kappa > 0.0)) throw std::invalid_argument("project_ball: kappa must be positive");
    const double n = norm2(v);
    if (n <= kappa) return v;
    Vector out(v);
    const double s = kappa / n;
    for (double& e : out) e *= s;
    return out;
}

std::vector<Vector> forward_projected(const Mlp& net, const std::vector<double>& kappa,
                                      const Vector& x, bool* warned) {
    if (x.size() != net.input_dim())
        throw std::invalid_argument("forward_projected: input dim mismatch");
    if (kappa.size() != net.depth())
        throw std::invalid_argument("forward_projected: kappa length != depth");
    if (warned) *warned = norm2(x) > 1.0 + 1e-12;

    std::vector<Vector> zs;
    zs.reserve(net.depth());
    const Vector* cur = &x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const Layer& layer = net.layers[l];
        Vector z = matvec(layer.weights, *cur);
        for (double& v : z) v = layer.activation(v);
        if (std::isfinite(kappa[l])) z = project_ball(z, kappa[l]);
        zs.push_back(std::move(z));
        cur = &zs.back();
    }
    return zs;
}

Vector forward_projected_output(const Mlp& net, const std::vector<double>& kappa,
                                const Vector& x) {
    return forward_projected(net, kappa, x).back();
}

}  // namespace slimnn
