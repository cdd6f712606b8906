#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace slimnn {

enum class ActKind { Identity, Relu, Tanh, Sigmoid, Softplus };

// Entrywise activations. All kinds are 1-Lipschitz. Every kind except
// sigmoid maps 0 to 0; softplus is shifted by -log(2)/beta so that it does
// too while staying a smooth relu surrogate.
struct Activation {
    ActKind kind = ActKind::Identity;
    double beta = 10.0;  // softplus sharpness, > 0

    Activation() = default;
    explicit Activation(ActKind k, double b = 10.0) : kind(k), beta(b) {
        if (kind == ActKind::Softplus && beta <= 0.0)
            throw std::invalid_argument("softplus beta must be positive");
    }

    double operator()(double x) const {
        switch (kind) {
            case ActKind::Identity: return x;
            case ActKind::Relu: return x > 0.0 ? x : 0.0;
            case ActKind::Tanh: return std::tanh(x);
            case ActKind::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
            case ActKind::Softplus: {
                const double bx = beta * x;
                const double ln2 = 0.6931471805599453;
                if (bx > 0.0) return x + (std::log1p(std::exp(-bx)) - ln2) / beta;
                return (std::log1p(std::exp(bx)) - ln2) / beta;
            }
        }
        return x;
    }

    double derivative(double x) const {
        switch (kind) {
            case ActKind::Identity: return 1.0;
            case ActKind::Relu: return x > 0.0 ? 1.0 : 0.0;
            case ActKind::Tanh: {
                const double t = std::tanh(x);
                return 1.0 - t * t;
            }
            case ActKind::Sigmoid: {
                const double s = 1.0 / (1.0 + std::exp(-x));
                return s * (1.0 - s);
            }
            case ActKind::Softplus: return 1.0 / (1.0 + std::exp(-beta * x));
        }
        return 1.0;
    }

    bool zero_at_zero() const { return kind != ActKind::Sigmoid; }
    bool entrywise() const { return true; }
};

inline std::string activation_name(const Activation& a) {
    switch (a.kind) {
        case ActKind::Identity: return "identity";
        case ActKind::Relu: return "relu";
        case ActKind::Tanh: return "tanh";
        case ActKind::Sigmoid: return "sigmoid";
        case ActKind::Softplus: return "softplus";
    }
    return "identity";
}

inline Activation activation_from_name(const std::string& name, double softplus_beta = 10.0) {
    if (name == "identity") return Activation(ActKind::Identity);
    if (name == "relu") return Activation(ActKind::Relu);
    if (name == "tanh") return Activation(ActKind::Tanh);
    if (name == "sigmoid") return Activation(ActKind::Sigmoid);
    if (name == "softplus") return Activation(ActKind::Softplus, softplus_beta);
    throw std::invalid_argument("unknown activation: " + name);
}

}  // namespace slimnn
