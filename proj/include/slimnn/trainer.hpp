#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slimnn/dataset.hpp"
#include "slimnn/mlp.hpp"

namespace slimnn {

enum class LossKind { Mse, CrossEntropy };

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LossKind loss = LossKind::Mse;
    std::uint64_t seed = 0;

    void validate() const;
};

// Thrown when the training loss stops being finite.
struct TrainingDiverged : std::runtime_error {
    explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

// Loss is the batch mean of ||net(x) - y||^2 (MSE) or of the softmax
// cross-entropy of the final linear output against the class index. The
// softmax is part of the loss, not a stored activation layer, so the stored
// network stays the pre-softmax MLP.
struct LossAndGrads {
    double loss = 0.0;
    std::vector<Matrix> grads;  // dLoss/dW_l, one per layer
};

LossAndGrads loss_and_grads(const Mlp& net, const std::vector<Vector>& xs,
                            const std::vector<Vector>& ys, LossKind loss);

// Loss of one output against one target plus dLoss/d(output); shared by the
// MLP and CNN trainers.
double loss_and_output_grad(const Vector& out, const Vector& y, LossKind loss, Vector& dout);

double evaluate_loss(const Mlp& net, const std::vector<Vector>& xs,
                     const std::vector<Vector>& ys, LossKind loss);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
};

struct TrainResult {
    Mlp net;
    std::vector<EpochLog> history;
};

// Adam on mini-batches; one full permutation of the training rows per epoch.
// Both the shuffle and any dependence on randomness come from cfg.seed, so a
// repeated run returns bitwise-identical weights.
TrainResult train(Mlp net, const Dataset& data, const TrainConfig& cfg);

// Glorot/Xavier uniform init: entries i.i.d. uniform over
// [-sqrt(6)/sqrt(n_l + n_{l+1}), +sqrt(6)/sqrt(n_l + n_{l+1})].
Mlp init_glorot(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts,
                std::uint64_t seed);

std::string epoch_log_csv(const std::vector<EpochLog>& history);

}  // namespace slimnn
