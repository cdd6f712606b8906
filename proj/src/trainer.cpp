#include "slimnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "slimnn/csv.hpp"
#include "slimnn/rng.hpp"

namespace slimnn {

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("train config: negative epochs");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
        throw std::invalid_argument("train config: betas must lie in (0,1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("train config: eps must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: lr must be positive");
}

// Returns loss value for one sample and the gradient dLoss/d(output) at the
// final post-activation output.
double loss_and_output_grad(const Vector& out, const Vector& y, LossKind loss, Vector& dout) {
    if (loss == LossKind::Mse) {
        if (y.size() != out.size())
            throw std::invalid_argument("loss: target dim != output dim");
        double l = 0.0;
        dout.resize(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out[i] - y[i];
            l += d * d;
            dout[i] = 2.0 * d;
        }
        return l;
    }
    // cross-entropy against a class index, softmax via log-sum-exp
    if (y.size() != 1)
        throw std::invalid_argument("loss: cross-entropy target must be a class index");
    const double cls_d = y.front();
    if (cls_d != std::floor(cls_d) || cls_d < 0.0)
        throw std::invalid_argument("loss: cross-entropy target must be a nonnegative integer");
    const std::size_t cls = static_cast<std::size_t>(cls_d);
    if (cls >= out.size()) throw std::invalid_argument("loss: class index out of range");

    const double mx = *std::max_element(out.begin(), out.end());
    double sum = 0.0;
    for (double v : out) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    dout.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        dout[i] = std::exp(out[i] - lse) - (i == cls ? 1.0 : 0.0);
    return lse - out[cls];
}

LossAndGrads loss_and_grads(const Mlp& net, const std::vector<Vector>& xs,
                            const std::vector<Vector>& ys, LossKind loss) {
    if (xs.empty()) throw std::invalid_argument("loss_and_grads: empty batch");
    if (xs.size() != ys.size()) throw std::invalid_argument("loss_and_grads: X/Y size mismatch");
    const std::size_t m = net.depth();

    LossAndGrads out;
    out.grads.reserve(m);
    for (const Layer& l : net.layers) out.grads.emplace_back(l.weights.rows, l.weights.cols);

    const double inv_b = 1.0 / static_cast<double>(xs.size());
    std::vector<Vector> pre(m), post(m);
    Vector dout, delta;
    for (std::size_t b = 0; b < xs.size(); ++b) {
        const Vector* cur = &xs[b];
        for (std::size_t l = 0; l < m; ++l) {
            pre[l] = matvec(net.layers[l].weights, *cur);
            post[l] = pre[l];
            for (double& v : post[l]) v = net.layers[l].activation(v);
            cur = &post[l];
        }
        out.loss += inv_b * loss_and_output_grad(post[m - 1], ys[b], loss, dout);

        // reverse accumulation through activation then affine at each layer
        delta = dout;
        for (std::size_t li = m; li-- > 0;) {
            for (std::size_t i = 0; i < delta.size(); ++i)
                delta[i] *= net.layers[li].activation.derivative(pre[li][i]);
            const Vector& input = li == 0 ? xs[b] : post[li - 1];
            Matrix& g = out.grads[li];
            for (std::size_t i = 0; i < g.rows; ++i) {
                double* gr = g.row(i);
                const double di = inv_b * delta[i];
                for (std::size_t j = 0; j < g.cols; ++j) gr[j] += di * input[j];
            }
            if (li > 0) delta = matvec_transposed(net.layers[li].weights, delta);
        }
    }
    return out;
}

double evaluate_loss(const Mlp& net, const std::vector<Vector>& xs,
                     const std::vector<Vector>& ys, LossKind loss) {
    if (xs.empty()) return 0.0;
    double acc = 0.0;
    Vector dout;
    for (std::size_t b = 0; b < xs.size(); ++b)
        acc += loss_and_output_grad(forward_output(net, xs[b]), ys[b], loss, dout);
    return acc / static_cast<double>(xs.size());
}

Mlp init_glorot(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts,
                std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("init_glorot: need at least 2 dims");
    if (acts.size() != dims.size() - 1)
        throw std::invalid_argument("init_glorot: one activation per layer required");
    Rng rng(derive_seed(seed, {0x9e01}));
    Mlp net;
    net.layers.resize(dims.size() - 1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w(dims[l + 1], dims[l]);
        const double bound =
            std::sqrt(6.0) / std::sqrt(static_cast<double>(dims[l] + dims[l + 1]));
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        net.layers[l] = Layer{std::move(w), acts[l]};
    }
    return net;
}

TrainResult train(Mlp net, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    net.validate();
    if (data.train_idx.empty()) throw std::invalid_argument("train: dataset has no train split");

    std::vector<Vector> train_x, train_y, test_x, test_y;
    for (std::size_t i : data.train_idx) {
        train_x.push_back(data.X[i]);
        train_y.push_back(data.Y[i]);
    }
    for (std::size_t i : data.test_idx) {
        test_x.push_back(data.X[i]);
        test_y.push_back(data.Y[i]);
    }

    const std::size_t m = net.depth();
    std::vector<Matrix> adam_m, adam_v;
    for (const Layer& l : net.layers) {
        adam_m.emplace_back(l.weights.rows, l.weights.cols);
        adam_v.emplace_back(l.weights.rows, l.weights.cols);
    }

    Rng shuffle_rng(derive_seed(cfg.seed, {5, 2}));
    std::vector<std::size_t> order(train_x.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    long step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.index(i + 1)]);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Vector> bx, by;
            bx.reserve(stop - start);
            by.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                bx.push_back(train_x[order[i]]);
                by.push_back(train_y[order[i]]);
            }
            const LossAndGrads lg = loss_and_grads(net, bx, by, cfg.loss);
            if (!std::isfinite(lg.loss))
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                       ": non-finite loss");
            ++step;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < m; ++l) {
                Matrix& w = net.layers[l].weights;
                const Matrix& g = lg.grads[l];
                for (std::size_t e = 0; e < w.data.size(); ++e) {
                    double& mm = adam_m[l].data[e];
                    double& vv = adam_v[l].data[e];
                    mm = cfg.adam_beta1 * mm + (1.0 - cfg.adam_beta1) * g.data[e];
                    vv = cfg.adam_beta2 * vv + (1.0 - cfg.adam_beta2) * g.data[e] * g.data[e];
                    const double mh = mm / bc1;
                    const double vh = vv / bc2;
                    w.data[e] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
                }
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = evaluate_loss(net, train_x, train_y, cfg.loss);
        log.test_loss = evaluate_loss(net, test_x, test_y, cfg.loss);
        if (!std::isfinite(log.train_loss))
            throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch));
        result.history.push_back(log);
    }
    result.net = std::move(net);
    return result;
}

std::string epoch_log_csv(const std::vector<EpochLog>& history) {
    std::ostringstream out;
    out << "epoch,train_loss,test_loss\n";
    for (const EpochLog& e : history)
        out << e.epoch << ',' << format_double(e.train_loss) << ','
            << format_double(e.test_loss) << '\n';
    return out.str();
}

}  // namespace slimnn
