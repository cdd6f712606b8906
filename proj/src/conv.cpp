#include "slimnn/conv.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "slimnn/rng.hpp"
#include "slimnn/trainer.hpp"

namespace slimnn {

ConvLayer::ConvLayer(std::size_t dout, std::size_t din, std::size_t q_, std::size_t r_)
    : d_out(dout), d_in(din), q(q_), r(r_), k(dout * din * q_ * q_, 0.0) {
    if (q > r) throw std::invalid_argument("conv layer: kernel larger than feature map");
}

void Cnn::validate() const {
    if (conv_layers.empty()) throw std::invalid_argument("cnn: no conv layers");
    if (conv_activations.size() != conv_layers.size())
        throw std::invalid_argument("cnn: one activation per conv layer required");
    const std::size_t r = conv_layers.front().r;
    for (std::size_t l = 0; l < conv_layers.size(); ++l) {
        const ConvLayer& c = conv_layers[l];
        if (c.r != r) throw std::invalid_argument("cnn: feature map sizes must match");
        if (c.q > c.r) throw std::invalid_argument("cnn: kernel larger than feature map");
        if (l > 0 && conv_layers[l - 1].d_out != c.d_in)
            throw std::invalid_argument("cnn: channel dims do not chain");
    }
    if (has_head && head.cols != conv_layers.back().d_out * r * r)
        throw std::invalid_argument("cnn: head input dim mismatch");
}

namespace {

inline std::size_t wrap(std::ptrdiff_t t, std::size_t r) {
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(r);
    return static_cast<std::size_t>(((t % m) + m) % m);
}

}  // namespace

FeatureMap conv_forward(const ConvLayer& layer, const FeatureMap& x) {
    if (x.d != layer.d_in) throw std::invalid_argument("conv_forward: channel mismatch");
    if (x.r != layer.r) throw std::invalid_argument("conv_forward: feature map size mismatch");
    const std::size_t r = layer.r;
    FeatureMap z(layer.d_out, r);
    for (std::size_t o = 0; o < layer.d_out; ++o)
        for (std::size_t i = 0; i < layer.d_in; ++i)
            for (std::size_t a = 0; a < layer.q; ++a)
                for (std::size_t b = 0; b < layer.q; ++b) {
                    const double kv = layer.at(o, i, a, b);
                    if (kv == 0.0) continue;
                    for (std::size_t u = 0; u < r; ++u) {
                        const std::size_t su = wrap(static_cast<std::ptrdiff_t>(u + a) + 1, r);
                        for (std::size_t v = 0; v < r; ++v) {
                            const std::size_t sv =
                                wrap(static_cast<std::ptrdiff_t>(v + b) + 1, r);
                            z.at(o, u, v) += kv * x.at(i, su, sv);
                        }
                    }
                }
    return z;
}

Vector flatten_feature_map(const FeatureMap& x) { return x.x; }

FeatureMap unflatten_feature_map(const Vector& x, std::size_t d, std::size_t r) {
    if (x.size() != d * r * r) throw std::invalid_argument("unflatten: length mismatch");
    FeatureMap fm(d, r);
    fm.x = x;
    return fm;
}

Matrix circulant_block(const Matrix& u) {
    if (u.rows != u.cols) throw std::invalid_argument("circulant_block: square input required");
    const std::size_t r = u.rows;
    Matrix c(r * r, r * r);
    for (std::size_t u0 = 0; u0 < r; ++u0)
        for (std::size_t v0 = 0; v0 < r; ++v0) {
            const std::size_t row = u0 * r + v0;
            for (std::size_t u1 = 0; u1 < r; ++u1) {
                const std::size_t a = wrap(static_cast<std::ptrdiff_t>(u1) -
                                               static_cast<std::ptrdiff_t>(u0) - 1, r);
                for (std::size_t v1 = 0; v1 < r; ++v1) {
                    const std::size_t b = wrap(static_cast<std::ptrdiff_t>(v1) -
                                                   static_cast<std::ptrdiff_t>(v0) - 1, r);
                    c(row, u1 * r + v1) = u(a, b);
                }
            }
        }
    return c;
}

namespace {

Matrix extended_kernel_slice(const ConvLayer& layer, std::size_t o, std::size_t i) {
    Matrix u(layer.r, layer.r);
    for (std::size_t a = 0; a < layer.q; ++a)
        for (std::size_t b = 0; b < layer.q; ++b) u(a, b) = layer.at(o, i, a, b);
    return u;
}

}  // namespace

Matrix conv_to_matrix(const ConvLayer& layer) {
    const std::size_t r2 = layer.r * layer.r;
    Matrix w(layer.d_out * r2, layer.d_in * r2);
    for (std::size_t o = 0; o < layer.d_out; ++o)
        for (std::size_t i = 0; i < layer.d_in; ++i) {
            const Matrix block = circulant_block(extended_kernel_slice(layer, o, i));
            for (std::size_t a = 0; a < r2; ++a) {
                const double* src = block.row(a);
                double* dst = w.row(o * r2 + a) + i * r2;
                for (std::size_t b = 0; b < r2; ++b) dst[b] = src[b];
            }
        }
    return w;
}

double circulant_spectral_norm(const Matrix& u) {
    if (u.rows != u.cols) throw std::invalid_argument("circulant norm: square input required");
    const std::size_t r = u.rows;
    const double two_pi = 2.0 * 3.14159265358979323846;
    double best = 0.0;
    for (std::size_t k = 0; k < r; ++k)
        for (std::size_t l = 0; l < r; ++l) {
            std::complex<double> acc = 0.0;
            for (std::size_t a = 0; a < r; ++a)
                for (std::size_t b = 0; b < r; ++b) {
                    // omega^(k(a+1) + l(b+1)), omega = exp(-2 pi i / r)
                    const double ang = -two_pi *
                        static_cast<double>(k * (a + 1) + l * (b + 1)) /
                        static_cast<double>(r);
                    acc += u(a, b) * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            best = std::max(best, std::abs(acc));
        }
    return best;
}

Mlp cnn_to_mlp(const Cnn& cnn) {
    cnn.validate();
    Mlp net;
    for (std::size_t l = 0; l < cnn.conv_layers.size(); ++l)
        net.layers.push_back(Layer{conv_to_matrix(cnn.conv_layers[l]), cnn.conv_activations[l]});
    if (cnn.has_head) net.layers.push_back(Layer{cnn.head, cnn.head_activation});
    net.validate();
    return net;
}

FeatureMap cnn_forward(const Cnn& cnn, const FeatureMap& x0) {
    FeatureMap cur = x0;
    for (std::size_t l = 0; l < cnn.conv_layers.size(); ++l) {
        cur = conv_forward(cnn.conv_layers[l], cur);
        for (double& v : cur.x) v = cnn.conv_activations[l](v);
    }
    return cur;
}

Vector cnn_forward_output(const Cnn& cnn, const FeatureMap& x0) {
    const FeatureMap last = cnn_forward(cnn, x0);
    Vector flat = flatten_feature_map(last);
    if (!cnn.has_head) return flat;
    Vector out = matvec(cnn.head, flat);
    for (double& v : out) v = cnn.head_activation(v);
    return out;
}

CompressedNetwork prune_cnn_structured(const Cnn& cnn, CompressionPlan plan) {
    cnn.validate();
    const std::size_t nconv = cnn.conv_layers.size();
    for (std::size_t l : plan.sets.w_set)
        if (l > nconv) throw std::invalid_argument("cnn prune: w_set targets the dense head");
    for (std::size_t l : plan.sets.b_set)
        if (l > nconv) throw std::invalid_argument("cnn prune: b_set targets the dense head");
    plan.structured = true;
    plan.merge_bottleneck = false;
    plan.block = cnn.conv_layers.front().r * cnn.conv_layers.front().r;
    return compress_network(cnn_to_mlp(cnn), plan);
}

Cnn apply_filter_gates(const Cnn& cnn, const CompressedNetwork& cn, double p) {
    Cnn out = cnn;
    for (const LayerLog& log : cn.logs) {
        if (log.mode != "prune-columns" && log.mode != "prune-rows") continue;
        if (log.layer > out.conv_layers.size())
            throw std::invalid_argument("filter gates: log targets a non-conv layer");
        ConvLayer& layer = out.conv_layers[log.layer - 1];
        const bool rows = log.mode == "prune-rows";
        auto scale_filter = [&](std::size_t f, double t) {
            if (rows) {
                for (std::size_t i = 0; i < layer.d_in; ++i)
                    for (std::size_t a = 0; a < layer.q; ++a)
                        for (std::size_t b = 0; b < layer.q; ++b) layer.at(f, i, a, b) *= t;
            } else {
                for (std::size_t o = 0; o < layer.d_out; ++o)
                    for (std::size_t a = 0; a < layer.q; ++a)
                        for (std::size_t b = 0; b < layer.q; ++b) layer.at(o, f, a, b) *= t;
            }
        };
        for (std::size_t f : log.zeroed_blocks) scale_filter(f, 0.0);
        for (std::size_t f : log.scaled_blocks) scale_filter(f, 1.0 / p);
    }
    return out;
}

std::vector<WeightScaleCheck> cnn_weight_scale_report(const Cnn& cnn, double c2) {
    std::vector<WeightScaleCheck> out;
    for (std::size_t l = 0; l < cnn.conv_layers.size(); ++l) {
        const ConvLayer& c = cnn.conv_layers[l];
        WeightScaleCheck w;
        w.layer = l + 1;
        for (double v : c.k) w.lhs = std::max(w.lhs, std::fabs(v));
        const double dmax = static_cast<double>(std::max(c.d_in, c.d_out));
        w.rhs = c2 / (static_cast<double>(c.q) * std::sqrt(dmax));
        w.pass = w.lhs <= w.rhs;
        out.push_back(w);
    }
    return out;
}

std::string cnn_to_json(const Cnn& cnn) {
    cnn.validate();
    nlohmann::json j;
    nlohmann::json layers = nlohmann::json::array();
    for (const ConvLayer& c : cnn.conv_layers) {
        nlohmann::json e;
        e["d_out"] = c.d_out;
        e["d_in"] = c.d_in;
        e["q"] = c.q;
        e["r"] = c.r;
        nlohmann::json kern = nlohmann::json::array();
        for (std::size_t o = 0; o < c.d_out; ++o) {
            nlohmann::json jo = nlohmann::json::array();
            for (std::size_t i = 0; i < c.d_in; ++i) {
                nlohmann::json ji = nlohmann::json::array();
                for (std::size_t a = 0; a < c.q; ++a) {
                    nlohmann::json ja = nlohmann::json::array();
                    for (std::size_t b = 0; b < c.q; ++b) ja.push_back(c.at(o, i, a, b));
                    ji.push_back(std::move(ja));
                }
                jo.push_back(std::move(ji));
            }
            kern.push_back(std::move(jo));
        }
        e["kernel"] = std::move(kern);
        layers.push_back(std::move(e));
    }
    j["layers"] = std::move(layers);
    nlohmann::json acts = nlohmann::json::array();
    for (const Activation& a : cnn.conv_activations) acts.push_back(activation_name(a));
    j["activations"] = std::move(acts);
    if (cnn.has_head) {
        nlohmann::json h;
        h["rows"] = cnn.head.rows;
        h["cols"] = cnn.head.cols;
        h["weights"] = cnn.head.data;
        h["activation"] = activation_name(cnn.head_activation);
        j["fc_head"] = std::move(h);
    }
    return j.dump(2);
}

Cnn cnn_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Cnn cnn;
    for (const auto& e : j.at("layers")) {
        ConvLayer c(e.at("d_out").get<std::size_t>(), e.at("d_in").get<std::size_t>(),
                    e.at("q").get<std::size_t>(), e.at("r").get<std::size_t>());
        const auto& kern = e.at("kernel");
        for (std::size_t o = 0; o < c.d_out; ++o)
            for (std::size_t i = 0; i < c.d_in; ++i)
                for (std::size_t a = 0; a < c.q; ++a)
                    for (std::size_t b = 0; b < c.q; ++b)
                        c.at(o, i, a, b) = kern[o][i][a][b].get<double>();
        cnn.conv_layers.push_back(std::move(c));
    }
    for (const auto& name : j.at("activations"))
        cnn.conv_activations.push_back(activation_from_name(name.get<std::string>()));
    if (j.contains("fc_head") && !j["fc_head"].is_null()) {
        const auto& h = j["fc_head"];
        cnn.has_head = true;
        cnn.head = Matrix(h.at("rows").get<std::size_t>(), h.at("cols").get<std::size_t>());
        cnn.head.data = h.at("weights").get<std::vector<double>>();
        if (cnn.head.data.size() != cnn.head.rows * cnn.head.cols)
            throw std::invalid_argument("cnn json: head weight size mismatch");
        cnn.head_activation = activation_from_name(h.value("activation", "identity"));
    }
    cnn.validate();
    return cnn;
}

void save_cnn(const std::string& path, const Cnn& cnn) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << cnn_to_json(cnn) << '\n';
}

Cnn load_cnn(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return cnn_from_json(text);
}

FeatureMap conv_backward_input(const ConvLayer& layer, const FeatureMap& dz) {
    if (dz.d != layer.d_out) throw std::invalid_argument("conv backward: channel mismatch");
    const std::size_t r = layer.r;
    FeatureMap dx(layer.d_in, r);
    for (std::size_t o = 0; o < layer.d_out; ++o)
        for (std::size_t i = 0; i < layer.d_in; ++i)
            for (std::size_t a = 0; a < layer.q; ++a)
                for (std::size_t b = 0; b < layer.q; ++b) {
                    const double kv = layer.at(o, i, a, b);
                    if (kv == 0.0) continue;
                    for (std::size_t s = 0; s < r; ++s) {
                        const std::size_t u = wrap(static_cast<std::ptrdiff_t>(s) -
                                                       static_cast<std::ptrdiff_t>(a) - 1, r);
                        for (std::size_t t = 0; t < r; ++t) {
                            const std::size_t v = wrap(static_cast<std::ptrdiff_t>(t) -
                                                           static_cast<std::ptrdiff_t>(b) - 1,
                                                       r);
                            dx.at(i, s, t) += kv * dz.at(o, u, v);
                        }
                    }
                }
    return dx;
}

ConvLayer conv_backward_kernel(const ConvLayer& shape, const FeatureMap& x,
                               const FeatureMap& dz) {
    const std::size_t r = shape.r;
    ConvLayer dk(shape.d_out, shape.d_in, shape.q, shape.r);
    for (std::size_t o = 0; o < shape.d_out; ++o)
        for (std::size_t i = 0; i < shape.d_in; ++i)
            for (std::size_t a = 0; a < shape.q; ++a)
                for (std::size_t b = 0; b < shape.q; ++b) {
                    double acc = 0.0;
                    for (std::size_t u = 0; u < r; ++u) {
                        const std::size_t su = wrap(static_cast<std::ptrdiff_t>(u + a) + 1, r);
                        for (std::size_t v = 0; v < r; ++v)
                            acc += dz.at(o, u, v) *
                                   x.at(i, su, wrap(static_cast<std::ptrdiff_t>(v + b) + 1, r));
                    }
                    dk.at(o, i, a, b) = acc;
                }
    return dk;
}

CnnTrainResult train_cnn(Cnn net, const std::vector<FeatureMap>& xs,
                         const std::vector<Vector>& ys, int epochs, int batch_size,
                         double lr, bool cross_entropy, std::uint64_t seed) {
    net.validate();
    if (xs.empty() || xs.size() != ys.size())
        throw std::invalid_argument("train_cnn: bad dataset");
    const LossKind loss = cross_entropy ? LossKind::CrossEntropy : LossKind::Mse;
    const std::size_t nconv = net.conv_layers.size();
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    std::vector<std::vector<double>> mk(nconv), vk(nconv);
    for (std::size_t l = 0; l < nconv; ++l) {
        mk[l].assign(net.conv_layers[l].k.size(), 0.0);
        vk[l].assign(net.conv_layers[l].k.size(), 0.0);
    }
    std::vector<double> mh(net.head.data.size(), 0.0), vh(net.head.data.size(), 0.0);

    Rng shuffle_rng(derive_seed(seed, {7, 1}));
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);

    CnnTrainResult result;
    long step = 0;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.index(i + 1)]);
        double epoch_loss = 0.0;
        std::size_t seen = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(batch_size));
            const double inv_b = 1.0 / static_cast<double>(stop - start);

            std::vector<ConvLayer> gk;
            for (const ConvLayer& c : net.conv_layers)
                gk.emplace_back(c.d_out, c.d_in, c.q, c.r);
            std::vector<double> gh(net.head.data.size(), 0.0);
            double batch_loss = 0.0;

            for (std::size_t bi = start; bi < stop; ++bi) {
                const std::size_t idx = order[bi];
                // forward, keeping pre-activation tensors
                std::vector<FeatureMap> inputs, pres;
                FeatureMap cur = xs[idx];
                for (std::size_t l = 0; l < nconv; ++l) {
                    inputs.push_back(cur);
                    FeatureMap pre = conv_forward(net.conv_layers[l], cur);
                    pres.push_back(pre);
                    for (double& v : pre.x) v = net.conv_activations[l](v);
                    cur = std::move(pre);
                }
                Vector flat = flatten_feature_map(cur);
                Vector out, head_pre;
                if (net.has_head) {
                    head_pre = matvec(net.head, flat);
                    out = head_pre;
                    for (double& v : out) v = net.head_activation(v);
                } else {
                    out = flat;
                }

                Vector dout;
                batch_loss += inv_b * loss_and_output_grad(out, ys[idx], loss, dout);

                Vector dflat;
                if (net.has_head) {
                    for (std::size_t i = 0; i < dout.size(); ++i)
                        dout[i] *= net.head_activation.derivative(head_pre[i]);
                    for (std::size_t i = 0; i < net.head.rows; ++i) {
                        const double di = inv_b * dout[i];
                        double* g = gh.data() + i * net.head.cols;
                        for (std::size_t j = 0; j < net.head.cols; ++j) g[j] += di * flat[j];
                    }
                    dflat = matvec_transposed(net.head, dout);
                } else {
                    dflat = dout;
                }

                FeatureMap dz = unflatten_feature_map(
                    dflat, net.conv_layers.back().d_out, net.conv_layers.back().r);
                for (std::size_t li = nconv; li-- > 0;) {
                    for (std::size_t e = 0; e < dz.x.size(); ++e)
                        dz.x[e] *= net.conv_activations[li].derivative(pres[li].x[e]);
                    const ConvLayer dk =
                        conv_backward_kernel(net.conv_layers[li], inputs[li], dz);
                    for (std::size_t e = 0; e < dk.k.size(); ++e)
                        gk[li].k[e] += inv_b * dk.k[e];
                    if (li > 0) dz = conv_backward_input(net.conv_layers[li], dz);
                }
            }

            if (!std::isfinite(batch_loss))
                throw TrainingDiverged("cnn training diverged: non-finite loss");
            epoch_loss += batch_loss * static_cast<double>(stop - start);
            seen += stop - start;

            ++step;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            auto adam_update = [&](double& w, double& m, double& v, double g) {
                m = beta1 * m + (1.0 - beta1) * g;
                v = beta2 * v + (1.0 - beta2) * g * g;
                w -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            };
            for (std::size_t l = 0; l < nconv; ++l)
                for (std::size_t e = 0; e < net.conv_layers[l].k.size(); ++e)
                    adam_update(net.conv_layers[l].k[e], mk[l][e], vk[l][e], gk[l].k[e]);
            for (std::size_t e = 0; e < net.head.data.size(); ++e)
                adam_update(net.head.data[e], mh[e], vh[e], gh[e]);
        }
        result.train_loss.push_back(epoch_loss / static_cast<double>(seen));
    }
    result.net = std::move(net);
    return result;
}

}  // namespace slimnn
