#include "slimnn/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "slimnn/csv.hpp"

namespace slimnn {

void BoundInputs::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("bounds: alpha in (0,1)");
    if (!(xi > 0.0 && xi < 1.0)) throw std::invalid_argument("bounds: xi in (0,1)");
    if (delta < 0.0) throw std::invalid_argument("bounds: delta must be nonnegative");
    if (mode == CompressMode::Prune && !(p > 0.0 && p < 1.0))
        throw std::invalid_argument("bounds: p in (0,1)");
    if (mode == CompressMode::Quantize && k < 1) throw std::invalid_argument("bounds: k >= 1");
    if (omega && !(*omega > 0.0)) throw std::invalid_argument("bounds: omega must be positive");
}

NetworkConstants compute_constants(const Mlp& net) {
    NetworkConstants c;
    const auto dims = net.dims();
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const double sig = spectral_norm(net.layers[l].weights);
        const double nu = inf_norm(net.layers[l].weights);
        c.sigma.push_back(sig);
        c.nu.push_back(nu);
        c.c1 = std::max(c.c1, sig);
        const double nmax = static_cast<double>(std::max(dims[l], dims[l + 1]));
        c.c2 = std::max(c.c2, nu * std::sqrt(nmax));
    }
    return c;
}

namespace {

double dim(const std::vector<std::size_t>& dims, std::size_t index_1based) {
    return static_cast<double>(dims.at(index_1based - 1));
}

}  // namespace

std::vector<ConditionRecord> check_prune_conditions(const std::vector<std::size_t>& dims,
                                                    const LayerSets& sets, double p,
                                                    double alpha, double delta, double c1,
                                                    double c2) {
    std::vector<ConditionRecord> out;
    const double pref = p * (1.0 - alpha) * delta / (alpha * (1.0 - p));
    for (std::size_t l : sets.w_set) {
        ConditionRecord r{l, "prune.w", dim(dims, l + 1) / dim(dims, l),
                          pref * (c1 * c1) / (c2 * c2), false};
        r.pass = r.lhs <= r.rhs;
        out.push_back(r);
    }
    for (std::size_t l : sets.b_set) {
        const double c1l = std::pow(c1, static_cast<double>(l));
        const double t1 = std::max(1.0, std::pow(c1, -4.0));
        const double t2 =
            std::max({1.0, c2 * c2, c2 * c2 * (1.0 - p) / p});
        ConditionRecord r1{l, "prune.b1", 1.0 / std::sqrt(dim(dims, l + 1)),
                           pref / (c1l * c2 * c2 * t1 * t2), false};
        r1.pass = r1.lhs <= r1.rhs;
        out.push_back(r1);
        ConditionRecord r2{l, "prune.b2", dim(dims, l + 2) / dim(dims, l + 1),
                           pref * std::pow(c1, 4.0) / std::pow(c2, 4.0), false};
        r2.pass = r2.lhs <= r2.rhs;
        out.push_back(r2);
    }
    return out;
}

std::vector<ConditionRecord> check_quant_conditions(const std::vector<std::size_t>& dims,
                                                    const LayerSets& sets, int k, double alpha,
                                                    double delta, double c1, double c2) {
    std::vector<ConditionRecord> out;
    const double kd = static_cast<double>(k);
    const double pref = (1.0 - alpha) * kd * kd * delta / alpha;
    for (std::size_t l : sets.w_set) {
        ConditionRecord r{l, "quant.w", dim(dims, l + 1) / dim(dims, l),
                          pref * (c1 * c1) / (c2 * c2), false};
        r.pass = r.lhs <= r.rhs;
        out.push_back(r);
    }
    for (std::size_t l : sets.b_set) {
        const double c1l = std::pow(c1, static_cast<double>(l));
        const double t1 = std::max(1.0, std::pow(c1, 4.0));
        const double t2 = std::max(1.0, c2 * c2 / kd);
        ConditionRecord r1{l, "quant.b1", 1.0 / std::sqrt(dim(dims, l + 1)),
                           pref / (c1l * c2 * c2 * t1 * t2), false};
        r1.pass = r1.lhs <= r1.rhs;
        out.push_back(r1);
        ConditionRecord r2{l, "quant.b2", dim(dims, l + 2) / dim(dims, l + 1),
                           pref * std::pow(c1, 4.0) / std::pow(c2, 4.0), false};
        r2.pass = r2.lhs <= r2.rhs;
        out.push_back(r2);
    }
    return out;
}

namespace {

// Shared evaluator for the structured inequalities; the CNN variant passes
// channel dims and c2_eff = c2*q, which reduces bitwise to the neuron case
// at q = 1.
std::vector<ConditionRecord> structured_conditions_impl(const std::vector<std::size_t>& dims,
                                                        const LayerSets& sets, double p,
                                                        double alpha, double delta, double c1,
                                                        double c2_eff, const char* tag_w,
                                                        const char* tag_b1,
                                                        const char* tag_b2) {
    std::vector<ConditionRecord> out;
    const double c2sq = c2_eff * c2_eff;
    for (std::size_t l : sets.w_set) {
        ConditionRecord r{l, tag_w, dim(dims, l + 1) / dim(dims, l),
                          alpha * (1.0 - p) * delta / (p * (1.0 - alpha)) * (c1 * c1) / c2sq,
                          false};
        r.pass = r.lhs <= r.rhs;
        out.push_back(r);
    }
    for (std::size_t l : sets.b_set) {
        const double quad = p * p * (1.0 - p) * (1.0 - p) * delta * delta /
                            (alpha * alpha * (1.0 - p) * (1.0 - p)) *
                            std::min(1.0, std::pow(c1, 8.0)) /
                            (std::pow(c1, 2.0 * static_cast<double>(l + 1)) * c2sq);
        const double lin =
            p * (1.0 - alpha) * delta / (alpha * (1.0 - p)) * (c1 * c1) / c2sq;
        ConditionRecord r1{l, tag_b1, dim(dims, l + 2) / dim(dims, l + 1),
                           std::min(quad, lin), false};
        r1.pass = r1.lhs <= r1.rhs;
        out.push_back(r1);

        ConditionRecord r2{l, tag_b2,
                           std::sqrt(dim(dims, l) * dim(dims, l + 2)) / dim(dims, l + 1),
                           p * (1.0 - alpha) * delta / (alpha * (1.0 - p)) /
                               (std::pow(c1, static_cast<double>(l) - 2.0) * c2sq *
                                std::max(1.0, (1.0 - p) / p)),
                           false};
        r2.pass = r2.lhs <= r2.rhs;
        out.push_back(r2);
    }
    return out;
}

}  // namespace

std::vector<ConditionRecord> check_structured_conditions(const std::vector<std::size_t>& dims,
                                                         const LayerSets& sets, double p,
                                                         double alpha, double delta, double c1,
                                                         double c2) {
    return structured_conditions_impl(dims, sets, p, alpha, delta, c1, c2, "struct.w",
                                      "struct.b1", "struct.b2");
}

std::vector<ConditionRecord> check_cnn_conditions(const std::vector<std::size_t>& channel_dims,
                                                  std::size_t q, const LayerSets& sets,
                                                  double p, double alpha, double delta,
                                                  double c1, double c2) {
    return structured_conditions_impl(channel_dims, sets, p, alpha, delta, c1,
                                      c2 * static_cast<double>(q), "cnn.w", "cnn.b1",
                                      "cnn.b2");
}

double error_bound(double c1, std::size_t m, double xi) {
    const double md = static_cast<double>(m);
    return std::pow(c1, 2.0 * md) * std::pow(1.0 + xi, md) * xi;
}

double loss_bound(double loss, double c1, std::size_t m, double xi) {
    if (loss < 0.0) throw std::invalid_argument("loss_bound: negative loss");
    const double md = static_cast<double>(m);
    const double eps = std::pow(1.0 + xi, md) * xi;
    return loss + 2.0 * std::pow(c1, md) * std::sqrt(eps * loss) +
           std::pow(c1, 2.0 * md) * eps;
}

double corollary_bound(double loss, double c1, std::size_t m, double xi, double omega) {
    if (!(omega > 0.0)) throw std::invalid_argument("corollary_bound: omega must be positive");
    if (loss < 0.0) throw std::invalid_argument("corollary_bound: negative loss");
    const double md = static_cast<double>(m);
    const double eps = std::pow(1.0 + xi, md) * xi;
    return (1.0 + 2.0 * std::pow(c1, md) * std::sqrt(eps) / omega) * loss +
           std::pow(c1, 2.0 * md) * eps;
}

RecursionReport error_recursion(double sigma, std::size_t m, const LayerSets& sets, double e1,
                                double e2, double e3, double e4, double xi) {
    sets.validate(m);
    RecursionReport rep;
    rep.xi_precondition =
        xi >= std::max({2.0 * e1, 2.0 * e3, std::sqrt(2.0 * e2), std::sqrt(2.0 * e4)});

    auto limit_at = [&](std::size_t l) {
        const double ld = static_cast<double>(l);
        return std::pow(sigma, 2.0 * ld) * std::pow(1.0 + xi, ld) * xi;
    };

    std::vector<double> a(m + 1, 0.0);
    rep.steps.push_back({0, 0.0, limit_at(0), true});
    std::size_t l = 1;
    while (l <= m) {
        if (sets.in_b(l)) {
            // two-depth step lands at l+1; depth l itself carries no bound
            a[l + 1] = (1.0 + e3) * std::pow(sigma, 4.0) * a[l - 1] +
                       e4 * std::pow(sigma, 2.0 * static_cast<double>(l + 1));
            RecursionStep st{l + 1, a[l + 1], limit_at(l + 1), false};
            st.pass = st.value <= st.limit;
            rep.steps.push_back(st);
            l += 2;
        } else {
            if (sets.in_w(l)) {
                a[l] = (1.0 + e1) * sigma * sigma * a[l - 1] +
                       e2 * std::pow(sigma, 2.0 * static_cast<double>(l));
            } else {
                a[l] = sigma * sigma * a[l - 1];
            }
            RecursionStep st{l, a[l], limit_at(l), false};
            st.pass = st.value <= st.limit;
            rep.steps.push_back(st);
            l += 1;
        }
    }
    rep.all_pass = std::all_of(rep.steps.begin(), rep.steps.end(),
                               [](const RecursionStep& s) { return s.pass; });
    return rep;
}

std::optional<double> estimate_omega(const Dataset& ds) {
    std::map<Vector, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ds.size(); ++i) groups[ds.X[i]].push_back(i);

    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& [x, idx] : groups) {
        if (idx.size() < 2) continue;
        const std::size_t dim_y = ds.Y[idx.front()].size();
        Vector mean(dim_y, 0.0);
        for (std::size_t i : idx)
            for (std::size_t d = 0; d < dim_y; ++d) mean[d] += ds.Y[i][d];
        for (double& v : mean) v /= static_cast<double>(idx.size());
        for (std::size_t i : idx) {
            acc += squared_distance(ds.Y[i], mean);
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return acc / static_cast<double>(count);
}

BoundReport check_bounds(const Mlp& net, const BoundInputs& in, double test_loss) {
    in.validate();
    net.validate();
    in.sets.validate(net.depth());

    BoundReport rep;
    rep.constants = compute_constants(net);
    const double c1 = rep.constants.c1;
    const double c2 = rep.constants.c2;
    const auto dims = net.dims();

    if (in.cnn_q) {
        rep.conditions =
            check_cnn_conditions(dims, *in.cnn_q, in.sets, in.p, in.alpha, in.delta, c1, c2);
    } else if (in.structured) {
        rep.conditions =
            check_structured_conditions(dims, in.sets, in.p, in.alpha, in.delta, c1, c2);
    } else if (in.mode == CompressMode::Prune) {
        rep.conditions = check_prune_conditions(dims, in.sets, in.p, in.alpha, in.delta, c1, c2);
    } else {
        rep.conditions = check_quant_conditions(dims, in.sets, in.k, in.alpha, in.delta, c1, c2);
    }

    const std::size_t m = net.depth();
    rep.error_bound = error_bound(c1, m, in.xi);
    rep.loss_bound = loss_bound(test_loss, c1, m, in.xi);
    if (in.omega) rep.corollary_bound = corollary_bound(test_loss, c1, m, in.xi, *in.omega);
    rep.all_pass = std::all_of(rep.conditions.begin(), rep.conditions.end(),
                               [](const ConditionRecord& c) { return c.pass; });
    return rep;
}

std::string bound_report_json(const BoundReport& r) {
    nlohmann::json j;
    j["c1"] = r.constants.c1;
    j["c2"] = r.constants.c2;
    j["sigma"] = r.constants.sigma;
    j["nu"] = r.constants.nu;
    nlohmann::json conds = nlohmann::json::array();
    for (const ConditionRecord& c : r.conditions) {
        nlohmann::json e;
        e["layer"] = c.layer;
        e["id"] = c.id;
        e["lhs"] = c.lhs;
        e["rhs"] = c.rhs;
        e["pass"] = c.pass;
        conds.push_back(std::move(e));
    }
    j["conditions"] = std::move(conds);
    j["error_bound"] = r.error_bound;
    j["loss_bound"] = r.loss_bound;
    if (r.corollary_bound) j["corollary_bound"] = *r.corollary_bound;
    j["all_pass"] = r.all_pass;
    return j.dump(2);
}

std::string bound_report_table(const BoundReport& r) {
    std::ostringstream out;
    out << "constants: c1 = " << format_double(r.constants.c1)
        << ", c2 = " << format_double(r.constants.c2) << "\n";
    for (std::size_t l = 0; l < r.constants.sigma.size(); ++l)
        out << "  layer " << l + 1 << ": sigma = " << format_double(r.constants.sigma[l])
            << ", nu = " << format_double(r.constants.nu[l]) << "\n";
    out << "conditions (verdicts are conditional on the supplied delta):\n";
    for (const ConditionRecord& c : r.conditions)
        out << "  [" << (c.pass ? "pass" : "FAIL") << "] layer " << c.layer << " " << c.id
            << ": lhs = " << format_double(c.lhs) << ", rhs = " << format_double(c.rhs) << "\n";
    out << "error_bound = " << format_double(r.error_bound) << "\n";
    out << "loss_bound  = " << format_double(r.loss_bound) << "\n";
    if (r.corollary_bound)
        out << "corollary_bound = " << format_double(*r.corollary_bound) << "\n";
    return out.str();
}

}  // namespace slimnn
