#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slimnn/compress.hpp"
#include "slimnn/dataset.hpp"
#include "slimnn/mlp.hpp"

namespace slimnn {

// Inputs for the feasibility checks. delta stands in for the existential
// constant of the guarantees, so every verdict is conditional on the value
// supplied here; the checker reports inequality satisfaction, it never
// claims compressibility on its own.
struct BoundInputs {
    CompressMode mode = CompressMode::Prune;
    double p = 0.3;
    int k = 4;
    double alpha = 0.99;
    double delta = 0.1;
    double xi = 0.2;
    std::optional<double> omega;
    LayerSets sets;
    bool structured = false;
    std::optional<std::size_t> cnn_q;  // set for the CNN variant of the checks

    void validate() const;
};

struct ConditionRecord {
    std::size_t layer = 0;
    std::string id;  // e.g. "prune.w", "struct.b2", "cnn.b1"
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

struct NetworkConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    std::vector<double> sigma;  // per-layer operator norms
    std::vector<double> nu;     // per-layer max-abs entries
};

struct BoundReport {
    NetworkConstants constants;
    std::vector<ConditionRecord> conditions;
    double error_bound = 0.0;
    double loss_bound = 0.0;
    std::optional<double> corollary_bound;
    bool all_pass = false;
};

// c1 = max_l ||W_l||, c2 = max_l ||W_l||_inf * sqrt(n_l v n_{l+1}).
NetworkConstants compute_constants(const Mlp& net);

// Unstructured pruning feasibility inequalities, evaluated literally:
//   w layers:  n_{l+1}/n_l <= p(1-a)d/(a(1-p)) * c1^2/c2^2
//   b layers:  1/sqrt(n_{l+1})
//                <= p(1-a)d/(a(1-p)) / (c1^l c2^2 (1 v c1^-4)
//                                       (1 v c2^2 v c2^2(1-p)/p))
//              n_{l+2}/n_{l+1} <= p(1-a)d/(a(1-p)) * c1^4/c2^4
std::vector<ConditionRecord> check_prune_conditions(const std::vector<std::size_t>& dims,
                                                    const LayerSets& sets, double p,
                                                    double alpha, double delta, double c1,
                                                    double c2);

// Quantization counterparts with prefactor (1-a)k^2 d/a and b-layer
// denominator c1^l c2^2 (1 v c1^4)(1 v c2^2/k).
std::vector<ConditionRecord> check_quant_conditions(const std::vector<std::size_t>& dims,
                                                    const LayerSets& sets, int k, double alpha,
                                                    double delta, double c1, double c2);

// Structured pruning inequalities (neuron level); the CNN variant is the
// same set of formulas with channel dims and c2 replaced by c2*q, so q = 1
// reproduces these values bit for bit.
std::vector<ConditionRecord> check_structured_conditions(const std::vector<std::size_t>& dims,
                                                         const LayerSets& sets, double p,
                                                         double alpha, double delta, double c1,
                                                         double c2);
std::vector<ConditionRecord> check_cnn_conditions(const std::vector<std::size_t>& channel_dims,
                                                  std::size_t q, const LayerSets& sets,
                                                  double p, double alpha, double delta,
                                                  double c1, double c2);

// error_bound  = c1^(2m) (1+xi)^m xi
// loss_bound   = L + 2 c1^m sqrt(eps L) + c1^(2m) eps,   eps = (1+xi)^m xi
// corollary    = (1 + 2 c1^m sqrt(eps)/omega) L + c1^(2m) eps
double error_bound(double c1, std::size_t m, double xi);
double loss_bound(double loss, double c1, std::size_t m, double xi);
double corollary_bound(double loss, double c1, std::size_t m, double xi, double omega);

struct RecursionStep {
    std::size_t depth = 0;  // 0..m, depths in b_set are skipped
    double value = 0.0;     // simulated bound A_l
    double limit = 0.0;     // sigma^(2l)(1+xi)^l xi
    bool pass = false;
};

struct RecursionReport {
    bool xi_precondition = false;  // xi >= 2e1 v 2e3 v sqrt(2e2) v sqrt(2e4)
    std::vector<RecursionStep> steps;
    bool all_pass = false;
};

// Simulates the per-depth error recursion from A_0 = 0:
//   copy layers:  A_l = sigma^2 A_{l-1}
//   w layers:     A_l = (1+e1) sigma^2 A_{l-1} + e2 sigma^(2l)
//   b layers:     A_{l+1} = (1+e3) sigma^4 A_{l-1} + e4 sigma^(2(l+1))
// and checks A_l against sigma^(2l)(1+xi)^l xi at every depth outside b_set.
RecursionReport error_recursion(double sigma, std::size_t m, const LayerSets& sets, double e1,
                                double e2, double e3, double e4, double xi);

// Average within-group variance of y over exactly-duplicated covariates;
// empty when no covariate appears twice.
std::optional<double> estimate_omega(const Dataset& ds);

// Full report for a network: constants, the applicable condition set, and
// the bound formulas. test_loss feeds loss_bound / corollary_bound.
BoundReport check_bounds(const Mlp& net, const BoundInputs& in, double test_loss = 0.0);

std::string bound_report_json(const BoundReport& r);
std::string bound_report_table(const BoundReport& r);

}  // namespace slimnn
