#include "slimnn/config.hpp"

#include <fstream>
#include <stdexcept>

namespace slimnn {

using nlohmann::json;

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return json::parse(in);
}

std::vector<Activation> activations_from_json(const json& j, double softplus_beta) {
    std::vector<Activation> acts;
    for (const auto& e : j) acts.push_back(activation_from_name(e.get<std::string>(), softplus_beta));
    return acts;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("beta1", c.adam_beta1);
    c.adam_beta2 = j.value("beta2", c.adam_beta2);
    c.adam_eps = j.value("eps", c.adam_eps);
    c.seed = j.value("seed", c.seed);
    const std::string loss = j.value("loss", "mse");
    if (loss == "mse") c.loss = LossKind::Mse;
    else if (loss == "cross_entropy") c.loss = LossKind::CrossEntropy;
    else throw std::invalid_argument("train config: unknown loss " + loss);
    c.validate();
    return c;
}

CompressionPlan plan_from_json(const json& j) {
    CompressionPlan p;
    p.sets.w_set = j.value("w_set", std::vector<std::size_t>{});
    p.sets.b_set = j.value("b_set", std::vector<std::size_t>{});
    const std::string mode = j.value("mode", "prune");
    if (mode == "prune") p.mode = CompressMode::Prune;
    else if (mode == "quantize") p.mode = CompressMode::Quantize;
    else throw std::invalid_argument("plan: unknown mode " + mode);
    p.p = j.value("p", p.p);
    p.k = j.value("k", p.k);
    p.alpha = j.value("alpha", p.alpha);
    p.rescore_every = j.value("rescore_every", p.rescore_every);
    p.seed = j.value("seed", p.seed);
    p.structured = j.value("structured", p.structured);
    p.block = j.value("block", p.block);
    p.merge_bottleneck = j.value("merge_bottleneck", p.merge_bottleneck);
    const std::string target = j.value("score_target", "dense_reference");
    if (target == "dense_reference") p.score_target = ScoreTarget::DenseReference;
    else if (target == "labeled_loss") p.score_target = ScoreTarget::LabeledLoss;
    else throw std::invalid_argument("plan: unknown score_target " + target);
    if (j.contains("score_batch"))
        p.score_batch = j["score_batch"].get<std::vector<Vector>>();
    if (j.contains("score_labels"))
        p.score_labels = j["score_labels"].get<std::vector<Vector>>();
    return p;
}

BoundInputs bound_inputs_from_json(const json& j) {
    BoundInputs b;
    const std::string mode = j.value("mode", "prune");
    if (mode == "prune") b.mode = CompressMode::Prune;
    else if (mode == "quantize") b.mode = CompressMode::Quantize;
    else throw std::invalid_argument("bounds: unknown mode " + mode);
    b.p = j.value("p", b.p);
    b.k = j.value("k", b.k);
    b.alpha = j.value("alpha", b.alpha);
    b.delta = j.value("delta", b.delta);
    b.xi = j.value("xi", b.xi);
    if (j.contains("omega") && !j["omega"].is_null()) b.omega = j["omega"].get<double>();
    b.sets.w_set = j.value("w_set", std::vector<std::size_t>{});
    b.sets.b_set = j.value("b_set", std::vector<std::size_t>{});
    b.structured = j.value("structured", b.structured);
    if (j.contains("cnn_q") && !j["cnn_q"].is_null())
        b.cnn_q = j["cnn_q"].get<std::size_t>();
    b.validate();
    return b;
}

Dataset dataset_from_json(const json& j) {
    Dataset ds;
    if (j.contains("synthetic")) {
        const auto& s = j["synthetic"];
        ds = synthetic_teacher(s.at("dim_in").get<std::size_t>(),
                               s.at("dim_out").get<std::size_t>(),
                               s.value("teacher_width", std::size_t{16}),
                               s.at("n").get<std::size_t>(), s.value("noise_sigma", 0.0),
                               s.value("seed", std::uint64_t{0}));
    } else if (j.contains("csv")) {
        const std::string task = j.value("task", "regression");
        TaskKind kind;
        if (task == "regression") kind = TaskKind::Regression;
        else if (task == "classification") kind = TaskKind::Classification;
        else throw std::invalid_argument("data: unknown task " + task);
        ds = load_csv(j.at("csv").get<std::string>(),
                      j.at("target_cols").get<std::vector<std::size_t>>(), kind);
    } else {
        throw std::invalid_argument("data: need a 'synthetic' or 'csv' section");
    }
    ds = split_80_20(std::move(ds), j.value("split_seed", std::uint64_t{0}));
    ds = normalize_unit_ball(std::move(ds));
    return ds;
}

SweepConfig sweep_config_from_json(const json& j) {
    SweepConfig c;
    c.widths = j.at("widths").get<std::vector<std::size_t>>();
    c.trials_per_width = j.value("trials_per_width", c.trials_per_width);
    c.prunes_per_trial = j.value("prunes_per_trial", c.prunes_per_trial);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.dims_template = j.at("dims_template").get<std::vector<std::size_t>>();
    c.activations = activations_from_json(j.at("activations"));
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    if (j.contains("plan")) c.plan = plan_from_json(j["plan"]);
    c.score_batch_size = j.value("score_batch_size", c.score_batch_size);
    c.projected_metric = j.value("projected_metric", c.projected_metric);
    c.best_of = j.value("best_of", c.best_of);
    c.metric = j.value("metric", c.metric);
    c.threads = j.value("threads", c.threads);
    c.validate();
    return c;
}

}  // namespace slimnn
