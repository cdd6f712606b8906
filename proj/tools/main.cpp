// slimnn command line: train, compress, bound checks, CNN conversion and the
// width-sweep experiment driver. All state flows through flags and config
// files; exit codes are 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "slimnn/config.hpp"
#include "slimnn/conv.hpp"
#include "slimnn/csv.hpp"
#include "slimnn/model_json.hpp"
#include "slimnn/sweep.hpp"

namespace {

using namespace slimnn;

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << text;
}

int cmd_train(const std::string& config_path, const std::string& out_path,
              const std::string& log_path, const std::string& manifest_path,
              std::optional<std::uint64_t> seed) {
    const auto cfg = load_json_file(config_path);
    TrainConfig tc = train_config_from_json(cfg.at("train"));
    if (seed) tc.seed = *seed;
    const Dataset data = dataset_from_json(cfg.at("data"));
    if (!manifest_path.empty()) {
        const auto& dj = cfg.at("data");
        const std::string source = dj.contains("csv") ? dj["csv"].get<std::string>()
                                                      : std::string("synthetic");
        write_file(manifest_path, dataset_manifest_json(
                                      data, source,
                                      dj.value("split_seed", std::uint64_t{0})) + "\n");
    }
    const auto dims = cfg.at("dims").get<std::vector<std::size_t>>();
    const auto acts = activations_from_json(cfg.at("activations"));

    Mlp net = init_glorot(dims, acts, tc.seed);
    const TrainResult result = train(std::move(net), data, tc);
    save_model(out_path, result.net);
    if (!log_path.empty()) write_file(log_path, epoch_log_csv(result.history));
    if (!result.history.empty())
        std::cout << "final train loss " << format_double(result.history.back().train_loss)
                  << ", test loss " << format_double(result.history.back().test_loss) << "\n";
    std::cout << "model written to " << out_path << "\n";
    return 0;
}

int cmd_compress(const std::string& config_path, const std::string& model_path,
                 const std::string& out_path, const std::string& log_path,
                 const std::string& data_path, const std::string& targets,
                 const std::string& task, std::size_t batch_size,
                 std::optional<std::uint64_t> seed) {
    const ModelFile mf = load_model(model_path);
    CompressionPlan plan = plan_from_json(load_json_file(config_path));
    if (seed) plan.seed = *seed;

    if (plan.score_batch.empty()) {
        if (data_path.empty())
            throw std::runtime_error("compress: plan has no score_batch; pass --data");
        nlohmann::json dj;
        dj["csv"] = data_path;
        std::vector<std::size_t> cols;
        std::stringstream ss(targets);
        for (std::string tok; std::getline(ss, tok, ',');) cols.push_back(std::stoull(tok));
        dj["target_cols"] = cols;
        dj["task"] = task;
        const Dataset ds = dataset_from_json(dj);
        for (std::size_t i = 0; i < std::min(batch_size, ds.train_idx.size()); ++i)
            plan.score_batch.push_back(ds.X[ds.train_idx[i]]);
    }

    const CompressedNetwork cn = compress_network(mf.net, plan);
    save_model(out_path, cn.net, cn.kappa);
    if (!log_path.empty()) write_file(log_path, compression_log_json(cn, plan) + "\n");
    for (const LayerSparsity& s : sparsity_report(cn.net))
        std::cout << "layer " << s.layer << ": nnz fraction " << format_double(s.nnz_fraction)
                  << ", zero rows " << s.zero_rows << ", zero cols " << s.zero_cols << "\n";
    std::cout << "compressed model written to " << out_path << "\n";
    return 0;
}

int cmd_check_bounds(const std::string& config_path, const std::string& model_path,
                     const std::string& out_path, double loss) {
    const ModelFile mf = load_model(model_path);
    const BoundInputs in = bound_inputs_from_json(load_json_file(config_path));
    const BoundReport rep = check_bounds(mf.net, in, loss);
    if (!out_path.empty()) write_file(out_path, bound_report_json(rep) + "\n");
    std::cout << bound_report_table(rep);
    return 0;
}

int cmd_convert_conv(const std::string& model_path, const std::string& out_path) {
    const Cnn cnn = load_cnn(model_path);
    save_model(out_path, cnn_to_mlp(cnn));
    std::cout << "mlp representation written to " << out_path << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_path, bool dry_run,
              std::optional<std::uint64_t> seed, std::optional<int> threads) {
    const auto cfg_json = load_json_file(config_path);
    SweepConfig cfg = sweep_config_from_json(cfg_json);
    if (seed) cfg.master_seed = *seed;
    if (threads) cfg.threads = *threads;
    if (dry_run) {
        std::cout << sweep_plan_listing(cfg);
        return 0;
    }
    const Dataset data = dataset_from_json(cfg_json.at("data"));
    const auto rows = run_width_sweep(cfg, data);
    const std::string csv = sweep_csv(rows);
    write_file(out_path, csv);
    std::cout << summarize_sweep_csv(csv);
    std::cout << "sweep csv written to " << out_path << "\n";
    return 0;
}

int cmd_report(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open: " + csv_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::cout << summarize_sweep_csv(text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"post-training pruning and quantization toolkit"};
    app.require_subcommand(1);

    std::string config, model, out, log, manifest, data, targets = "0", task = "regression",
        csv;
    std::size_t batch_size = 32;
    double loss = 0.0;
    bool dry_run = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    auto* train_cmd = app.add_subcommand("train", "train a dense network");
    train_cmd->add_option("--config", config, "train config json")->required();
    train_cmd->add_option("--out", out, "output model json")->required();
    train_cmd->add_option("--log", log, "per-epoch csv log");
    train_cmd->add_option("--manifest", manifest, "dataset manifest json");
    train_cmd->add_option("--seed", seed, "override the config seed");

    auto* compress_cmd = app.add_subcommand("compress", "compress a trained model");
    compress_cmd->add_option("--config", config, "plan json")->required();
    compress_cmd->add_option("--model", model, "model json")->required();
    compress_cmd->add_option("--out", out, "output model json")->required();
    compress_cmd->add_option("--log", log, "compression log sidecar json");
    compress_cmd->add_option("--data", data, "csv used to build the score batch");
    compress_cmd->add_option("--targets", targets, "comma-separated target columns");
    compress_cmd->add_option("--task", task, "regression | classification");
    compress_cmd->add_option("--score-batch-size", batch_size, "score batch size");
    compress_cmd->add_option("--seed", seed, "override the plan seed");

    auto* bounds_cmd = app.add_subcommand("check-bounds", "feasibility conditions and bounds");
    bounds_cmd->add_option("--config", config, "bound inputs json")->required();
    bounds_cmd->add_option("--model", model, "model json")->required();
    bounds_cmd->add_option("--out", out, "bound report json");
    bounds_cmd->add_option("--loss", loss, "reference loss for the loss bound");

    auto* conv_cmd = app.add_subcommand("convert-conv", "cnn json to mlp json");
    conv_cmd->add_option("--model", model, "cnn json")->required();
    conv_cmd->add_option("--out", out, "output mlp json")->required();

    auto* sweep_cmd = app.add_subcommand("sweep", "width sweep experiment");
    sweep_cmd->add_option("--config", config, "sweep config json")->required();
    sweep_cmd->add_option("--out", out, "output csv");
    sweep_cmd->add_flag("--dry-run", dry_run, "print planned runs without executing");
    sweep_cmd->add_option("--seed", seed, "override the master seed");
    sweep_cmd->add_option("--threads", threads, "worker pool size");

    auto* report_cmd = app.add_subcommand("report", "summarize a sweep csv");
    report_cmd->add_option("--csv", csv, "sweep csv path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(config, out, log, manifest, seed);
        if (compress_cmd->parsed())
            return cmd_compress(config, model, out, log, data, targets, task, batch_size, seed);
        if (bounds_cmd->parsed()) return cmd_check_bounds(config, model, out, loss);
        if (conv_cmd->parsed()) return cmd_convert_conv(model, out);
        if (sweep_cmd->parsed()) {
            if (!dry_run && out.empty()) {
                std::cerr << "sweep: --out is required unless --dry-run\n";
                return 1;
            }
            return cmd_sweep(config, out, dry_run, seed, threads);
        }
        if (report_cmd->parsed()) return cmd_report(csv);
        return 1;
    } catch (const slimnn::TrainingDiverged& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
