#include "slimnn/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "slimnn/csv.hpp"
#include "slimnn/rng.hpp"

namespace slimnn {

double delta_metric(const Mlp& dense, const CompressedNetwork& compressed,
                    const std::vector<Vector>& inputs, bool apply_projections) {
    if (inputs.empty()) throw std::invalid_argument("delta_metric: empty test set");
    double c = compressed.c;
    if (!(c > 0.0)) {
        for (const Layer& l : dense.layers) c = std::max(c, spectral_norm(l.weights));
    }
    const double m = static_cast<double>(dense.depth());
    double acc = 0.0;
    for (const Vector& x : inputs) {
        const Vector a = forward_output(dense, x);
        const Vector b = forward_compressed(compressed, x, apply_projections).back();
        acc += squared_distance(a, b);
    }
    return std::pow(c, -2.0 * m) * acc / static_cast<double>(inputs.size());
}

double task_metric(const Mlp& net, const std::vector<Vector>& xs,
                   const std::vector<Vector>& ys, TaskKind kind) {
    if (xs.empty()) throw std::invalid_argument("task_metric: empty test set");
    if (kind == TaskKind::Classification) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const Vector out = forward_output(net, xs[i]);
            const std::size_t pred =
                std::distance(out.begin(), std::max_element(out.begin(), out.end()));
            hits += pred == static_cast<std::size_t>(ys[i].front());
        }
        return static_cast<double>(hits) / static_cast<double>(xs.size());
    }
    // R^2 against the test mean
    Vector mean(ys.front().size(), 0.0);
    for (const Vector& y : ys)
        for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += y[d];
    for (double& v : mean) v /= static_cast<double>(ys.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        ss_res += squared_distance(forward_output(net, xs[i]), ys[i]);
        ss_tot += squared_distance(ys[i], mean);
    }
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    return 1.0 - ss_res / ss_tot;
}

void SweepConfig::validate() const {
    if (widths.empty()) throw std::invalid_argument("sweep: widths must be nonempty");
    for (std::size_t i = 1; i < widths.size(); ++i)
        if (widths[i] <= widths[i - 1])
            throw std::invalid_argument("sweep: widths must be strictly increasing");
    if (trials_per_width < 1 || prunes_per_trial < 1)
        throw std::invalid_argument("sweep: trials and reps must be >= 1");
    if (best_of < 1) throw std::invalid_argument("sweep: best_of must be >= 1");
    if (std::count(dims_template.begin(), dims_template.end(), std::size_t{0}) != 1)
        throw std::invalid_argument("sweep: dims_template needs exactly one width slot (0)");
    if (activations.size() != dims_template.size() - 1)
        throw std::invalid_argument("sweep: one activation per layer required");
    if (score_batch_size < 1) throw std::invalid_argument("sweep: empty score batch");
    if (threads < 1) throw std::invalid_argument("sweep: threads must be >= 1");
}

std::vector<std::size_t> SweepConfig::dims_for(std::size_t width) const {
    std::vector<std::size_t> dims = dims_template;
    for (std::size_t& d : dims)
        if (d == 0) d = width;
    return dims;
}

std::uint64_t sweep_cell_seed(std::uint64_t master, std::size_t width, int trial, int rep) {
    return derive_seed(master, {static_cast<std::uint64_t>(width),
                                static_cast<std::uint64_t>(trial),
                                static_cast<std::uint64_t>(rep)});
}

namespace {

struct Cell {
    std::size_t width_pos = 0;
    std::size_t width = 0;
    int trial = 0;
};

// Expected surviving fraction 1 - alpha + alpha*p; a run outside three
// binomial standard deviations is reported but not fatal.
void check_sparsity_band(const CompressedNetwork& cn, const CompressionPlan& plan,
                         double nnz_fraction, std::size_t targeted_size) {
    if (plan.mode != CompressMode::Prune || plan.structured) return;
    const double expected = 1.0 - plan.alpha + plan.alpha * plan.p;
    const double compressed =
        plan.alpha * static_cast<double>(targeted_size);  // floor is within 1
    const double sigma =
        std::sqrt(compressed * plan.p * (1.0 - plan.p)) / static_cast<double>(targeted_size);
    if (std::fabs(nnz_fraction - expected) > 3.0 * sigma)
        std::cerr << "sweep: surviving fraction " << nnz_fraction << " outside "
                  << expected << " +- 3 sigma (seed " << plan.seed << ")\n";
    (void)cn;
}

std::vector<SweepRow> run_cell(const SweepConfig& cfg, const Dataset& data, const Cell& cell) {
    std::vector<SweepRow> rows;
    const std::uint64_t train_seed =
        derive_seed(cfg.master_seed,
                    {static_cast<std::uint64_t>(cell.width), static_cast<std::uint64_t>(cell.trial),
                     0x7261696eULL});  // training stream

    std::vector<Vector> train_x, train_y, test_x, test_y;
    for (std::size_t i : data.train_idx) {
        train_x.push_back(data.X[i]);
        train_y.push_back(data.Y[i]);
    }
    for (std::size_t i : data.test_idx) {
        test_x.push_back(data.X[i]);
        test_y.push_back(data.Y[i]);
    }

    TrainConfig tc = cfg.train;
    tc.seed = train_seed;
    Mlp dense;
    bool diverged = false;
    try {
        Mlp init = init_glorot(cfg.dims_for(cell.width), cfg.activations, train_seed);
        dense = train(std::move(init), data, tc).net;
    } catch (const TrainingDiverged&) {
        diverged = true;
    }

    for (int rep = 0; rep < cfg.prunes_per_trial; ++rep) {
        SweepRow row;
        row.width = cell.width;
        row.trial = cell.trial;
        row.rep = rep;
        row.seed = sweep_cell_seed(cfg.master_seed, cell.width, cell.trial, rep);
        if (diverged) {
            row.diverged = true;
            row.delta = std::numeric_limits<double>::quiet_NaN();
            row.task = std::numeric_limits<double>::quiet_NaN();
            row.nnz_fraction = std::numeric_limits<double>::quiet_NaN();
            rows.push_back(row);
            continue;
        }

        CompressionPlan plan = cfg.plan;
        plan.score_batch.assign(train_x.begin(),
                                train_x.begin() +
                                    std::min(cfg.score_batch_size, train_x.size()));
        if (plan.score_target == ScoreTarget::LabeledLoss)
            plan.score_labels.assign(train_y.begin(),
                                     train_y.begin() + plan.score_batch.size());

        CompressedNetwork best;
        double best_delta = std::numeric_limits<double>::infinity();
        for (int t = 0; t < cfg.best_of; ++t) {
            plan.seed = derive_seed(row.seed, {static_cast<std::uint64_t>(t)});
            CompressedNetwork cn = compress_network(dense, plan);
            const double d = delta_metric(dense, cn, test_x, cfg.projected_metric);
            if (d < best_delta) {
                best_delta = d;
                best = std::move(cn);
            }
        }
        row.delta = best_delta;
        row.task = task_metric(best.net, test_x, test_y, data.kind);

        std::size_t nnz = 0, total = 0;
        for (std::size_t l = 1; l <= dense.depth(); ++l) {
            if (!cfg.plan.sets.in_w(l) && !cfg.plan.sets.in_b(l)) continue;
            const Matrix& w = best.net.layers[l - 1].weights;
            total += w.data.size();
            for (double v : w.data) nnz += v != 0.0;
        }
        row.nnz_fraction =
            total > 0 ? static_cast<double>(nnz) / static_cast<double>(total) : 1.0;
        check_sparsity_band(best, plan, row.nnz_fraction, total);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

std::vector<SweepRow> run_width_sweep(const SweepConfig& cfg, const Dataset& data) {
    cfg.validate();
    if (data.train_idx.empty() || data.test_idx.empty())
        throw std::invalid_argument("sweep: dataset must be split first");

    std::vector<Cell> cells;
    for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi)
        for (int t = 0; t < cfg.trials_per_width; ++t)
            cells.push_back({wi, cfg.widths[wi], t});

    std::vector<std::vector<SweepRow>> results(cells.size());
    if (cfg.threads == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) results[i] = run_cell(cfg, data, cells[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::mutex error_mu;
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                try {
                    results[i] = run_cell(cfg, data, cells[i]);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        const int nthreads = std::min<int>(cfg.threads, static_cast<int>(cells.size()));
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
        if (error) std::rethrow_exception(error);
    }

    std::vector<SweepRow> rows;
    for (const auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "width,trial,prune_rep,delta,task_metric,nnz_fraction,seed\n";
    for (const SweepRow& r : rows)
        out << r.width << ',' << r.trial << ',' << r.rep << ',' << format_double(r.delta)
            << ',' << format_double(r.task) << ',' << format_double(r.nnz_fraction) << ','
            << r.seed << '\n';
    return out.str();
}

std::string sweep_plan_listing(const SweepConfig& cfg) {
    cfg.validate();
    std::ostringstream out;
    out << "width,trial,prune_rep,seed\n";
    for (std::size_t w : cfg.widths)
        for (int t = 0; t < cfg.trials_per_width; ++t)
            for (int r = 0; r < cfg.prunes_per_trial; ++r)
                out << w << ',' << t << ',' << r << ','
                    << sweep_cell_seed(cfg.master_seed, w, t, r) << '\n';
    return out.str();
}

std::string summarize_sweep_csv(const std::string& csv_text) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("summary: empty csv");

    struct Acc {
        std::vector<double> delta, task;
    };
    std::map<std::size_t, Acc> by_width;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() < 7) throw std::runtime_error("summary: malformed row: " + line);
        const std::size_t width = std::stoull(cells[0]);
        const double delta = std::stod(cells[3]);
        const double task = std::stod(cells[4]);
        if (std::isnan(delta)) continue;  // diverged cell
        by_width[width].delta.push_back(delta);
        by_width[width].task.push_back(task);
    }

    auto mean_stderr = [](const std::vector<double>& v) {
        const double n = static_cast<double>(v.size());
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var = v.size() > 1 ? var / (n - 1.0) : 0.0;
        return std::pair<double, double>(mean, std::sqrt(var / n));
    };

    std::ostringstream out;
    out << "width   mean_delta (+-2se)         mean_task (+-2se)         n\n";
    for (const auto& [w, acc] : by_width) {
        const auto [dm, dse] = mean_stderr(acc.delta);
        const auto [tm, tse] = mean_stderr(acc.task);
        out << w << "  " << format_double(dm) << " (+-" << format_double(2.0 * dse) << ")  "
            << format_double(tm) << " (+-" << format_double(2.0 * tse) << ")  "
            << acc.delta.size() << "\n";
    }
    return out.str();
}

}  // namespace slimnn
