#include "slimnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "slimnn/mlp.hpp"
#include "slimnn/rng.hpp"
#include "slimnn/trainer.hpp"

namespace slimnn {

std::size_t Dataset::num_classes() const {
    if (kind != TaskKind::Classification) return 0;
    double m = 0.0;
    for (const Vector& y : Y) m = std::max(m, y.front());
    return static_cast<std::size_t>(m) + 1;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("csv: non-numeric cell at row " + std::to_string(row) +
                                 ", column " + std::to_string(col));
    }
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::vector<std::size_t>& target_cols,
                  TaskKind kind) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty file");
    const std::size_t ncols = split_line(line).size();
    for (std::size_t c : target_cols)
        if (c >= ncols) throw std::runtime_error("csv: target column out of range");

    std::vector<bool> is_target(ncols, false);
    for (std::size_t c : target_cols) is_target[c] = true;

    Dataset ds;
    ds.kind = kind;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != ncols)
            throw std::runtime_error("csv: ragged row " + std::to_string(row) + " (" +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(ncols) + ")");
        Vector x, y;
        for (std::size_t c = 0; c < ncols; ++c) {
            const double v = parse_cell(cells[c], row, c);
            (is_target[c] ? y : x).push_back(v);
        }
        if (kind == TaskKind::Classification) {
            if (y.size() != 1 || y.front() != std::floor(y.front()) || y.front() < 0)
                throw std::runtime_error("csv: classification target must be a single "
                                         "nonnegative integer (row " + std::to_string(row) + ")");
        }
        ds.X.push_back(std::move(x));
        ds.Y.push_back(std::move(y));
        ++row;
    }
    if (ds.X.empty()) throw std::runtime_error("csv: header only, no data rows");
    return ds;
}

Dataset load_csv(const std::string& path, const std::vector<std::size_t>& target_cols,
                 TaskKind kind) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_csv(text, target_cols, kind);
}

Dataset normalize_unit_ball(Dataset ds) {
    double max_norm = 0.0;
    if (!ds.train_idx.empty()) {
        for (std::size_t i : ds.train_idx) max_norm = std::max(max_norm, norm2(ds.X[i]));
    } else {
        for (const Vector& x : ds.X) max_norm = std::max(max_norm, norm2(x));
    }
    const double scale = max_norm > 0.0 ? 1.0 / max_norm : 1.0;
    ds.norm_scale *= scale;
    ds.rescaled_rows = 0;
    for (Vector& x : ds.X) {
        for (double& v : x) v *= scale;
        const double n = norm2(x);
        if (n > 1.0) {
            for (double& v : x) v /= n;
            ++ds.rescaled_rows;
        }
    }
    return ds;
}

Dataset split_80_20(Dataset ds, std::uint64_t seed) {
    const std::size_t n = ds.size();
    if (n < 5) throw std::runtime_error("split: need at least 5 rows");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, {0}));
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.index(i + 1)]);
    const std::size_t ntrain =
        static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(n)));
    ds.train_idx.assign(perm.begin(), perm.begin() + ntrain);
    ds.test_idx.assign(perm.begin() + ntrain, perm.end());
    return ds;
}

Dataset synthetic_teacher(std::size_t dim_in, std::size_t dim_out, std::size_t width,
                          std::size_t n, double noise_sigma, std::uint64_t seed) {
    if (noise_sigma < 0.0) throw std::invalid_argument("synthetic_teacher: negative noise");
    const Mlp teacher = init_glorot({dim_in, width, dim_out},
                                    {Activation(ActKind::Tanh), Activation(ActKind::Identity)},
                                    derive_seed(seed, {1}));
    Rng rx(derive_seed(seed, {2}));
    Rng rnoise(derive_seed(seed, {3}));

    Dataset ds;
    ds.kind = TaskKind::Regression;
    ds.X.reserve(n);
    ds.Y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        // uniform in the unit ball: normal direction, radius U^(1/d)
        Vector x(dim_in);
        double nn = 0.0;
        do {
            for (double& v : x) v = rx.normal();
            nn = norm2(x);
        } while (nn == 0.0);
        const double r = std::pow(rx.uniform01(), 1.0 / static_cast<double>(dim_in));
        for (double& v : x) v *= r / nn;

        Vector y = forward_output(teacher, x);
        for (double& v : y) v += noise_sigma * rnoise.normal();
        ds.X.push_back(std::move(x));
        ds.Y.push_back(std::move(y));
    }
    return ds;
}

std::string dataset_manifest_json(const Dataset& ds, const std::string& source,
                                  std::uint64_t split_seed) {
    nlohmann::json j;
    j["source"] = source;
    j["rows"] = ds.size();
    j["input_dim"] = ds.input_dim();
    j["target_dim"] = ds.target_dim();
    j["kind"] = ds.kind == TaskKind::Regression ? "regression" : "classification";
    j["norm_scale"] = ds.norm_scale;
    j["rescaled_rows"] = ds.rescaled_rows;
    j["split_seed"] = split_seed;
    j["train_rows"] = ds.train_idx.size();
    j["test_rows"] = ds.test_idx.size();
    return j.dump(2);
}

}  // namespace slimnn
