#include "slimnn/model_json.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace slimnn {

using nlohmann::json;

std::string model_to_json(const Mlp& net, const std::optional<std::vector<double>>& kappa) {
    net.validate();
    json j;
    j["dims"] = net.dims();
    json acts = json::array();
    json weights = json::array();
    double softplus_beta = 10.0;
    bool has_softplus = false;
    for (const Layer& l : net.layers) {
        acts.push_back(activation_name(l.activation));
        weights.push_back(l.weights.data);
        if (l.activation.kind == ActKind::Softplus) {
            has_softplus = true;
            softplus_beta = l.activation.beta;
        }
    }
    j["activations"] = acts;
    j["weights"] = weights;
    if (has_softplus) j["softplus_beta"] = softplus_beta;
    if (kappa) {
        json k = json::array();
        for (double v : *kappa) {
            if (std::isfinite(v)) k.push_back(v);
            else k.push_back(nullptr);
        }
        j["kappa"] = k;
    } else {
        j["kappa"] = nullptr;
    }
    return j.dump(2);
}

ModelFile model_from_json(const std::string& text) {
    json j = json::parse(text);
    if (!j.contains("dims") || !j.contains("activations") || !j.contains("weights"))
        throw std::invalid_argument("model json: missing dims/activations/weights");

    const auto dims = j["dims"].get<std::vector<std::size_t>>();
    const auto act_names = j["activations"].get<std::vector<std::string>>();
    if (dims.size() < 2) throw std::invalid_argument("model json: need at least 2 dims");
    const std::size_t m = dims.size() - 1;
    if (act_names.size() != m)
        throw std::invalid_argument("model json: activations length != layer count");
    if (j["weights"].size() != m)
        throw std::invalid_argument("model json: weights length != layer count");
    const double beta = j.value("softplus_beta", 10.0);

    ModelFile mf;
    mf.net.layers.resize(m);
    for (std::size_t l = 0; l < m; ++l) {
        Matrix w(dims[l + 1], dims[l]);
        auto flat = j["weights"][l].get<std::vector<double>>();
        if (flat.size() != w.rows * w.cols)
            throw std::invalid_argument("model json: weight array size mismatch at layer " +
                                        std::to_string(l + 1));
        w.data = std::move(flat);
        mf.net.layers[l] = Layer{std::move(w), activation_from_name(act_names[l], beta)};
    }
    mf.net.validate();

    if (j.contains("kappa") && !j["kappa"].is_null()) {
        std::vector<double> k;
        for (const auto& e : j["kappa"]) {
            k.push_back(e.is_null() ? kNoProjection : e.get<double>());
        }
        if (k.size() != m) throw std::invalid_argument("model json: kappa length != layer count");
        mf.kappa = std::move(k);
    }
    return mf;
}

void save_model(const std::string& path, const Mlp& net,
                const std::optional<std::vector<double>>& kappa) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << model_to_json(net, kappa) << '\n';
}

ModelFile load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

}  // namespace slimnn
