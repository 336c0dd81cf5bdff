#pragma once

#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsic/errors.hpp"
#include "hsic/models.hpp"

namespace hsic {

/// JSON schema:
///   linear: {"kind":"linear","weights":[...],"bias":b}
///   mlp:    {"kind":"mlp","layer_dims":[...],"activation":"relu",
///            "dropout_prob":p,"weights":[[col-major flat]...],"biases":[[...]...]}
inline nlohmann::json to_json(const LinearModel& m) {
    nlohmann::json j;
    j["kind"] = "linear";
    j["weights"] = std::vector<double>(m.weights().data(),
                                       m.weights().data() + m.weights().size());
    j["bias"] = m.bias();
    return j;
}

inline nlohmann::json to_json(const MlpModel& m) {
    nlohmann::json j;
    j["kind"] = "mlp";
    j["layer_dims"] = m.layer_dims();
    j["activation"] = "relu";
    j["dropout_prob"] = m.dropout_prob();
    TensorSet p = m.params();
    std::vector<std::vector<double>> ws, bs;
    for (const auto& w : p.weights)
        ws.emplace_back(w.data(), w.data() + w.size());
    for (const auto& b : p.biases)
        bs.emplace_back(b.data(), b.data() + b.size());
    j["weights"] = ws;
    j["biases"] = bs;
    return j;
}

inline LinearModel linear_from_json(const nlohmann::json& j) {
    if (j.at("kind") != "linear") throw ParseError("linear_from_json: kind mismatch");
    auto w = j.at("weights").get<std::vector<double>>();
    if (w.empty()) throw ParseError("linear_from_json: empty weights");
    LinearModel m(static_cast<Eigen::Index>(w.size()));
    m.set_weights(Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())));
    m.set_bias(j.at("bias").get<double>());
    return m;
}

inline MlpModel mlp_from_json(const nlohmann::json& j) {
    if (j.at("kind") != "mlp") throw ParseError("mlp_from_json: kind mismatch");
    if (j.at("activation") != "relu")
        throw ParseError("mlp_from_json: unsupported activation");
    auto dims = j.at("layer_dims").get<std::vector<Eigen::Index>>();
    std::mt19937_64 dummy(0);
    MlpModel m(dims, j.at("dropout_prob").get<double>(), dummy);
    TensorSet p = m.params();
    auto ws = j.at("weights").get<std::vector<std::vector<double>>>();
    auto bs = j.at("biases").get<std::vector<std::vector<double>>>();
    if (ws.size() != p.weights.size() || bs.size() != p.biases.size())
        throw ParseError("mlp_from_json: layer count mismatch");
    for (std::size_t i = 0; i < ws.size(); ++i) {
        if (static_cast<Eigen::Index>(ws[i].size()) != p.weights[i].size())
            throw ParseError("mlp_from_json: weight tensor size mismatch");
        p.weights[i] = Eigen::Map<Eigen::MatrixXd>(ws[i].data(), p.weights[i].rows(),
                                                   p.weights[i].cols());
    }
    for (std::size_t i = 0; i < bs.size(); ++i) {
        if (static_cast<Eigen::Index>(bs[i].size()) != p.biases[i].size())
            throw ParseError("mlp_from_json: bias tensor size mismatch");
        p.biases[i] = Eigen::Map<Eigen::VectorXd>(bs[i].data(), p.biases[i].size());
    }
    m.set_params(p);
    return m;
}

template <class Model>
void save_model(const Model& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("save_model: cannot open " + path);
    out << to_json(m).dump(2) << "\n";
}

inline nlohmann::json load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_model_json: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

} // namespace hsic
