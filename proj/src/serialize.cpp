#include "credlab/serialize.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "credlab/errors.hpp"

namespace credlab {

namespace {

using nlohmann::json;
constexpr int kFormatVersion = 1;

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

json scaling_to_json(const ScalingParams& params) {
    return json{{"means", vector_to_json(params.means)},
                {"std_devs", vector_to_json(params.std_devs)}};
}

ScalingParams scaling_from_json(const json& j) {
    ScalingParams p;
    p.means = vector_from_json(j.at("means"));
    p.std_devs = vector_from_json(j.at("std_devs"));
    return p;
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ModelError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

void check_version(const json& j, const std::string& path) {
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kFormatVersion)
        throw ModelError("unsupported format version in " + path);
}

}  // namespace

void save_network(const NetworkModel& model, const ScalingParams& scaling,
                  const std::string& path) {
    json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "network";
    j["architecture"] = {{"hidden_sizes", model.arch.hidden_sizes},
                         {"activation", to_string(model.arch.activation)},
                         {"dropout_rate", model.arch.dropout_rate},
                         {"use_batchnorm", model.arch.use_batchnorm}};
    j["input_dim"] = model.input_dim;
    json layers = json::array();
    for (const auto& l : model.layers) {
        json weights = json::array();
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) weights.push_back(l.W(r, c));
        layers.push_back({{"rows", l.W.rows()},
                          {"cols", l.W.cols()},
                          {"weights", weights},
                          {"bias", vector_to_json(l.b)}});
    }
    j["layers"] = layers;
    json bn = json::array();
    for (const auto& l : model.bn) {
        bn.push_back({{"gamma", vector_to_json(l.gamma)},
                      {"beta", vector_to_json(l.beta)},
                      {"running_mean", vector_to_json(l.running_mean)},
                      {"running_var", vector_to_json(l.running_var)},
                      {"momentum", l.momentum},
                      {"eps", l.eps}});
    }
    j["batchnorm"] = bn;
    j["scaling"] = scaling_to_json(scaling);
    write_json(j, path);
}

std::pair<NetworkModel, ScalingParams> load_network(const std::string& path) {
    const json j = read_json(path);
    check_version(j, path);
    if (j.at("kind").get<std::string>() != "network")
        throw ModelError(path + " does not hold a network model");
    NetworkModel model;
    const json& arch = j.at("architecture");
    model.arch.hidden_sizes = arch.at("hidden_sizes").get<std::vector<int>>();
    model.arch.activation = activation_from_string(arch.at("activation").get<std::string>());
    model.arch.dropout_rate = arch.at("dropout_rate").get<double>();
    model.arch.use_batchnorm = arch.at("use_batchnorm").get<bool>();
    model.input_dim = j.at("input_dim").get<int>();
    for (const json& lj : j.at("layers")) {
        DenseLayer l;
        const auto rows = lj.at("rows").get<Eigen::Index>();
        const auto cols = lj.at("cols").get<Eigen::Index>();
        l.W.resize(rows, cols);
        const json& w = lj.at("weights");
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                l.W(r, c) = w[static_cast<std::size_t>(r * cols + c)].get<double>();
        l.b = vector_from_json(lj.at("bias"));
        model.layers.push_back(std::move(l));
    }
    for (const json& bj : j.at("batchnorm")) {
        BatchNormLayer l;
        l.gamma = vector_from_json(bj.at("gamma"));
        l.beta = vector_from_json(bj.at("beta"));
        l.running_mean = vector_from_json(bj.at("running_mean"));
        l.running_var = vector_from_json(bj.at("running_var"));
        l.momentum = bj.at("momentum").get<double>();
        l.eps = bj.at("eps").get<double>();
        model.bn.push_back(std::move(l));
    }
    return {std::move(model), scaling_from_json(j.at("scaling"))};
}

void save_tree_ensemble(const TreeEnsembleModel& model, const ScalingParams& scaling,
                        const std::string& path) {
    json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "tree_ensemble";
    j["mode"] = to_string(model.mode);
    j["base_score"] = model.base_score;
    j["tree_weights"] = model.tree_weights;
    json trees = json::array();
    for (const auto& t : model.trees) {
        json nodes = json::array();
        for (const auto& n : t.nodes)
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"value", n.value}});
        trees.push_back({{"nodes", nodes}});
    }
    j["trees"] = trees;
    j["scaling"] = scaling_to_json(scaling);
    write_json(j, path);
}

std::pair<TreeEnsembleModel, ScalingParams> load_tree_ensemble(const std::string& path) {
    const json j = read_json(path);
    check_version(j, path);
    if (j.at("kind").get<std::string>() != "tree_ensemble")
        throw ModelError(path + " does not hold a tree ensemble");
    TreeEnsembleModel model;
    model.mode = ensemble_mode_from_string(j.at("mode").get<std::string>());
    model.base_score = j.at("base_score").get<double>();
    model.tree_weights = j.at("tree_weights").get<std::vector<double>>();
    for (const json& tj : j.at("trees")) {
        Tree t;
        for (const json& nj : tj.at("nodes")) {
            TreeNode n;
            n.feature = nj.at("feature").get<int>();
            n.threshold = nj.at("threshold").get<double>();
            n.left = nj.at("left").get<int>();
            n.right = nj.at("right").get<int>();
            n.value = nj.at("value").get<double>();
            t.nodes.push_back(n);
        }
        model.trees.push_back(std::move(t));
    }
    if (model.tree_weights.size() != model.trees.size())
        throw ModelError("tree weight count mismatch in " + path);
    return {std::move(model), scaling_from_json(j.at("scaling"))};
}

void save_scaling(const ScalingParams& params, const std::string& path) {
    json j = scaling_to_json(params);
    j["format_version"] = kFormatVersion;
    write_json(j, path);
}

ScalingParams load_scaling(const std::string& path) {
    const json j = read_json(path);
    check_version(j, path);
    return scaling_from_json(j);
}

void save_transition_matrix(const TransitionMatrix& matrix, const std::string& path) {
    json j;
    j["format_version"] = kFormatVersion;
    j["matrix"] = {matrix.p[0][0], matrix.p[0][1], matrix.p[1][0], matrix.p[1][1]};
    j["labels"] = {"current", "delinquent"};
    write_json(j, path);
}

TransitionMatrix load_transition_matrix(const std::string& path) {
    const json j = read_json(path);
    check_version(j, path);
    const auto flat = j.at("matrix").get<std::vector<double>>();
    if (flat.size() != 4) throw ModelError("transition matrix must have 4 entries");
    TransitionMatrix m{};
    m.p[0][0] = flat[0];
    m.p[0][1] = flat[1];
    m.p[1][0] = flat[2];
    m.p[1][1] = flat[3];
    return m;
}

}  // namespace credlab
