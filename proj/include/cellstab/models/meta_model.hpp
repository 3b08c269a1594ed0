#pragma once

// Uniform train / predict / serialize surface over the four model families.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cellstab/dataset.hpp"
#include "cellstab/models/gradient_boosting.hpp"
#include "cellstab/models/linear.hpp"
#include "cellstab/models/shallow_lstm.hpp"
#include "cellstab/models/shallow_nn.hpp"

namespace cellstab {

enum class Family { linear, gradient_boosting, shallow_nn, shallow_lstm };

inline const char* to_string(Family f) {
    switch (f) {
        case Family::linear: return "linear";
        case Family::gradient_boosting: return "gradient_boosting";
        case Family::shallow_nn: return "shallow_nn";
        case Family::shallow_lstm: return "shallow_lstm";
    }
    return "?";
}

inline Family family_from_string(const std::string& s) {
    if (s == "linear" || s == "lr") return Family::linear;
    if (s == "gradient_boosting" || s == "gb") return Family::gradient_boosting;
    if (s == "shallow_nn" || s == "nn") return Family::shallow_nn;
    if (s == "shallow_lstm" || s == "lstm") return Family::shallow_lstm;
    throw Error("unknown model family '" + s + "'");
}

/// Short table label used in reports (LR / GB / NN / LSTM).
inline const char* short_name(Family f) {
    switch (f) {
        case Family::linear: return "LR";
        case Family::gradient_boosting: return "GB";
        case Family::shallow_nn: return "NN";
        case Family::shallow_lstm: return "LSTM";
    }
    return "?";
}

struct ModelSpec {
    Family family = Family::gradient_boosting;
    Task task = Task::classification;
    uint64_t seed = 0;
    LinearParams linear;
    GbParams gb;
    NetParams net;
};

struct TrainedModel {
    Family family = Family::linear;
    Task task = Task::classification;
    Layout layout;
    uint64_t seed = 0;
    std::variant<LinearModel, GbModel, ShallowNet, ShallowLstm> model;
    std::optional<Standardizer> standardizer;  // set when trained through the CLI
    int rounds_or_epochs = 0;

    /// Unclamped model output (logit for classification).
    Eigen::VectorXd raw(const Eigen::MatrixXd& x) const {
        if (x.cols() != layout.input_dim()) {
            throw Error("predict: feature layout mismatch (" + std::to_string(x.cols()) + " columns, model expects " +
                        std::to_string(layout.input_dim()) + ")");
        }
        return std::visit([&](const auto& m) -> Eigen::VectorXd { return m.raw(x); }, model);
    }
};

inline TrainedModel train_model(const ModelSpec& spec, const Design& train, const Design& val) {
    if (train.x.rows() == 0) throw Error("train: empty training set");
    if (val.x.rows() > 0 && !(val.layout == train.layout)) throw Error("train: train/val layout mismatch");
    TrainedModel tm;
    tm.family = spec.family;
    tm.task = spec.task;
    tm.layout = train.layout;
    tm.seed = spec.seed;
    switch (spec.family) {
        case Family::linear: {
            auto m = fit_linear(train, spec.task, spec.linear);
            tm.rounds_or_epochs = m.iterations;
            tm.model = std::move(m);
            break;
        }
        case Family::gradient_boosting: {
            auto m = fit_gradient_boosting(train, val, spec.task, spec.gb);
            tm.rounds_or_epochs = static_cast<int>(m.trees.size());
            tm.model = std::move(m);
            break;
        }
        case Family::shallow_nn: {
            ShallowNet net(train.layout.input_dim(), spec.net.hidden, spec.task);
            if (!spec.net.zero_init) net.init_random(spec.seed);
            tm.rounds_or_epochs = net.fit(train, val, spec.net, spec.seed).best_epoch;
            tm.model = std::move(net);
            break;
        }
        case Family::shallow_lstm: {
            ShallowLstm lstm(train.layout, spec.net.hidden, spec.task);
            if (!spec.net.zero_init) lstm.init_random(spec.seed);
            tm.rounds_or_epochs = lstm.fit(train, val, spec.net, spec.seed).best_epoch;
            tm.model = std::move(lstm);
            break;
        }
    }
    return tm;
}

/// Classification: probability of label 1 (IoU_adj = 0). Regression:
/// predicted IoU_adj clamped to [0, 1].
inline Eigen::VectorXd predict(const TrainedModel& model, const Eigen::MatrixXd& rows) {
    Eigen::VectorXd out = model.raw(rows);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out(i) = model.task == Task::classification ? detail::sigmoid(out(i)) : std::clamp(out(i), 0.0, 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline nlohmann::ordered_json model_to_json(const TrainedModel& tm) {
    nlohmann::ordered_json j;
    j["format"] = "cellstab-model";
    j["version"] = 1;
    j["family"] = to_string(tm.family);
    j["task"] = to_string(tm.task);
    j["seed"] = tm.seed;
    j["layout"] = {{"step_features", tm.layout.step_features}, {"history", tm.layout.history}};
    j["rounds_or_epochs"] = tm.rounds_or_epochs;
    nlohmann::ordered_json p;
    if (const auto* m = std::get_if<LinearModel>(&tm.model)) {
        p["weights"] = detail::vec_to_json(m->weights);
        p["intercept"] = m->intercept;
    } else if (const auto* m = std::get_if<GbModel>(&tm.model)) {
        p["base_score"] = m->base_score;
        p["learning_rate"] = m->learning_rate;
        auto trees = nlohmann::ordered_json::array();
        for (const Tree& t : m->trees) {
            auto nodes = nlohmann::ordered_json::array();
            for (const TreeNode& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
            trees.push_back(std::move(nodes));
        }
        p["trees"] = std::move(trees);
    } else if (const auto* m = std::get_if<ShallowNet>(&tm.model)) {
        p["hidden"] = m->hidden();
        p["theta"] = detail::vec_to_json(m->parameters());
    } else if (const auto* m = std::get_if<ShallowLstm>(&tm.model)) {
        p["hidden"] = m->hidden();
        p["theta"] = detail::vec_to_json(m->parameters());
    }
    j["parameters"] = std::move(p);
    if (tm.standardizer) j["standardizer"] = {{"mean", tm.standardizer->mean}, {"std", tm.standardizer->stdev}};
    return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != "cellstab-model" || j.value("version", 0) != 1) {
        throw Error("model JSON: unsupported format or version");
    }
    TrainedModel tm;
    tm.family = family_from_string(j.at("family").get<std::string>());
    tm.task = task_from_string(j.at("task").get<std::string>());
    tm.seed = j.at("seed").get<uint64_t>();
    tm.layout = {j.at("layout").at("step_features").get<int>(), j.at("layout").at("history").get<int>()};
    tm.rounds_or_epochs = j.value("rounds_or_epochs", 0);
    const auto& p = j.at("parameters");
    switch (tm.family) {
        case Family::linear: {
            LinearModel m;
            m.task = tm.task;
            m.weights = detail::vec_from_json(p.at("weights"));
            m.intercept = p.at("intercept").get<double>();
            if (m.weights.size() != tm.layout.input_dim()) throw Error("model JSON: weight count mismatch");
            tm.model = std::move(m);
            break;
        }
        case Family::gradient_boosting: {
            GbModel m;
            m.task = tm.task;
            m.base_score = p.at("base_score").get<double>();
            m.learning_rate = p.at("learning_rate").get<double>();
            for (const auto& tj : p.at("trees")) {
                Tree t;
                for (const auto& nj : tj) {
                    t.nodes.push_back({nj.at(0).get<int>(), nj.at(1).get<double>(), nj.at(2).get<int>(),
                                       nj.at(3).get<int>(), nj.at(4).get<double>()});
                }
                m.trees.push_back(std::move(t));
            }
            m.rounds_trained = static_cast<int>(m.trees.size());
            tm.model = std::move(m);
            break;
        }
        case Family::shallow_nn: {
            ShallowNet net(tm.layout.input_dim(), p.at("hidden").get<int>(), tm.task);
            net.parameters() = detail::vec_from_json(p.at("theta"));
            if (net.parameters().size() != ShallowNet::parameter_count(net.inputs(), net.hidden())) {
                throw Error("model JSON: parameter count mismatch");
            }
            tm.model = std::move(net);
            break;
        }
        case Family::shallow_lstm: {
            ShallowLstm lstm(tm.layout, p.at("hidden").get<int>(), tm.task);
            lstm.parameters() = detail::vec_from_json(p.at("theta"));
            if (lstm.parameters().size() != ShallowLstm::parameter_count(tm.layout.step_features, lstm.hidden())) {
                throw Error("model JSON: parameter count mismatch");
            }
            tm.model = std::move(lstm);
            break;
        }
    }
    if (j.contains("standardizer")) {
        Standardizer s;
        s.layout = tm.layout;
        s.mean = j["standardizer"].at("mean").get<std::vector<double>>();
        s.stdev = j["standardizer"].at("std").get<std::vector<double>>();
        tm.standardizer = std::move(s);
    }
    return tm;
}

inline void save_model(const std::filesystem::path& path, const TrainedModel& tm) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("save_model: cannot open " + path.string());
    out << model_to_json(tm).dump(1) << '\n';
}

inline TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_model: cannot open " + path.string());
    try {
        return model_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error("load_model: " + std::string(e.what()));
    }
}

}  // namespace cellstab
