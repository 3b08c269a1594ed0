#pragma once

#include <algorithm>
#include <exception>
#include <limits>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cellstab/csv.hpp"
#include "cellstab/dataset.hpp"
#include "cellstab/models/meta_model.hpp"

namespace cellstab {

// ---------------------------------------------------------------------------
// Metrics

/// Fraction of samples where (score >= threshold) agrees with the label.
inline double accuracy(std::span<const int> labels, std::span<const double> scores, double threshold = 0.5) {
    if (labels.empty() || labels.size() != scores.size()) throw Error("accuracy: need equal-length non-empty inputs");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += (scores[i] >= threshold ? 1 : 0) == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

/// Probability that a random positive outscores a random negative (ties
/// count one half), computed from average ranks.
inline double auroc(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw Error("auroc: length mismatch");
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positives = 0.0;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                positives += 1.0;
                rank_sum += avg_rank;
            }
        }
        i = j;
    }
    const double negatives = static_cast<double>(n) - positives;
    if (positives == 0.0 || negatives == 0.0) throw Error("auroc: need at least one positive and one negative");
    return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

/// ROC points for thresholds at every distinct score (descending), starting at (0,0).
inline std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores) {
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const double neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0 || neg == 0) throw Error("roc_curve: need both classes");
    std::vector<RocPoint> pts = {{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == 1 ? tp : fp) += 1.0;
            ++j;
        }
        pts.push_back({scores[order[i]], fp / neg, tp / pos});
        i = j;
    }
    return pts;
}

inline double r_squared(std::span<const double> targets, std::span<const double> predictions) {
    if (targets.size() < 2 || targets.size() != predictions.size()) throw Error("r_squared: need >= 2 paired values");
    const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        ss_res += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
        ss_tot += (targets[i] - mean) * (targets[i] - mean);
    }
    if (ss_tot == 0.0) throw Error("r_squared: targets have zero variance");
    return 1.0 - ss_res / ss_tot;
}

/// Root mean squared residual.
inline double regression_sigma(std::span<const double> targets, std::span<const double> predictions) {
    if (targets.empty() || targets.size() != predictions.size()) throw Error("regression_sigma: need paired values");
    double ss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) ss += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
    return std::sqrt(ss / static_cast<double>(targets.size()));
}

/// Majority-class rate: the accuracy reached by thresholding random scores at
/// the better side. Its AUROC is 0.5.
inline double naive_baseline_accuracy(std::size_t n_total, std::size_t n_iou_zero) {
    if (n_total == 0 || n_iou_zero > n_total) throw Error("naive_baseline_accuracy: need 0 <= n_iou_zero <= n_total, n_total >= 1");
    return static_cast<double>(std::max(n_iou_zero, n_total - n_iou_zero)) / static_cast<double>(n_total);
}

// ---------------------------------------------------------------------------
// Experiments

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Population standard deviation over runs.
inline MeanStd mean_std(const std::vector<double>& v) {
    if (v.empty()) return {};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

struct ReportRow {
    std::string role;   // model | entropy_baseline | naive_baseline
    std::string model;  // LR, GB, NN, LSTM, ...
    Task task = Task::classification;
    int m = 0;
    int T = 0;
    std::string metric;  // ACC, AUROC, sigma, R2
    double mean = 0.0;
    double std = 0.0;
    std::vector<double> values;
};

/// Best setting along one sweep axis (m at fixed T, or T at fixed m).
struct BestRow {
    std::string model;
    Task task = Task::classification;
    std::string metric;
    std::string axis;  // "m" or "T"
    int fixed = 0;     // value of the other axis
    int best = 0;
    double mean = 0.0;
    double std = 0.0;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    std::vector<BestRow> best;

    const ReportRow* find(const std::string& role, const std::string& model, Task task, int m, int T,
                          const std::string& metric) const {
        for (const auto& r : rows) {
            if (r.role == role && r.model == model && r.task == task && r.m == m && r.T == T && r.metric == metric) return &r;
        }
        return nullptr;
    }
};

struct ExperimentConfig {
    std::vector<Family> families = {Family::linear, Family::gradient_boosting, Family::shallow_nn, Family::shallow_lstm};
    std::vector<Task> tasks = {Task::classification, Task::regression};
    std::vector<std::pair<int, int>> settings = {{0, 0}};  // (m, T)
    SplitSpec split;
    ModelSpec model;  // hyperparameters; family/task/seed are filled per cell
    bool entropy_baseline = true;
    bool naive_baseline = true;
    double threshold = 0.5;
    int threads = 1;
};

inline bool higher_is_better(const std::string& metric) { return metric != "sigma"; }

namespace detail {

struct CellScores {
    std::vector<int> labels;
    std::vector<double> targets;
    std::vector<double> scores;
};

inline void add_metrics(std::map<std::string, double>& out, Task task, const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                        double threshold) {
    std::vector<double> ys(y.data(), y.data() + y.size());
    std::vector<double> ss(s.data(), s.data() + s.size());
    if (task == Task::classification) {
        std::vector<int> labels(ys.size());
        std::transform(ys.begin(), ys.end(), labels.begin(), [](double v) { return v > 0.5 ? 1 : 0; });
        out["ACC"] = accuracy(labels, ss, threshold);
        out["AUROC"] = auroc(labels, ss);
    } else {
        out["sigma"] = regression_sigma(ys, ss);
        out["R2"] = r_squared(ys, ss);
    }
}

}  // namespace detail

/// Runs every (family, task, setting) cell plus baselines over spec.runs
/// random splits. `ds` must be built with the largest m and T in settings.
inline EvalReport run_experiment(const MetaDataset& ds, const ExperimentConfig& cfg) {
    cfg.split.validate();
    for (auto [m, T] : cfg.settings) {
        if (m < 0 || m > ds.num_stability || T < 0 || T > ds.history) {
            throw Error("run_experiment: setting (m=" + std::to_string(m) + ", T=" + std::to_string(T) +
                        ") exceeds the dataset (m<=" + std::to_string(ds.num_stability) + ", T<=" +
                        std::to_string(ds.history) + ")");
        }
    }
    using Key = std::tuple<std::string, std::string, int, int, int, std::string>;  // role, model, task, m, T, metric
    const int runs = cfg.split.runs;
    std::vector<std::map<Key, double>> per_run(runs);

    auto run_one = [&](int run) {
        const SplitIndices idx = split(ds.records.size(), cfg.split, run);
        auto& out = per_run[run];
        for (auto [m, T] : cfg.settings) {
            const MetaDataset view = select_view(ds, m, T);
            for (Task task : cfg.tasks) {
                Design train = make_design(view, idx.train, task);
                Design val = make_design(view, idx.val, task);
                Design test = make_design(view, idx.test, task);
                standardize(train, val, test);
                for (Family family : cfg.families) {
                    ModelSpec spec = cfg.model;
                    spec.family = family;
                    spec.task = task;
                    spec.seed = cfg.split.seed * 1000003ULL + static_cast<uint64_t>(run);
                    const TrainedModel tm = train_model(spec, train, val);
                    std::map<std::string, double> metrics;
                    detail::add_metrics(metrics, task, test.y, predict(tm, test.x), cfg.threshold);
                    for (const auto& [name, value] : metrics) {
                        out[{"model", short_name(family), static_cast<int>(task), m, T, name}] = value;
                    }
                }
            }
        }
        if (cfg.entropy_baseline) {
            const MetaDataset view = select_view(ds, 0, 0);
            for (Task task : cfg.tasks) {
                Design train = restrict_features(make_design(view, idx.train, task), {kMeanEntropyIndex});
                Design val = restrict_features(make_design(view, idx.val, task), {kMeanEntropyIndex});
                Design test = restrict_features(make_design(view, idx.test, task), {kMeanEntropyIndex});
                standardize(train, val, test);
                ModelSpec spec = cfg.model;
                spec.family = Family::gradient_boosting;
                spec.task = task;
                spec.seed = cfg.split.seed * 1000003ULL + static_cast<uint64_t>(run);
                const TrainedModel tm = train_model(spec, train, val);
                std::map<std::string, double> metrics;
                detail::add_metrics(metrics, task, test.y, predict(tm, test.x), cfg.threshold);
                for (const auto& [name, value] : metrics) {
                    out[{"entropy_baseline", "GB(E)", static_cast<int>(task), 0, 0, name}] = value;
                }
            }
        }
        if (cfg.naive_baseline) {
            std::size_t zeros = 0;
            for (auto i : idx.test) zeros += ds.records[i].label;
            out[{"naive_baseline", "naive", static_cast<int>(Task::classification), 0, 0, "ACC"}] =
                naive_baseline_accuracy(idx.test.size(), zeros);
            out[{"naive_baseline", "naive", static_cast<int>(Task::classification), 0, 0, "AUROC"}] = 0.5;
        }
    };

    const int threads = std::clamp(cfg.threads, 1, runs);
    if (threads == 1) {
        for (int r = 0; r < runs; ++r) run_one(r);
    } else {
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (int r = t; r < runs; r += threads) run_one(r);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // Reduce in key order so the report does not depend on scheduling.
    std::map<Key, std::vector<double>> merged;
    for (const auto& run : per_run)
        for (const auto& [k, v] : run) merged[k].push_back(v);
    EvalReport report;
    for (const auto& [k, values] : merged) {
        const auto& [role, model, task, m, T, metric] = k;
        const MeanStd ms = mean_std(values);
        report.rows.push_back({role, model, static_cast<Task>(task), m, T, metric, ms.mean, ms.std, values});
    }

    // Best m per fixed T and best T per fixed m, over test means.
    for (const char* axis : {"m", "T"}) {
        std::map<std::tuple<std::string, int, std::string, int>, std::vector<const ReportRow*>> groups;
        for (const auto& r : report.rows) {
            if (r.role != "model") continue;
            const int fixed = axis[0] == 'm' ? r.T : r.m;
            groups[{r.model, static_cast<int>(r.task), r.metric, fixed}].push_back(&r);
        }
        for (const auto& [g, members] : groups) {
            if (members.size() < 2) continue;
            const bool up = higher_is_better(std::get<2>(g));
            const ReportRow* best = members.front();
            for (const ReportRow* r : members) {
                if (up ? r->mean > best->mean : r->mean < best->mean) best = r;
            }
            report.best.push_back({best->model, best->task, best->metric, axis, std::get<3>(g),
                                   axis[0] == 'm' ? best->m : best->T, best->mean, best->std});
        }
    }
    return report;
}

/// Entropy-only gradient boosting baseline for both tasks.
inline EvalReport entropy_baseline(const MetaDataset& ds, const SplitSpec& split_spec, const ModelSpec& model = {}) {
    ExperimentConfig cfg;
    cfg.families.clear();
    cfg.settings.clear();
    cfg.split = split_spec;
    cfg.model = model;
    cfg.naive_baseline = false;
    return run_experiment(ds, cfg);
}

// ---------------------------------------------------------------------------
// Report output

inline void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_report: cannot open " + path.string());
    out << "role,model,task,m,T,metric,mean,std,runs\n";
    for (const auto& r : report.rows) {
        out << r.role << ',' << r.model << ',' << to_string(r.task) << ',' << r.m << ',' << r.T << ',' << r.metric << ','
            << csv::fmt(r.mean) << ',' << csv::fmt(r.std) << ',' << r.values.size() << '\n';
    }
}

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["format"] = "cellstab-report";
    j["version"] = 1;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"role", r.role},
                        {"model", r.model},
                        {"task", to_string(r.task)},
                        {"m", r.m},
                        {"T", r.T},
                        {"metric", r.metric},
                        {"mean", r.mean},
                        {"std", r.std},
                        {"values", r.values}});
    }
    j["rows"] = std::move(rows);
    auto best = nlohmann::ordered_json::array();
    for (const auto& b : report.best) {
        best.push_back({{"model", b.model},
                        {"task", to_string(b.task)},
                        {"metric", b.metric},
                        {"axis", b.axis},
                        {"fixed", b.fixed},
                        {"best", b.best},
                        {"mean", b.mean},
                        {"std", b.std}});
    }
    j["best"] = std::move(best);
    return j;
}

inline void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_report: cannot open " + path.string());
    out << report_to_json(report).dump(2) << '\n';
}

}  // namespace cellstab
