#pragma once

// Time-series meta datasets, train/val/test splits and standardization.
//
// A MetaRecord holds the current feature vector of a segment plus up to T
// historical vectors of the same track (slot s = frame t-s). The flat model
// input is the slot-major feature block followed by the T+1 presence flags.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cellstab/csv.hpp"
#include "cellstab/seg_metrics.hpp"

namespace cellstab {

inline constexpr int kMaxHistory = 10;

struct MetaRecord {
    int track_id = 0;
    int frame = 0;
    int component = 0;
    int32_t class_id = 0;
    std::vector<double> features;  // (T+1) * F, slot-major, slot 0 = current frame
    std::vector<uint8_t> mask;     // T+1 presence flags, mask[0] = 1
    double iou_adj = 0.0;
    int label = 0;                 // 1 iff iou_adj == 0
};

struct MetaDataset {
    int num_classes = 0;
    int num_stability = 0;
    int history = 0;
    std::vector<MetaRecord> records;

    int step_features() const { return feature_count(num_classes, num_stability); }
};

/// Builds one record per segment with non-empty interior. History slots come
/// from the same track id at frames t-1..t-T; when several components share
/// an id in one frame, the largest (then lowest component index) represents it.
inline MetaDataset build_time_series(const std::vector<SegmentFeatures>& rows, int num_classes, int num_stability,
                                     int history, int max_history = kMaxHistory) {
    if (history < 0 || history > max_history) {
        throw Error("build_time_series: T = " + std::to_string(history) + " outside [0, " + std::to_string(max_history) + "]");
    }
    const std::size_t width = static_cast<std::size_t>(feature_count(num_classes, num_stability));
    std::map<std::pair<int, int>, std::size_t> representative;  // (track, frame) -> row
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (!f.track_id) throw Error("build_time_series: segment without track id (run tracking first)");
        if (f.values.size() != width) throw Error("build_time_series: feature vector length mismatch");
        auto [it, inserted] = representative.try_emplace({*f.track_id, f.frame}, i);
        if (!inserted) {
            const auto& cur = rows[it->second];
            if (f.values[0] > cur.values[0] || (f.values[0] == cur.values[0] && f.component < cur.component)) it->second = i;
        }
    }

    MetaDataset ds{num_classes, num_stability, history, {}};
    for (const auto& f : rows) {
        if (!f.has_interior) continue;
        MetaRecord r;
        r.track_id = *f.track_id;
        r.frame = f.frame;
        r.component = f.component;
        r.class_id = f.class_id;
        r.iou_adj = f.iou_adj;
        r.label = f.iou_adj == 0.0 ? 1 : 0;
        r.features.assign((history + 1) * width, 0.0);
        r.mask.assign(history + 1, 0);
        std::copy(f.values.begin(), f.values.end(), r.features.begin());
        r.mask[0] = 1;
        for (int s = 1; s <= history; ++s) {
            auto it = representative.find({r.track_id, f.frame - s});
            if (it == representative.end()) continue;
            const auto& past = rows[it->second].values;
            std::copy(past.begin(), past.end(), r.features.begin() + s * width);
            r.mask[s] = 1;
        }
        ds.records.push_back(std::move(r));
    }
    return ds;
}

/// Restricts a dataset to m stability blocks and T history slots, both no
/// larger than what it was built with.
inline MetaDataset select_view(const MetaDataset& ds, int num_stability, int history) {
    if (num_stability < 0 || num_stability > ds.num_stability) throw Error("select_view: m out of range");
    if (history < 0 || history > ds.history) throw Error("select_view: T out of range");
    const std::size_t src_width = ds.step_features();
    const std::size_t width = feature_count(ds.num_classes, num_stability);
    MetaDataset out{ds.num_classes, num_stability, history, {}};
    out.records.reserve(ds.records.size());
    for (const auto& r : ds.records) {
        MetaRecord v = r;
        v.features.resize((history + 1) * width);
        for (int s = 0; s <= history; ++s) {
            std::copy_n(r.features.begin() + s * src_width, width, v.features.begin() + s * width);
        }
        v.mask.resize(history + 1);
        out.records.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
    double train_fraction = 0.70;
    double val_fraction = 0.10;
    double test_fraction = 0.20;
    std::size_t sample_size = 38000;  // 0 = use every record
    int runs = 10;
    uint64_t seed = 0;

    void validate() const {
        if (train_fraction <= 0 || val_fraction < 0 || test_fraction <= 0 ||
            std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
            throw Error("SplitSpec: fractions must be positive and sum to 1");
        }
        if (runs < 1) throw Error("SplitSpec: runs must be >= 1");
    }
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

inline SplitIndices split(std::size_t num_records, const SplitSpec& spec, int run) {
    spec.validate();
    const std::size_t n = spec.sample_size == 0 ? num_records : spec.sample_size;
    if (n > num_records) {
        throw Error("split: insufficient records (" + std::to_string(num_records) + " available, " + std::to_string(n) +
                    " requested)");
    }
    std::vector<std::size_t> order(num_records);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<uint32_t>(spec.seed), static_cast<uint32_t>(spec.seed >> 32), static_cast<uint32_t>(run)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(spec.val_fraction * n)));
    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.begin() + n);
    return s;
}

// ---------------------------------------------------------------------------
// Flat design matrices

struct Layout {
    int step_features = 0;
    int history = 0;

    int slots() const { return history + 1; }
    int feature_columns() const { return slots() * step_features; }
    int input_dim() const { return slots() * (step_features + 1); }
    int mask_column(int slot) const { return feature_columns() + slot; }
    bool operator==(const Layout&) const = default;
};

enum class Task { classification, regression };

inline const char* to_string(Task t) { return t == Task::classification ? "classification" : "regression"; }
inline Task task_from_string(const std::string& s) {
    if (s == "classification") return Task::classification;
    if (s == "regression") return Task::regression;
    throw Error("unknown task '" + s + "'");
}

struct Design {
    Layout layout;
    Eigen::MatrixXd x;  // rows = samples, cols = layout.input_dim()
    Eigen::VectorXd y;  // label (classification) or iou_adj (regression)
};

inline Layout layout_of(const MetaDataset& ds) { return {ds.step_features(), ds.history}; }

inline Design make_design(const MetaDataset& ds, const std::vector<std::size_t>& indices, Task task) {
    Design d;
    d.layout = layout_of(ds);
    const int fc = d.layout.feature_columns();
    d.x.resize(static_cast<Eigen::Index>(indices.size()), d.layout.input_dim());
    d.y.resize(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& r = ds.records.at(indices[i]);
        const auto row = static_cast<Eigen::Index>(i);
        for (int k = 0; k < fc; ++k) d.x(row, k) = r.features[k];
        for (int s = 0; s < d.layout.slots(); ++s) d.x(row, fc + s) = r.mask[s];
        d.y(row) = task == Task::classification ? r.label : r.iou_adj;
    }
    return d;
}

/// Select a subset of feature columns (per slot) - used for single-feature baselines.
inline Design restrict_features(const Design& d, const std::vector<int>& step_columns) {
    Design out;
    out.layout = {static_cast<int>(step_columns.size()), d.layout.history};
    out.x.resize(d.x.rows(), out.layout.input_dim());
    out.y = d.y;
    for (int s = 0; s < d.layout.slots(); ++s) {
        for (std::size_t k = 0; k < step_columns.size(); ++k) {
            out.x.col(s * out.layout.step_features + static_cast<Eigen::Index>(k)) =
                d.x.col(s * d.layout.step_features + step_columns[k]);
        }
        out.x.col(out.layout.mask_column(s)) = d.x.col(d.layout.mask_column(s));
    }
    return out;
}

/// Z-scores with training statistics. Statistics of a column are taken over
/// training rows whose slot is present; absent slots stay 0, zero-variance
/// columns map to 0, mask columns pass through.
struct Standardizer {
    Layout layout;
    std::vector<double> mean;
    std::vector<double> stdev;

    static Standardizer fit(const Design& train) {
        if (train.x.rows() == 0) throw Error("standardize: empty training set");
        Standardizer s;
        s.layout = train.layout;
        const int fc = s.layout.feature_columns();
        s.mean.assign(fc, 0.0);
        s.stdev.assign(fc, 0.0);
        for (int k = 0; k < fc; ++k) {
            const int mc = s.layout.mask_column(k / s.layout.step_features);
            double n = 0.0, sum = 0.0;
            for (Eigen::Index i = 0; i < train.x.rows(); ++i) {
                if (train.x(i, mc) == 0.0) continue;
                n += 1.0;
                sum += train.x(i, k);
            }
            if (n == 0.0) continue;
            const double mu = sum / n;
            double ss = 0.0;
            for (Eigen::Index i = 0; i < train.x.rows(); ++i) {
                if (train.x(i, mc) == 0.0) continue;
                ss += (train.x(i, k) - mu) * (train.x(i, k) - mu);
            }
            s.mean[k] = mu;
            s.stdev[k] = std::sqrt(ss / n);
        }
        return s;
    }

    void apply(Design& d) const {
        if (!(d.layout == layout)) throw Error("standardize: layout mismatch");
        apply(d.x);
    }

    void apply(Eigen::MatrixXd& x) const {
        const int fc = layout.feature_columns();
        if (x.cols() != layout.input_dim()) throw Error("standardize: column count mismatch");
        for (int k = 0; k < fc; ++k) {
            const int mc = layout.mask_column(k / layout.step_features);
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                if (x(i, mc) == 0.0 || stdev[k] == 0.0) {
                    x(i, k) = 0.0;
                } else {
                    x(i, k) = (x(i, k) - mean[k]) / stdev[k];
                }
            }
        }
    }
};

inline Standardizer standardize(Design& train, Design& val, Design& test) {
    auto s = Standardizer::fit(train);
    s.apply(train);
    s.apply(val);
    s.apply(test);
    return s;
}

// ---------------------------------------------------------------------------
// Serialization: CSV rows plus a JSON header

inline std::vector<std::string> dataset_columns(const MetaDataset& ds) {
    std::vector<std::string> cols = {"track_id", "frame", "component", "class", "iou_adj", "label"};
    for (int s = 0; s <= ds.history; ++s) cols.push_back("mask_" + std::to_string(s));
    const auto names = feature_names(ds.num_classes, ds.num_stability);
    for (int s = 0; s <= ds.history; ++s) {
        for (const auto& n : names) cols.push_back("t" + std::to_string(s) + ":" + n);
    }
    return cols;
}

inline void write_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                          const MetaDataset& ds) {
    {
        std::ofstream out(csv_path, std::ios::trunc);
        if (!out) throw Error("write_dataset: cannot open " + csv_path.string());
        const auto cols = dataset_columns(ds);
        for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
        out << '\n';
        for (const auto& r : ds.records) {
            out << r.track_id << ',' << r.frame << ',' << r.component << ',' << r.class_id << ',' << csv::fmt(r.iou_adj)
                << ',' << r.label;
            for (auto m : r.mask) out << ',' << int(m);
            for (double v : r.features) out << ',' << csv::fmt(v);
            out << '\n';
        }
    }
    nlohmann::ordered_json j;
    j["format"] = "cellstab-dataset";
    j["version"] = 1;
    j["num_classes"] = ds.num_classes;
    j["num_stability"] = ds.num_stability;
    j["history"] = ds.history;
    j["step_features"] = ds.step_features();
    j["feature_names"] = feature_names(ds.num_classes, ds.num_stability);
    j["records"] = ds.records.size();
    j["data"] = csv_path.filename().string();
    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw Error("write_dataset: cannot open " + json_path.string());
    out << j.dump(2) << '\n';
}

/// Reads a dataset given its JSON header; the CSV path is taken relative to it.
inline MetaDataset read_dataset(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw Error("read_dataset: cannot open " + json_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error("read_dataset: invalid JSON: " + std::string(e.what()));
    }
    if (j.value("format", std::string{}) != "cellstab-dataset") throw Error("read_dataset: not a dataset header");
    MetaDataset ds;
    ds.num_classes = j.at("num_classes").get<int>();
    ds.num_stability = j.at("num_stability").get<int>();
    ds.history = j.at("history").get<int>();
    const auto table = csv::read(json_path.parent_path() / j.at("data").get<std::string>());
    const auto expected = dataset_columns(ds);
    if (table.header != expected) throw Error("read_dataset: CSV header does not match the JSON description");
    const std::string where = "dataset csv";
    const std::size_t slots = ds.history + 1;
    for (const auto& row : table.rows) {
        MetaRecord r;
        r.track_id = static_cast<int>(csv::to_long(row[0], where));
        r.frame = static_cast<int>(csv::to_long(row[1], where));
        r.component = static_cast<int>(csv::to_long(row[2], where));
        r.class_id = static_cast<int32_t>(csv::to_long(row[3], where));
        r.iou_adj = csv::to_double(row[4], where);
        r.label = static_cast<int>(csv::to_long(row[5], where));
        for (std::size_t s = 0; s < slots; ++s) r.mask.push_back(static_cast<uint8_t>(csv::to_long(row[6 + s], where)));
        for (std::size_t k = 6 + slots; k < row.size(); ++k) r.features.push_back(csv::to_double(row[k], where));
        ds.records.push_back(std::move(r));
    }
    return ds;
}

}  // namespace cellstab
