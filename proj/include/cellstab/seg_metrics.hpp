#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cellstab/csv.hpp"
#include "cellstab/heatmaps.hpp"
#include "cellstab/segmentation.hpp"

namespace cellstab {

/// Number of leading features that do not depend on the class count or m.
inline constexpr int kBaseFeatureCount = 22;

inline int feature_count(int num_classes, int num_stability) { return kBaseFeatureCount + num_classes + 5 * num_stability; }

/// Index of the mean segment entropy in the canonical order.
inline constexpr int kMeanEntropyIndex = 7;

/// Canonical feature names: sizes, center, E/V/M families, class
/// probabilities, then one block of five per stability heatmap.
inline std::vector<std::string> feature_names(int num_classes, int num_stability) {
    std::vector<std::string> names = {"S", "S_in", "S_bd", "S_rel", "S_rel_in", "center_row", "center_col"};
    for (const char* d : {"E", "V", "M"}) {
        for (const char* suffix : {"_mean", "_in", "_bd", "_rel", "_rel_in"}) names.push_back(std::string(d) + suffix);
    }
    for (int y = 0; y < num_classes; ++y) names.push_back("P_" + std::to_string(y));
    for (int j = 1; j <= num_stability; ++j) {
        for (const char* suffix : {"_mean", "_in", "_bd", "_rel", "_rel_in"}) {
            names.push_back("C" + std::to_string(j) + suffix);
        }
    }
    return names;
}

struct HeatmapAggregate {
    double mean = 0.0;
    double mean_in = 0.0;  // 0 when the segment has no inner pixels
    double mean_bd = 0.0;
    double rel = 0.0;
    double rel_in = 0.0;
};

inline HeatmapAggregate aggregate_heatmap(const Segment& segment, const Heatmap& heatmap) {
    auto sum_over = [&](const PixelSet& pixels) {
        double s = 0.0;
        for (const Pixel& p : pixels) s += heatmap(p.row, p.col);
        return s;
    };
    const double s_in = static_cast<double>(segment.size_inner());
    const double s_bd = static_cast<double>(segment.size_boundary());
    const double sum_in = sum_over(segment.inner);
    const double sum_bd = sum_over(segment.boundary);
    HeatmapAggregate a;
    a.mean = (sum_in + sum_bd) / static_cast<double>(segment.size());
    a.mean_in = s_in > 0 ? sum_in / s_in : 0.0;
    a.mean_bd = sum_bd / s_bd;
    a.rel = a.mean * (static_cast<double>(segment.size()) / s_bd);
    a.rel_in = a.mean_in * (s_in / s_bd);
    return a;
}

inline std::vector<double> mean_class_probs(const Segment& segment, const SoftmaxFrame& softmax) {
    std::vector<double> mean(softmax.classes(), 0.0);
    for (const Pixel& p : segment.pixels) {
        const double* f = softmax.pixel(p.row, p.col);
        for (int y = 0; y < softmax.classes(); ++y) mean[y] += f[y];
    }
    for (double& v : mean) v /= static_cast<double>(segment.size());
    return mean;
}

struct SegmentFeatures {
    int frame = 0;
    int component = 0;
    int32_t class_id = 0;
    std::optional<int> track_id;
    std::vector<double> values;  // canonical order
    double iou_adj = 0.0;
    bool has_interior = false;
};

/// Builds the canonical feature vector using the first num_stability stability
/// heatmaps. num_stability = 0 yields the baseline set.
inline SegmentFeatures assemble_features(const Segment& segment, const DispersionHeatmaps& dispersion,
                                         const std::vector<Heatmap>& stability, int num_stability,
                                         const SoftmaxFrame& softmax) {
    if (num_stability < 0 || num_stability > static_cast<int>(stability.size())) {
        throw Error("assemble_features: m = " + std::to_string(num_stability) + " outside [0, " +
                    std::to_string(stability.size()) + "]");
    }
    SegmentFeatures f;
    f.frame = segment.frame;
    f.component = segment.component;
    f.class_id = segment.class_id;
    f.track_id = segment.track_id;
    f.has_interior = segment.size_inner() > 0;
    auto& v = f.values;
    v.reserve(feature_count(softmax.classes(), num_stability));

    const double s = static_cast<double>(segment.size());
    const double s_in = static_cast<double>(segment.size_inner());
    const double s_bd = static_cast<double>(segment.size_boundary());
    v.insert(v.end(), {s, s_in, s_bd, s / s_bd, s_in / s_bd, segment.center_row, segment.center_col});
    auto push = [&v](const HeatmapAggregate& a) { v.insert(v.end(), {a.mean, a.mean_in, a.mean_bd, a.rel, a.rel_in}); };
    push(aggregate_heatmap(segment, dispersion.entropy));
    push(aggregate_heatmap(segment, dispersion.variation_ratio));
    push(aggregate_heatmap(segment, dispersion.probability_margin));
    const auto probs = mean_class_probs(segment, softmax);
    v.insert(v.end(), probs.begin(), probs.end());
    for (int j = 0; j < num_stability; ++j) push(aggregate_heatmap(segment, stability[j]));
    return f;
}

/// IoU against the union Q of the same-class ground-truth components that
/// intersect the segment; 0 when Q is empty.
class IouAdjusted {
public:
    explicit IouAdjusted(const LabelFrame& gt_labels) : gt_(gt_labels), gt_segments_(connected_components(gt_labels)) {}

    double operator()(const Segment& segment) const {
        std::vector<int32_t> hit;
        std::size_t intersection = 0;
        for (const Pixel& p : segment.pixels) {
            if (!gt_.contains(p.row, p.col)) throw Error("iou_adj: segment lies outside the ground-truth frame");
            if (gt_(p.row, p.col) != segment.class_id) continue;
            ++intersection;
            const int32_t comp = gt_segments_.component_map(p.row, p.col);
            if (std::find(hit.begin(), hit.end(), comp) == hit.end()) hit.push_back(comp);
        }
        if (hit.empty()) return 0.0;
        std::size_t q = 0;
        for (int32_t comp : hit) q += gt_segments_.segments[comp].size();
        return static_cast<double>(intersection) / static_cast<double>(segment.size() + q - intersection);
    }

private:
    LabelFrame gt_;
    FrameSegments gt_segments_;
};

inline double iou_adj(const Segment& segment, const LabelFrame& gt_labels) {
    if (gt_labels.rows() == 0) throw Error("iou_adj: empty ground truth");
    return IouAdjusted(gt_labels)(segment);
}

/// All per-segment features of one frame.
struct FrameFeatures {
    FrameSegments segmentation;
    std::vector<SegmentFeatures> features;
};

inline FrameFeatures extract_frame_features(int frame, const SoftmaxFrame& softmax, const CellStateStack& cells,
                                            const LabelFrame& gt_labels, int num_stability) {
    if (num_stability < 0 || num_stability > cells.blocks() - 1) {
        throw Error("extract: m = " + std::to_string(num_stability) + " must lie in [0, l-1] = [0, " +
                    std::to_string(cells.blocks() - 1) + "]");
    }
    if (gt_labels.rows() != softmax.rows() || gt_labels.cols() != softmax.cols() || cells.rows() != softmax.rows() ||
        cells.cols() != softmax.cols()) {
        throw Error("extract: frame " + std::to_string(frame) + " has inconsistent tensor shapes");
    }
    FrameFeatures out;
    out.segmentation = connected_components(predicted_labels(softmax), frame);
    const auto dispersion = dispersion_heatmaps(softmax);
    const auto stability = stability_heatmaps(cells);
    const IouAdjusted iou(gt_labels);
    out.features.reserve(out.segmentation.segments.size());
    for (const Segment& seg : out.segmentation.segments) {
        auto f = assemble_features(seg, dispersion, stability, num_stability, softmax);
        f.iou_adj = iou(seg);
        out.features.push_back(std::move(f));
    }
    return out;
}

inline void write_features_csv_header(std::ostream& os, int num_classes, int num_stability) {
    os << "frame,component,class,track_id,iou_adj";
    for (const auto& n : feature_names(num_classes, num_stability)) os << ',' << n;
    os << '\n';
}

inline void write_features_csv_row(std::ostream& os, const SegmentFeatures& f) {
    char buf[32];
    os << f.frame << ',' << f.component << ',' << f.class_id << ',' << (f.track_id ? *f.track_id : -1);
    std::snprintf(buf, sizeof buf, ",%.17g", f.iou_adj);
    os << buf;
    for (double v : f.values) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        os << buf;
    }
    os << '\n';
}

struct FeatureTable {
    int num_classes = 0;
    int num_stability = 0;
    std::vector<SegmentFeatures> rows;
};

/// Reads a per-frame feature CSV; c and m are recovered from the header.
inline FeatureTable read_features_csv(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    FeatureTable out;
    for (const auto& h : table.header) {
        if (h.rfind("P_", 0) == 0) ++out.num_classes;
        if (h.size() > 5 && h[0] == 'C' && h.ends_with("_mean")) ++out.num_stability;
    }
    const auto expected = feature_names(out.num_classes, out.num_stability);
    if (table.header.size() != expected.size() + 5) throw Error("features csv: unexpected column count in " + path.string());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (table.header[i + 5] != expected[i]) {
            throw Error("features csv: column " + std::to_string(i + 5) + " is '" + table.header[i + 5] + "', expected '" +
                        expected[i] + "'");
        }
    }
    const std::string where = "features csv " + path.string();
    for (const auto& row : table.rows) {
        SegmentFeatures f;
        f.frame = static_cast<int>(csv::to_long(row[0], where));
        f.component = static_cast<int>(csv::to_long(row[1], where));
        f.class_id = static_cast<int32_t>(csv::to_long(row[2], where));
        const long tid = csv::to_long(row[3], where);
        if (tid >= 0) f.track_id = static_cast<int>(tid);
        f.iou_adj = csv::to_double(row[4], where);
        for (std::size_t i = 5; i < row.size(); ++i) f.values.push_back(csv::to_double(row[i], where));
        f.has_interior = f.values[1] > 0;
        out.rows.push_back(std::move(f));
    }
    return out;
}

}  // namespace cellstab
