#pragma once

// Stream-level stages shared by the command line tool and the tests.

#include <functional>
#include <vector>

#include "cellstab/heatmaps.hpp"
#include "cellstab/seg_metrics.hpp"
#include "cellstab/segmentation.hpp"
#include "cellstab/tensor_io.hpp"
#include "cellstab/tracking.hpp"

namespace cellstab {

struct FrameInputs {
    SoftmaxFrame softmax;
    CellStateStack cells;
    LabelFrame ground_truth;
};

inline FrameInputs load_frame(const StreamManifest& m, int t, int smooth_gt_kernel = 0) {
    if (t < 0 || t >= m.num_frames) throw Error("load_frame: frame " + std::to_string(t) + " out of range");
    const FramePaths& f = m.frames[t];
    FrameInputs in;
    in.softmax = SoftmaxFrame::from_tensor(read_tensor(m.resolve(f.softmax), m.softmax_shape()));
    if (!f.cell_states.empty()) {
        in.cells = CellStateStack::from_tensor(read_tensor(m.resolve(f.cell_states), m.cell_state_shape()));
    } else {
        std::vector<Heatmap> means;
        for (const auto& b : f.cell_state_blocks) means.push_back(mean_cell_state(read_tensor(m.resolve(b), m.raw_block_shape())));
        in.cells = CellStateStack::from_blocks(means);
    }
    in.ground_truth = labels_from_tensor(read_tensor(m.resolve(f.ground_truth), m.label_shape()), m.num_classes);
    if (smooth_gt_kernel > 1) in.ground_truth = smooth_labels(in.ground_truth, smooth_gt_kernel);
    return in;
}

struct StreamResult {
    int num_classes = 0;
    int num_stability = 0;
    std::vector<SegmentFeatures> features;  // all frames, track ids filled in
    std::vector<std::vector<TrackAssignment>> tracks;
};

struct StreamOptions {
    int num_stability = 0;
    int smooth_gt_kernel = 0;
    TrackingParams tracking;
    std::function<void(int, const FrameInputs&, const FrameFeatures&)> on_frame;
};

/// Segments, extracts features and tracks every frame in order.
inline StreamResult process_stream(const StreamManifest& m, const StreamOptions& opt) {
    if (opt.num_stability < 0 || opt.num_stability > m.num_blocks - 1) {
        throw Error("m = " + std::to_string(opt.num_stability) + " must lie in [0, l-1] = [0, " +
                    std::to_string(m.num_blocks - 1) + "]");
    }
    validate_manifest(m);
    StreamResult out;
    out.num_classes = m.num_classes;
    out.num_stability = opt.num_stability;
    Tracker tracker(opt.tracking);
    for (int t = 0; t < m.num_frames; ++t) {
        const FrameInputs in = load_frame(m, t, opt.smooth_gt_kernel);
        FrameFeatures ff = extract_frame_features(t, in.softmax, in.cells, in.ground_truth, opt.num_stability);
        auto assignments = tracker.track(t, ff.segmentation.segments);
        for (std::size_t i = 0; i < ff.features.size(); ++i) ff.features[i].track_id = assignments[i].track_id;
        if (opt.on_frame) opt.on_frame(t, in, ff);
        for (auto& f : ff.features) out.features.push_back(std::move(f));
        out.tracks.push_back(std::move(assignments));
    }
    return out;
}

}  // namespace cellstab
