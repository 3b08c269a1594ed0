#pragma once

// Overlap / center based segment tracking. Each frame is processed in five
// ordered steps over its segments (largest first); a segment matched in one
// step is skipped by the following ones:
//   1  same-class segments closer than c_near are grouped and share an id
//   2  match against tracks of frame t-1 shifted by their last displacement
//      (overlap > c_over or center distance < c_dist)
//   3  match against tracks of frame t-1 by overlap >= c_over
//   4  match dormant tracks by a least-squares extrapolated center (< c_lin)
//   5  mint a fresh id

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <tuple>
#include <vector>

#include "cellstab/segmentation.hpp"

namespace cellstab {

struct TrackingParams {
    double c_near = 10.0;
    double c_over = 0.35;
    double c_dist = 100.0;
    double c_lin = 50.0;
    int lr = 5;

    void validate() const {
        if (!(c_near > 0) || !(c_over > 0) || c_over > 1 || !(c_dist > 0) || !(c_lin > 0) || lr < 2) {
            throw Error("TrackingParams: c_near, c_dist, c_lin must be > 0, c_over in (0,1], lr >= 2");
        }
    }
};

struct TrackObservation {
    int frame = 0;
    int32_t class_id = 0;
    PixelSet pixels;
    double center_row = 0.0;
    double center_col = 0.0;
};

struct TrackState {
    int next_id = 0;
    int last_frame = -1;
    std::map<int, std::deque<TrackObservation>> history;  // oldest observation first
};

struct TrackAssignment {
    int component = 0;
    int track_id = 0;
    int matched_step = 5;
};

/// |j ∩ k| / |j|.
inline double overlap(const PixelSet& j, const PixelSet& k) {
    if (j.empty()) throw Error("overlap: empty segment");
    return static_cast<double>(intersection_size(j, k)) / static_cast<double>(j.size());
}

struct CenterObservation {
    double frame = 0.0;
    double row = 0.0;
    double col = 0.0;
};

/// Ordinary least squares per coordinate over (frame -> coordinate),
/// evaluated at `horizon`.
inline std::pair<double, double> predict_center_linreg(const std::vector<CenterObservation>& history, double horizon) {
    if (history.size() < 2) throw Error("predict_center_linreg: need at least 2 observations");
    const double n = static_cast<double>(history.size());
    double mf = 0.0, mr = 0.0, mc = 0.0;
    for (const auto& h : history) {
        mf += h.frame;
        mr += h.row;
        mc += h.col;
    }
    mf /= n;
    mr /= n;
    mc /= n;
    double sff = 0.0, sfr = 0.0, sfc = 0.0;
    for (const auto& h : history) {
        sff += (h.frame - mf) * (h.frame - mf);
        sfr += (h.frame - mf) * (h.row - mr);
        sfc += (h.frame - mf) * (h.col - mc);
    }
    if (sff == 0.0) throw Error("predict_center_linreg: observations share a single frame index");
    return {mr + sfr / sff * (horizon - mf), mc + sfc / sff * (horizon - mf)};
}

namespace detail {

struct TrackUnit {
    std::vector<int> members;  // indices into the frame's segment list
    int primary = 0;           // largest member
    int32_t class_id = 0;
    PixelSet pixels;
    double center_row = 0.0;
    double center_col = 0.0;
    int first_component = 0;
};

struct Box {
    int r0, r1, c0, c1;
};

inline double box_gap(const Box& a, const Box& b) {
    const int dr = std::max({0, a.r0 - b.r1, b.r0 - a.r1});
    const int dc = std::max({0, a.c0 - b.c1, b.c0 - a.c1});
    return std::hypot(dr, dc);
}

inline double boundary_distance(const Segment& a, const Segment& b) {
    double best = std::numeric_limits<double>::infinity();
    for (const Pixel& p : a.boundary) {
        for (const Pixel& q : b.boundary) {
            const double d2 = double(p.row - q.row) * (p.row - q.row) + double(p.col - q.col) * (p.col - q.col);
            best = std::min(best, d2);
        }
    }
    return std::sqrt(best);
}

inline std::vector<TrackUnit> group_near_segments(const std::vector<Segment>& segments, double c_near) {
    const std::size_t n = segments.size();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<Box> boxes(n);
    for (std::size_t i = 0; i < n; ++i) {
        Box b{INT32_MAX, INT32_MIN, INT32_MAX, INT32_MIN};
        for (const Pixel& p : segments[i].boundary) {
            b.r0 = std::min(b.r0, p.row);
            b.r1 = std::max(b.r1, p.row);
            b.c0 = std::min(b.c0, p.col);
            b.c1 = std::max(b.c1, p.col);
        }
        boxes[i] = b;
    }
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            if (segments[a].class_id != segments[b].class_id) continue;
            if (box_gap(boxes[a], boxes[b]) >= c_near) continue;
            if (boundary_distance(segments[a], segments[b]) < c_near) {
                parent[find(static_cast<int>(b))] = find(static_cast<int>(a));
            }
        }
    }
    std::map<int, TrackUnit> by_root;
    for (std::size_t i = 0; i < n; ++i) by_root[find(static_cast<int>(i))].members.push_back(static_cast<int>(i));
    std::vector<TrackUnit> units;
    for (auto& [root, unit] : by_root) {
        unit.primary = unit.members.front();
        unit.first_component = segments[unit.members.front()].component;
        for (int m : unit.members) {
            const Segment& s = segments[m];
            if (s.size() > segments[unit.primary].size() ||
                (s.size() == segments[unit.primary].size() && s.component < segments[unit.primary].component)) {
                unit.primary = m;
            }
            unit.first_component = std::min(unit.first_component, s.component);
            unit.pixels.insert(unit.pixels.end(), s.pixels.begin(), s.pixels.end());
        }
        unit.class_id = segments[unit.primary].class_id;
        std::sort(unit.pixels.begin(), unit.pixels.end());
        std::tie(unit.center_row, unit.center_col) = geometric_center(unit.pixels);
        units.push_back(std::move(unit));
    }
    std::sort(units.begin(), units.end(), [](const TrackUnit& a, const TrackUnit& b) {
        if (a.pixels.size() != b.pixels.size()) return a.pixels.size() > b.pixels.size();
        return a.first_component < b.first_component;
    });
    return units;
}

inline PixelSet shifted(const PixelSet& pixels, int dr, int dc) {
    PixelSet out(pixels);
    for (Pixel& p : out) {
        p.row += dr;
        p.col += dc;
    }
    return out;
}

struct Candidate {
    int id = -1;
    double overlap = 0.0;
    double distance = 0.0;

    // Larger overlap, then smaller center distance, then lower id.
    bool better_than(const Candidate& o) const {
        if (o.id < 0) return true;
        if (overlap != o.overlap) return overlap > o.overlap;
        if (distance != o.distance) return distance < o.distance;
        return id < o.id;
    }
};

}  // namespace detail

/// Assigns track ids to one frame's segments (frames must be passed in
/// increasing order). Returns one assignment per segment, in input order.
inline std::vector<TrackAssignment> track_frame(TrackState& state, int frame, const std::vector<Segment>& segments,
                                                const TrackingParams& params) {
    params.validate();
    if (frame <= state.last_frame) throw Error("track_frame: frames must be strictly increasing");
    using detail::Candidate;
    const auto units = detail::group_near_segments(segments, params.c_near);

    std::vector<int> unit_id(units.size(), -1);
    std::vector<int> unit_step(units.size(), 5);
    std::map<int, bool> claimed;

    auto observation_at = [&](const std::deque<TrackObservation>& obs, int f) -> const TrackObservation* {
        for (const auto& o : obs)
            if (o.frame == f) return &o;
        return nullptr;
    };
    auto center_distance = [](double r0, double c0, double r1, double c1) { return std::hypot(r0 - r1, c0 - c1); };

    using Rule = std::function<std::optional<Candidate>(const detail::TrackUnit&, int, const std::deque<TrackObservation>&)>;
    auto run_step = [&](int step, const Rule& rule) {
        for (std::size_t u = 0; u < units.size(); ++u) {
            if (unit_id[u] >= 0) continue;
            Candidate best;
            for (const auto& [id, obs] : state.history) {
                if (claimed[id] || obs.back().class_id != units[u].class_id) continue;
                auto cand = rule(units[u], id, obs);
                if (cand && cand->better_than(best)) best = *cand;
            }
            if (best.id >= 0) {
                unit_id[u] = best.id;
                unit_step[u] = step;
                claimed[best.id] = true;
            }
        }
    };

    // Step 2: shifted previous segment, or plain center distance when the
    // track was not seen at t-2.
    run_step(2, [&](const detail::TrackUnit& unit, int id, const std::deque<TrackObservation>& obs)
                    -> std::optional<Candidate> {
        const TrackObservation* prev = observation_at(obs, frame - 1);
        if (!prev) return std::nullopt;
        const TrackObservation* prev2 = observation_at(obs, frame - 2);
        Candidate c{id, 0.0, 0.0};
        if (prev2) {
            const double dr = prev->center_row - prev2->center_row;
            const double dc = prev->center_col - prev2->center_col;
            const PixelSet moved = detail::shifted(prev->pixels, static_cast<int>(std::lround(dr)),
                                                   static_cast<int>(std::lround(dc)));
            c.overlap = overlap(unit.pixels, moved);
            c.distance = center_distance(unit.center_row, unit.center_col, prev->center_row + dr, prev->center_col + dc);
            if (c.overlap > params.c_over || c.distance < params.c_dist) return c;
            return std::nullopt;
        }
        c.overlap = overlap(unit.pixels, prev->pixels);
        c.distance = center_distance(unit.center_row, unit.center_col, prev->center_row, prev->center_col);
        if (c.distance < params.c_dist) return c;
        return std::nullopt;
    });

    // Step 3: plain overlap with the previous frame.
    run_step(3, [&](const detail::TrackUnit& unit, int id, const std::deque<TrackObservation>& obs)
                    -> std::optional<Candidate> {
        const TrackObservation* prev = observation_at(obs, frame - 1);
        if (!prev) return std::nullopt;
        Candidate c{id, overlap(unit.pixels, prev->pixels),
                    center_distance(unit.center_row, unit.center_col, prev->center_row, prev->center_col)};
        if (c.overlap >= params.c_over) return c;
        return std::nullopt;
    });

    // Step 4: dormant tracks seen at least twice within the last lr frames.
    run_step(4, [&](const detail::TrackUnit& unit, int id, const std::deque<TrackObservation>& obs)
                    -> std::optional<Candidate> {
        if (obs.back().frame >= frame - 1) return std::nullopt;
        std::vector<CenterObservation> recent;
        for (const auto& o : obs) {
            if (o.frame >= frame - params.lr && o.frame <= frame - 1) {
                recent.push_back({static_cast<double>(o.frame), o.center_row, o.center_col});
            }
        }
        if (recent.size() < 2) return std::nullopt;
        const auto [pr, pc] = predict_center_linreg(recent, frame);
        Candidate c{id, overlap(unit.pixels, obs.back().pixels), center_distance(unit.center_row, unit.center_col, pr, pc)};
        if (c.distance < params.c_lin) return c;
        return std::nullopt;
    });

    // Step 5: fresh ids.
    for (std::size_t u = 0; u < units.size(); ++u) {
        if (unit_id[u] < 0) {
            unit_id[u] = state.next_id++;
            unit_step[u] = 5;
        }
    }

    std::vector<TrackAssignment> out(segments.size());
    for (std::size_t u = 0; u < units.size(); ++u) {
        for (int m : units[u].members) {
            out[m] = {segments[m].component, unit_id[u], m == units[u].primary ? unit_step[u] : 1};
        }
        state.history[unit_id[u]].push_back(
            {frame, units[u].class_id, units[u].pixels, units[u].center_row, units[u].center_col});
    }

    const int keep_from = frame + 1 - std::max(params.lr, 2);
    for (auto it = state.history.begin(); it != state.history.end();) {
        auto& obs = it->second;
        while (!obs.empty() && obs.front().frame < keep_from) obs.pop_front();
        it = obs.empty() ? state.history.erase(it) : std::next(it);
    }
    state.last_frame = frame;
    return out;
}

/// Convenience wrapper that owns the state and writes ids into the segments.
class Tracker {
public:
    explicit Tracker(TrackingParams params = {}) : params_(params) { params_.validate(); }

    std::vector<TrackAssignment> track(int frame, std::vector<Segment>& segments) {
        auto assignments = track_frame(state_, frame, segments, params_);
        for (std::size_t i = 0; i < segments.size(); ++i) segments[i].track_id = assignments[i].track_id;
        return assignments;
    }

    const TrackState& state() const noexcept { return state_; }
    const TrackingParams& params() const noexcept { return params_; }

private:
    TrackingParams params_;
    TrackState state_;
};

inline void write_tracking_csv_header(std::ostream& os) { os << "frame,component,track_id,matched_step\n"; }

inline void write_tracking_csv_rows(std::ostream& os, int frame, const std::vector<TrackAssignment>& assignments) {
    for (const auto& a : assignments) os << frame << ',' << a.component << ',' << a.track_id << ',' << a.matched_step << '\n';
}

}  // namespace cellstab
