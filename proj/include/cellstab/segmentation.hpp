#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <optional>
#include <ostream>
#include <tuple>
#include <utility>
#include <vector>

#include "cellstab/common.hpp"

namespace cellstab {

struct Segment {
    int frame = 0;
    int component = 0;  // raster order of the component's first pixel
    int32_t class_id = 0;
    PixelSet pixels;    // raster order
    PixelSet inner;     // all 8 neighbours inside the segment
    PixelSet boundary;  // pixels \ inner
    double center_row = 0.0;
    double center_col = 0.0;
    std::optional<int> track_id;

    std::size_t size() const noexcept { return pixels.size(); }
    std::size_t size_inner() const noexcept { return inner.size(); }
    std::size_t size_boundary() const noexcept { return boundary.size(); }
};

struct FrameSegments {
    Grid<int32_t> component_map;  // component index per pixel
    std::vector<Segment> segments;
};

inline constexpr std::array<std::pair<int, int>, 8> kNeighbours8 = {
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

/// Splits a segment into inner and boundary pixels. Image-border pixels are
/// always boundary; a same-class 8-neighbour is necessarily in the same
/// 8-connected component, so checking classes is enough.
inline std::pair<PixelSet, PixelSet> split_inner_boundary(const Segment& segment, const LabelFrame& labels) {
    PixelSet inner;
    PixelSet boundary;
    for (const Pixel& p : segment.pixels) {
        bool is_inner = true;
        for (auto [dr, dc] : kNeighbours8) {
            const int r = p.row + dr;
            const int c = p.col + dc;
            if (!labels.contains(r, c) || labels(r, c) != segment.class_id) {
                is_inner = false;
                break;
            }
        }
        (is_inner ? inner : boundary).push_back(p);
    }
    return {std::move(inner), std::move(boundary)};
}

inline std::pair<double, double> geometric_center(const PixelSet& pixels) {
    if (pixels.empty()) throw Error("geometric_center: empty segment");
    double r = 0.0;
    double c = 0.0;
    for (const Pixel& p : pixels) {
        r += p.row;
        c += p.col;
    }
    const double n = static_cast<double>(pixels.size());
    return {r / n, c / n};
}

inline std::pair<double, double> geometric_center(const Segment& segment) { return geometric_center(segment.pixels); }

/// Maximal 8-connected same-class components, indexed in raster order of
/// their first pixel, with inner/boundary split and center filled in.
inline FrameSegments connected_components(const LabelFrame& labels, int frame = 0) {
    const int rows = labels.rows();
    const int cols = labels.cols();
    FrameSegments out{Grid<int32_t>(rows, cols, -1), {}};
    std::vector<Pixel> stack;
    for (int r0 = 0; r0 < rows; ++r0) {
        for (int c0 = 0; c0 < cols; ++c0) {
            if (out.component_map(r0, c0) >= 0) continue;
            const int id = static_cast<int>(out.segments.size());
            Segment seg;
            seg.frame = frame;
            seg.component = id;
            seg.class_id = labels(r0, c0);
            stack.assign(1, Pixel{r0, c0});
            out.component_map(r0, c0) = id;
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                seg.pixels.push_back(p);
                for (auto [dr, dc] : kNeighbours8) {
                    const int r = p.row + dr;
                    const int c = p.col + dc;
                    if (labels.contains(r, c) && out.component_map(r, c) < 0 && labels(r, c) == seg.class_id) {
                        out.component_map(r, c) = id;
                        stack.push_back(Pixel{r, c});
                    }
                }
            }
            std::sort(seg.pixels.begin(), seg.pixels.end());
            std::tie(seg.inner, seg.boundary) = split_inner_boundary(seg, labels);
            std::tie(seg.center_row, seg.center_col) = geometric_center(seg);
            out.segments.push_back(std::move(seg));
        }
    }
    return out;
}

inline void write_segments_csv_header(std::ostream& os) {
    os << "frame,component,class,S,S_in,S_bd,center_row,center_col,track_id\n";
}

inline void write_segments_csv_row(std::ostream& os, const Segment& s) {
    char buf[64];
    os << s.frame << ',' << s.component << ',' << s.class_id << ',' << s.size() << ',' << s.size_inner() << ','
       << s.size_boundary() << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", s.center_row, s.center_col);
    os << buf;
    if (s.track_id) os << *s.track_id;
    os << '\n';
}

}  // namespace cellstab
