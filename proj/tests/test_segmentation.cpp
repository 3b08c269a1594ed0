#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "cellstab/segmentation.hpp"
#include "test_util.hpp"

using namespace cellstab;
using testutil::labels_from_rows;

namespace {

// Union-find over pixel indices; a second, structurally different labelling.
std::vector<int> union_find_labels(const LabelFrame& l) {
    const int n = l.rows() * l.cols();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int r = 0; r < l.rows(); ++r) {
        for (int c = 0; c < l.cols(); ++c) {
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (!l.contains(r + dr, c + dc) || l(r + dr, c + dc) != l(r, c)) continue;
                    const int a = find(r * l.cols() + c), b = find((r + dr) * l.cols() + c + dc);
                    if (a != b) parent[std::max(a, b)] = std::min(a, b);
                }
            }
        }
    }
    std::vector<int> out(n);
    for (int i = 0; i < n; ++i) out[i] = find(i);
    return out;
}

}  // namespace

TEST(ConnectedComponents, UniformFrame) {
    const auto fs = connected_components(LabelFrame(4, 5, 2));
    ASSERT_EQ(fs.segments.size(), 1u);
    EXPECT_EQ(fs.segments[0].size(), 20u);
    EXPECT_EQ(fs.segments[0].class_id, 2);
}

TEST(ConnectedComponents, DiagonalJoins) {
    const auto fs = connected_components(labels_from_rows({{0, 0, 1}, {0, 1, 1}}));
    ASSERT_EQ(fs.segments.size(), 2u);
    EXPECT_EQ(fs.segments[0].pixels, (PixelSet{{0, 0}, {0, 1}, {1, 0}}));
    EXPECT_EQ(fs.segments[1].pixels, (PixelSet{{0, 2}, {1, 1}, {1, 2}}));
}

TEST(ConnectedComponents, CheckerboardOneSegmentPerColour) {
    LabelFrame l(6, 7);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 7; ++c) l(r, c) = (r + c) % 2;
    const auto fs = connected_components(l);
    ASSERT_EQ(fs.segments.size(), 2u);
    EXPECT_EQ(fs.segments[0].class_id, 0);
    EXPECT_EQ(fs.segments[1].class_id, 1);
    EXPECT_EQ(fs.segments[0].size() + fs.segments[1].size(), 42u);
}

TEST(ConnectedComponents, MatchesUnionFindOracle) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const LabelFrame l = testutil::random_blocky_labels(rng, 20, 23, 2 + trial % 4, 1 + trial % 5);
        const auto fs = connected_components(l, trial);
        const auto roots = union_find_labels(l);
        std::map<int, int> root_to_component;
        std::vector<int> first_seen;
        for (int i = 0; i < l.rows() * l.cols(); ++i) {
            if (root_to_component.emplace(roots[i], static_cast<int>(root_to_component.size())).second) first_seen.push_back(i);
        }
        ASSERT_EQ(fs.segments.size(), root_to_component.size());
        for (int r = 0; r < l.rows(); ++r) {
            for (int c = 0; c < l.cols(); ++c) {
                ASSERT_EQ(fs.component_map(r, c), root_to_component.at(roots[r * l.cols() + c]));
            }
        }
        std::size_t total = 0;
        for (const auto& s : fs.segments) {
            total += s.size();
            EXPECT_EQ(s.frame, trial);
            EXPECT_EQ(s.size(), s.size_inner() + s.size_boundary());
            EXPECT_GE(s.size_boundary(), 1u);
            for (const auto& p : s.pixels) ASSERT_EQ(l(p.row, p.col), s.class_id);
            EXPECT_EQ(s.pixels.front().row * l.cols() + s.pixels.front().col, first_seen[s.component]);
            EXPECT_TRUE(std::is_sorted(s.pixels.begin(), s.pixels.end()));
        }
        EXPECT_EQ(total, static_cast<std::size_t>(l.rows() * l.cols()));
    }
}

TEST(InnerBoundary, ThreeByThree) {
    const auto fs = connected_components(LabelFrame(3, 3, 0));
    EXPECT_EQ(fs.segments[0].size_inner(), 1u);
    EXPECT_EQ(fs.segments[0].size_boundary(), 8u);
    EXPECT_EQ(fs.segments[0].inner, (PixelSet{{1, 1}}));
}

TEST(InnerBoundary, OneByFive) {
    const auto fs = connected_components(LabelFrame(1, 5, 0));
    EXPECT_EQ(fs.segments[0].size_inner(), 0u);
    EXPECT_EQ(fs.segments[0].size_boundary(), 5u);
}

TEST(InnerBoundary, FiveByFive) {
    const auto fs = connected_components(LabelFrame(5, 5, 1));
    EXPECT_EQ(fs.segments[0].size_inner(), 9u);
    EXPECT_EQ(fs.segments[0].size_boundary(), 16u);
}

TEST(InnerBoundary, NeighbourOfOtherClassMakesBoundary) {
    LabelFrame l(5, 5, 0);
    l(0, 0) = 1;
    const auto fs = connected_components(l);
    // Scan order puts the class-1 corner first. (1,1) touches it, leaving 8 of the central 3x3 inner.
    ASSERT_EQ(fs.segments.size(), 2u);
    EXPECT_EQ(fs.segments[0].class_id, 1);
    EXPECT_EQ(fs.segments[1].size_inner(), 8u);
    EXPECT_FALSE(std::count(fs.segments[1].inner.begin(), fs.segments[1].inner.end(), Pixel{1, 1}));
}

TEST(GeometricCenter, Examples) {
    auto [r1, c1] = geometric_center(PixelSet{{3, 7}});
    EXPECT_DOUBLE_EQ(r1, 3.0);
    EXPECT_DOUBLE_EQ(c1, 7.0);
    const auto fs = connected_components(LabelFrame(3, 3, 0));
    EXPECT_DOUBLE_EQ(fs.segments[0].center_row, 1.0);
    EXPECT_DOUBLE_EQ(fs.segments[0].center_col, 1.0);
    auto [r3, c3] = geometric_center(PixelSet{{0, 0}, {0, 1}, {1, 0}});
    EXPECT_NEAR(r3, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(c3, 1.0 / 3.0, 1e-15);
    EXPECT_THROW(geometric_center(PixelSet{}), Error);
}
