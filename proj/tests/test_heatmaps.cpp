#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cellstab/heatmaps.hpp"
#include "test_util.hpp"

using namespace cellstab;

namespace {

SoftmaxFrame single_pixel(std::vector<double> p) {
    const int c = static_cast<int>(p.size());
    return SoftmaxFrame(1, 1, c, std::move(p));
}

PixelDispersion disp(std::vector<double> p) { return pixel_dispersion(p.data(), static_cast<int>(p.size())); }

}  // namespace

TEST(Softmax, RejectsUnnormalizedOrNegative) {
    EXPECT_THROW(single_pixel({0.5, 0.6}), Error);
    EXPECT_THROW(single_pixel({1.2, -0.2}), Error);
    EXPECT_THROW(SoftmaxFrame(1, 1, 1, {1.0}), Error);
    EXPECT_NO_THROW(single_pixel({0.5, 0.5 + 5e-6}));
}

TEST(Softmax, RenormalizesWithinTolerance) {
    const SoftmaxFrame f = single_pixel({0.4, 0.6 + 4e-6});
    EXPECT_NEAR(f(0, 0, 0) + f(0, 0, 1), 1.0, 1e-15);
}

TEST(PredictedLabels, Argmax) {
    EXPECT_EQ(predicted_labels(single_pixel({0.1, 0.9}))(0, 0), 1);
    EXPECT_EQ(predicted_labels(single_pixel({0.5, 0.5}))(0, 0), 0);
    const SoftmaxFrame f(2, 2, 3,
                         {0.7, 0.2, 0.1,  //
                          0.1, 0.8, 0.1,  //
                          0.2, 0.2, 0.6,  //
                          0.3, 0.3, 0.4});
    EXPECT_EQ(predicted_labels(f), testutil::labels_from_rows({{0, 1}, {2, 2}}));
}

TEST(Dispersion, OneHot) {
    const auto d = disp({1.0, 0.0});
    EXPECT_EQ(d.entropy, 0.0);
    EXPECT_EQ(d.variation_ratio, 0.0);
    EXPECT_EQ(d.probability_margin, 0.0);
}

TEST(Dispersion, UniformTwoClass) {
    const auto d = disp({0.5, 0.5});
    EXPECT_NEAR(d.entropy, 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(d.variation_ratio, 0.5);
    EXPECT_DOUBLE_EQ(d.probability_margin, 1.0);
}

TEST(Dispersion, FourClassExample) {
    const auto d = disp({0.7, 0.1, 0.1, 0.1});
    // -(0.7 ln 0.7 + 3 * 0.1 ln 0.1) / ln 4
    const double h = -(0.7 * std::log(0.7) + 0.3 * std::log(0.1));
    EXPECT_NEAR(h, 0.94045, 1e-5);
    EXPECT_NEAR(d.entropy, h / std::log(4.0), 1e-12);
    EXPECT_NEAR(d.entropy, 0.6784, 1e-4);
    EXPECT_NEAR(d.variation_ratio, 0.3, 1e-12);
    EXPECT_NEAR(d.probability_margin, 0.4, 1e-12);
}

TEST(Dispersion, ThreeClassMargin) {
    EXPECT_NEAR(disp({0.7, 0.2, 0.1}).probability_margin, 0.5, 1e-12);
}

TEST(Dispersion, HeatmapsMatchPixelwise) {
    std::mt19937_64 rng(5);
    const SoftmaxFrame f = testutil::random_softmax(rng, 6, 7, 4);
    const auto h = dispersion_heatmaps(f);
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 7; ++c) {
            const auto d = pixel_dispersion(f.pixel(r, c), 4);
            EXPECT_EQ(h.entropy(r, c), d.entropy);
            EXPECT_EQ(h.variation_ratio(r, c), d.variation_ratio);
            EXPECT_EQ(h.probability_margin(r, c), d.probability_margin);
        }
    }
}

TEST(Dispersion, RangesAndOrdering) {
    std::mt19937_64 rng(9);
    for (int classes = 2; classes <= 6; ++classes) {
        const SoftmaxFrame f = testutil::random_softmax(rng, 16, 16, classes);
        const auto h = dispersion_heatmaps(f);
        for (std::size_t z = 0; z < h.entropy.size(); ++z) {
            const double e = h.entropy.data()[z], v = h.variation_ratio.data()[z], m = h.probability_margin.data()[z];
            ASSERT_GE(e, 0.0);
            ASSERT_LE(e, 1.0);
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
            ASSERT_GE(m, v);
            ASSERT_LE(m, 1.0);
        }
    }
}

TEST(MeanCellState, IdentityForSingleFeature) {
    const Tensor t = make_tensor({2, 3, 1}, {1, 2, 3, 4, 5, 6});
    const Heatmap h = mean_cell_state(t);
    for (int z = 0; z < 6; ++z) EXPECT_EQ(h.data()[z], t.values[z]);
}

TEST(MeanCellState, TwoFeatureMean) {
    EXPECT_DOUBLE_EQ(mean_cell_state(make_tensor({1, 1, 2}, {1.0f, 3.0f}))(0, 0), 2.0);
}

TEST(MeanCellState, MatchesLoopOracle) {
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 1.0f);
    Tensor t = make_tensor({4, 4, 8});
    for (auto& v : t.values) v = n(rng);
    const Heatmap h = mean_cell_state(t);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            double s = 0.0;
            for (int f = 0; f < 8; ++f) s += t.values[(r * 4 + c) * 8 + f];
            EXPECT_NEAR(h(r, c), s / 8.0, 1e-9);
        }
    }
}

TEST(Stability, IdenticalBlocksGiveZero) {
    const CellStateStack s(2, 2, 4, std::vector<double>(16, 0.7));
    const auto c = stability_heatmaps(s);
    ASSERT_EQ(c.size(), 3u);
    for (const auto& h : c)
        for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(Stability, DifferenceToFirstBlock) {
    // One pixel, blocks C1..C3 = 0.4, 0.9, 0.1.
    const auto c = stability_heatmaps(CellStateStack(1, 1, 3, {0.4, 0.9, 0.1}));
    ASSERT_EQ(c.size(), 2u);
    EXPECT_NEAR(c[0](0, 0), 0.5, 1e-12);
    EXPECT_NEAR(c[1](0, 0), 0.3, 1e-12);
}

TEST(Stability, AbsoluteValue) {
    const auto c = stability_heatmaps(CellStateStack(1, 1, 2, {-0.2, 0.3}));
    EXPECT_NEAR(c[0](0, 0), 0.5, 1e-12);
}

TEST(Stability, FromBlocksMatchesInterleavedTensor) {
    Heatmap a(2, 2), b(2, 2);
    for (int z = 0; z < 4; ++z) {
        a.data()[z] = z;
        b.data()[z] = 10 * z;
    }
    const CellStateStack s = CellStateStack::from_blocks({a, b});
    const CellStateStack t = CellStateStack::from_tensor(make_tensor({2, 2, 2}, {0, 0, 1, 10, 2, 20, 3, 30}));
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            for (int j = 0; j < 2; ++j) EXPECT_EQ(s(r, c, j), t(r, c, j));
    EXPECT_THROW(CellStateStack::from_blocks({a}), Error);
}
