#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cellstab/common.hpp"
#include "cellstab/tensor_io.hpp"

namespace cellstab {

using Heatmap = Grid<double>;

/// Per-pixel class probabilities, (rows, cols, classes) row-major.
class SoftmaxFrame {
public:
    static constexpr double kNormTolerance = 1e-5;

    SoftmaxFrame() = default;

    /// Validates non-negativity and normalization (within kNormTolerance) and
    /// renormalizes each pixel exactly.
    SoftmaxFrame(int rows, int cols, int classes, std::vector<double> probs)
        : rows_(rows), cols_(cols), classes_(classes), probs_(std::move(probs)) {
        if (classes < 2) throw Error("SoftmaxFrame: need at least 2 classes");
        if (probs_.size() != static_cast<std::size_t>(rows) * cols * classes) {
            throw Error("SoftmaxFrame: probability count does not match shape");
        }
        for (std::size_t z = 0; z < static_cast<std::size_t>(rows) * cols; ++z) {
            double* p = probs_.data() + z * classes;
            double sum = 0.0;
            for (int y = 0; y < classes; ++y) {
                if (!(p[y] >= 0.0) || !std::isfinite(p[y])) {
                    throw Error("SoftmaxFrame: invalid probability at pixel " + std::to_string(z));
                }
                sum += p[y];
            }
            if (std::abs(sum - 1.0) > kNormTolerance) {
                throw Error("SoftmaxFrame: pixel " + std::to_string(z) + " sums to " + std::to_string(sum));
            }
            for (int y = 0; y < classes; ++y) p[y] /= sum;
        }
    }

    static SoftmaxFrame from_tensor(const Tensor& t) {
        if (t.ndim != 3) throw Error("SoftmaxFrame: tensor must be 3-D");
        return SoftmaxFrame(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]),
                            std::vector<double>(t.values.begin(), t.values.end()));
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    int classes() const noexcept { return classes_; }

    /// Probabilities of pixel (r, c); classes() entries.
    const double* pixel(int r, int c) const {
        return probs_.data() + (static_cast<std::size_t>(r) * cols_ + c) * classes_;
    }
    double operator()(int r, int c, int y) const { return pixel(r, c)[y]; }

private:
    int rows_ = 0;
    int cols_ = 0;
    int classes_ = 0;
    std::vector<double> probs_;
};

/// Mean cell-state maps for blocks 1..l, stored (rows, cols, l).
class CellStateStack {
public:
    CellStateStack() = default;
    CellStateStack(int rows, int cols, int blocks, std::vector<double> values)
        : rows_(rows), cols_(cols), blocks_(blocks), values_(std::move(values)) {
        if (blocks < 2) throw Error("CellStateStack: need at least 2 blocks");
        if (values_.size() != static_cast<std::size_t>(rows) * cols * blocks) {
            throw Error("CellStateStack: value count does not match shape");
        }
        for (double v : values_) {
            if (!std::isfinite(v)) throw Error("CellStateStack: non-finite cell state");
        }
    }

    static CellStateStack from_tensor(const Tensor& t) {
        if (t.ndim != 3) throw Error("CellStateStack: tensor must be 3-D");
        return CellStateStack(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]),
                              std::vector<double>(t.values.begin(), t.values.end()));
    }

    /// Stacks already-reduced per-block mean maps (block 1 first).
    static CellStateStack from_blocks(const std::vector<Heatmap>& means) {
        if (means.size() < 2) throw Error("CellStateStack: need at least 2 blocks");
        const int rows = means[0].rows();
        const int cols = means[0].cols();
        const int blocks = static_cast<int>(means.size());
        std::vector<double> values(static_cast<std::size_t>(rows) * cols * blocks);
        for (int b = 0; b < blocks; ++b) {
            if (means[b].rows() != rows || means[b].cols() != cols) throw Error("CellStateStack: block shape mismatch");
            for (std::size_t z = 0; z < means[b].size(); ++z) values[z * blocks + b] = means[b].data()[z];
        }
        return CellStateStack(rows, cols, blocks, std::move(values));
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    int blocks() const noexcept { return blocks_; }
    /// block is zero-based: block 0 holds the first ConvLSTM block's mean state.
    double operator()(int r, int c, int block) const {
        return values_[(static_cast<std::size_t>(r) * cols_ + c) * blocks_ + block];
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    int blocks_ = 0;
    std::vector<double> values_;
};

/// Argmax class per pixel, ties to the lowest class index.
inline LabelFrame predicted_labels(const SoftmaxFrame& softmax) {
    LabelFrame labels(softmax.rows(), softmax.cols());
    for (int r = 0; r < softmax.rows(); ++r) {
        for (int c = 0; c < softmax.cols(); ++c) {
            const double* p = softmax.pixel(r, c);
            labels(r, c) = static_cast<int32_t>(std::max_element(p, p + softmax.classes()) - p);
        }
    }
    return labels;
}

struct DispersionHeatmaps {
    Heatmap entropy;
    Heatmap variation_ratio;
    Heatmap probability_margin;
};

/// Normalized entropy, variation ratio and probability margin of one pixel.
struct PixelDispersion {
    double entropy;
    double variation_ratio;
    double probability_margin;
};

inline PixelDispersion pixel_dispersion(const double* p, int classes) {
    double h = 0.0;
    double best = -1.0;
    double second = -1.0;
    for (int y = 0; y < classes; ++y) {
        if (p[y] > 0.0) h -= p[y] * std::log(p[y]);
        if (p[y] > best) {
            second = best;
            best = p[y];
        } else if (p[y] > second) {
            second = p[y];
        }
    }
    const double e = std::clamp(h / std::log(static_cast<double>(classes)), 0.0, 1.0);
    const double v = 1.0 - best;
    const double m = std::clamp(1.0 - best + second, 0.0, 1.0);
    return {e, v, m};
}

inline DispersionHeatmaps dispersion_heatmaps(const SoftmaxFrame& softmax) {
    DispersionHeatmaps out{Heatmap(softmax.rows(), softmax.cols()), Heatmap(softmax.rows(), softmax.cols()),
                           Heatmap(softmax.rows(), softmax.cols())};
    for (int r = 0; r < softmax.rows(); ++r) {
        for (int c = 0; c < softmax.cols(); ++c) {
            const auto d = pixel_dispersion(softmax.pixel(r, c), softmax.classes());
            out.entropy(r, c) = d.entropy;
            out.variation_ratio(r, c) = d.variation_ratio;
            out.probability_margin(r, c) = d.probability_margin;
        }
    }
    return out;
}

/// Reduces a raw (rows, cols, F) block state to its per-pixel feature mean.
inline Heatmap mean_cell_state(const Tensor& raw_block_state) {
    if (raw_block_state.ndim != 3 || raw_block_state.dims[2] < 1) {
        throw Error("mean_cell_state: expected a (rows, cols, F) tensor with F >= 1");
    }
    const int rows = static_cast<int>(raw_block_state.dims[0]);
    const int cols = static_cast<int>(raw_block_state.dims[1]);
    const std::size_t features = raw_block_state.dims[2];
    Heatmap out(rows, cols);
    for (std::size_t z = 0; z < out.size(); ++z) {
        double sum = 0.0;
        for (std::size_t f = 0; f < features; ++f) sum += raw_block_state.values[z * features + f];
        out.data()[z] = sum / static_cast<double>(features);
    }
    return out;
}

/// C^j = |C̄^1 - C̄^{j+1}| for j = 1..l-1; element j-1 of the result holds C^j.
inline std::vector<Heatmap> stability_heatmaps(const CellStateStack& stack) {
    std::vector<Heatmap> out;
    out.reserve(stack.blocks() - 1);
    for (int j = 1; j < stack.blocks(); ++j) {
        Heatmap h(stack.rows(), stack.cols());
        for (int r = 0; r < stack.rows(); ++r) {
            for (int c = 0; c < stack.cols(); ++c) h(r, c) = std::abs(stack(r, c, 0) - stack(r, c, j));
        }
        out.push_back(std::move(h));
    }
    return out;
}

}  // namespace cellstab
