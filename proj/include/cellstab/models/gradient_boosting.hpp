#pragma once

// Gradient-boosted regression trees with second-order leaf values and exact
// greedy splits, grown level by level over presorted feature columns.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "cellstab/dataset.hpp"
#include "cellstab/models/linear.hpp"

namespace cellstab {

struct GbParams {
    int max_rounds = 200;
    int max_depth = 3;
    double learning_rate = 0.1;
    double lambda = 1.0;  // L2 on leaf values
    int min_samples_leaf = 5;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
        int n = 0;
        while (nodes[n].feature >= 0) n = row(nodes[n].feature) < nodes[n].threshold ? nodes[n].left : nodes[n].right;
        return nodes[n].value;
    }
};

struct GbModel {
    Task task = Task::regression;
    double base_score = 0.0;
    double learning_rate = 0.1;
    std::vector<Tree> trees;
    int rounds_trained = 0;

    Eigen::VectorXd raw(const Eigen::MatrixXd& x) const {
        Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), base_score);
        for (const Tree& t : trees) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) += learning_rate * t.predict(x.row(i));
        }
        return out;
    }
};

namespace detail {

inline double boosting_loss(Task task, const Eigen::VectorXd& raw, const Eigen::VectorXd& y) {
    if (y.size() == 0) return 0.0;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        loss += task == Task::regression ? 0.5 * (raw(i) - y(i)) * (raw(i) - y(i)) : softplus(raw(i)) - y(i) * raw(i);
    }
    return loss / static_cast<double>(y.size());
}

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, const GbParams& params) : x_(x), params_(params) {
        sorted_.resize(x.cols());
        for (Eigen::Index f = 0; f < x.cols(); ++f) {
            auto& idx = sorted_[f];
            idx.resize(x.rows());
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
        }
    }

    Tree build(const std::vector<double>& g, const std::vector<double>& h) const {
        const int n = static_cast<int>(x_.rows());
        Tree tree;
        tree.nodes.push_back({});
        std::vector<int> node_of(n, 0);
        std::vector<Stats> stats(1);
        for (int i = 0; i < n; ++i) stats[0].add(g[i], h[i]);
        std::vector<int> frontier = {0};

        for (int depth = 0; depth < params_.max_depth && !frontier.empty(); ++depth) {
            std::vector<int> slot(tree.nodes.size(), -1);
            for (std::size_t k = 0; k < frontier.size(); ++k) slot[frontier[k]] = static_cast<int>(k);
            std::vector<Split> best(frontier.size());

            for (Eigen::Index f = 0; f < x_.cols(); ++f) {
                std::vector<Stats> left(frontier.size());
                std::vector<double> last(frontier.size(), 0.0);
                for (int i : sorted_[f]) {
                    const int k = node_of[i] < static_cast<int>(slot.size()) ? slot[node_of[i]] : -1;
                    if (k < 0) continue;
                    const double v = x_(i, f);
                    if (left[k].n > 0 && v > last[k]) {
                        const Stats& total = stats[frontier[k]];
                        const Stats right = total.minus(left[k]);
                        if (left[k].n >= params_.min_samples_leaf && right.n >= params_.min_samples_leaf) {
                            const double gain = score(left[k]) + score(right) - score(total);
                            if (gain > best[k].gain) best[k] = {gain, static_cast<int>(f), 0.5 * (last[k] + v)};
                        }
                    }
                    left[k].add(g[i], h[i]);
                    last[k] = v;
                }
            }

            std::vector<int> next;
            for (std::size_t k = 0; k < frontier.size(); ++k) {
                if (best[k].feature < 0) continue;
                const int parent = frontier[k];
                const int l = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                stats.resize(tree.nodes.size());
                tree.nodes[parent].feature = best[k].feature;
                tree.nodes[parent].threshold = best[k].threshold;
                tree.nodes[parent].left = l;
                tree.nodes[parent].right = l + 1;
                next.push_back(l);
                next.push_back(l + 1);
            }
            for (int i = 0; i < n; ++i) {
                const TreeNode& nd = tree.nodes[node_of[i]];
                if (nd.feature < 0) continue;
                node_of[i] = x_(i, nd.feature) < nd.threshold ? nd.left : nd.right;
                stats[node_of[i]].add(g[i], h[i]);
            }
            frontier = std::move(next);
        }
        for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
            if (tree.nodes[k].feature < 0) tree.nodes[k].value = -stats[k].g / (stats[k].h + params_.lambda);
        }
        return tree;
    }

private:
    struct Stats {
        double g = 0.0;
        double h = 0.0;
        int n = 0;
        void add(double gi, double hi) {
            g += gi;
            h += hi;
            ++n;
        }
        Stats minus(const Stats& o) const { return {g - o.g, h - o.h, n - o.n}; }
    };
    struct Split {
        double gain = 1e-12;
        int feature = -1;
        double threshold = 0.0;
    };

    double score(const Stats& s) const {
        const double denom = s.h + params_.lambda;
        return denom > 0 ? s.g * s.g / denom : 0.0;
    }

    const Eigen::MatrixXd& x_;
    const GbParams& params_;
    std::vector<std::vector<int>> sorted_;
};

}  // namespace detail

/// Boosts up to max_rounds trees and keeps the prefix with the lowest
/// validation loss (all rounds when val is empty).
inline GbModel fit_gradient_boosting(const Design& train, const Design& val, Task task, const GbParams& params = {}) {
    const Eigen::Index n = train.x.rows();
    if (n == 0) throw Error("fit_gradient_boosting: empty training set");
    if (params.max_rounds < 0 || params.max_depth < 1 || params.learning_rate <= 0 || params.lambda < 0 ||
        params.min_samples_leaf < 1) {
        throw Error("fit_gradient_boosting: invalid hyperparameters");
    }
    GbModel model;
    model.task = task;
    model.learning_rate = params.learning_rate;
    const double ybar = train.y.mean();
    if (task == Task::regression) {
        model.base_score = ybar;
    } else {
        const double p = std::clamp(ybar, 1e-6, 1 - 1e-6);
        model.base_score = std::log(p / (1 - p));
    }

    const detail::TreeBuilder builder(train.x, params);
    Eigen::VectorXd train_raw = Eigen::VectorXd::Constant(n, model.base_score);
    Eigen::VectorXd val_raw = Eigen::VectorXd::Constant(val.x.rows(), model.base_score);
    const bool use_val = val.x.rows() > 0;
    double best_loss = use_val ? detail::boosting_loss(task, val_raw, val.y) : 0.0;
    std::size_t best_rounds = 0;
    std::vector<double> g(n), h(n);

    for (int round = 0; round < params.max_rounds; ++round) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (task == Task::regression) {
                g[i] = train_raw(i) - train.y(i);
                h[i] = 1.0;
            } else {
                const double p = detail::sigmoid(train_raw(i));
                g[i] = p - train.y(i);
                h[i] = p * (1 - p);
            }
        }
        Tree tree = builder.build(g, h);
        for (Eigen::Index i = 0; i < n; ++i) train_raw(i) += params.learning_rate * tree.predict(train.x.row(i));
        for (Eigen::Index i = 0; i < val.x.rows(); ++i) val_raw(i) += params.learning_rate * tree.predict(val.x.row(i));
        model.trees.push_back(std::move(tree));
        if (use_val) {
            const double loss = detail::boosting_loss(task, val_raw, val.y);
            if (loss < best_loss) {
                best_loss = loss;
                best_rounds = model.trees.size();
            }
        } else {
            best_rounds = model.trees.size();
        }
    }
    model.rounds_trained = static_cast<int>(model.trees.size());
    model.trees.resize(best_rounds);
    return model;
}

}  // namespace cellstab
