#pragma once

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "cellstab/models/linear.hpp"
#include "cellstab/models/training.hpp"

namespace cellstab {

/// One hidden ReLU layer. Parameters live in a single vector:
/// [W1 (hidden x inputs, column-major) | b1 | w2 | b2].
class ShallowNet {
public:
    ShallowNet() = default;
    ShallowNet(int inputs, int hidden, Task task) : inputs_(inputs), hidden_(hidden), task_(task) {
        if (inputs < 1 || hidden < 1) throw Error("ShallowNet: dimensions must be positive");
        theta_ = Eigen::VectorXd::Zero(parameter_count(inputs, hidden));
    }

    static Eigen::Index parameter_count(int inputs, int hidden) {
        return Eigen::Index{hidden} * inputs + 2 * Eigen::Index{hidden} + 1;
    }

    void init_random(uint64_t seed) {
        std::mt19937_64 rng(seed);
        const double a1 = std::sqrt(6.0 / inputs_);
        const double a2 = std::sqrt(6.0 / (hidden_ + 1));
        std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
        theta_.setZero();
        const Eigen::Index w1 = Eigen::Index{hidden_} * inputs_;
        for (Eigen::Index k = 0; k < w1; ++k) theta_(k) = u1(rng);
        for (Eigen::Index k = 0; k < hidden_; ++k) theta_(w1 + hidden_ + k) = u2(rng);
    }

    /// Mean loss over (x, y) at parameters theta: binary cross-entropy on the
    /// logit for classification, mean squared error for regression.
    double loss_and_gradient(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             Eigen::VectorXd* grad) const {
        const Eigen::Index n = x.rows();
        const Eigen::Index w1_size = Eigen::Index{hidden_} * inputs_;
        const Eigen::Map<const Eigen::MatrixXd> w1(theta.data(), hidden_, inputs_);
        const auto b1 = theta.segment(w1_size, hidden_);
        const auto w2 = theta.segment(w1_size + hidden_, hidden_);
        const double b2 = theta(w1_size + 2 * hidden_);

        const Eigen::MatrixXd pre = (w1 * x.transpose()).colwise() + b1;  // hidden x n
        const Eigen::MatrixXd act = pre.cwiseMax(0.0);
        const Eigen::VectorXd z = (act.transpose() * w2).array() + b2;

        double loss = 0.0;
        Eigen::VectorXd dz(n);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (task_ == Task::classification) {
                loss += detail::softplus(z(i)) - y(i) * z(i);
                dz(i) = (detail::sigmoid(z(i)) - y(i)) * inv_n;
            } else {
                loss += (z(i) - y(i)) * (z(i) - y(i));
                dz(i) = 2.0 * (z(i) - y(i)) * inv_n;
            }
        }
        loss *= inv_n;
        if (grad) {
            grad->resize(theta.size());
            Eigen::Map<Eigen::MatrixXd> gw1(grad->data(), hidden_, inputs_);
            const Eigen::MatrixXd dpre = ((w2 * dz.transpose()).array() * (pre.array() > 0.0).cast<double>()).matrix();
            gw1 = dpre * x;
            grad->segment(w1_size, hidden_) = dpre.rowwise().sum();
            grad->segment(w1_size + hidden_, hidden_) = act * dz;
            (*grad)(w1_size + 2 * hidden_) = dz.sum();
        }
        return loss;
    }

    Eigen::VectorXd raw(const Eigen::MatrixXd& x) const {
        if (x.cols() != inputs_) throw Error("ShallowNet: input width mismatch");
        const Eigen::Index w1_size = Eigen::Index{hidden_} * inputs_;
        const Eigen::Map<const Eigen::MatrixXd> w1(theta_.data(), hidden_, inputs_);
        const Eigen::MatrixXd act = ((w1 * x.transpose()).colwise() + theta_.segment(w1_size, hidden_)).cwiseMax(0.0);
        return (act.transpose() * theta_.segment(w1_size + hidden_, hidden_)).array() + theta_(w1_size + 2 * hidden_);
    }

    TrainingLog fit(const Design& train, const Design& val, const NetParams& params, uint64_t seed) {
        return detail::train_adam(
            theta_, train, val, params, seed,
            [this](const Eigen::VectorXd& th, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::VectorXd* g) {
                return loss_and_gradient(th, x, y, g);
            },
            "shallow_nn");
    }

    int inputs() const noexcept { return inputs_; }
    int hidden() const noexcept { return hidden_; }
    Task task() const noexcept { return task_; }
    Eigen::VectorXd& parameters() noexcept { return theta_; }
    const Eigen::VectorXd& parameters() const noexcept { return theta_; }

private:
    int inputs_ = 0;
    int hidden_ = 0;
    Task task_ = Task::regression;
    Eigen::VectorXd theta_;
};

}  // namespace cellstab
