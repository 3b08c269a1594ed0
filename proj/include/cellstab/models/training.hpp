#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cellstab/dataset.hpp"

namespace cellstab {

struct NetParams {
    int hidden = 50;
    double learning_rate = 1e-3;
    int batch_size = 256;
    int patience = 20;
    int max_epochs = 300;
    bool zero_init = false;
};

struct TrainingLog {
    int epochs_run = 0;
    int best_epoch = 0;
    double best_loss = 0.0;
};

namespace detail {

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    return out;
}

inline Eigen::VectorXd take_rows(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(rows[i]);
    return out;
}

/// Mini-batch Adam with early stopping on the validation loss (training loss
/// when val is empty). `loss_grad(theta, x, y, grad*)` returns the mean loss
/// and, when grad is non-null, writes its gradient.
template <typename LossGrad>
TrainingLog train_adam(Eigen::VectorXd& theta, const Design& train, const Design& val, const NetParams& params,
                       uint64_t seed, LossGrad&& loss_grad, const char* who) {
    if (train.x.rows() == 0) throw Error(std::string(who) + ": empty training set");
    if (params.batch_size < 1 || params.max_epochs < 0 || params.learning_rate <= 0 || params.patience < 1) {
        throw Error(std::string(who) + ": invalid hyperparameters");
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd grad(theta.size());
    std::mt19937_64 rng(seed ^ 0x5DEECE66DULL);
    std::vector<Eigen::Index> order(train.x.rows());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Design& monitor = val.x.rows() > 0 ? val : train;

    auto monitored = [&] { return loss_grad(theta, monitor.x, monitor.y, nullptr); };
    TrainingLog log;
    log.best_loss = monitored();
    Eigen::VectorXd best = theta;
    long step = 0;
    int since_best = 0;
    for (int epoch = 1; epoch <= params.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
            const std::vector<Eigen::Index> rows(order.begin() + start,
                                                 order.begin() + std::min(order.size(), start + params.batch_size));
            const Eigen::MatrixXd xb = take_rows(train.x, rows);
            const Eigen::VectorXd yb = take_rows(train.y, rows);
            const double loss = loss_grad(theta, xb, yb, &grad);
            if (!std::isfinite(loss) || !grad.allFinite()) {
                throw Error(std::string(who) + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch offset " +
                            std::to_string(start) + " (loss = " + std::to_string(loss) + ")");
            }
            ++step;
            m = beta1 * m + (1 - beta1) * grad;
            v = beta2 * v + (1 - beta2) * grad.cwiseProduct(grad);
            const double c1 = 1 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1 - std::pow(beta2, static_cast<double>(step));
            theta.array() -= params.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        }
        log.epochs_run = epoch;
        const double loss = monitored();
        if (!std::isfinite(loss)) throw Error(std::string(who) + ": non-finite monitored loss at epoch " + std::to_string(epoch));
        if (loss < log.best_loss) {
            log.best_loss = loss;
            log.best_epoch = epoch;
            best = theta;
            since_best = 0;
        } else if (++since_best >= params.patience) {
            break;
        }
    }
    theta = best;
    return log;
}

}  // namespace detail
}  // namespace cellstab
