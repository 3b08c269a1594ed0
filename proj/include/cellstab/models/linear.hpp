#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "cellstab/dataset.hpp"

namespace cellstab {

struct LinearParams {
    double ridge = 1e-6;        // L2 on the weights (not the intercept)
    double logistic_l2 = 1e-4;  // same, for the logistic objective
    int max_iter = 100;
    double tol = 1e-10;
};

/// Ridge least squares (regression) or L2-regularized logistic regression
/// (classification). raw() is the linear predictor.
struct LinearModel {
    Task task = Task::regression;
    Eigen::VectorXd weights;
    double intercept = 0.0;
    int iterations = 0;

    Eigen::VectorXd raw(const Eigen::MatrixXd& x) const { return (x * weights).array() + intercept; }
};

namespace detail {

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double logistic_objective(const Eigen::MatrixXd& xa, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                                 double l2) {
    const Eigen::VectorXd z = xa * beta;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y(i) * z(i);
    const Eigen::Index d = beta.size() - 1;
    return loss / static_cast<double>(z.size()) + 0.5 * l2 * beta.head(d).squaredNorm();
}

}  // namespace detail

inline LinearModel fit_linear(const Design& train, Task task, const LinearParams& params = {}) {
    const Eigen::Index n = train.x.rows();
    const Eigen::Index d = train.x.cols();
    if (n == 0) throw Error("fit_linear: empty training set");
    Eigen::MatrixXd xa(n, d + 1);
    xa.leftCols(d) = train.x;
    xa.col(d).setOnes();
    LinearModel model;
    model.task = task;

    if (task == Task::regression) {
        Eigen::MatrixXd gram = xa.transpose() * xa;
        gram.diagonal().head(d).array() += params.ridge * static_cast<double>(n);
        const Eigen::VectorXd beta = gram.ldlt().solve(xa.transpose() * train.y);
        model.weights = beta.head(d);
        model.intercept = beta(d);
        model.iterations = 1;
        return model;
    }

    // Newton iterations on the penalized mean log-loss with step halving.
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
    const double ybar = train.y.mean();
    if (ybar > 0 && ybar < 1) beta(d) = std::log(ybar / (1 - ybar));
    double objective = detail::logistic_objective(xa, train.y, beta, params.logistic_l2);
    const double inv_n = 1.0 / static_cast<double>(n);
    int iter = 0;
    for (; iter < params.max_iter; ++iter) {
        const Eigen::VectorXd z = xa * beta;
        Eigen::VectorXd p(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p(i) = detail::sigmoid(z(i));
            w(i) = std::max(p(i) * (1 - p(i)), 1e-12);
        }
        Eigen::VectorXd grad = inv_n * (xa.transpose() * (p - train.y));
        grad.head(d) += params.logistic_l2 * beta.head(d);
        Eigen::MatrixXd hess = inv_n * (xa.transpose() * w.asDiagonal() * xa);
        hess.diagonal().head(d).array() += params.logistic_l2;
        hess.diagonal()(d) += 1e-12;
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        double scale = 1.0;
        Eigen::VectorXd next = beta - step;
        double next_obj = detail::logistic_objective(xa, train.y, next, params.logistic_l2);
        while (next_obj > objective && scale > 1e-8) {
            scale *= 0.5;
            next = beta - scale * step;
            next_obj = detail::logistic_objective(xa, train.y, next, params.logistic_l2);
        }
        if (!std::isfinite(next_obj)) throw Error("fit_linear: non-finite logistic loss");
        const double change = (scale * step).lpNorm<Eigen::Infinity>();
        beta = next;
        const double improvement = objective - next_obj;
        objective = next_obj;
        if (change < params.tol || improvement < params.tol * params.tol) {
            ++iter;
            break;
        }
    }
    model.weights = beta.head(d);
    model.intercept = beta(d);
    model.iterations = iter;
    return model;
}

}  // namespace cellstab
