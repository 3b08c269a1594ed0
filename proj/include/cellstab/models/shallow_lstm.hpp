#pragma once

// Single-layer LSTM meta model. A flat design row (see Layout) is unrolled
// over its T+1 slots from the oldest (slot T) to the current frame (slot 0);
// slots whose presence flag is 0 are skipped and the state carried through.
// A dense head maps the final hidden state to one logit / regression output.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cellstab/models/linear.hpp"
#include "cellstab/models/training.hpp"

namespace cellstab {

class ShallowLstm {
public:
    ShallowLstm() = default;
    ShallowLstm(Layout layout, int hidden, Task task) : layout_(layout), hidden_(hidden), task_(task) {
        if (layout.step_features < 1 || hidden < 1) throw Error("ShallowLstm: dimensions must be positive");
        theta_ = Eigen::VectorXd::Zero(parameter_count(layout.step_features, hidden));
    }

    /// [W (4H x F) | U (4H x H) | b (4H) | v (H) | c], gate order i, f, g, o.
    static Eigen::Index parameter_count(int features, int hidden) {
        const Eigen::Index h4 = 4 * Eigen::Index{hidden};
        return h4 * features + h4 * hidden + h4 + hidden + 1;
    }

    void init_random(uint64_t seed) {
        std::mt19937_64 rng(seed);
        const double a = 1.0 / std::sqrt(static_cast<double>(hidden_));
        std::uniform_real_distribution<double> u(-a, a);
        for (Eigen::Index k = 0; k < theta_.size(); ++k) theta_(k) = u(rng);
        const Offsets o = offsets();
        theta_.segment(o.b, 4 * hidden_).setZero();
        theta_.segment(o.b + hidden_, hidden_).setOnes();  // forget-gate bias
        theta_(o.c) = 0.0;
    }

    double loss_and_gradient(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             Eigen::VectorXd* grad) const {
        std::vector<StepCache> cache;
        Eigen::MatrixXd h_final;
        const Eigen::VectorXd z = forward(theta, x, &cache, &h_final);
        const Eigen::Index n = x.rows();
        const double inv_n = 1.0 / static_cast<double>(n);
        double loss = 0.0;
        Eigen::VectorXd dz(n);
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
        if (!grad) return loss;

        const int H = hidden_;
        const int F = layout_.step_features;
        const Offsets o = offsets();
        grad->setZero(theta.size());
        const Eigen::Map<const Eigen::MatrixXd> U(theta.data() + o.u, 4 * H, H);
        const auto v = theta.segment(o.v, H);
        Eigen::Map<Eigen::MatrixXd> gW(grad->data() + o.w, 4 * H, F);
        Eigen::Map<Eigen::MatrixXd> gU(grad->data() + o.u, 4 * H, H);
        grad->segment(o.v, H) = h_final * dz;
        (*grad)(o.c) = dz.sum();

        Eigen::MatrixXd dh = v * dz.transpose();  // H x n
        Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(H, n);
        Eigen::MatrixXd dgates(4 * H, n);
        for (auto it = cache.rbegin(); it != cache.rend(); ++it) {
            const StepCache& s = *it;
            const Eigen::ArrayXXd tanh_c = s.c.array().tanh();
            const Eigen::ArrayXXd dc_total = dc.array() + dh.array() * s.o.array() * (1.0 - tanh_c.square());
            const Eigen::RowVectorXd active = s.mask.transpose();
            const Eigen::ArrayXXd keep = active.replicate(H, 1).array();
            dgates.middleRows(0, H) = (dc_total * s.g.array() * s.i.array() * (1.0 - s.i.array()) * keep).matrix();
            dgates.middleRows(H, H) = (dc_total * s.c_prev.array() * s.f.array() * (1.0 - s.f.array()) * keep).matrix();
            dgates.middleRows(2 * H, H) = (dc_total * s.i.array() * (1.0 - s.g.array().square()) * keep).matrix();
            dgates.middleRows(3 * H, H) = (dh.array() * tanh_c * s.o.array() * (1.0 - s.o.array()) * keep).matrix();
            gW.noalias() += dgates * s.x.transpose();
            gU.noalias() += dgates * s.h_prev.transpose();
            grad->segment(o.b, 4 * H) += dgates.rowwise().sum();
            const Eigen::MatrixXd dh_prev = U.transpose() * dgates;
            dh = (dh_prev.array() + dh.array() * (1.0 - keep)).matrix();
            dc = (dc_total * s.f.array() * keep + dc.array() * (1.0 - keep)).matrix();
        }
        return loss;
    }

    Eigen::VectorXd raw(const Eigen::MatrixXd& x) const {
        if (x.cols() != layout_.input_dim()) throw Error("ShallowLstm: input width mismatch");
        return forward(theta_, x, nullptr, nullptr);
    }

    TrainingLog fit(const Design& train, const Design& val, const NetParams& params, uint64_t seed) {
        if (!(train.layout == layout_)) throw Error("ShallowLstm: training layout mismatch");
        return detail::train_adam(
            theta_, train, val, params, seed,
            [this](const Eigen::VectorXd& th, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::VectorXd* g) {
                return loss_and_gradient(th, x, y, g);
            },
            "shallow_lstm");
    }

    const Layout& layout() const noexcept { return layout_; }
    int hidden() const noexcept { return hidden_; }
    Task task() const noexcept { return task_; }
    Eigen::VectorXd& parameters() noexcept { return theta_; }
    const Eigen::VectorXd& parameters() const noexcept { return theta_; }

private:
    struct Offsets {
        Eigen::Index w, u, b, v, c;
    };
    struct StepCache {
        Eigen::MatrixXd x, h_prev, c_prev, i, f, g, o, c;  // c = new cell state
        Eigen::VectorXd mask;
    };

    Offsets offsets() const {
        const Eigen::Index h4 = 4 * Eigen::Index{hidden_};
        Offsets o{};
        o.w = 0;
        o.u = h4 * layout_.step_features;
        o.b = o.u + h4 * hidden_;
        o.v = o.b + h4;
        o.c = o.v + hidden_;
        return o;
    }

    Eigen::VectorXd forward(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, std::vector<StepCache>* cache,
                            Eigen::MatrixXd* h_final) const {
        const int H = hidden_;
        const int F = layout_.step_features;
        const Eigen::Index n = x.rows();
        const Offsets o = offsets();
        const Eigen::Map<const Eigen::MatrixXd> W(theta.data() + o.w, 4 * H, F);
        const Eigen::Map<const Eigen::MatrixXd> U(theta.data() + o.u, 4 * H, H);
        const auto b = theta.segment(o.b, 4 * H);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(H, n);
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(H, n);
        Eigen::MatrixXd z(4 * H, n);
        Eigen::MatrixXd xs(F, n);
        for (int slot = layout_.history; slot >= 0; --slot) {
            xs = x.middleCols(slot * F, F).transpose();
            const Eigen::VectorXd mask = x.col(layout_.mask_column(slot)).cwiseMin(1.0).cwiseMax(0.0);
            z.noalias() = W * xs;
            if (n <= 16) {  // per-column products beat the blocked GEMM on tiny batches
                for (Eigen::Index col = 0; col < n; ++col) z.col(col).noalias() += U * h.col(col);
            } else {
                z.noalias() += U * h;
            }
            z.colwise() += b;
            auto i = z.middleRows(0, H).array();
            auto f = z.middleRows(H, H).array();
            auto g = z.middleRows(2 * H, H).array();
            auto og = z.middleRows(3 * H, H).array();
            i = (1.0 + (-i).exp()).inverse();
            f = (1.0 + (-f).exp()).inverse();
            g = g.tanh();
            og = (1.0 + (-og).exp()).inverse();
            Eigen::ArrayXXd c_new = f * c.array() + i * g;
            Eigen::ArrayXXd tanh_c = c_new.tanh();
            if (cache) {
                StepCache s;
                s.x = xs;
                s.mask = mask;
                s.h_prev = h;
                s.c_prev = c;
                s.i = i.matrix();
                s.f = f.matrix();
                s.g = g.matrix();
                s.o = og.matrix();
                s.c = c_new.matrix();
                cache->push_back(std::move(s));
            }
            for (Eigen::Index col = 0; col < n; ++col) {
                if (mask(col) == 1.0) {
                    h.col(col) = (og.col(col) * tanh_c.col(col)).matrix();
                    c.col(col) = c_new.col(col).matrix();
                } else if (mask(col) != 0.0) {
                    const double k = mask(col);
                    h.col(col) = (k * og.col(col) * tanh_c.col(col) + (1.0 - k) * h.col(col).array()).matrix();
                    c.col(col) = (k * c_new.col(col) + (1.0 - k) * c.col(col).array()).matrix();
                }
            }
        }
        if (h_final) *h_final = h;
        return (h.transpose() * theta.segment(o.v, H)).array() + theta(o.c);
    }

    Layout layout_;
    int hidden_ = 0;
    Task task_ = Task::regression;
    Eigen::VectorXd theta_;
};

}  // namespace cellstab
