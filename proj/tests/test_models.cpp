#include <gtest/gtest.h>

#include <random>

#include "cellstab/models/meta_model.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace cellstab;

namespace {

Design design(int features, int history, const Eigen::MatrixXd& feats, const Eigen::VectorXd& y,
              const Eigen::MatrixXd& masks = {}) {
    Design d;
    d.layout = {features, history};
    d.x.resize(feats.rows(), d.layout.input_dim());
    d.x.leftCols(d.layout.feature_columns()) = feats;
    if (masks.size() == 0) {
        d.x.rightCols(d.layout.slots()).setOnes();
    } else {
        d.x.rightCols(d.layout.slots()) = masks;
    }
    d.y = y;
    return d;
}

Design random_design(std::mt19937_64& rng, int n, int features, int history, Task task, bool random_masks = false) {
    std::normal_distribution<double> g;
    std::bernoulli_distribution coin(0.5);
    const int slots = history + 1;
    Eigen::MatrixXd f(n, slots * features), m(n, slots);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < f.cols(); ++k) f(i, k) = g(rng);
        for (int s = 0; s < slots; ++s) m(i, s) = s == 0 || !random_masks || coin(rng) ? 1.0 : 0.0;
        for (int s = 0; s < slots; ++s)
            if (m(i, s) == 0.0) f.block(i, s * features, 1, features).setZero();
        y(i) = task == Task::classification ? (coin(rng) ? 1.0 : 0.0) : std::uniform_real_distribution<double>(0, 1)(rng);
    }
    return design(features, history, f, y, m);
}

double train_accuracy(const TrainedModel& m, const Design& d) {
    const Eigen::VectorXd p = predict(m, d.x);
    int ok = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) ok += (p(i) >= 0.5) == (d.y(i) > 0.5);
    return static_cast<double>(ok) / static_cast<double>(p.size());
}

}  // namespace

TEST(Linear, RecoversExactSlope) {
    Eigen::MatrixXd x(20, 1);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        x(i, 0) = -1.0 + 0.1 * i;
        y(i) = 2.5 * x(i, 0) - 0.75;
    }
    const auto d = design(1, 0, x, y);
    LinearParams p;
    p.ridge = 1e-6;
    const auto m = fit_linear(d, Task::regression, p);
    EXPECT_NEAR(m.weights(0), 2.5, 1e-5);
    EXPECT_NEAR(m.intercept + m.weights(1), -0.75, 1e-5);
    EXPECT_NEAR(m.raw(d.x)(3), y(3), 1e-5);
}

TEST(Linear, ConstantTarget) {
    std::mt19937_64 rng(1);
    auto d = random_design(rng, 50, 3, 0, Task::regression);
    d.y.setConstant(0.37);
    const auto m = fit_linear(d, Task::regression);
    const Eigen::VectorXd p = m.raw(d.x);
    for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_NEAR(p(i), 0.37, 1e-6);
}

TEST(Linear, SeparableClassification) {
    std::mt19937_64 rng(2);
    auto d = random_design(rng, 200, 2, 0, Task::classification);
    for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) = d.x(i, 0) + 0.5 * d.x(i, 1) > 0.1 ? 1.0 : 0.0;
    ModelSpec spec;
    spec.family = Family::linear;
    spec.task = Task::classification;
    const auto m = train_model(spec, d, d);
    EXPECT_EQ(train_accuracy(m, d), 1.0);
}

TEST(GradientBoosting, StumpFitsStep) {
    Eigen::MatrixXd x(40, 1);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) {
        x(i, 0) = -2.0 + 0.1 * i + 0.01;
        y(i) = x(i, 0) > 0 ? 1.0 : 0.0;
    }
    const auto d = design(1, 0, x, y);
    GbParams p;
    p.max_rounds = 1;
    p.max_depth = 1;
    p.learning_rate = 1.0;
    p.lambda = 0.0;
    p.min_samples_leaf = 1;
    const auto m = fit_gradient_boosting(d, d, Task::regression, p);
    ASSERT_EQ(m.trees.size(), 1u);
    const Eigen::VectorXd r = m.raw(d.x);
    EXPECT_NEAR(detail::boosting_loss(Task::regression, r, y), 0.0, 1e-24);
}

TEST(GradientBoosting, ConstantTargetsGiveBaseScore) {
    std::mt19937_64 rng(3);
    auto d = random_design(rng, 60, 3, 0, Task::regression);
    d.y.setConstant(0.25);
    const auto m = fit_gradient_boosting(d, d, Task::regression);
    EXPECT_DOUBLE_EQ(m.base_score, 0.25);
    const Eigen::VectorXd r = m.raw(d.x);
    for (Eigen::Index i = 0; i < r.size(); ++i) EXPECT_DOUBLE_EQ(r(i), 0.25);
}

TEST(GradientBoosting, ValidationSelectsRounds) {
    std::mt19937_64 rng(4);
    const auto tr = random_design(rng, 200, 4, 0, Task::classification);
    const auto va = random_design(rng, 80, 4, 0, Task::classification);
    GbParams p;
    p.max_rounds = 30;
    const auto m = fit_gradient_boosting(tr, va, Task::classification, p);
    EXPECT_LE(static_cast<int>(m.trees.size()), p.max_rounds);
    EXPECT_LE(m.rounds_trained, p.max_rounds);
}

TEST(ShallowNet, GradientCheck) {
    for (Task task : {Task::classification, Task::regression}) {
        for (uint64_t seed = 0; seed < 3; ++seed) {
            std::mt19937_64 rng(seed);
            const auto d = random_design(rng, 5, 4, 1, task);
            ShallowNet net(d.layout.input_dim(), 7, task);
            net.init_random(seed);
            net.parameters() += Eigen::VectorXd::Constant(net.parameters().size(), 0.01);
            const double err = testutil::max_gradient_error(
                [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) { return net.loss_and_gradient(th, d.x, d.y, g); },
                net.parameters());
            EXPECT_LE(err, 1e-4) << to_string(task) << " seed " << seed;
        }
    }
}

TEST(ShallowNet, ZeroInitZeroTargetsStaysPut) {
    std::mt19937_64 rng(5);
    auto d = random_design(rng, 30, 3, 0, Task::regression);
    d.y.setZero();
    ShallowNet net(d.layout.input_dim(), 6, Task::regression);
    NetParams p;
    p.max_epochs = 5;
    const Eigen::VectorXd before = net.raw(d.x);
    net.fit(d, d, p, 0);
    EXPECT_EQ(net.raw(d.x), before);
    EXPECT_EQ(net.loss_and_gradient(net.parameters(), d.x, d.y, nullptr), 0.0);
}

TEST(ShallowNet, LearnsXor) {
    std::mt19937_64 rng(0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd x(400, 2);
    Eigen::VectorXd y(400);
    for (int i = 0; i < 400; ++i) {
        x(i, 0) = u(rng);
        x(i, 1) = u(rng);
        y(i) = (x(i, 0) > 0) != (x(i, 1) > 0) ? 1.0 : 0.0;
    }
    const auto d = design(2, 0, x, y);
    ModelSpec spec;
    spec.family = Family::shallow_nn;
    spec.task = Task::classification;
    spec.seed = 0;
    spec.net.max_epochs = 2000;
    spec.net.patience = 2000;
    spec.net.batch_size = 32;
    const auto m = train_model(spec, d, d);
    EXPECT_GT(train_accuracy(m, d), 0.9);
}

TEST(ShallowLstm, GradientCheckThroughMaskedSteps) {
    for (Task task : {Task::classification, Task::regression}) {
        for (uint64_t seed = 0; seed < 3; ++seed) {
            std::mt19937_64 rng(seed + 10);
            const auto d = random_design(rng, 5, 3, 2, task, true);
            ShallowLstm lstm(d.layout, 4, task);
            lstm.init_random(seed);
            const double err = testutil::max_gradient_error(
                [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) { return lstm.loss_and_gradient(th, d.x, d.y, g); },
                lstm.parameters());
            EXPECT_LE(err, 1e-4) << to_string(task) << " seed " << seed;
        }
    }
}

TEST(ShallowLstm, SingleStepIsFinite) {
    std::mt19937_64 rng(6);
    const auto d = random_design(rng, 8, 5, 0, Task::regression);
    ShallowLstm lstm(d.layout, 6, Task::regression);
    lstm.init_random(1);
    const Eigen::VectorXd r = lstm.raw(d.x);
    ASSERT_EQ(r.size(), 8);
    for (Eigen::Index i = 0; i < r.size(); ++i) EXPECT_TRUE(std::isfinite(r(i)));
}

TEST(ShallowLstm, MaskedSlotsAreIgnored) {
    std::mt19937_64 rng(7);
    auto d = random_design(rng, 6, 3, 3, Task::classification, true);
    ShallowLstm lstm(d.layout, 5, Task::classification);
    lstm.init_random(2);
    const Eigen::VectorXd before = lstm.raw(d.x);
    // Garbage in masked slots must not change the output.
    for (Eigen::Index i = 0; i < d.x.rows(); ++i)
        for (int s = 1; s < d.layout.slots(); ++s)
            if (d.x(i, d.layout.mask_column(s)) == 0.0) d.x.block(i, s * 3, 1, 3).setConstant(42.0);
    EXPECT_TRUE(lstm.raw(d.x).isApprox(before, 1e-14));
}

TEST(ShallowLstm, RemembersFirstStepSign) {
    constexpr int T = 4, F = 2;
    auto make = [&](std::mt19937_64& rng, int n) {
        std::normal_distribution<double> g;
        Eigen::MatrixXd f(n, (T + 1) * F);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < f.cols(); ++k) f(i, k) = g(rng);
            y(i) = f(i, T * F) > 0 ? 1.0 : 0.0;  // slot T is the oldest step
        }
        return design(F, T, f, y);
    };
    std::mt19937_64 rng(0);
    const auto tr = make(rng, 2000), va = make(rng, 300), te = make(rng, 500);
    ModelSpec spec;
    spec.family = Family::shallow_lstm;
    spec.task = Task::classification;
    spec.net.hidden = 16;
    spec.net.learning_rate = 1e-2;
    spec.net.batch_size = 64;
    spec.net.max_epochs = 60;
    const auto m = train_model(spec, tr, va);
    EXPECT_GT(train_accuracy(m, te), 0.9);
}

TEST(Predict, ClampAndPurity) {
    TrainedModel tm;
    tm.family = Family::linear;
    tm.task = Task::regression;
    tm.layout = {1, 0};
    LinearModel lm;
    lm.task = Task::regression;
    lm.weights = Eigen::VectorXd::Zero(2);
    lm.intercept = 1.3;
    tm.model = lm;
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 2);
    EXPECT_EQ(predict(tm, x)(0), 1.0);
    lm.intercept = -0.2;
    tm.model = lm;
    EXPECT_EQ(predict(tm, x)(1), 0.0);
    EXPECT_THROW(predict(tm, Eigen::MatrixXd::Ones(2, 3)), Error);
}

TEST(Predict, BatchEqualsRowwiseAndJsonRoundTrip) {
    std::mt19937_64 rng(9);
    for (Family fam : {Family::linear, Family::gradient_boosting, Family::shallow_nn, Family::shallow_lstm}) {
        for (Task task : {Task::classification, Task::regression}) {
            const auto tr = random_design(rng, 120, 3, 2, task, true);
            const auto va = random_design(rng, 40, 3, 2, task, true);
            ModelSpec spec;
            spec.family = fam;
            spec.task = task;
            spec.seed = 3;
            spec.net.max_epochs = 5;
            spec.gb.max_rounds = 10;
            TrainedModel m = train_model(spec, tr, va);
            m.standardizer = Standardizer::fit(tr);
            const Eigen::VectorXd batch = predict(m, va.x);
            for (Eigen::Index i = 0; i < va.x.rows(); ++i) {
                const Eigen::MatrixXd one = va.x.row(i);
                ASSERT_NEAR(predict(m, one)(0), batch(i), 1e-12) << to_string(fam);
                ASSERT_GE(batch(i), 0.0);
                ASSERT_LE(batch(i), 1.0);
            }
            const TrainedModel back = model_from_json(model_to_json(m));
            EXPECT_EQ(predict(back, va.x), batch) << to_string(fam) << " " << to_string(task);
            ASSERT_TRUE(back.standardizer.has_value());
            EXPECT_EQ(back.standardizer->mean, m.standardizer->mean);
        }
    }
}

TEST(Family, Names) {
    EXPECT_EQ(family_from_string("gb"), Family::gradient_boosting);
    EXPECT_EQ(family_from_string("shallow_lstm"), Family::shallow_lstm);
    EXPECT_STREQ(short_name(Family::linear), "LR");
    EXPECT_THROW(family_from_string("svm"), Error);
}
