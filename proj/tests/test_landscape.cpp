#include "dltl/landscape.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace dltl;

namespace {

NetConfig shapes(Activation act) {
    NetConfig c;
    c.widths = {12, 10, 6, 4};
    c.act = act;
    return c;
}

double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

struct Task {
    Mat X, Y;
};

Task regression_task(std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return {gaussian_matrix(12, 8, 1.0, rng), gaussian_matrix(4, 8, 1.0, rng)};
}

}  // namespace

TEST(Inverses, OneSidedIdentities) {
    Rng rng = make_rng(3);
    Mat X = gaussian_matrix(12, 8, 1.0, rng), W = gaussian_matrix(6, 10, 1.0, rng);
    EXPECT_LE((left_inverse(X) * X - Mat::Identity(8, 8)).norm(), 1e-10);
    EXPECT_LE((W * right_inverse(W) - Mat::Identity(6, 6)).norm(), 1e-10);
}

TEST(Reconstruct, CurrentOutputIsFixed) {
    auto c = shapes(Activation::leaky_relu(0.5));
    auto w = init_weights(c, 1);
    auto task = regression_task(2);
    Mat H = forward_batch(c, w, task.X);
    WeightSet v = w;
    v[0] = reconstruct_first_layer(c, w, task.X, H);
    EXPECT_LE(rel_err(forward_batch(c, v, task.X), H), 1e-8);
}

TEST(Reconstruct, LinearExactHit) {
    auto c = shapes(Activation::linear());
    auto w = init_weights(c, 4);
    auto task = regression_task(5);
    w[0] = reconstruct_first_layer(c, w, task.X, task.Y);
    EXPECT_LE(rel_err(forward_batch(c, w, task.X), task.Y), 1e-8);
}

TEST(Reconstruct, LeakyExactHit) {
    auto c = shapes(Activation::leaky_relu(0.5));
    for (std::uint64_t s = 0; s < 5; ++s) {
        auto w = init_weights(c, 10 + s);
        auto task = regression_task(20 + s);
        w[0] = reconstruct_first_layer(c, w, task.X, task.Y);
        EXPECT_LE(rel_err(forward_batch(c, w, task.X), task.Y), 1e-6);
    }
}

TEST(Reconstruct, NtkParameterization) {
    auto c = shapes(Activation::tanh());
    c.param = Param::ntk;
    auto w = init_weights(c, 7);
    auto task = regression_task(8);
    Mat target = 0.1 * task.Y;  // tanh needs the hidden targets inside (-1, 1)
    w[0] = reconstruct_first_layer(c, w, task.X, target);
    EXPECT_LE(rel_err(forward_batch(c, w, task.X), target), 1e-6);
}

TEST(Reconstruct, Errors) {
    auto task = regression_task(1);
    auto relu = shapes(Activation::relu());
    EXPECT_THROW(reconstruct_first_layer(relu, init_weights(relu, 1), task.X, task.Y), DomainError);

    auto c = shapes(Activation::linear());
    auto w = init_weights(c, 1);
    w[2].row(3) = w[2].row(0);
    try {
        reconstruct_first_layer(c, w, task.X, task.Y);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("W_2"), std::string::npos);
    }
    Mat X = task.X;
    X.col(7) = X.col(0);
    EXPECT_THROW(reconstruct_first_layer(c, init_weights(c, 1), X, task.Y), DomainError);
}

TEST(Path, IdenticalEndpoints) {
    auto c = shapes(Activation::linear());
    auto w = init_weights(c, 1);
    auto task = regression_task(2);
    auto p = constant_loss_path(c, w, w, task.X, task.Y);
    ASSERT_EQ(p.points.size(), 1u);
    EXPECT_EQ(p.max_segment_rise(), 0.0);
}

TEST(Path, TrainedLinearNets) {
    auto c = shapes(Activation::linear());
    auto task = regression_task(9);
    auto a = train_gd(c, init_weights(c, 1), task.X, task.Y, LossKind::square, 0.05, 200);
    auto b = train_gd(c, init_weights(c, 2), task.X, task.Y, LossKind::square, 0.05, 200);
    double la = network_loss(c, a, task.X, task.Y, LossKind::square);
    EXPECT_LT(la, network_loss(c, init_weights(c, 1), task.X, task.Y, LossKind::square));
    auto p = constant_loss_path(c, a, b, task.X, task.Y);
    EXPECT_LE(p.max_segment_rise(), 1e-6);
    EXPECT_LT(p.meeting_loss, 1e-6);
    // endpoints of the trace are the inputs
    EXPECT_NEAR(p.points.front().loss, la, 1e-12);
    EXPECT_NEAR(p.points.back().loss, network_loss(c, b, task.X, task.Y, LossKind::square), 1e-12);
    // consecutive samples are close, the path is continuous at the sampling scale
    for (std::size_t i = 1; i < p.thetas.size(); ++i) EXPECT_LT((flatten(p.thetas[i]) - flatten(p.thetas[i - 1])).norm(), 5.0);
}

TEST(Path, LeakyLogistic) {
    auto c = shapes(Activation::leaky_relu(0.3));
    auto task = regression_task(3);
    Mat Y = task.Y.unaryExpr([](double v) { return v >= 0 ? 1.0 : -1.0; });
    PathOptions o;
    o.loss = LossKind::logistic;
    o.epsilon = 1e-4;
    auto p = constant_loss_path(c, init_weights(c, 4), init_weights(c, 5), task.X, Y, o);
    EXPECT_LE(p.max_segment_rise(), 1e-6);
    EXPECT_LT(p.meeting_loss, 1e-4);
}

TEST(Path, DescentSegmentBelowChord) {
    auto c = shapes(Activation::linear());
    auto task = regression_task(6);
    auto p = constant_loss_path(c, init_weights(c, 1), init_weights(c, 2), task.X, task.Y);
    // third A-side segment is the output descent
    std::vector<PathPoint> seg;
    for (auto& q : p.points)
        if (q.segment == 2) seg.push_back(q);
    ASSERT_FALSE(seg.empty());
    double l0 = seg.front().loss, l1 = seg.back().loss;
    for (auto& q : seg) EXPECT_LE(q.loss, (1 - q.t) * l0 + q.t * l1 + 1e-12);
}

TEST(Path, RankRepair) {
    auto c = shapes(Activation::linear());
    auto task = regression_task(6);
    auto a = init_weights(c, 1);
    a[1].row(5) = a[1].row(0);
    auto p = constant_loss_path(c, a, init_weights(c, 2), task.X, task.Y);
    EXPECT_LE(std::abs(p.repair_loss_change_a), 1e-3);
    EXPECT_LE(p.max_segment_rise(), 1e-6 + std::abs(p.repair_loss_change_a));
    EXPECT_LT(p.meeting_loss, 1e-6);
}

TEST(Path, CsvShape) {
    auto c = shapes(Activation::linear());
    auto task = regression_task(6);
    PathOptions o;
    o.points_per_segment = 8;
    auto p = constant_loss_path(c, init_weights(c, 1), init_weights(c, 2), task.X, task.Y, o);
    std::ostringstream os;
    p.write_csv(os);
    std::string s = os.str();
    EXPECT_EQ(s.rfind("segment,t,loss\n", 0), 0u);
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), static_cast<long>(p.points.size() + 1));
}
