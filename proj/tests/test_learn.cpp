#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "eegnorm/learn.hpp"

using namespace eegnorm;
using namespace eegnorm::learn;
using Eigen::Index;

namespace {

Vector randn(Rng& rng, Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

}  // namespace

TEST(Linear, IdentityForward) {
    Rng rng(1);
    const Vector x = randn(rng, 6);
    EXPECT_EQ(linear_forward(x, Eigen::MatrixXd::Identity(6, 6), Vector::Zero(6)), x);
}

TEST(Linear, GradCheck) {
    Rng rng(2);
    const Index n = 8;
    const Vector x = randn(rng, n);
    const Vector target = randn(rng, n);
    // Parameters packed as [W (col-major), b].
    Vector p = randn(rng, n * n + n);
    auto unpack = [&](const Vector& q) {
        return std::pair{Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(q.data(), n, n)), Vector(q.tail(n))};
    };
    auto loss = [&](const Vector& q) {
        const auto [w, b] = unpack(q);
        return 0.5 * (linear_forward(x, w, b) - target).squaredNorm();
    };
    const auto [w, b] = unpack(p);
    const Vector g_out = linear_forward(x, w, b) - target;
    const auto g = linear_backward(g_out, x, w);
    Vector analytic(n * n + n);
    Eigen::Map<Eigen::MatrixXd>(analytic.data(), n, n) = g.grad_w;
    analytic.tail(n) = g.grad_b;
    EXPECT_LT(grad_check(loss, p, analytic), 1e-6);
    EXPECT_EQ(g.grad_b, g_out);
    // Input gradient against its own finite differences.
    auto loss_x = [&](const Vector& xx) { return 0.5 * (linear_forward(xx, w, b) - target).squaredNorm(); };
    EXPECT_LT(grad_check(loss_x, x, g.grad_x), 1e-6);
}

TEST(Adamax, ZeroGradientIsIdentity) {
    Rng rng(3);
    Vector p = randn(rng, 5);
    const Vector before = p;
    AdamaxState st(5);
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(adamax_step(p, Vector::Zero(5), st));
    EXPECT_EQ(p, before);
}

TEST(Adamax, FirstStepHandComputed) {
    Vector p(1);
    p << 0.0;
    AdamaxState st(1);
    adamax_step(p, Vector::Constant(1, 1.0), st);
    // m = 0.1, u = 1, bias factor 1 / (1 - 0.9) = 10.
    EXPECT_DOUBLE_EQ(st.m[0], 0.1);
    EXPECT_DOUBLE_EQ(st.u[0], 1.0);
    EXPECT_NEAR(p[0], -0.002 / (1.0 + 1e-8), 1e-16);
    EXPECT_EQ(st.t, 1);
}

TEST(Adamax, MatchesReferenceLoop) {
    // Scalar re-derivation of the update rule, run side by side.
    Rng rng(4);
    Vector p = randn(rng, 4);
    AdamaxState st(4);
    std::vector<double> rp(p.data(), p.data() + 4), rm(4, 0.0), ru(4, 0.0);
    for (int t = 1; t <= 25; ++t) {
        const Vector g = randn(rng, 4);
        adamax_step(p, g, st);
        for (int i = 0; i < 4; ++i) {
            rm[static_cast<std::size_t>(i)] = 0.9 * rm[static_cast<std::size_t>(i)] + 0.1 * g[i];
            ru[static_cast<std::size_t>(i)] = std::max(0.999 * ru[static_cast<std::size_t>(i)], std::abs(g[i]));
            rp[static_cast<std::size_t>(i)] -= 0.002 / (1.0 - std::pow(0.9, t)) * rm[static_cast<std::size_t>(i)] /
                                               (ru[static_cast<std::size_t>(i)] + 1e-8);
        }
    }
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(p[i], rp[static_cast<std::size_t>(i)], 1e-14);
}

TEST(Adamax, NanCollapses) {
    Vector p = Vector::Ones(3);
    AdamaxState st(3);
    Vector g = Vector::Ones(3);
    g[1] = NAN;
    EXPECT_FALSE(adamax_step(p, g, st));
    EXPECT_TRUE(st.collapsed);
    EXPECT_EQ(p, Vector::Ones(3));
    EXPECT_EQ(st.t, 0);
}

TEST(GradCheck, Examples) {
    Rng rng(5);
    const Vector p = randn(rng, 10);
    auto f = [](const Vector& q) { return 0.5 * q.squaredNorm(); };
    EXPECT_LT(grad_check(f, p, p), 1e-9);
    EXPECT_NEAR(grad_check(f, p, 2.0 * p), 1.0, 1e-6);
}

TEST(Metrics, Mae) {
    const std::vector<double> a{10, 12}, b{11, 11};
    EXPECT_DOUBLE_EQ(mae(a, b), 1.0);
    EXPECT_DOUBLE_EQ(mae(a, a), 0.0);
    const std::vector<double> pa{12, 10}, pb{11, 11};
    EXPECT_DOUBLE_EQ(mae(pa, pb), mae(a, b));
    EXPECT_THROW(mae(std::vector<double>{}, std::vector<double>{}), ValidationError);
}

TEST(Metrics, BalancedAccuracy) {
    const std::vector<int> labels{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    EXPECT_DOUBLE_EQ(balanced_accuracy(labels, labels), 1.0);
    // TPR 0.8, TNR 0.6.
    const std::vector<int> preds{1, 1, 1, 1, 0, 0, 0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(balanced_accuracy(preds, labels), 0.7);
    EXPECT_THROW(balanced_accuracy(std::vector<int>{1}, std::vector<int>{1}), ValidationError);
}

TEST(MetricsProperty, ConstantPredictorIsHalf) {
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
        const auto n = 2 + uniform_index(rng, 200);
        std::vector<int> labels(n);
        for (auto& l : labels) l = uniform01(rng) < 0.2 ? 1 : 0;
        labels[0] = 1;
        labels[1] = 0;
        for (int c : {0, 1}) EXPECT_DOUBLE_EQ(balanced_accuracy(std::vector<int>(n, c), labels), 0.5);
    }
}

TEST(CrossEntropy, EqualLogits) {
    for (std::size_t n = 2; n <= 64; ++n) {
        std::vector<double> logits(n, 0.37);
        EXPECT_NEAR(cross_entropy(logits, n / 2), std::log(static_cast<double>(n)), 1e-12);
    }
    EXPECT_NEAR(cross_entropy(std::vector<double>(21, 0.0), 3), 3.0445224377234230, 1e-12);
}

TEST(CrossEntropy, ShiftInvarianceAndMonotone) {
    Rng rng(7);
    for (int t = 0; t < 30; ++t) {
        std::vector<double> logits(2 + uniform_index(rng, 30));
        for (auto& v : logits) v = 3.0 * normal(rng);
        std::vector<double> shifted = logits;
        const double c = 50.0 * normal(rng);
        for (auto& v : shifted) v += c;
        EXPECT_NEAR(cross_entropy(logits, 0), cross_entropy(shifted, 0), 1e-12);
    }
    std::vector<double> l{0.0, 1.0, -1.0};
    double prev = cross_entropy(l, 0);
    for (int k = 0; k < 30; ++k) {
        l[0] += 1.0;
        const double cur = cross_entropy(l, 0);
        EXPECT_LT(cur, prev);
        prev = cur;
    }
    EXPECT_LT(prev, 1e-12);
}

TEST(CrossEntropy, GradMatchesFiniteDifference) {
    Rng rng(8);
    const Vector z = randn(rng, 7);
    auto f = [](const Vector& q) { return cross_entropy(std::span<const double>(q.data(), 7), 2); };
    Vector g(7);
    cross_entropy_grad(std::span<const double>(z.data(), 7), 2, std::span<double>(g.data(), 7));
    EXPECT_LT(grad_check(f, z, g), 1e-6);
}

TEST(Mlp, GradCheckRandomShapes) {
    Rng rng(9);
    for (int t = 0; t < 5; ++t) {
        const Index in = 1 + static_cast<Index>(uniform_index(rng, 9));
        const Index hid = 1 + static_cast<Index>(uniform_index(rng, 6));
        const Index out = 1 + static_cast<Index>(uniform_index(rng, 3));
        const Mlp mlp(in, hid, out);
        const Vector p = mlp.init(rng);
        Matrix x(4, in);
        for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
        Eigen::MatrixXd target(4, out);
        for (Index i = 0; i < target.size(); ++i) target.data()[i] = normal(rng);
        auto loss = [&](const Vector& q) { return 0.5 * (mlp.forward(q, x) - target).squaredNorm(); };
        Mlp::Cache cache;
        const Eigen::MatrixXd y = mlp.forward(p, x, &cache);
        Vector g = Vector::Zero(p.size());
        mlp.backward(p, x, cache, y - target, g);
        EXPECT_LT(grad_check(loss, p, g), 1e-6) << in << "x" << hid << "x" << out;
    }
}

TEST(Init, UniformBounds) {
    Rng rng(10);
    const Mlp mlp(100, 4, 1);
    const Vector p = mlp.init(rng);
    const auto w1 = mlp.layout().map(p, 0);
    EXPECT_LE(w1.cwiseAbs().maxCoeff(), 0.1);
    EXPECT_GT(w1.cwiseAbs().maxCoeff(), 0.05);
}
