#include "sdif/grad_check.hpp"
#include "sdif/grad_suite.hpp"
#include "sdif/losses.hpp"
#include "sdif/nn.hpp"
#include "sdif/ops.hpp"
#include "sdif/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace sdif;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> g;
    for (auto& v : t.mutable_values()) v = g(rng);
    return t;
}

// Naive reference product, row-major.
std::vector<double> triple_loop(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

}  // namespace

TEST(Matmul, SmallKnownProduct) {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 2}, {5, 6, 7, 8});
    Tensor c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{2, 2}));
    EXPECT_DOUBLE_EQ(c.at(0, 0), 19);
    EXPECT_DOUBLE_EQ(c.at(0, 1), 22);
    EXPECT_DOUBLE_EQ(c.at(1, 0), 43);
    EXPECT_DOUBLE_EQ(c.at(1, 1), 50);
}

TEST(Matmul, AgreesWithTripleLoop) {
    std::mt19937_64 rng(3);
    Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
    const auto ref = triple_loop({a.values().begin(), a.values().end()}, {b.values().begin(), b.values().end()}, 5, 7, 3);
    Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-12);
}

TEST(Matmul, InnerDimensionMismatchThrows) {
    Tensor a({2, 3}), b({2, 3});
    EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(Affine, TreatsLeadingAxesAsBatch) {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({2, 3, 4}, rng), w = random_tensor({4, 2}, rng), b = random_tensor({2}, rng);
    Tensor y = affine(x, w, b);
    ASSERT_EQ(y.shape(), (Shape{2, 3, 2}));
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t j = 0; j < 2; ++j) {
            double expect = b[j];
            for (std::size_t p = 0; p < 4; ++p) expect += x[r * 4 + p] * w[p * 2 + j];
            EXPECT_NEAR(y[r * 2 + j], expect, 1e-12);
        }
}

TEST(Softmax, RowsSumToOneAndSurviveLargeLogits) {
    Tensor x({2, 3}, {1000, 1001, 1002, -5, 0, 5});
    Tensor p = softmax(x);
    for (std::size_t r = 0; r < 2; ++r) {
        double total = 0;
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_TRUE(std::isfinite(p.at(r, j)));
            total += p.at(r, j);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
    const double z = 1 + std::exp(1.0) + std::exp(2.0);
    EXPECT_NEAR(p.at(0, 2), std::exp(2.0) / z, 1e-12);
}

TEST(Gelu, MatchesErfForm) {
    Tensor x({3}, {-1.0, 0.0, 1.5});
    Tensor y = gelu(x);
    for (std::size_t i = 0; i < 3; ++i) {
        const double v = x[i];
        EXPECT_NEAR(y[i], v * 0.5 * std::erfc(-v / std::numbers::sqrt2), 1e-12);
    }
}

TEST(LayerNorm, RowsAreStandardised) {
    std::mt19937_64 rng(9);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor y = layernorm(x, Tensor({6}, 1.0), Tensor({6}, 0.0));
    for (std::size_t r = 0; r < 4; ++r) {
        double mu = 0, var = 0;
        for (std::size_t j = 0; j < 6; ++j) mu += y.at(r, j) / 6;
        for (std::size_t j = 0; j < 6; ++j) var += (y.at(r, j) - mu) * (y.at(r, j) - mu) / 6;
        EXPECT_NEAR(mu, 0.0, 1e-12);
        EXPECT_NEAR(var, 1.0, 1e-4);
    }
}

TEST(ConcatSlice, RoundTripAndShapeErrors) {
    Tensor a({2, 2}, {1, 2, 3, 4}), b({2, 1}, {5, 6});
    Tensor c = concat({a, b}, 1);
    ASSERT_EQ(c.shape(), (Shape{2, 3}));
    EXPECT_DOUBLE_EQ(c.at(1, 2), 6);
    Tensor back = slice(c, 1, 0, 2);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(back[i], a[i]);
    EXPECT_THROW(concat({a, b}, 0), DimensionError);
    EXPECT_THROW(slice(c, 1, 2, 2), DimensionError);
}

TEST(MaskedMean, IgnoresMaskedRows) {
    Tensor x({3, 2}, {1, 2, 100, 200, 3, 4});
    const std::vector<std::uint8_t> mask{1, 0, 1};
    Tensor m = masked_mean(x, mask);
    EXPECT_DOUBLE_EQ(m[0], 2);
    EXPECT_DOUBLE_EQ(m[1], 3);
    const std::vector<std::uint8_t> none{0, 0, 0};
    EXPECT_THROW(masked_mean(x, none), DegenerateInputError);
    const std::vector<std::uint8_t> short_mask{1, 1};
    EXPECT_THROW(masked_mean(x, short_mask), DimensionError);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
    Tensor x({2}, {3.0, -2.0});
    x.set_requires_grad();
    Tensor y = sum(mul(x, x));
    y.backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
}

TEST(Autodiff, BackwardNeedsScalar) {
    Tensor x({2}, 1.0);
    x.set_requires_grad();
    EXPECT_THROW(scale(x, 2.0).backward(), DimensionError);
}

TEST(Autodiff, NoGradGuardBuildsNoGraph) {
    Tensor x({2}, 1.0);
    x.set_requires_grad();
    NoGradGuard guard;
    Tensor y = sum(x);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.is_leaf());
}

TEST(Autodiff, OnlyLeavesCanBeMarked) {
    Tensor x({2}, 1.0);
    x.set_requires_grad();
    Tensor y = scale(x, 2.0);
    EXPECT_THROW(y.set_requires_grad(), std::logic_error);
}

TEST(Dropout, InvertedScalingAndIdentityInEval) {
    std::mt19937_64 rng(1);
    Tensor x({1000}, 1.0);
    Tensor y = dropout(x, 0.25, true, &rng);
    std::size_t kept = 0;
    for (double v : y.values()) {
        if (v != 0.0) {
            EXPECT_NEAR(v, 1.0 / 0.75, 1e-12);
            ++kept;
        }
    }
    EXPECT_GT(kept, 650u);
    EXPECT_LT(kept, 850u);
    Tensor z = dropout(x, 0.25, false, nullptr);
    EXPECT_EQ(z.node_ptr(), x.node_ptr());
}

TEST(GradCheck, FlagsAWrongBackward) {
    // An op whose backward is off by a factor of two must be reported.
    auto broken_square = [](const Tensor& x) {
        std::vector<double> out(x.numel());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i];
        return detail::make_result(x.shape(), std::move(out), {x}, "broken", [](detail::Node& self) {
            auto& g = detail::grad_of(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * 4.0 * self.inputs[0]->value[i];
        });
    };
    Tensor x({3}, {0.5, -1.0, 2.0});
    const auto report = grad_check([&](const Tensor& t) { return sum(broken_square(t)); }, x);
    EXPECT_FALSE(report.passed);
    EXPECT_NEAR(report.max_relative_error, 0.5, 1e-6);
}

TEST(GradCheck, EveryLayerAndFullForwardPass) {
    for (const auto& c : run_grad_suite(0)) {
        EXPECT_TRUE(c.report.passed) << c.name << " worst " << c.report.worst_location << " rel "
                                     << c.report.max_relative_error;
        EXPECT_GT(c.report.coordinates, 0u) << c.name;
    }
}

TEST(Losses, CrossEntropyOfUniformLogitsIsLogK) {
    Tensor z({20}, 0.0);
    EXPECT_NEAR(cross_entropy(z, 7).item(), std::log(20.0), 1e-12);
    EXPECT_THROW(cross_entropy(z, 20), std::out_of_range);
}

TEST(Losses, CrossEntropyGradientIsSoftmaxMinusOneHot) {
    Tensor z({3}, {0.2, -1.0, 0.7});
    z.set_requires_grad();
    cross_entropy(z, 1).backward();
    const double e0 = std::exp(0.2), e1 = std::exp(-1.0), e2 = std::exp(0.7), s = e0 + e1 + e2;
    EXPECT_NEAR(z.grad()[0], e0 / s, 1e-12);
    EXPECT_NEAR(z.grad()[1], e1 / s - 1.0, 1e-12);
    EXPECT_NEAR(z.grad()[2], e2 / s, 1e-12);
}

TEST(Losses, AugLossModes) {
    Tensor p({2}, {0.5, 0.5});
    EXPECT_NEAR(aug_loss(p, 0, AugLossMode::PerClassBinary).item(), 2.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(aug_loss(p, 0, AugLossMode::CrossEntropy).item(), std::log(2.0), 1e-12);
    Tensor q({3}, {0.2, 0.3, 0.5});
    const double binary = -(std::log(0.3) + std::log(0.8) + std::log(0.5));
    EXPECT_NEAR(aug_loss(q, 1, AugLossMode::PerClassBinary).item(), binary, 1e-12);
}

TEST(Losses, AugLossClampsSaturatedProbabilities) {
    Tensor p({2}, {1.0, 0.0});
    p.set_requires_grad();
    AugLossStats stats;
    Tensor l = aug_loss(p, 1, AugLossMode::PerClassBinary, &stats);
    EXPECT_TRUE(std::isfinite(l.item()));
    EXPECT_GT(stats.clamped, 0u);
    l.backward();
    for (double g : p.grad()) EXPECT_TRUE(std::isfinite(g));
}

TEST(Losses, AugLossModeParsing) {
    EXPECT_EQ(parse_aug_loss_mode("ce"), AugLossMode::CrossEntropy);
    EXPECT_EQ(parse_aug_loss_mode("binary"), AugLossMode::PerClassBinary);
    EXPECT_THROW(parse_aug_loss_mode("hinge"), std::invalid_argument);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
    nn::ParameterList ps{{"w", nn::make_parameter({2}, 0.0)}};
    ps[0].tensor.mutable_grad()[0] = 2.0;
    ps[0].tensor.mutable_grad()[1] = -0.5;
    train::AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    train::AdamWState st;
    train::adamw_step(ps, st, cfg);
    // m_hat = g, v_hat = g^2, so the step is lr * sign(g) up to eps.
    EXPECT_NEAR(ps[0].tensor[0], -0.1, 1e-8);
    EXPECT_NEAR(ps[0].tensor[1], 0.1, 1e-7);
}

TEST(AdamW, DecayIsDecoupledFromMoments) {
    nn::ParameterList ps{{"w", nn::make_parameter({1}, 2.0)}};
    ps[0].tensor.mutable_grad()[0] = 0.0;
    train::AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    train::AdamWState st;
    train::adamw_step(ps, st, cfg);
    EXPECT_NEAR(ps[0].tensor[0], 2.0 * (1 - 0.05), 1e-12);
    EXPECT_DOUBLE_EQ(st.m[0][0], 0.0);
    EXPECT_DOUBLE_EQ(st.v[0][0], 0.0);
}

TEST(AdamW, MatchesHandComputedSecondStep) {
    nn::ParameterList ps{{"w", nn::make_parameter({1}, 1.0)}};
    train::AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.1;
    train::AdamWState st;
    double theta = 1.0, m = 0, v = 0;
    const double grads[2] = {0.3, -0.7};
    for (int t = 1; t <= 2; ++t) {
        ps[0].tensor.zero_grad();
        ps[0].tensor.mutable_grad()[0] = grads[t - 1];
        train::adamw_step(ps, st, cfg);
        m = 0.9 * m + 0.1 * grads[t - 1];
        v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
        theta -= cfg.lr * cfg.weight_decay * theta;
        theta -= cfg.lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    EXPECT_NEAR(ps[0].tensor[0], theta, 1e-14);
}
