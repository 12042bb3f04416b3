#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "vacl/autodiff.hpp"
#include "vacl/errors.hpp"

namespace vacl {
namespace {

TEST(Autodiff, MatmulWorkedValue) {
    EXPECT_EQ(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})).item(), 11.0);
    ad::Tape tape;
    const auto a = tape.parameter("a", Tensor::matrix({{1, 2}}));
    const auto b = tape.parameter("b", Tensor::matrix({{3}, {4}}));
    const auto y = ad::matmul(tape, a, b);
    EXPECT_EQ(tape.value(y).item(), 11.0);
    const GradientMap g = ad::backward(tape, y);
    EXPECT_EQ(g.at("a"), Tensor::matrix({{3, 4}}));
    EXPECT_EQ(g.at("b"), Tensor::matrix({{1}, {2}}));
}

TEST(Autodiff, MatmulShapeMismatch) {
    EXPECT_THROW(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3, 4}})), DimensionError);
}

TEST(Autodiff, CrossEntropyOfUniformLogitsIsLn2) {
    ad::Tape tape;
    const auto logits = tape.parameter("z", Tensor::matrix({{0, 0}}));
    const int labels[] = {0};
    const auto loss = ad::softmax_cross_entropy(tape, logits, labels);
    EXPECT_NEAR(tape.value(loss).item(), std::log(2.0), 1e-15);
    const GradientMap g = ad::backward(tape, loss);
    EXPECT_NEAR(g.at("z").at(0, 0), -0.5, 1e-15);
    EXPECT_NEAR(g.at("z").at(0, 1), 0.5, 1e-15);
}

TEST(Autodiff, CrossEntropyIsStableForLargeLogits) {
    ad::Tape tape;
    const auto logits = tape.constant(Tensor::matrix({{1000, 0}, {0, 1000}}));
    const int labels[] = {0, 0};
    const auto loss = ad::softmax_cross_entropy(tape, logits, labels);
    EXPECT_NEAR(tape.value(loss).item(), 500.0, 1e-9);
}

TEST(Autodiff, CrossEntropyRejectsBadLabels) {
    ad::Tape tape;
    const auto logits = tape.constant(Tensor::matrix({{0, 0}}));
    const int bad[] = {2};
    EXPECT_THROW(ad::softmax_cross_entropy(tape, logits, bad), std::out_of_range);
    const int two[] = {0, 1};
    EXPECT_THROW(ad::softmax_cross_entropy(tape, logits, two), DimensionError);
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
    ad::Tape tape;
    const auto x = tape.parameter("x", Tensor::vector({1, 2}));
    EXPECT_THROW(ad::backward(tape, x), DimensionError);
}

TEST(Autodiff, UnusedParameterGetsZeros) {
    ad::Tape tape;
    const auto x = tape.parameter("x", Tensor::vector({1, 2}));
    tape.parameter("unused", Tensor::vector({5, 6, 7}));
    const GradientMap g = ad::backward(tape, ad::sum(tape, x));
    EXPECT_EQ(g.at("unused"), Tensor::zeros({3}));
    EXPECT_EQ(g.at("x"), Tensor::vector({1, 1}));
}

TEST(Autodiff, ReluSubgradientIsZeroAtZero) {
    ad::Tape tape;
    const auto x = tape.parameter("x", Tensor::vector({-1, 0, 2}));
    const GradientMap g = ad::backward(tape, ad::sum(tape, ad::relu(tape, x)));
    EXPECT_EQ(g.at("x"), Tensor::vector({0, 0, 1}));
}

TEST(Autodiff, FanOutAccumulates) {
    ad::Tape tape;
    const auto x = tape.parameter("x", Tensor::vector({3}));
    const auto y = ad::mul(tape, x, x);
    const auto z = ad::add(tape, y, ad::scale(tape, x, 2.0));
    const GradientMap g = ad::backward(tape, ad::sum(tape, z));
    EXPECT_EQ(g.at("x")[0], 2 * 3.0 + 2.0);
}

TEST(Autodiff, SmallNetworkMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    ParamMap params;
    params["W1"] = testing::random_tensor({5, 3}, rng);
    params["b1"] = testing::random_tensor({5}, rng);
    params["W2"] = testing::random_tensor({3, 5}, rng);
    params["b2"] = testing::random_tensor({3}, rng);
    const Tensor x = testing::random_tensor({4, 3}, rng);
    const int labels[] = {0, 2, 1, 2};

    const auto build = [&](ad::Tape& tape, const ParamMap& p) {
        std::map<std::string, ad::Var> v;
        for (const auto& [name, t] : p) v.emplace(name, tape.parameter(name, t));
        const auto in = tape.constant(x);
        auto h = ad::relu(tape, ad::linear(tape, in, v.at("W1"), v.at("b1")));
        h = ad::add(tape, ad::linear(tape, h, v.at("W2"), v.at("b2")), in);
        return ad::softmax_cross_entropy(tape, h, labels);
    };
    const auto f = [&](const ParamMap& p) {
        ad::Tape tape;
        return tape.value(build(tape, p)).item();
    };
    ad::Tape tape;
    const GradientMap analytic = ad::backward(tape, build(tape, params));
    const GradientMap numeric = testing::numeric_gradient(f, params);
    EXPECT_LT(testing::relative_error(testing::flatten(analytic), testing::flatten(numeric)), 1e-7);
}

TEST(Autodiff, CustomScalarUsesSuppliedGradient) {
    ad::Tape tape;
    const auto x = tape.parameter("x", Tensor::vector({1, 2}));
    const auto y = ad::custom_scalar(tape, "sq", {x}, 5.0, [](const ad::Tape&) {
        return std::vector<Tensor>{Tensor::vector({2, 4})};
    });
    const GradientMap g = ad::backward(tape, ad::scale(tape, y, 3.0));
    EXPECT_EQ(g.at("x"), Tensor::vector({6, 12}));
}

TEST(Optimizer, MomentumZeroEqualsPlainSgd) {
    ParamMap a{{"w", Tensor::vector({1, -2})}}, b = a;
    const GradientMap g{{"w", Tensor::vector({0.5, 0.25})}};
    MomentumSgd opt(0.0);
    for (int i = 0; i < 3; ++i) {
        sgd_step(a, g, 0.1);
        opt.step(b, g, 0.1);
    }
    EXPECT_EQ(a, b);
}

TEST(Optimizer, MomentumAccumulatesVelocity) {
    ParamMap p{{"w", Tensor::vector({0})}};
    const GradientMap g{{"w", Tensor::vector({1})}};
    MomentumSgd opt(0.5);
    opt.step(p, g, 1.0);  // v = 1
    opt.step(p, g, 1.0);  // v = 1.5
    EXPECT_DOUBLE_EQ(p.at("w")[0], -2.5);
}

}  // namespace
}  // namespace vacl
