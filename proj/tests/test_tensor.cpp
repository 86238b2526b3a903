#include "gatedfill/gradcheck.hpp"
#include "gatedfill/tensor.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace gatedfill;

namespace {

using TD = Tensor<double>;

// Weighted sum so every output element gets a distinct, O(1) gradient.
TD project(const TD& y, uint64_t seed) {
    Rng rng(seed);
    return sum(mul(y, oracle::random_tensor<double>(y.shape(), rng)));
}

double check(const std::function<TD()>& f, const std::vector<NamedTensor<double>>& params) {
    return grad_check(f, params).max_relative_error;
}

}  // namespace

TEST(Tensor, ConstructionAndShape) {
    auto t = Tensor<float>::zeros({2, 3, 4, 5});
    EXPECT_EQ(t.numel(), 120);
    EXPECT_EQ(t.shape().str(), "(2, 3, 4, 5)");
    EXPECT_THROW(Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3}), ShapeError);
    EXPECT_THROW(Tensor<float>::scalar(1).item() + Tensor<float>::zeros({1, 1, 1, 2}).item(), ShapeError);
}

TEST(Tensor, SigmoidStrictlyInsideUnitInterval) {
    EXPECT_EQ(sigmoid(Tensor<double>::scalar(0.0)).item(), 0.5);
    for (double v : {-1000.0, -50.0, 50.0, 1000.0}) {
        const double s = sigmoid(Tensor<double>::scalar(v)).item();
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
        const float sf = sigmoid(Tensor<float>::scalar(static_cast<float>(v))).item();
        EXPECT_GT(sf, 0.0f);
        EXPECT_LT(sf, 1.0f);
    }
}

TEST(Tensor, EluIsIdentityOnNonNegatives) {
    auto x = TD::from_data({1, 1, 1, 4}, {0.0, 0.5, 2.0, 7.25});
    auto y = elu(x);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
    EXPECT_NEAR(elu(TD::scalar(-1.0)).item(), std::exp(-1.0) - 1.0, 1e-15);
}

TEST(Tensor, BinaryOpsRejectShapeMismatch) {
    auto a = TD::zeros({1, 1, 2, 2});
    auto b = TD::zeros({1, 1, 2, 3});
    EXPECT_THROW(add(a, b), ShapeError);
    EXPECT_THROW(mul(a, b), ShapeError);
    EXPECT_NO_THROW(mul(a, TD::scalar(2.0)));
}

TEST(Tensor, SumOfSquaresGradient) {
    Rng rng(3);
    auto x = oracle::random_tensor<double>({2, 3, 2, 2}, rng, true);
    sum(mul(x, x)).backward();
    const auto g = x.grad();
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(g[i], 2.0 * x.data()[i]);
}

TEST(Tensor, SumGradientIsOnes) {
    auto x = TD::full({1, 2, 3, 3}, 1.5, true);
    sum(x).backward();
    for (double v : x.grad()) EXPECT_EQ(v, 1.0);
}

TEST(Tensor, BackwardTwiceAccumulates) {
    Rng rng(5);
    auto x = oracle::random_tensor<double>({1, 2, 4, 4}, rng, true);
    auto loss = sum(tanh(mul(x, x)));
    loss.backward();
    const auto g1 = x.grad();
    loss.backward();
    const auto g2 = x.grad();
    for (size_t i = 0; i < g1.size(); ++i) EXPECT_DOUBLE_EQ(g2[i], 2.0 * g1[i]);
}

TEST(Tensor, BackwardRequiresScalar) {
    auto x = TD::zeros({1, 1, 2, 2}, true);
    EXPECT_THROW(mul_scalar(x, 2.0).backward(), ShapeError);
}

TEST(Tensor, MeanMatchesNaiveAccumulation) {
    Rng rng(11);
    auto x = oracle::random_tensor<double>({3, 4, 5, 6}, rng);
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    EXPECT_NEAR(mean(x).item(), acc / static_cast<double>(x.numel()), 1e-15);
    EXPECT_DOUBLE_EQ(mean(TD::full({2, 2, 2, 2}, 0.375)).item(), 0.375);
}

TEST(Tensor, UpsampleNearest) {
    Rng rng(2);
    auto x = oracle::random_tensor<double>({1, 2, 3, 3}, rng, true);
    auto same = upsample_nearest(x, 1);
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(same.data()[i], x.data()[i]);

    auto v = upsample_nearest(TD::scalar(4.5), 2);
    EXPECT_EQ(v.shape(), (Shape{1, 1, 2, 2}));
    for (double e : v.data()) EXPECT_EQ(e, 4.5);

    sum(upsample_nearest(x, 3)).backward();
    for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 9.0);
    EXPECT_LT(check([&] { return project(upsample_nearest(x, 2), 9); }, {{"x", x}}), 1e-6);
}

TEST(Tensor, ConcatChannelsRoundTrip) {
    Rng rng(4);
    auto a = oracle::random_tensor<double>({1, 3, 8, 8}, rng, true);
    auto b = oracle::random_tensor<double>({1, 2, 8, 8}, rng, true);
    auto c = concat_channels(a, b);
    EXPECT_EQ(c.shape(), (Shape{1, 5, 8, 8}));
    auto a2 = slice_channels(c, 0, 3);
    auto b2 = slice_channels(c, 3, 2);
    for (int64_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a2.data()[i], a.data()[i]);
    for (int64_t i = 0; i < b.numel(); ++i) EXPECT_EQ(b2.data()[i], b.data()[i]);
    EXPECT_THROW(concat_channels(a, TD::zeros({1, 2, 8, 7})), ShapeError);
    EXPECT_LT(check([&] { return project(concat_channels(a, b), 1); }, {{"a", a}, {"b", b}}), 1e-6);
}

TEST(Tensor, ConcatBatchRoutesGradients) {
    Rng rng(8);
    auto a = oracle::random_tensor<double>({2, 3, 1, 2}, rng, true);
    auto b = oracle::random_tensor<double>({1, 3, 1, 2}, rng, true);
    auto c = concat_batch(a, b);
    EXPECT_EQ(c.shape(), (Shape{3, 3, 1, 2}));
    EXPECT_LT(check([&] { return project(concat_batch(a, b), 2); }, {{"a", a}, {"b", b}}), 1e-6);
}

// Finite differences for each differentiable op in 64-bit.
TEST(Tensor, ElementwiseGradientsMatchFiniteDifferences) {
    Rng rng(17);
    const Shape s{2, 3, 3, 3};
    auto a = oracle::random_tensor<double>(s, rng, true, -2.0, 2.0);
    auto b = oracle::random_tensor<double>(s, rng, true, -2.0, 2.0);
    auto bias = oracle::random_tensor<double>({1, 3, 1, 1}, rng, true);
    const std::vector<NamedTensor<double>> ab{{"a", a}, {"b", b}};
    const std::vector<NamedTensor<double>> only_a{{"a", a}};

    EXPECT_LT(check([&] { return project(add(a, b), 1); }, ab), 1e-5);
    EXPECT_LT(check([&] { return project(sub(a, b), 2); }, ab), 1e-5);
    EXPECT_LT(check([&] { return project(mul(a, b), 3); }, ab), 1e-5);
    EXPECT_LT(check([&] { return project(mul(a, TD::scalar(1.5)), 4); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(sigmoid(a), 5); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(tanh(a), 6); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(elu(a), 7); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(relu(a), 8); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(leaky_relu(a, 0.2), 9); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(abs(a), 10); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(square(a), 11); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(neg(add_scalar(mul_scalar(a, 3.0), -1.0)), 12); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(add_channel_bias(a, bias), 13); }, {{"a", a}, {"bias", bias}}), 1e-5);
    EXPECT_LT(check([&] { return project(slice_channels(a, 1, 2), 14); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return project(repeat_channels(slice_channels(a, 0, 1), 4), 15); }, only_a), 1e-5);
    EXPECT_LT(check([&] { return mean(mul(a, a)); }, only_a), 1e-5);
}

TEST(Tensor, MulGradientEqualsOtherOperand) {
    Rng rng(21);
    auto a = oracle::random_tensor<double>({1, 1, 3, 3}, rng, true);
    auto b = oracle::random_tensor<double>({1, 1, 3, 3}, rng);
    sum(mul(a, b)).backward();
    for (int64_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.grad()[i], b.data()[i]);
}

TEST(GradCheck, LinearFunctionIsNearMachinePrecision) {
    Rng rng(1);
    auto x = oracle::random_tensor<double>({1, 2, 4, 4}, rng, true);
    auto r = grad_check([&] { return project(x, 77); }, {{"x", x}});
    EXPECT_LT(r.max_relative_error, 1e-8);
    EXPECT_EQ(r.entries_checked, 32);
}

TEST(GradCheck, NonFiniteNamesTheParameter) {
    auto x = TD::full({1, 1, 1, 2}, std::numeric_limits<double>::infinity(), true);
    try {
        grad_check([&] { return sum(x); }, {{"weights.in", x}});
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("weights.in"), std::string::npos);
    }
}

TEST(GradCheck, SubsamplingBoundsTheWork) {
    Rng rng(2);
    auto x = oracle::random_tensor<double>({1, 4, 8, 8}, rng, true);
    GradCheckOptions opt;
    opt.max_entries_per_tensor = 10;
    auto r = grad_check([&] { return project(tanh(x), 3); }, {{"x", x}}, opt);
    EXPECT_EQ(r.entries_checked, 10);
    EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(GradCheck, KinkInsideTheStepIsRetried) {
    // leaky_relu kink at 0 lies inside [x - eps, x + eps]
    auto x = TD::full({1, 1, 1, 1}, 0.5e-6, true);
    GradCheckOptions opt;
    opt.retry_above = 0.0;
    EXPECT_NEAR(grad_check([&] { return sum(leaky_relu(x, 0.2)); }, {{"x", x}}, opt).max_relative_error, 0.2, 1e-6);
    auto r = grad_check([&] { return sum(leaky_relu(x, 0.2)); }, {{"x", x}});
    EXPECT_EQ(r.entries_retried, 1);
    EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(GradCheck, WrongGradientFailsAtEveryStep) {
    Rng rng(3);
    auto x = oracle::random_tensor<double>({1, 1, 2, 3}, rng, true);
    auto scaled_wrong = [&] {
        std::vector<double> v(x.data().begin(), x.data().end());
        for (auto& e : v) e *= 3.0;
        return TD::make_op(x.shape(), std::move(v), {x}, [x](TD::Node& self) mutable {
            auto& g = x.node()->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += 3.3 * self.grad[i];  // 10% off
        });
    };
    auto r = grad_check([&] { return project(scaled_wrong(), 5); }, {{"x", x}});
    EXPECT_EQ(r.entries_retried, 6);
    EXPECT_NEAR(r.max_relative_error, 0.3 / 3.3, 1e-6);
}

TEST(Activation, NamesRoundTrip) {
    for (auto a : {Activation::none, Activation::elu, Activation::leaky_relu, Activation::tanh, Activation::relu,
                   Activation::sigmoid}) {
        EXPECT_EQ(activation_from_string(to_string(a)), a);
    }
    EXPECT_THROW(activation_from_string("swish"), std::invalid_argument);
}

TEST(Rng, StreamsAreReproducible) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_EQ(a.draws(), 100u);
    Rng c = Rng::derive(42, 7), d = Rng::derive(42, 7), e = Rng::derive(42, 8);
    EXPECT_EQ(c.uniform(), d.uniform());
    EXPECT_NE(Rng::derive(42, 7).next_u64(), e.next_u64());
    // std::mt19937_64 with the default seed must give this 10000th value.
    Rng f(5489);
    uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) v = f.next_u64();
    EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, UniformIntCoversRangeInclusively) {
    Rng rng(9);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 5000; ++i) {
        const auto k = rng.uniform_int(1, 5);
        ASSERT_GE(k, 1);
        ASSERT_LE(k, 5);
        ++hits[k - 1];
    }
    for (int h : hits) EXPECT_GT(h, 800);
}
