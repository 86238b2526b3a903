#include "gatedfill/gradcheck.hpp"
#include "gatedfill/layers.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gatedfill;

namespace {

using TD = Tensor<double>;

TD random_mask(Shape s, Rng& rng, double p_valid) {
    std::vector<double> v(static_cast<size_t>(s.numel()));
    for (auto& x : v) x = rng.uniform() < p_valid ? 1.0 : 0.0;
    return TD::from_data(s, std::move(v));
}

std::vector<NamedTensor<double>> params_of(const auto& layer) {
    std::vector<NamedTensor<double>> out;
    layer.collect(out, "l");
    return out;
}

Mask centered_hole(int size, int hole) {
    Mask m(size, size, 1);
    const int lo = (size - hole) / 2;
    for (int y = lo; y < lo + hole; ++y)
        for (int x = lo; x < lo + hole; ++x) m.at(y, x) = 0;
    return m;
}

}  // namespace

// --- gated ---------------------------------------------------------------

TEST(GatedConv, ZeroGateWeightsHalveTheFeature) {
    Rng rng(1);
    auto layer = make_gated_conv<double>(3, 4, ConvGeometry::same(3), Activation::elu, rng);
    for (auto& v : layer.gate_weight.data_mut()) v = 0.0;
    auto x = oracle::random_tensor<double>({2, 3, 6, 6}, rng);
    auto y = layer.forward(x);
    auto f = elu(conv2d(x, layer.feature_weight, layer.feature_bias, layer.geom));
    for (int64_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y.data()[i], 0.5 * f.data()[i]);
}

TEST(GatedConv, ClosedGateSuppressesOutput) {
    Rng rng(2);
    auto layer = make_gated_conv<double>(2, 3, ConvGeometry::same(3), Activation::elu, rng);
    for (auto& v : layer.gate_bias.data_mut()) v = -20.0;
    for (auto& v : layer.gate_weight.data_mut()) v *= 0.01;
    auto x = oracle::random_tensor<double>({1, 2, 5, 5}, rng);
    auto y = layer.forward(x);
    auto f = elu(conv2d(x, layer.feature_weight, layer.feature_bias, layer.geom));
    for (int64_t i = 0; i < y.numel(); ++i) EXPECT_LT(std::abs(y.data()[i]), 1e-8 * std::abs(f.data()[i]) + 1e-300);
}

TEST(GatedConv, EqualsCompositionOfPrimitivesBitwise) {
    Rng rng(3);
    for (auto act : {Activation::elu, Activation::leaky_relu, Activation::tanh, Activation::none}) {
        auto layer = make_gated_conv<float>(5, 6, ConvGeometry::same(3, 1, 2), act, rng);
        for (auto& v : layer.gate_bias.data_mut()) v = static_cast<float>(rng.uniform(-1, 1));
        for (auto& v : layer.feature_bias.data_mut()) v = static_cast<float>(rng.uniform(-1, 1));
        auto x = oracle::random_tensor<float>({2, 5, 9, 9}, rng);
        Tensor<float> gate;
        auto y = layer.forward(x, &gate);
        // Both branches share one convolution with stacked kernels.
        auto both = conv2d(x, concat_batch(layer.feature_weight, layer.gate_weight),
                           concat_channels(layer.feature_bias, layer.gate_bias), layer.geom);
        auto f = activate(slice_channels(both, 0, 6), act);
        auto g = sigmoid(slice_channels(both, 6, 6));
        auto ref = mul(f, g);
        ASSERT_EQ(y.shape(), ref.shape());
        for (int64_t i = 0; i < y.numel(); ++i) ASSERT_EQ(y.data()[i], ref.data()[i]) << to_string(act) << " at " << i;
        for (int64_t i = 0; i < g.numel(); ++i) ASSERT_EQ(gate.data()[i], g.data()[i]);
        // Separate convolutions differ only by GEMM summation order.
        auto f2 = activate(conv2d(x, layer.feature_weight, layer.feature_bias, layer.geom), act);
        auto g2 = sigmoid(conv2d(x, layer.gate_weight, layer.gate_bias, layer.geom));
        auto ref2 = mul(f2, g2);
        for (int64_t i = 0; i < y.numel(); ++i) ASSERT_NEAR(y.data()[i], ref2.data()[i], 1e-5);
    }
}

TEST(GatedConv, GatesStrictlyInsideUnitInterval) {
    Rng rng(4);
    auto layer = make_gated_conv<float>(3, 8, ConvGeometry::same(5), Activation::elu, rng);
    for (auto& v : layer.gate_weight.data_mut()) v *= 50.0f;
    auto x = oracle::random_tensor<float>({2, 3, 8, 8}, rng, false, -5, 5);
    Tensor<float> gate;
    layer.forward(x, &gate);
    for (float g : gate.data()) {
        ASSERT_GT(g, 0.0f);
        ASSERT_LT(g, 1.0f);
    }
}

TEST(GatedConv, FrozenGatesAreOneHalf) {
    Rng rng(5);
    auto layer = make_gated_conv<double>(2, 3, ConvGeometry::same(3), Activation::elu, rng);
    layer.frozen_gate = true;
    auto x = oracle::random_tensor<double>({1, 2, 4, 4}, rng);
    TD gate;
    auto y = layer.forward(x, &gate);
    auto f = elu(conv2d(x, layer.feature_weight, layer.feature_bias, layer.geom));
    for (int64_t i = 0; i < y.numel(); ++i) {
        EXPECT_EQ(gate.data()[i], 0.5);
        EXPECT_EQ(y.data()[i], 0.5 * f.data()[i]);
    }
    EXPECT_EQ(layer.parameter_count(), 2 * (3 * 2 * 9 + 3));
}

TEST(GatedConv, RejectsMismatchedKernels) {
    Rng rng(6);
    auto layer = make_gated_conv<double>(2, 3, ConvGeometry::same(3), Activation::elu, rng);
    layer.gate_weight = TD::zeros({3, 2, 5, 5});
    EXPECT_THROW(layer.forward(TD::zeros({1, 2, 4, 4})), ShapeError);
}

TEST(GatedConv, ZeroGateBiasStartsHalfOpen) {
    Rng rng(7);
    auto layer = make_gated_conv<float>(4, 4, ConvGeometry::same(3), Activation::elu, rng);
    Tensor<float> gate;
    layer.forward(Tensor<float>::zeros({1, 4, 6, 6}), &gate);
    for (float g : gate.data()) EXPECT_EQ(g, 0.5f);
}

// --- partial -------------------------------------------------------------

TEST(PartialConv, AllHoleMaskGivesZeros) {
    Rng rng(1);
    auto layer = make_partial_conv<double>(2, 3, ConvGeometry::same(3), rng);
    for (auto& b : layer.bias.data_mut()) b = 0.7;
    auto out = layer.forward(oracle::random_tensor<double>({1, 2, 5, 5}, rng), TD::zeros({1, 1, 5, 5}));
    for (double v : out.features.data()) EXPECT_EQ(v, 0.0);
    for (double v : out.mask.data()) EXPECT_EQ(v, 0.0);
}

TEST(PartialConv, AllValidMaskIsScaledVanillaConv) {
    Rng rng(2);
    // Padding counts as invalid, so the literal 1/9 holds wherever the window is in bounds.
    for (int pad : {0, 1}) {
        auto layer = make_partial_conv<double>(3, 2, ConvGeometry{3, 3, 1, 1, pad}, rng);
        for (auto& b : layer.bias.data_mut()) b = rng.uniform(-1, 1);
        auto x = oracle::random_tensor<double>({2, 3, 7, 7}, rng);
        auto out = layer.forward(x, TD::full({2, 1, 7, 7}, 1.0));
        auto plain = conv2d(x, layer.weight, TD{}, layer.geom);
        const Shape s = out.features.shape();
        for (int64_t n = 0; n < s.n; ++n)
            for (int64_t c = 0; c < s.c; ++c)
                for (int64_t y = pad; y < s.h - pad; ++y)
                    for (int64_t xx = pad; xx < s.w - pad; ++xx)
                        EXPECT_NEAR(out.features.at(n, c, y, xx), plain.at(n, c, y, xx) / 9.0 + layer.bias.data()[c],
                                    1e-12);
        for (double v : out.mask.data()) EXPECT_EQ(v, 1.0);
    }
}

TEST(PartialConv, RenormalizedScalingMatchesVanillaOnFullWindows) {
    Rng rng(3);
    auto layer = make_partial_conv<double>(2, 2, ConvGeometry{3, 3, 1, 1, 0}, rng, PartialConvScaling::renormalized);
    auto x = oracle::random_tensor<double>({1, 2, 6, 6}, rng);
    auto out = layer.forward(x, TD::full({1, 1, 6, 6}, 1.0));
    auto plain = conv2d(x, layer.weight, layer.bias, layer.geom);
    for (int64_t i = 0; i < plain.numel(); ++i) EXPECT_NEAR(out.features.data()[i], plain.data()[i], 1e-12);
}

TEST(PartialConv, SingleValidCornerPixel) {
    Rng rng(4);
    auto layer = make_partial_conv<double>(1, 1, ConvGeometry{3, 3, 1, 1, 0}, rng);
    layer.bias.data_mut()[0] = 0.25;
    auto x = oracle::random_tensor<double>({1, 1, 3, 3}, rng);
    auto m = TD::zeros({1, 1, 3, 3});
    m.data_mut()[0] = 1.0;  // top-left tap of the only window
    auto out = layer.forward(x, m);
    ASSERT_EQ(out.features.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_EQ(out.mask.item(), 1.0);
    EXPECT_NEAR(out.features.item(), layer.weight.data()[0] * x.data()[0] / 1.0 + 0.25, 1e-15);
}

TEST(PartialConv, IndependentOfHolePixelValues) {
    Rng rng(5);
    for (const auto& g : {ConvGeometry::same(3), ConvGeometry::same(5, 2), ConvGeometry::same(3, 1, 3)}) {
        auto layer = make_partial_conv<float>(3, 4, g, rng);
        const Shape s{2, 3, 12, 12};
        auto mask = [&] {
            std::vector<float> v(2 * 12 * 12);
            for (auto& e : v) e = rng.uniform() < 0.6 ? 1.0f : 0.0f;
            return Tensor<float>::from_data({2, 1, 12, 12}, std::move(v));
        }();
        auto a = oracle::random_tensor<float>(s, rng);
        std::vector<float> bvals(a.data().begin(), a.data().end());
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t i = 0; i < 144; ++i)
                    if (mask.data()[n * 144 + i] == 0.0f) bvals[(n * 3 + c) * 144 + i] = static_cast<float>(rng.uniform(-1e3, 1e3));
        auto b = Tensor<float>::from_data(s, std::move(bvals));
        auto oa = layer.forward(a, mask);
        auto ob = layer.forward(b, mask);
        for (int64_t i = 0; i < oa.features.numel(); ++i) ASSERT_EQ(oa.features.data()[i], ob.features.data()[i]);
    }
}

TEST(PartialConv, RejectsNonBinaryMask) {
    Rng rng(6);
    auto layer = make_partial_conv<double>(1, 1, ConvGeometry::same(3), rng);
    EXPECT_THROW(layer.forward(TD::zeros({1, 1, 4, 4}), TD::full({1, 1, 4, 4}, 0.5)), ShapeError);
    EXPECT_THROW(layer.forward(TD::zeros({1, 1, 4, 4}), TD::full({1, 1, 4, 3}, 1.0)), ShapeError);
}

// --- mask propagation ------------------------------------------------------

TEST(PropagateMask, FullMaskStaysFull) {
    const std::vector<ConvGeometry> chain(5, ConvGeometry::same(3));
    for (const auto& m : propagate_mask(chain, Mask(16, 16, 1))) EXPECT_TRUE(m.all_valid());
}

TEST(PropagateMask, CenteredHoleShrinksOneRingPerLayer) {
    const std::vector<ConvGeometry> chain(6, ConvGeometry::same(3));
    const auto masks = propagate_mask(chain, centered_hole(32, 8));
    for (int layer = 0; layer < 6; ++layer) {
        const int side = std::max(0, 8 - 2 * (layer + 1));
        EXPECT_EQ(masks[layer].hole_count(), side * side) << "layer " << layer + 1;
        EXPECT_EQ(masks[layer], centered_hole(32, side));
    }
    EXPECT_TRUE(masks[3].all_valid());
    EXPECT_FALSE(masks[2].all_valid());
}

TEST(PropagateMask, EqualsBinaryDilationOracle) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(5, 20)), w = static_cast<int>(rng.uniform_int(5, 20));
        Mask m(h, w, 0);
        for (auto& b : m.bits) b = rng.uniform() < 0.1 ? 1 : 0;
        const std::vector<ConvGeometry> chain(4, ConvGeometry::same(3));
        const auto got = propagate_mask(chain, m);
        std::vector<uint8_t> expect = m.bits;
        for (size_t l = 0; l < chain.size(); ++l) {
            const auto prev = expect;
            expect = oracle::dilate(expect, h, w, 1);
            ASSERT_EQ(got[l].bits, expect) << "trial " << trial << " layer " << l;
            for (size_t i = 0; i < prev.size(); ++i) ASSERT_GE(expect[i], prev[i]);  // monotone
        }
    }
}

TEST(PropagateMask, EventuallySaturates) {
    Rng rng(10);
    Mask m(24, 24, 0);
    m.at(3, 17) = 1;
    const std::vector<ConvGeometry> chain(30, ConvGeometry::same(3));
    EXPECT_TRUE(propagate_mask(chain, m).back().all_valid());
}

// --- init --------------------------------------------------------------------

TEST(Init, ReproducibleForFixedSeed) {
    Rng a(77), b(77);
    auto la = make_gated_conv<float>(4, 4, ConvGeometry::same(3), Activation::elu, a);
    auto lb = make_gated_conv<float>(4, 4, ConvGeometry::same(3), Activation::elu, b);
    for (int64_t i = 0; i < la.feature_weight.numel(); ++i) EXPECT_EQ(la.feature_weight.data()[i], lb.feature_weight.data()[i]);
    for (int64_t i = 0; i < la.gate_weight.numel(); ++i) EXPECT_EQ(la.gate_weight.data()[i], lb.gate_weight.data()[i]);
}

TEST(Init, SampleVarianceWithinTenPercentOfTarget) {
    Rng rng(123);
    for (auto scheme : {InitScheme::he, InitScheme::xavier}) {
        const Shape s{64, 48, 6, 6};  // 110592 samples
        auto k = init_kernel<double>(s, scheme, rng);
        double mean = 0.0, sq = 0.0;
        for (double v : k.data()) mean += v;
        mean /= static_cast<double>(k.numel());
        for (double v : k.data()) sq += (v - mean) * (v - mean);
        const double var = sq / static_cast<double>(k.numel() - 1);
        const double target = init_target_variance(s, scheme);
        EXPECT_NEAR(var / target, 1.0, 0.1);
    }
    EXPECT_DOUBLE_EQ(init_target_variance({8, 4, 3, 3}, InitScheme::he), 2.0 / 36.0);
    EXPECT_DOUBLE_EQ(init_target_variance({8, 4, 3, 3}, InitScheme::xavier), 2.0 / 108.0);
}

TEST(Init, GatedFeatureKernelIsDoubledUnlessLinear) {
    Rng a(9), b(9), c(9);
    const ConvGeometry g = ConvGeometry::same(3);
    auto gated = make_gated_conv<double>(4, 6, g, Activation::elu, a);
    auto linear = make_gated_conv<double>(4, 6, g, Activation::none, b);
    const auto he = init_kernel<double>({6, 4, 3, 3}, InitScheme::he, c);
    for (int64_t i = 0; i < he.numel(); ++i) {
        EXPECT_EQ(gated.feature_weight.data()[i], 2.0 * he.data()[i]);
        EXPECT_EQ(linear.feature_weight.data()[i], he.data()[i]);
    }
    for (int64_t i = 0; i < he.numel(); ++i) EXPECT_EQ(gated.gate_weight.data()[i], linear.gate_weight.data()[i]);
}

TEST(Init, BiasesStartAtZero) {
    Rng rng(1);
    auto g = make_gated_conv<float>(2, 5, ConvGeometry::same(3), Activation::elu, rng);
    for (float b : g.gate_bias.data()) EXPECT_EQ(b, 0.0f);
    for (float b : g.feature_bias.data()) EXPECT_EQ(b, 0.0f);
    auto v = make_vanilla_conv<float>(2, 5, ConvGeometry::same(3), Activation::none, rng);
    for (float b : v.bias.data()) EXPECT_EQ(b, 0.0f);
}

// --- gradients -----------------------------------------------------------

TEST(LayerGradients, VanillaGatedAndPartialPassFiniteDifferences) {
    Rng rng(31);
    auto x = oracle::random_tensor<double>({2, 3, 6, 6}, rng, true);

    auto vanilla = make_vanilla_conv<double>(3, 4, ConvGeometry::same(3, 2), Activation::leaky_relu, rng);
    auto r1 = oracle::random_tensor<double>({2, 4, 3, 3}, rng);
    auto pv = params_of(vanilla);
    pv.push_back({"x", x});
    EXPECT_LT(grad_check([&] { return sum(mul(vanilla.forward(x), r1)); }, pv).max_relative_error, 1e-4);

    for (auto act : {Activation::elu, Activation::leaky_relu, Activation::tanh, Activation::none}) {
        auto gated = make_gated_conv<double>(3, 4, ConvGeometry::same(3, 1, 2), act, rng);
        for (auto& b : gated.gate_bias.data_mut()) b = rng.uniform(-1, 1);
        auto r2 = oracle::random_tensor<double>({2, 4, 6, 6}, rng);
        auto pg = params_of(gated);
        pg.push_back({"x", x});
        auto rep = grad_check([&] { return sum(mul(gated.forward(x), r2)); }, pg);
        EXPECT_LT(rep.max_relative_error, 1e-4) << to_string(act) << " " << rep.worst_parameter;
    }

    for (auto scaling : {PartialConvScaling::window_mean, PartialConvScaling::renormalized}) {
        auto partial = make_partial_conv<double>(3, 2, ConvGeometry::same(3), rng, scaling);
        for (auto& b : partial.bias.data_mut()) b = rng.uniform(-1, 1);
        auto mask = random_mask({2, 1, 6, 6}, rng, 0.5);
        auto r3 = oracle::random_tensor<double>({2, 2, 6, 6}, rng);
        auto pp = params_of(partial);
        pp.push_back({"x", x});
        EXPECT_LT(grad_check([&] { return sum(mul(partial.forward(x, mask).features, r3)); }, pp).max_relative_error,
                  1e-4);
    }
}
