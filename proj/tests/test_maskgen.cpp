#include "gatedfill/maskgen.hpp"
#include "gatedfill/network.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace gatedfill;

TEST(MaskGen, NoStrokesNoRectanglesIsAllValid) {
    auto cfg = MaskGenConfig::defaults_for(32, 32);
    cfg.num_strokes = 0;
    cfg.num_rectangles = 0;
    EXPECT_TRUE(generate_free_form_mask(cfg, 3).all_valid());
}

TEST(MaskGen, DeterministicForConfigAndSeed) {
    auto cfg = MaskGenConfig::defaults_for(64, 48);
    cfg.seed = 1234;
    cfg.num_rectangles = 2;
    for (uint64_t i = 0; i < 10; ++i) EXPECT_EQ(generate_free_form_mask(cfg, i), generate_free_form_mask(cfg, i));
    EXPECT_NE(generate_free_form_mask(cfg, 0), generate_free_form_mask(cfg, 1));
    Rng a(5), b(5);
    EXPECT_EQ(generate_free_form_mask(cfg, a), generate_free_form_mask(cfg, b));
    EXPECT_EQ(a.draws(), b.draws());
}

TEST(MaskGen, HolesMatchExactDistanceOracle) {
    auto cfg = MaskGenConfig::defaults_for(48, 40);
    cfg.num_rectangles = 1;
    cfg.seed = 99;
    for (uint64_t i = 0; i < 150; ++i) {
        Rng rng = Rng::derive(cfg.seed, i);
        const auto s = sample_free_form_mask(cfg, rng);
        ASSERT_EQ(oracle::capsule_mismatches(s), 0) << "sample " << i;
    }
}

TEST(MaskGen, StrokeGeometryFollowsTheSampler) {
    auto cfg = MaskGenConfig::defaults_for(64, 64);
    Rng rng(7);
    const auto s = sample_free_form_mask(cfg, rng);
    ASSERT_EQ(static_cast<int>(s.strokes.size()), cfg.num_strokes);
    for (const auto& stroke : s.strokes) {
        ASSERT_GE(stroke.segments.size(), 1u);
        ASSERT_LE(static_cast<int>(stroke.segments.size()), cfg.max_vertex);
        for (size_t i = 0; i < stroke.segments.size(); ++i) {
            const auto& seg = stroke.segments[i];
            EXPECT_GE(seg.width, 1.0);
            EXPECT_LE(seg.width, cfg.max_brush_width);
            EXPECT_EQ(seg.width, stroke.segments[0].width);
            EXPECT_LT(std::hypot(seg.p1.x - seg.p0.x, seg.p1.y - seg.p0.y), cfg.max_length + 1e-9);
            if (i > 0) {
                EXPECT_EQ(seg.p0.x, stroke.segments[i - 1].p1.x);
                EXPECT_EQ(seg.p0.y, stroke.segments[i - 1].p1.y);
            }
        }
    }
}

TEST(MaskGen, ConfigValidation) {
    auto cfg = MaskGenConfig::defaults_for(32, 32);
    EXPECT_NO_THROW(cfg.validate());
    auto bad = cfg;
    bad.image_height = 0;
    EXPECT_THROW(generate_free_form_mask(bad, 0), std::invalid_argument);
    bad = cfg;
    bad.max_angle = 7.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.max_brush_width = 0.5;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.max_length = 40.0;
    EXPECT_NO_THROW(bad.validate());
    EXPECT_EQ(bad.warnings().size(), 1u);
    EXPECT_TRUE(cfg.warnings().empty());
}

TEST(MaskGen, DefaultsScaleWithCanvas) {
    const auto big = MaskGenConfig::defaults_for(256, 256);
    EXPECT_EQ(big.max_vertex, 12);
    EXPECT_DOUBLE_EQ(big.max_length, 80.0);
    EXPECT_DOUBLE_EQ(big.max_brush_width, 20.0);
    EXPECT_NEAR(big.max_angle, 2.0 * std::numbers::pi / 5.0, 1e-15);
    const auto small = MaskGenConfig::defaults_for(32, 64);
    EXPECT_DOUBLE_EQ(small.max_length, 20.0);
    EXPECT_DOUBLE_EQ(small.max_brush_width, 5.0);
}

TEST(MaskGen, JsonRoundTrip) {
    auto cfg = MaskGenConfig::defaults_for(40, 40);
    cfg.seed = 0xfeedULL;
    cfg.num_rectangles = 3;
    nlohmann::json j = cfg;
    const auto back = j.get<MaskGenConfig>();
    EXPECT_EQ(nlohmann::json(back), j);
}

TEST(MaskGen, CoverageSaneUnderDefaults) {
    const auto cfg = MaskGenConfig::defaults_for(128, 128);
    double total = 0.0;
    const int n = 200;
    for (int i = 0; i < n; ++i) total += mask_stats(generate_free_form_mask(cfg, static_cast<uint64_t>(i))).coverage;
    const double mean = total / n;
    EXPECT_GE(mean, 0.05);
    EXPECT_LE(mean, 0.5);
}

// --- capsule -------------------------------------------------------------

TEST(Capsule, DegenerateSegmentIsDisc) {
    Mask m(21, 21, 1);
    rasterize_capsule(m, {10.5, 10.5}, {10.5, 10.5}, 9.0);
    for (int y = 0; y < 21; ++y)
        for (int x = 0; x < 21; ++x) {
            const double d = std::hypot(x + 0.5 - 10.5, y + 0.5 - 10.5);
            EXPECT_EQ(!m.valid(y, x), d <= 4.5) << y << "," << x;
        }
}

TEST(Capsule, AreaNearAnalytic) {
    // Scale the geometry up so pixel quantization is small.
    const double s = 8.0;
    Mask m(200, 200, 1);
    rasterize_capsule(m, {50.0, 100.0}, {50.0 + 10 * s, 100.0}, 4 * s);
    const double area = static_cast<double>(m.hole_count()) / (s * s);
    const double analytic = 10.0 * 4.0 + std::numbers::pi * 2.0 * 2.0;
    EXPECT_NEAR(area / analytic, 1.0, 0.1);
}

TEST(Capsule, SymmetricInEndpoints) {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const Point a{rng.uniform(-5, 40), rng.uniform(-5, 40)}, b{rng.uniform(-5, 40), rng.uniform(-5, 40)};
        const double w = rng.uniform(1, 9);
        Mask m1(32, 32, 1), m2(32, 32, 1);
        rasterize_capsule(m1, a, b, w);
        rasterize_capsule(m2, b, a, w);
        ASSERT_EQ(m1, m2);
    }
}

TEST(Capsule, ClipsOffCanvas) {
    Mask m(8, 8, 1);
    rasterize_capsule(m, {-20, -20}, {-10, -10}, 3);
    EXPECT_TRUE(m.all_valid());
    rasterize_capsule(m, {-20, 4}, {30, 4}, 2);
    EXPECT_EQ(m.hole_count(), 16);
    EXPECT_THROW(rasterize_capsule(m, {0, 0}, {1, 1}, 0.5), std::invalid_argument);
}

// --- stats and flips --------------------------------------------------------

TEST(MaskStats, TrivialCases) {
    auto s = mask_stats(Mask(10, 12, 1));
    EXPECT_EQ(s.coverage, 0.0);
    EXPECT_EQ(s.num_components, 0);
    Mask m(10, 12, 1);
    for (int y = 2; y < 5; ++y)
        for (int x = 6; x < 9; ++x) m.at(y, x) = 0;
    s = mask_stats(m);
    EXPECT_DOUBLE_EQ(s.coverage, 9.0 / 120.0);
    EXPECT_EQ(s.num_components, 1);
}

TEST(MaskStats, ComponentsMatchUnionFind) {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(1, 30)), w = static_cast<int>(rng.uniform_int(1, 30));
        Mask m(h, w, 1);
        const double p = rng.uniform(0.2, 0.7);
        std::vector<uint8_t> hole(m.bits.size());
        for (size_t i = 0; i < m.bits.size(); ++i) {
            hole[i] = rng.uniform() < p;
            m.bits[i] = !hole[i];
        }
        ASSERT_EQ(mask_stats(m).num_components, oracle::count_components(hole, h, w));
    }
    auto cfg = MaskGenConfig::defaults_for(64, 64);
    cfg.num_rectangles = 2;
    for (uint64_t i = 0; i < 20; ++i) {
        const Mask m = generate_free_form_mask(cfg, i);
        std::vector<uint8_t> hole(m.bits.size());
        for (size_t k = 0; k < hole.size(); ++k) hole[k] = !m.bits[k];
        ASSERT_EQ(mask_stats(m).num_components, oracle::count_components(hole, 64, 64));
    }
}

TEST(Flip, InvolutionPreservingCoverage) {
    const auto cfg = MaskGenConfig::defaults_for(40, 24);
    const Mask m = generate_free_form_mask(cfg, 5);
    for (auto axis : {FlipAxis::left_right, FlipAxis::top_bottom}) {
        EXPECT_EQ(flip(flip(m, axis), axis), m);
        EXPECT_EQ(flip(m, axis).hole_count(), m.hole_count());
    }
}

TEST(Flip, MirrorsCoordinates) {
    Mask m(3, 5, 1);
    m.at(0, 0) = 0;
    m.at(2, 1) = 0;
    const Mask lr = flip(m, FlipAxis::left_right);
    const Mask tb = flip(m, FlipAxis::top_bottom);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) {
            EXPECT_EQ(lr.at(y, x), m.at(y, 4 - x));
            EXPECT_EQ(tb.at(y, x), m.at(2 - y, x));
        }
    EXPECT_EQ(lr.at(0, 4), 0);
    EXPECT_EQ(tb.at(0, 1), 0);
}

TEST(ReceptiveField, Recurrence) {
    const std::vector<ConvGeometry> one{ConvGeometry::same(3)};
    EXPECT_EQ(receptive_fields(one).back(), 3);
    const std::vector<ConvGeometry> d{ConvGeometry::same(3, 1, 4)};
    EXPECT_EQ(receptive_fields(d).back(), 9);
    const std::vector<ConvGeometry> six(6, ConvGeometry::same(5, 2));
    const auto rf = receptive_fields(six);
    EXPECT_EQ(rf.front(), 5);
    EXPECT_EQ(rf.back(), 253);
}
