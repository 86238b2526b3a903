#pragma once

#include "gatedfill/mask.hpp"
#include "gatedfill/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace gatedfill {

/// Hyper-parameters of the random brush-stroke sampler. Lengths and widths
/// are in pixels, angles in radians.
struct MaskGenConfig {
    int max_vertex = 12;
    double max_length = 80.0;
    double max_brush_width = 20.0;
    double max_angle = 2.0 * 3.14159265358979323846 / 5.0;
    int num_strokes = 4;
    int num_rectangles = 0;
    int image_height = 256;
    int image_width = 256;
    uint64_t seed = 0;

    /// The 256x256 defaults with lengths and widths scaled by max(h, w) / 256.
    static MaskGenConfig defaults_for(int height, int width);

    /// Throws std::invalid_argument on hard violations.
    void validate() const;
    /// Soft violations, e.g. strokes longer than the canvas.
    std::vector<std::string> warnings() const;
};

void to_json(nlohmann::json& j, const MaskGenConfig& cfg);
void from_json(const nlohmann::json& j, MaskGenConfig& cfg);

struct Point {
    double x = 0.0;  // column axis, pixel centers at i + 0.5
    double y = 0.0;  // row axis
};

struct StrokeSegment {
    Point p0;
    Point p1;
    double width = 1.0;
};

/// Segments are recorded in the frame before the stroke's flips.
struct StrokeRecord {
    std::vector<StrokeSegment> segments;
    bool flip_left_right = false;
    bool flip_top_bottom = false;
};

struct RectRecord {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
};

struct MaskSample {
    Mask mask;
    std::vector<StrokeRecord> strokes;
    std::vector<RectRecord> rectangles;
};

/// Brush strokes: per stroke a uniform vertex count in {1..max_vertex}, a
/// uniform start point and brush width, then per vertex a uniform angle
/// (reflected to 2π - angle on even vertices) and length, each segment drawn
/// as a capsule of the brush width. Each stroke is flipped left-right and
/// top-bottom by independent coins before it is merged into the mask. Holes
/// are 0 on an all-valid canvas; rectangles are punched last.
MaskSample sample_free_form_mask(const MaskGenConfig& cfg, Rng& rng);
Mask generate_free_form_mask(const MaskGenConfig& cfg, Rng& rng);
/// Uses the stream Rng::derive(cfg.seed, index).
Mask generate_free_form_mask(const MaskGenConfig& cfg, uint64_t index = 0);

/// Marks as hole every pixel whose center lies within width / 2 of the
/// segment p0-p1. Off-canvas parts are clipped.
void rasterize_capsule(Mask& mask, Point p0, Point p1, double width);

double point_segment_distance(Point p, Point a, Point b);

struct MaskStats {
    double coverage = 0.0;  // hole fraction
    int64_t num_components = 0;  // 4-connected hole regions
};

MaskStats mask_stats(const Mask& mask);

enum class FlipAxis { left_right, top_bottom };

Mask flip(const Mask& mask, FlipAxis axis);

}  // namespace gatedfill
