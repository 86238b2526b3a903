#include "gatedfill/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gatedfill {

MaskGenConfig MaskGenConfig::defaults_for(int height, int width) {
    MaskGenConfig cfg;
    const double scale = static_cast<double>(std::max(height, width)) / 256.0;
    cfg.max_length *= scale;
    cfg.max_brush_width = std::max(1.0, cfg.max_brush_width * scale);
    cfg.image_height = height;
    cfg.image_width = width;
    return cfg;
}

void MaskGenConfig::validate() const {
    if (image_height <= 0 || image_width <= 0) {
        throw std::invalid_argument("mask canvas must have positive area, got " + std::to_string(image_height) + "x" +
                                    std::to_string(image_width));
    }
    if (max_vertex < 1) throw std::invalid_argument("max_vertex must be >= 1");
    if (!(max_length > 0.0)) throw std::invalid_argument("max_length must be positive");
    if (!(max_brush_width >= 1.0)) throw std::invalid_argument("max_brush_width must be >= 1");
    if (!(max_angle >= 0.0) || max_angle > 2.0 * std::numbers::pi) {
        throw std::invalid_argument("max_angle must lie in [0, 2π]");
    }
    if (num_strokes < 0) throw std::invalid_argument("num_strokes must be non-negative");
    if (num_rectangles < 0) throw std::invalid_argument("num_rectangles must be non-negative");
}

std::vector<std::string> MaskGenConfig::warnings() const {
    std::vector<std::string> out;
    if (max_length >= std::max(image_height, image_width)) {
        out.push_back("max_length is not smaller than the canvas; strokes will often leave the image");
    }
    return out;
}

void to_json(nlohmann::json& j, const MaskGenConfig& cfg) {
    j = nlohmann::json{{"max_vertex", cfg.max_vertex},         {"max_length", cfg.max_length},
                       {"max_brush_width", cfg.max_brush_width}, {"max_angle", cfg.max_angle},
                       {"num_strokes", cfg.num_strokes},       {"num_rectangles", cfg.num_rectangles},
                       {"image_height", cfg.image_height},     {"image_width", cfg.image_width},
                       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, MaskGenConfig& cfg) {
    cfg.max_vertex = j.value("max_vertex", cfg.max_vertex);
    cfg.max_length = j.value("max_length", cfg.max_length);
    cfg.max_brush_width = j.value("max_brush_width", cfg.max_brush_width);
    cfg.max_angle = j.value("max_angle", cfg.max_angle);
    cfg.num_strokes = j.value("num_strokes", cfg.num_strokes);
    cfg.num_rectangles = j.value("num_rectangles", cfg.num_rectangles);
    cfg.image_height = j.value("image_height", cfg.image_height);
    cfg.image_width = j.value("image_width", cfg.image_width);
    cfg.seed = j.value("seed", cfg.seed);
}

double point_segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    const double ex = p.x - (a.x + t * dx);
    const double ey = p.y - (a.y + t * dy);
    return std::sqrt(ex * ex + ey * ey);
}

void rasterize_capsule(Mask& mask, Point p0, Point p1, double width) {
    if (!(width >= 1.0)) throw std::invalid_argument("rasterize_capsule: width must be >= 1");
    const double r = width / 2.0;
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(p0.x, p1.x) - r - 0.5)));
    const int x_hi = std::min(mask.width - 1, static_cast<int>(std::ceil(std::max(p0.x, p1.x) + r - 0.5)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(p0.y, p1.y) - r - 0.5)));
    const int y_hi = std::min(mask.height - 1, static_cast<int>(std::ceil(std::max(p0.y, p1.y) + r - 0.5)));
    // order-independent endpoints so swapping p0, p1 paints the same set
    if (p1.x < p0.x || (p1.x == p0.x && p1.y < p0.y)) std::swap(p0, p1);
    for (int y = y_lo; y <= y_hi; ++y)
        for (int x = x_lo; x <= x_hi; ++x) {
            if (point_segment_distance({x + 0.5, y + 0.5}, p0, p1) <= r) mask.at(y, x) = 0;
        }
}

MaskSample sample_free_form_mask(const MaskGenConfig& cfg, Rng& rng) {
    cfg.validate();
    const int H = cfg.image_height;
    const int W = cfg.image_width;
    MaskSample sample;
    sample.mask = Mask(H, W, 1);

    for (int s = 0; s < cfg.num_strokes; ++s) {
        StrokeRecord stroke;
        const auto num_vertex = static_cast<int>(rng.uniform_int(1, cfg.max_vertex));
        Point start{rng.uniform(0.0, W), rng.uniform(0.0, H)};
        const double brush = 1.0 + rng.uniform() * (cfg.max_brush_width - 1.0);
        Mask canvas(H, W, 1);
        for (int i = 0; i < num_vertex; ++i) {
            double angle = rng.uniform(0.0, cfg.max_angle);
            if (i % 2 == 0) angle = 2.0 * std::numbers::pi - angle;
            const double length = rng.uniform(0.0, cfg.max_length);
            const Point end{start.x + length * std::sin(angle), start.y + length * std::cos(angle)};
            rasterize_capsule(canvas, start, end, brush);
            stroke.segments.push_back({start, end, brush});
            start = end;
        }
        stroke.flip_left_right = rng.coin();
        stroke.flip_top_bottom = rng.coin();
        if (stroke.flip_left_right) canvas = flip(canvas, FlipAxis::left_right);
        if (stroke.flip_top_bottom) canvas = flip(canvas, FlipAxis::top_bottom);
        for (size_t i = 0; i < canvas.bits.size(); ++i) sample.mask.bits[i] &= canvas.bits[i];
        sample.strokes.push_back(std::move(stroke));
    }

    for (int r = 0; r < cfg.num_rectangles; ++r) {
        RectRecord rect;
        rect.height = static_cast<int>(rng.uniform_int(1, std::max(1, H / 2)));
        rect.width = static_cast<int>(rng.uniform_int(1, std::max(1, W / 2)));
        rect.top = static_cast<int>(rng.uniform_int(0, H - rect.height));
        rect.left = static_cast<int>(rng.uniform_int(0, W - rect.width));
        for (int y = rect.top; y < rect.top + rect.height; ++y)
            for (int x = rect.left; x < rect.left + rect.width; ++x) sample.mask.at(y, x) = 0;
        sample.rectangles.push_back(rect);
    }
    return sample;
}

Mask generate_free_form_mask(const MaskGenConfig& cfg, Rng& rng) {
    return sample_free_form_mask(cfg, rng).mask;
}

Mask generate_free_form_mask(const MaskGenConfig& cfg, uint64_t index) {
    Rng rng = Rng::derive(cfg.seed, index);
    return generate_free_form_mask(cfg, rng);
}

MaskStats mask_stats(const Mask& mask) {
    MaskStats stats;
    const int64_t total = static_cast<int64_t>(mask.width) * mask.height;
    if (total == 0) return stats;
    stats.coverage = static_cast<double>(mask.hole_count()) / static_cast<double>(total);

    std::vector<uint8_t> seen(mask.bits.size(), 0);
    std::vector<int64_t> queue;
    for (int64_t start = 0; start < total; ++start) {
        if (mask.bits[start] != 0 || seen[start]) continue;
        ++stats.num_components;
        queue.assign(1, start);
        seen[start] = 1;
        while (!queue.empty()) {
            const int64_t i = queue.back();
            queue.pop_back();
            const int y = static_cast<int>(i / mask.width);
            const int x = static_cast<int>(i % mask.width);
            const int ny[4] = {y - 1, y + 1, y, y};
            const int nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= mask.height || nx[k] < 0 || nx[k] >= mask.width) continue;
                const int64_t j = static_cast<int64_t>(ny[k]) * mask.width + nx[k];
                if (mask.bits[j] == 0 && !seen[j]) {
                    seen[j] = 1;
                    queue.push_back(j);
                }
            }
        }
    }
    return stats;
}

Mask flip(const Mask& mask, FlipAxis axis) {
    Mask out(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            const int sy = axis == FlipAxis::top_bottom ? mask.height - 1 - y : y;
            const int sx = axis == FlipAxis::left_right ? mask.width - 1 - x : x;
            out.at(y, x) = mask.at(sy, sx);
        }
    return out;
}

}  // namespace gatedfill
