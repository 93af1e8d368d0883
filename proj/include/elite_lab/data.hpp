#ifndef ELITE_LAB_DATA_HPP
#define ELITE_LAB_DATA_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "elite_lab/errors.hpp"
#include "elite_lab/image.hpp"

// Procedural masked-object dataset: one textured foreground shape on a
// gradient background, with an exact mask and a shape×palette×texture
// category label.
namespace elite::data {

enum class ShapeFamily { Ellipse, Polygon, Star, Cross };

struct ShapeDef {
    std::string name;
    ShapeFamily family;
    int points;          // polygon vertices or star tips
    double aspect;       // vertical squash
    double inner_ratio;  // star valley radius / tip radius
};

struct Palette {
    std::string name;
    std::array<float, 3> main;
    std::array<float, 3> accent;
};

inline const std::vector<ShapeDef>& default_shapes() {
    static const std::vector<ShapeDef> s = {
        {"circle", ShapeFamily::Ellipse, 0, 1.0, 0},    {"oval", ShapeFamily::Ellipse, 0, 0.6, 0},
        {"triangle", ShapeFamily::Polygon, 3, 1.0, 0},  {"square", ShapeFamily::Polygon, 4, 1.0, 0},
        {"diamond", ShapeFamily::Polygon, 4, 0.6, 0},   {"pentagon", ShapeFamily::Polygon, 5, 1.0, 0},
        {"hexagon", ShapeFamily::Polygon, 6, 1.0, 0},   {"octagon", ShapeFamily::Polygon, 8, 1.0, 0},
        {"star", ShapeFamily::Star, 5, 1.0, 0.45},      {"sparkle", ShapeFamily::Star, 4, 1.0, 0.35},
        {"burst", ShapeFamily::Star, 8, 1.0, 0.6},      {"cross", ShapeFamily::Cross, 12, 1.0, 0.35},
    };
    return s;
}

inline const std::vector<Palette>& default_palettes() {
    static const std::vector<Palette> p = {
        {"red", {0.86f, 0.14f, 0.12f}, {0.50f, 0.04f, 0.05f}},
        {"orange", {0.96f, 0.55f, 0.10f}, {0.62f, 0.28f, 0.02f}},
        {"yellow", {0.95f, 0.88f, 0.15f}, {0.70f, 0.55f, 0.05f}},
        {"green", {0.18f, 0.70f, 0.22f}, {0.05f, 0.38f, 0.10f}},
        {"teal", {0.10f, 0.65f, 0.62f}, {0.02f, 0.35f, 0.38f}},
        {"blue", {0.15f, 0.30f, 0.88f}, {0.05f, 0.10f, 0.45f}},
        {"purple", {0.55f, 0.20f, 0.80f}, {0.28f, 0.06f, 0.45f}},
        {"pink", {0.98f, 0.55f, 0.75f}, {0.78f, 0.25f, 0.48f}},
        {"brown", {0.55f, 0.33f, 0.15f}, {0.30f, 0.16f, 0.06f}},
        {"gray", {0.62f, 0.62f, 0.62f}, {0.30f, 0.30f, 0.30f}},
    };
    return p;
}

inline const std::vector<std::string>& default_textures() {
    static const std::vector<std::string> t = {"plain", "striped", "dotted", "checkered", "gradient"};
    return t;
}

struct DatasetSpec {
    std::size_t canvas = 96;
    double min_radius = 0.18;  // fraction of the canvas
    double max_radius = 0.32;
    double min_color_distance = 0.35;  // foreground/background mean RGB distance floor
    double noise = 0.02;
    std::vector<ShapeDef> shapes = default_shapes();
    std::vector<Palette> palettes = default_palettes();
    std::vector<std::string> textures = default_textures();

    std::size_t category_count() const { return shapes.size() * palettes.size() * textures.size(); }
};

struct Category {
    std::size_t shape = 0, palette = 0, texture = 0;
};

inline std::size_t category_id(const DatasetSpec& spec, const Category& c) {
    return (c.shape * spec.palettes.size() + c.palette) * spec.textures.size() + c.texture;
}

inline Category category_of(const DatasetSpec& spec, std::size_t id) {
    if (id >= spec.category_count()) throw ConfigError("category id " + std::to_string(id) + " out of range");
    Category c;
    c.texture = id % spec.textures.size();
    c.palette = (id / spec.textures.size()) % spec.palettes.size();
    c.shape = id / (spec.textures.size() * spec.palettes.size());
    return c;
}

// "<palette> <texture> <shape>", e.g. "red striped star".
inline std::string category_name(const DatasetSpec& spec, std::size_t id) {
    const Category c = category_of(spec, id);
    return spec.palettes[c.palette].name + " " + spec.textures[c.texture] + " " + spec.shapes[c.shape].name;
}

struct BBox {
    std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
    std::size_t width() const { return x1 - x0; }
    std::size_t height() const { return y1 - y0; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
    bool operator==(const BBox&) const = default;
};

struct ConceptSample {
    Image image;
    Mask mask;
    std::size_t category_id = 0;
    BBox bbox;
};

struct Splits {
    std::vector<std::size_t> train;    // category ids seen during training
    std::vector<std::size_t> heldout;  // unseen combinations used as test concepts
};

// Training combinations cycle shape, palette and texture together so every
// vocabulary word appears; held-out combinations shift the texture index so
// none of them occurs in training.
inline Splits make_splits(const DatasetSpec& spec, std::size_t num_train, std::size_t num_heldout) {
    const std::size_t ns = spec.shapes.size(), np = spec.palettes.size(), nt = spec.textures.size();
    if (num_train == 0) throw ConfigError("num_categories must be positive");
    if (num_train + num_heldout > spec.category_count())
        throw ConfigError("requested more categories than the generator provides");
    Splits s;
    std::set<std::size_t> used;
    for (std::size_t j = 0; s.heldout.size() < num_heldout && j < spec.category_count(); ++j) {
        const std::size_t id = category_id(spec, {j % ns, j % np, (j + 1) % nt});
        if (used.insert(id).second) s.heldout.push_back(id);
    }
    for (std::size_t i = 0; s.train.size() < num_train && i < spec.category_count(); ++i) {
        const std::size_t id = category_id(spec, {i % ns, i % np, i % nt});
        if (used.insert(id).second) s.train.push_back(id);
    }
    for (std::size_t id = 0; s.train.size() < num_train && id < spec.category_count(); ++id)
        if (used.insert(id).second) s.train.push_back(id);
    return s;
}

// Seed for item `index` of stream `stream`, a function of (global_seed,
// stream, index) only.
inline std::uint64_t item_seed(std::uint64_t global_seed, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t z = global_seed * 0x9E3779B97F4A7C15ull + stream * 0xBF58476D1CE4E5B9ull + index + 1;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace detail {

struct Geometry {
    double cx, cy, radius, angle;
};

inline bool inside_polygon(double x, double y, const std::vector<std::array<double, 2>>& poly) {
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) in = !in;
    }
    return in;
}

inline std::vector<std::array<double, 2>> outline(const ShapeDef& s) {
    std::vector<std::array<double, 2>> poly;
    const double pi = std::numbers::pi;
    switch (s.family) {
        case ShapeFamily::Polygon:
            for (int i = 0; i < s.points; ++i) {
                const double a = -pi / 2 + 2 * pi * i / s.points;
                poly.push_back({std::cos(a), std::sin(a) * s.aspect});
            }
            break;
        case ShapeFamily::Star:
            for (int i = 0; i < 2 * s.points; ++i) {
                const double a = -pi / 2 + pi * i / s.points;
                const double r = (i % 2) ? s.inner_ratio : 1.0;
                poly.push_back({r * std::cos(a), r * std::sin(a) * s.aspect});
            }
            break;
        case ShapeFamily::Cross: {
            const double t = s.inner_ratio;
            poly = {{-t, -1}, {t, -1}, {t, -t}, {1, -t}, {1, t}, {t, t},
                    {t, 1},   {-t, 1}, {-t, t}, {-1, t}, {-1, -t}, {-t, -t}};
            break;
        }
        case ShapeFamily::Ellipse:
            break;
    }
    return poly;
}

inline double color_distance(const std::array<float, 3>& a, const std::array<float, 3>& b) {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace detail

// One object of category `category_id`, deterministic in `seed`.
inline ConceptSample gen_concept_image(std::uint64_t seed, const DatasetSpec& spec, std::size_t category_id) {
    if (spec.canvas < 8) throw ConfigError("dataset canvas must be at least 8 pixels");
    if (!(spec.min_radius > 0) || spec.max_radius < spec.min_radius ||
        spec.min_radius * static_cast<double>(spec.canvas) < 1.0)
        throw ConfigError("degenerate dataset spec: shape radius yields zero area");
    if (spec.shapes.empty() || spec.palettes.empty() || spec.textures.empty())
        throw ConfigError("degenerate dataset spec: empty shape, palette or texture list");

    const Category cat = category_of(spec, category_id);
    const ShapeDef& shape = spec.shapes[cat.shape];
    const Palette& pal = spec.palettes[cat.palette];
    const std::string& texture = spec.textures[cat.texture];

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double n = static_cast<double>(spec.canvas);

    detail::Geometry g;
    g.radius = n * (spec.min_radius + (spec.max_radius - spec.min_radius) * u01(rng));
    g.cx = g.radius + (n - 2 * g.radius) * u01(rng);
    g.cy = g.radius + (n - 2 * g.radius) * u01(rng);
    g.angle = (u01(rng) - 0.5) * 0.6;

    // Background: two-colour gradient kept away from the foreground colour.
    std::array<float, 3> bg0{}, bg1{};
    for (int attempt = 0; attempt < 200; ++attempt) {
        for (int c = 0; c < 3; ++c) {
            bg0[c] = static_cast<float>(0.08 + 0.84 * u01(rng));
            bg1[c] = static_cast<float>(std::clamp(bg0[c] + 0.3 * (u01(rng) - 0.5), 0.0, 1.0));
        }
        std::array<float, 3> mid{};
        for (int c = 0; c < 3; ++c) mid[c] = 0.5f * (bg0[c] + bg1[c]);
        if (detail::color_distance(mid, pal.main) >= spec.min_color_distance &&
            detail::color_distance(bg0, pal.main) >= spec.min_color_distance * 0.8 &&
            detail::color_distance(bg1, pal.main) >= spec.min_color_distance * 0.8)
            break;
    }
    const double bg_angle = 2 * std::numbers::pi * u01(rng);
    const double tex_phase = u01(rng) * 6.0;

    const auto poly = detail::outline(shape);
    const double ca = std::cos(g.angle), sa = std::sin(g.angle);

    ConceptSample out;
    out.category_id = category_id;
    out.image = Image(spec.canvas, spec.canvas);
    out.mask = Mask(spec.canvas, spec.canvas);
    std::size_t x0 = spec.canvas, y0 = spec.canvas, x1 = 0, y1 = 0;

    std::uniform_real_distribution<float> noise(static_cast<float>(-spec.noise), static_cast<float>(spec.noise));
    for (std::size_t py = 0; py < spec.canvas; ++py) {
        for (std::size_t px = 0; px < spec.canvas; ++px) {
            const double x = static_cast<double>(px) + 0.5, y = static_cast<double>(py) + 0.5;
            const double dx = (x - g.cx) / g.radius, dy = (y - g.cy) / g.radius;
            const double lx = ca * dx + sa * dy, ly = -sa * dx + ca * dy;
            bool inside = false;
            if (shape.family == ShapeFamily::Ellipse)
                inside = lx * lx + (ly / shape.aspect) * (ly / shape.aspect) <= 1.0;
            else
                inside = detail::inside_polygon(lx, ly, poly);

            std::array<float, 3> col{};
            if (inside) {
                bool accent = false;
                float mix = 0.f;
                if (texture == "striped") {
                    accent = static_cast<int>(std::floor(lx * 5.0 + tex_phase)) % 2 != 0;
                } else if (texture == "dotted") {
                    const double fx = lx * 4.0 + tex_phase - std::floor(lx * 4.0 + tex_phase) - 0.5;
                    const double fy = ly * 4.0 - std::floor(ly * 4.0) - 0.5;
                    accent = fx * fx + fy * fy < 0.09;
                } else if (texture == "checkered") {
                    accent = (static_cast<int>(std::floor(lx * 3.0 + 10)) + static_cast<int>(std::floor(ly * 3.0 + 10))) %
                                 2 !=
                             0;
                } else if (texture == "gradient") {
                    mix = static_cast<float>(std::clamp((ly + 1.0) / 2.0, 0.0, 1.0));
                }
                for (int c = 0; c < 3; ++c) {
                    col[c] = accent ? pal.accent[c] : pal.main[c];
                    if (mix > 0) col[c] = (1 - mix) * pal.main[c] + mix * pal.accent[c];
                }
                out.mask.at(py, px) = 1;
                x0 = std::min(x0, px);
                y0 = std::min(y0, py);
                x1 = std::max(x1, px + 1);
                y1 = std::max(y1, py + 1);
            } else {
                const double t =
                    std::clamp(0.5 + 0.5 * ((x / n - 0.5) * std::cos(bg_angle) + (y / n - 0.5) * std::sin(bg_angle)) * 1.4,
                               0.0, 1.0);
                for (int c = 0; c < 3; ++c) col[c] = static_cast<float>((1 - t) * bg0[c] + t * bg1[c]);
            }
            for (int c = 0; c < 3; ++c) out.image.at(py, px, c) = quantize8(col[c] + noise(rng));
        }
    }
    if (x1 <= x0 || y1 <= y0) throw ConfigError("degenerate dataset spec: rendered shape has zero area");
    out.bbox = {x0, y0, x1, y1};
    return out;
}

// Bounding-box crop with a 10% margin per side (clamped to the image),
// resized to target×target: bilinear for pixels, nearest for the mask.
inline ConceptSample crop_resize(const ConceptSample& s, std::size_t target) {
    const BBox& b = s.bbox;
    if (b.empty()) throw ContractError("crop_resize: empty bounding box");
    if (b.x1 > s.image.width || b.y1 > s.image.height) throw ContractError("crop_resize: bbox outside the image");
    if (target == 0) throw ContractError("crop_resize: zero target size");

    const double mx = 0.1 * static_cast<double>(b.width()), my = 0.1 * static_cast<double>(b.height());
    const double cx0 = std::max(0.0, static_cast<double>(b.x0) - mx);
    const double cy0 = std::max(0.0, static_cast<double>(b.y0) - my);
    const double cx1 = std::min(static_cast<double>(s.image.width), static_cast<double>(b.x1) + mx);
    const double cy1 = std::min(static_cast<double>(s.image.height), static_cast<double>(b.y1) + my);
    const double sx = (cx1 - cx0) / static_cast<double>(target), sy = (cy1 - cy0) / static_cast<double>(target);

    ConceptSample out;
    out.category_id = s.category_id;
    out.image = Image(target, target);
    out.mask = Mask(target, target);
    const auto W = static_cast<long>(s.image.width), H = static_cast<long>(s.image.height);
    std::size_t x0 = target, y0 = target, x1 = 0, y1 = 0;
    for (std::size_t ty = 0; ty < target; ++ty) {
        for (std::size_t tx = 0; tx < target; ++tx) {
            const double fx = cx0 + (static_cast<double>(tx) + 0.5) * sx - 0.5;
            const double fy = cy0 + (static_cast<double>(ty) + 0.5) * sy - 0.5;
            const long ix = static_cast<long>(std::floor(fx)), iy = static_cast<long>(std::floor(fy));
            const double ax = fx - static_cast<double>(ix), ay = fy - static_cast<double>(iy);
            for (std::size_t c = 0; c < 3; ++c) {
                auto px = [&](long y, long x) {
                    return static_cast<double>(
                        s.image.at(static_cast<std::size_t>(std::clamp(y, 0L, H - 1)),
                                   static_cast<std::size_t>(std::clamp(x, 0L, W - 1)), c));
                };
                const double v = (1 - ay) * ((1 - ax) * px(iy, ix) + ax * px(iy, ix + 1)) +
                                 ay * ((1 - ax) * px(iy + 1, ix) + ax * px(iy + 1, ix + 1));
                out.image.at(ty, tx, c) = quantize8(static_cast<float>(v));
            }
            const long nx = std::clamp(static_cast<long>(std::floor(cx0 + (static_cast<double>(tx) + 0.5) * sx)), 0L, W - 1);
            const long ny = std::clamp(static_cast<long>(std::floor(cy0 + (static_cast<double>(ty) + 0.5) * sy)), 0L, H - 1);
            const std::uint8_t m = s.mask.at(static_cast<std::size_t>(ny), static_cast<std::size_t>(nx));
            out.mask.at(ty, tx) = m;
            if (m) {
                x0 = std::min(x0, tx);
                y0 = std::min(y0, ty);
                x1 = std::max(x1, tx + 1);
                y1 = std::max(y1, ty + 1);
            }
        }
    }
    out.bbox = x1 > x0 ? BBox{x0, y0, x1, y1} : BBox{0, 0, target, target};
    return out;
}

// Stream tags for item_seed.
inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kConceptStream = 2;

// Training item `index`: category cycles over the training split.
inline ConceptSample training_sample(std::uint64_t global_seed, std::size_t index, const DatasetSpec& spec,
                                     const Splits& splits, std::size_t target) {
    const std::size_t cat = splits.train[index % splits.train.size()];
    return crop_resize(gen_concept_image(item_seed(global_seed, kTrainStream, index), spec, cat), target);
}

// Held-out concept `index` (one per held-out category), variant `variant`.
inline ConceptSample concept_sample(std::uint64_t global_seed, std::size_t index, std::size_t variant,
                                    const DatasetSpec& spec, const Splits& splits, std::size_t target) {
    const std::size_t cat = splits.heldout.at(index % splits.heldout.size());
    return crop_resize(
        gen_concept_image(item_seed(global_seed, kConceptStream, index * 1000 + variant), spec, cat), target);
}

// Mean foreground and background colours; used to check masks are learnable.
inline std::pair<std::array<double, 3>, std::array<double, 3>> region_means(const ConceptSample& s) {
    std::array<double, 3> fg{}, bg{};
    double nf = 0, nb = 0;
    for (std::size_t y = 0; y < s.image.height; ++y)
        for (std::size_t x = 0; x < s.image.width; ++x) {
            auto& acc = s.mask.at(y, x) ? fg : bg;
            (s.mask.at(y, x) ? nf : nb) += 1;
            for (std::size_t c = 0; c < 3; ++c) acc[c] += s.image.at(y, x, c);
        }
    for (int c = 0; c < 3; ++c) {
        fg[c] /= std::max(nf, 1.0);
        bg[c] /= std::max(nb, 1.0);
    }
    return {fg, bg};
}

}  // namespace elite::data

#endif  // ELITE_LAB_DATA_HPP
