#pragma once

#include <transplat/errors.hpp>
#include <transplat/geometry.hpp>
#include <transplat/image.hpp>
#include <transplat/parallel.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace transplat {

// World frame is y-up. Cameras orbit around the y axis.

enum class ShapeKind { sphere, box, cylinder };

inline const char* shape_name(ShapeKind s) {
    switch (s) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::cylinder: return "cylinder";
    }
    return "?";
}

struct Material {
    bool transparent = false;
    Vec3 color = Vec3::Constant(0.7); // albedo or tint
    double base_alpha = 0.1;

    static Material opaque(const Vec3& albedo) { return {false, albedo, 1.0}; }
    static Material glass(const Vec3& tint, double base_alpha) { return {true, tint, base_alpha}; }
};

/// `size` holds half-extents along the object axes. Spheres use size.x as
/// radius; cylinders have radius size.x around the object y axis and
/// half-height size.y.
struct Primitive {
    ShapeKind shape = ShapeKind::sphere;
    Vec3 center = Vec3::Zero();
    Quaternion rotation = Quaternion::identity();
    Vec3 size = Vec3::Ones();
    Material material;

    /// Half-extents used to normalize object-frame points to [-1, 1]^3.
    Vec3 extents() const {
        switch (shape) {
        case ShapeKind::sphere: return Vec3::Constant(size.x());
        case ShapeKind::cylinder: return Vec3(size.x(), size.y(), size.x());
        case ShapeKind::box: return size;
        }
        return size;
    }
};

/// Finite square floor at y = height with a jittered checker texture.
struct FloorSpec {
    bool enabled = true;
    double height = -1.0;
    double half_extent = 3.5;
    double tile = 0.25;
    Vec3 color_a = Vec3(0.55, 0.35, 0.2);
    Vec3 color_b = Vec3(0.25, 0.3, 0.45);
};

/// Camera i sits at azimuth 2*pi*i/count, at `radius` from the look-at point
/// in the horizontal plane and `height + wobble * sin(2*pi*cycles*i/count)`
/// above it.
struct OrbitSpec {
    int count = 100;
    double radius = 4.0;
    double height = 1.0;
    double height_wobble = 0.0;
    int wobble_cycles = 3;
    Vec3 look_at = Vec3::Zero();
    double fov_degrees = 50.0;
};

struct SceneSpec {
    std::vector<Primitive> primitives;
    FloorSpec floor;
    OrbitSpec orbit;
    int width = 128;
    int height = 128;
    std::uint64_t seed = 0;
    Vec3 background = Vec3(0.8, 0.82, 0.85);
    Vec3 light_direction = Vec3(0.4, 1.0, 0.3); // towards the light
    double ambient = 0.35;
    int surf_channels = 3;

    void validate() const {
        if (primitives.empty()) throw ValidationError("scene: no primitives");
        bool any_transparent = false;
        for (std::size_t i = 0; i < primitives.size(); ++i) {
            const Primitive& p = primitives[i];
            const std::string tag = "scene: primitive " + std::to_string(i);
            if (!(p.size.minCoeff() > 0.0)) throw ValidationError(tag + " has non-positive size");
            if (p.material.transparent) {
                any_transparent = true;
                if (!(p.material.base_alpha > 0.0 && p.material.base_alpha < 1.0)) {
                    throw ValidationError(tag + " base_alpha must lie in (0, 1)");
                }
            }
            if (p.rotation.norm() == 0.0) throw ValidationError(tag + " has a zero rotation quaternion");
        }
        if (!any_transparent) throw ValidationError("scene: at least one transparent primitive is required");
        if (orbit.count < 2) throw ValidationError("scene: camera count must be at least 2");
        if (!(orbit.radius > 0.0)) throw ValidationError("scene: orbit radius must be positive");
        if (!(orbit.fov_degrees > 0.0 && orbit.fov_degrees < 180.0)) throw ValidationError("scene: bad field of view");
        if (width < 1 || height < 1) throw ValidationError("scene: image size must be positive");
        if (surf_channels < 1) throw ValidationError("scene: surf_channels must be >= 1");
        if (floor.enabled && !(floor.half_extent > 0.0 && floor.tile > 0.0)) {
            throw ValidationError("scene: floor extent and tile must be positive");
        }
    }
};

/// One glass sphere resting on a textured floor, seen from a wobbling orbit.
inline SceneSpec default_scene_spec() {
    SceneSpec spec;
    Primitive sphere;
    sphere.shape = ShapeKind::sphere;
    sphere.size = Vec3::Ones();
    sphere.material = Material::glass(spec.background, 0.12);
    spec.primitives.push_back(sphere);
    spec.orbit.radius = 4.5;
    spec.orbit.height = 2.4;
    spec.orbit.height_wobble = 2.1;
    return spec;
}

struct GroundTruthView {
    Camera camera;
    Image rgb;       // H x W x 3
    Image surf;      // H x W x C
    Image depth;     // H x W x 1, camera-z of the first hit, 0 where nothing is hit
    Mask object_mask; // pixels whose first hit is a transparent primitive
};

inline std::vector<Camera> orbit_cameras(const SceneSpec& spec) {
    const OrbitSpec& o = spec.orbit;
    const double f = 0.5 * spec.width / std::tan(0.5 * o.fov_degrees * std::numbers::pi / 180.0);
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(o.count));
    for (int i = 0; i < o.count; ++i) {
        const double phase = 2.0 * std::numbers::pi * i / o.count;
        const double h = o.height + o.height_wobble * std::sin(o.wobble_cycles * phase);
        const Vec3 eye = o.look_at + Vec3(o.radius * std::sin(phase), h, o.radius * std::cos(phase));
        cams.push_back(Camera::look_at(eye, o.look_at, Vec3::UnitY(), f, f, spec.width, spec.height));
    }
    return cams;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline double unit_from_bits(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal = Vec3::Zero(); // world space, unit, facing against the ray
    int primitive = -1;         // -1 for the floor
};

inline Mat3 object_rotation(const Primitive& p) { return quat_to_rotation(p.rotation.normalized()); }

/// Nearest intersection with t > t_min in object space, or nullopt.
inline std::optional<Hit> intersect(const Primitive& prim, const Vec3& origin, const Vec3& dir, double t_min) {
    const Mat3 r = object_rotation(prim);
    const Vec3 o = r.transpose() * (origin - prim.center);
    const Vec3 d = r.transpose() * dir;
    Hit hit;
    Vec3 n_obj = Vec3::Zero();

    switch (prim.shape) {
    case ShapeKind::sphere: {
        const double rad = prim.size.x();
        const double b = o.dot(d);
        const double c = o.squaredNorm() - rad * rad;
        const double disc = b * b - c;
        if (disc < 0.0) return std::nullopt;
        const double s = std::sqrt(disc);
        double t = -b - s;
        if (t <= t_min) t = -b + s;
        if (t <= t_min) return std::nullopt;
        hit.t = t;
        n_obj = (o + t * d) / rad;
        break;
    }
    case ShapeKind::box: {
        double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
        int axis0 = -1, axis1 = -1;
        for (int a = 0; a < 3; ++a) {
            if (d[a] == 0.0) {
                if (std::abs(o[a]) > prim.size[a]) return std::nullopt;
                continue;
            }
            double ta = (-prim.size[a] - o[a]) / d[a];
            double tb = (prim.size[a] - o[a]) / d[a];
            if (ta > tb) std::swap(ta, tb);
            if (ta > t0) { t0 = ta; axis0 = a; }
            if (tb < t1) { t1 = tb; axis1 = a; }
        }
        if (t0 > t1) return std::nullopt;
        int axis = axis0;
        double t = t0;
        if (t <= t_min) {
            t = t1;
            axis = axis1;
        }
        if (t <= t_min || axis < 0) return std::nullopt;
        hit.t = t;
        const Vec3 p = o + t * d;
        n_obj[axis] = p[axis] > 0.0 ? 1.0 : -1.0;
        break;
    }
    case ShapeKind::cylinder: {
        const double rad = prim.size.x(), half = prim.size.y();
        double best = std::numeric_limits<double>::infinity();
        // side
        const double a = d.x() * d.x() + d.z() * d.z();
        if (a > 0.0) {
            const double b = o.x() * d.x() + o.z() * d.z();
            const double c = o.x() * o.x() + o.z() * o.z() - rad * rad;
            const double disc = b * b - a * c;
            if (disc >= 0.0) {
                const double s = std::sqrt(disc);
                for (double t : {(-b - s) / a, (-b + s) / a}) {
                    if (t > t_min && t < best && std::abs(o.y() + t * d.y()) <= half) {
                        best = t;
                        const Vec3 p = o + t * d;
                        n_obj = Vec3(p.x(), 0.0, p.z()) / rad;
                        break;
                    }
                }
            }
        }
        // caps
        if (d.y() != 0.0) {
            for (double cap : {-half, half}) {
                const double t = (cap - o.y()) / d.y();
                const Vec3 p = o + t * d;
                if (t > t_min && t < best && p.x() * p.x() + p.z() * p.z() <= rad * rad) {
                    best = t;
                    n_obj = Vec3(0.0, cap > 0 ? 1.0 : -1.0, 0.0);
                }
            }
        }
        if (!std::isfinite(best)) return std::nullopt;
        hit.t = best;
        break;
    }
    }
    hit.normal = (r * n_obj).normalized();
    if (hit.normal.dot(dir) > 0.0) hit.normal = -hit.normal;
    return hit;
}

inline std::optional<Hit> intersect_floor(const FloorSpec& floor, const Vec3& origin, const Vec3& dir, double t_min) {
    if (!floor.enabled || dir.y() == 0.0) return std::nullopt;
    const double t = (floor.height - origin.y()) / dir.y();
    if (!(t > t_min)) return std::nullopt;
    const Vec3 p = origin + t * dir;
    if (std::abs(p.x()) > floor.half_extent || std::abs(p.z()) > floor.half_extent) return std::nullopt;
    Hit h;
    h.t = t;
    h.normal = dir.y() < 0.0 ? Vec3::UnitY() : Vec3(-Vec3::UnitY());
    h.primitive = -1;
    return h;
}

/// Signed distance of an object-frame point to the primitive surface.
inline double surface_distance(const Primitive& prim, const Vec3& q) {
    switch (prim.shape) {
    case ShapeKind::sphere: return q.norm() - prim.size.x();
    case ShapeKind::box: {
        const Vec3 e = q.cwiseAbs() - prim.size;
        return e.cwiseMax(0.0).norm() + std::min(e.maxCoeff(), 0.0);
    }
    case ShapeKind::cylinder: {
        const double dr = std::hypot(q.x(), q.z()) - prim.size.x();
        const double dy = std::abs(q.y()) - prim.size.y();
        return std::hypot(std::max(dr, 0.0), std::max(dy, 0.0)) + std::min(std::max(dr, dy), 0.0);
    }
    }
    return 0.0;
}

} // namespace detail

/// Fixed per-category embedding parameters: value = 0.5 + 0.5 sin(pi (B p + phi)).
struct EmbeddingBasis {
    Eigen::MatrixXd b;   // C x 3
    Eigen::VectorXd phi; // C
};

inline EmbeddingBasis category_basis(ShapeKind shape, int channels) {
    EmbeddingBasis basis;
    basis.b.resize(channels, 3);
    basis.phi.resize(channels);
    std::uint64_t state = 0x7472616e73ULL + 977ULL * static_cast<std::uint64_t>(shape);
    auto next = [&] {
        state = detail::splitmix64(state);
        return detail::unit_from_bits(state);
    };
    for (int c = 0; c < channels; ++c) {
        for (int k = 0; k < 3; ++k) basis.b(c, k) = 1.2 * next() - 0.6;
        basis.phi[c] = next();
    }
    return basis;
}

inline Eigen::VectorXd embed_normalized(const EmbeddingBasis& basis, const Vec3& p) {
    const Eigen::VectorXd arg = basis.b * p + basis.phi;
    return (0.5 + 0.5 * (std::numbers::pi * arg).array().sin()).matrix();
}

/// Surrogate surface embedding of a world point on `prim`'s surface.
inline Eigen::VectorXd surrogate_embed(const Vec3& hit_point, const Primitive& prim, int channels = 3,
                                       double tolerance = 1e-6) {
    const Vec3 q = detail::object_rotation(prim).transpose() * (hit_point - prim.center);
    const double dist = detail::surface_distance(prim, q);
    if (!(std::abs(dist) <= tolerance * std::max(1.0, prim.extents().maxCoeff()))) {
        throw ValidationError("surrogate_embed: point is " + std::to_string(dist) + " off the " +
                              shape_name(prim.shape) + " surface");
    }
    const Vec3 p = q.cwiseQuotient(prim.extents());
    return embed_normalized(category_basis(prim.shape, channels), p);
}

/// a(theta) = base + (1 - base)(1 - |cos theta|)^3.
inline double view_alpha(double base_alpha, double cos_theta) {
    const double g = 1.0 - std::abs(cos_theta);
    return base_alpha + (1.0 - base_alpha) * g * g * g;
}

namespace detail {

inline Vec3 floor_color(const SceneSpec& spec, const Vec3& p) {
    const FloorSpec& f = spec.floor;
    const auto ix = static_cast<std::int64_t>(std::floor(p.x() / f.tile));
    const auto iz = static_cast<std::int64_t>(std::floor(p.z() / f.tile));
    const std::uint64_t h = splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9e37ULL +
                                                            static_cast<std::uint64_t>(iz) * 0x85ebca6bULL));
    const Vec3 base = ((ix + iz) & 1) ? f.color_a : f.color_b;
    return base * (0.7 + 0.3 * unit_from_bits(h));
}

inline double lambert(const SceneSpec& spec, const Vec3& normal) {
    return spec.ambient + (1.0 - spec.ambient) * std::max(0.0, normal.dot(spec.light_direction.normalized()));
}

} // namespace detail

/// Ray-casts one view: first-hit depth, composited RGB, surrogate embedding.
inline GroundTruthView render_ground_truth(const SceneSpec& spec, const Camera& cam) {
    GroundTruthView v;
    v.camera = cam;
    v.rgb = Image(cam.width, cam.height, 3);
    v.surf = Image(cam.width, cam.height, spec.surf_channels);
    v.depth = Image(cam.width, cam.height, 1);
    v.object_mask = Mask(cam.width, cam.height);
    const Vec3 forward = cam.rotation.row(2).transpose();
    constexpr double eps = 1e-9;

    std::vector<detail::Hit> hits;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 dir = cam.ray_direction(x + 0.5, y + 0.5);
            hits.clear();
            for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
                if (auto h = detail::intersect(spec.primitives[i], cam.center, dir, eps)) {
                    h->primitive = static_cast<int>(i);
                    hits.push_back(*h);
                }
            }
            if (auto h = detail::intersect_floor(spec.floor, cam.center, dir, eps)) hits.push_back(*h);
            std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

            // Each transparent primitive contributes one layer at its entry point.
            Vec3 color = Vec3::Zero();
            double trans = 1.0;
            bool opaque_hit = false;
            for (const auto& h : hits) {
                if (h.primitive < 0) {
                    const Vec3 p = cam.center + h.t * dir;
                    color += trans * detail::floor_color(spec, p) * detail::lambert(spec, h.normal);
                    opaque_hit = true;
                    break;
                }
                const Material& m = spec.primitives[static_cast<std::size_t>(h.primitive)].material;
                if (!m.transparent) {
                    color += trans * m.color * detail::lambert(spec, h.normal);
                    opaque_hit = true;
                    break;
                }
                const double a = view_alpha(m.base_alpha, h.normal.dot(dir));
                color += trans * a * m.color;
                trans *= 1.0 - a;
            }
            if (!opaque_hit) color += trans * spec.background;
            for (int c = 0; c < 3; ++c) v.rgb.at(x, y, c) = color[c];

            if (hits.empty()) continue;
            const auto& first = hits.front();
            v.depth.at(x, y) = first.t * dir.dot(forward);
            if (first.primitive < 0) continue;
            const Primitive& prim = spec.primitives[static_cast<std::size_t>(first.primitive)];
            v.object_mask.set(x, y, prim.material.transparent);
            const Eigen::VectorXd e = surrogate_embed(cam.center + first.t * dir, prim, spec.surf_channels, 1e-6);
            for (int c = 0; c < spec.surf_channels; ++c) v.surf.at(x, y, c) = e[c];
        }
    }
    return v;
}

inline std::vector<GroundTruthView> generate_views(const SceneSpec& spec) {
    spec.validate();
    const std::vector<Camera> cams = orbit_cameras(spec);
    std::vector<GroundTruthView> views(cams.size());
    parallel_for(cams.size(), [&](std::size_t i) { views[i] = render_ground_truth(spec, cams[i]); });
    return views;
}

/// Held-out views: every `stride`-th view starting at stride - 1.
inline std::vector<int> test_view_indices(int count, int stride = 4) {
    std::vector<int> out;
    for (int i = stride - 1; i < count; i += stride) out.push_back(i);
    return out;
}

inline std::vector<int> train_view_indices(int count, int stride = 4) {
    std::vector<int> out;
    for (int i = 0; i < count; ++i) {
        if (i % stride != stride - 1) out.push_back(i);
    }
    return out;
}

struct PointSample {
    std::vector<Vec3> points;
    std::vector<Vec3> colors;
};

/// Back-projects every `stride`-th pixel (in x and y) with a depth hit,
/// skipping pixels set in `exclude` when it is non-empty.
inline PointSample backproject_depth(const Camera& cam, const Image& depth, const Image& rgb, int stride,
                                     PointSample out = {}, const Mask& exclude = {}) {
    for (int y = stride / 2; y < depth.height; y += stride) {
        for (int x = stride / 2; x < depth.width; x += stride) {
            const double z = depth.at(x, y);
            if (!(z > 0.0)) continue;
            if (!exclude.data.empty() && exclude.at(x, y)) continue;
            const Vec3 p_cam(((x + 0.5) - cam.cx) / cam.fx * z, ((y + 0.5) - cam.cy) / cam.fy * z, z);
            out.points.push_back(cam.rotation.transpose() * p_cam + cam.center);
            out.colors.push_back(Vec3(rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2)));
        }
    }
    return out;
}

/// Uniform points in the axis-aligned box [lo, hi] with uniform random colors.
inline PointSample random_points(const Vec3& lo, const Vec3& hi, std::size_t n, std::uint64_t seed,
                                 PointSample out = {}) {
    std::uint64_t state = seed ^ 0x5eedULL;
    auto next = [&] {
        state = detail::splitmix64(state);
        return detail::unit_from_bits(state);
    };
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 p;
        for (int k = 0; k < 3; ++k) p[k] = lo[k] + (hi[k] - lo[k]) * next();
        out.points.push_back(p);
        out.colors.push_back(Vec3(next(), next(), next()));
    }
    return out;
}

} // namespace transplat
