#pragma once

#include <transplat/errors.hpp>
#include <transplat/geometry.hpp>
#include <transplat/sh.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace transplat {

/// Optimizable parameter groups of a kernel. Every group is stored as one flat
/// array with a fixed per-kernel stride.
enum class ParamGroup : int { position = 0, log_scale, rotation, opacity, sh_rgb, sh_surf };

inline constexpr std::size_t kParamGroupCount = 6;
inline constexpr std::array<ParamGroup, kParamGroupCount> kAllParamGroups = {
    ParamGroup::position, ParamGroup::log_scale, ParamGroup::rotation,
    ParamGroup::opacity,  ParamGroup::sh_rgb,    ParamGroup::sh_surf};

constexpr std::string_view param_group_name(ParamGroup g) {
    switch (g) {
    case ParamGroup::position: return "position";
    case ParamGroup::log_scale: return "log_scale";
    case ParamGroup::rotation: return "rotation";
    case ParamGroup::opacity: return "opacity";
    case ParamGroup::sh_rgb: return "sh_rgb";
    case ParamGroup::sh_surf: return "sh_surf";
    }
    return "?";
}

inline constexpr double kOpacityEpsilon = 1e-7;

/// Sigmoid, clamped to [1e-7, 1 - 1e-7].
inline double activate_opacity(double logit) {
    const double s = 1.0 / (1.0 + std::exp(-logit));
    return std::clamp(s, kOpacityEpsilon, 1.0 - kOpacityEpsilon);
}

inline double opacity_logit(double opacity) { return std::log(opacity / (1.0 - opacity)); }

/// Layout shared by GaussianCloud and GradientSet: SH degrees, embedding
/// channel count, and the flat per-group storage.
struct ParameterLayout {
    int sh_degree_rgb = 3;
    int sh_degree_surf = 0;
    int surf_channels = 3;

    std::size_t stride(ParamGroup g) const {
        switch (g) {
        case ParamGroup::position: return 3;
        case ParamGroup::log_scale: return 3;
        case ParamGroup::rotation: return 4;
        case ParamGroup::opacity: return 1;
        case ParamGroup::sh_rgb: return static_cast<std::size_t>(sh_coeff_count(sh_degree_rgb) * 3);
        case ParamGroup::sh_surf: return static_cast<std::size_t>(sh_coeff_count(sh_degree_surf) * surf_channels);
        }
        return 0;
    }

    friend bool operator==(const ParameterLayout&, const ParameterLayout&) = default;
};

class ParameterArrays {
public:
    ParameterArrays() = default;
    ParameterArrays(const ParameterLayout& layout, std::size_t count) : layout_(layout), count_(count) {
        for (ParamGroup g : kAllParamGroups) data(g).assign(count * layout_.stride(g), 0.0);
    }

    const ParameterLayout& layout() const { return layout_; }
    std::size_t size() const { return count_; }
    bool empty() const { return count_ == 0; }
    std::size_t stride(ParamGroup g) const { return layout_.stride(g); }

    std::vector<double>& data(ParamGroup g) { return groups_[static_cast<std::size_t>(g)]; }
    const std::vector<double>& data(ParamGroup g) const { return groups_[static_cast<std::size_t>(g)]; }

    std::span<double> row(ParamGroup g, std::size_t i) {
        const std::size_t s = stride(g);
        return std::span<double>(data(g)).subspan(i * s, s);
    }
    std::span<const double> row(ParamGroup g, std::size_t i) const {
        const std::size_t s = stride(g);
        return std::span<const double>(data(g)).subspan(i * s, s);
    }

    /// Appends a copy of kernel `i` of `src` (same layout required).
    void append_from(const ParameterArrays& src, std::size_t i) {
        for (ParamGroup g : kAllParamGroups) {
            const auto r = src.row(g, i);
            const std::vector<double> copy(r.begin(), r.end()); // src may be *this
            data(g).insert(data(g).end(), copy.begin(), copy.end());
        }
        ++count_;
    }

    void resize(std::size_t count) {
        for (ParamGroup g : kAllParamGroups) data(g).resize(count * stride(g), 0.0);
        count_ = count;
    }

    /// Keeps kernels whose `keep` flag is set, preserving order.
    void compact(const std::vector<bool>& keep) {
        for (ParamGroup g : kAllParamGroups) {
            const std::size_t s = stride(g);
            auto& d = data(g);
            std::size_t out = 0;
            for (std::size_t i = 0; i < count_; ++i) {
                if (!keep[i]) continue;
                if (out != i) std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(i * s), s,
                                          d.begin() + static_cast<std::ptrdiff_t>(out * s));
                ++out;
            }
            d.resize(out * s);
        }
        count_ = static_cast<std::size_t>(std::count(keep.begin(), keep.begin() + static_cast<std::ptrdiff_t>(count_), true));
    }

    void set_zero() {
        for (ParamGroup g : kAllParamGroups) std::fill(data(g).begin(), data(g).end(), 0.0);
    }

    bool all_finite() const {
        for (ParamGroup g : kAllParamGroups) {
            for (double v : data(g)) {
                if (!std::isfinite(v)) return false;
            }
        }
        return true;
    }

protected:
    ParameterLayout layout_;
    std::size_t count_ = 0;
    std::array<std::vector<double>, kParamGroupCount> groups_;
};

/// The optimizable scene: one geometry (position, scale, rotation, opacity)
/// per kernel shared by the RGB and surface-embedding appearance channels.
class GaussianCloud : public ParameterArrays {
public:
    GaussianCloud() = default;
    GaussianCloud(const ParameterLayout& layout, std::size_t count) : ParameterArrays(layout, count) {
        for (std::size_t i = 0; i < count; ++i) set_rotation(i, Quaternion::identity());
    }

    Vec3 position(std::size_t i) const { return vec3(ParamGroup::position, i); }
    Vec3 log_scale(std::size_t i) const { return vec3(ParamGroup::log_scale, i); }
    Quaternion rotation(std::size_t i) const {
        const auto r = row(ParamGroup::rotation, i);
        return {r[0], r[1], r[2], r[3]};
    }
    double opacity_logit(std::size_t i) const { return data(ParamGroup::opacity)[i]; }
    double opacity(std::size_t i) const { return activate_opacity(opacity_logit(i)); }
    std::span<const double> sh_rgb(std::size_t i) const { return row(ParamGroup::sh_rgb, i); }
    std::span<const double> sh_surf(std::size_t i) const { return row(ParamGroup::sh_surf, i); }
    std::span<double> sh_rgb(std::size_t i) { return row(ParamGroup::sh_rgb, i); }
    std::span<double> sh_surf(std::size_t i) { return row(ParamGroup::sh_surf, i); }

    Mat3 covariance(std::size_t i) const { return build_covariance(log_scale(i), rotation(i)); }

    void set_position(std::size_t i, const Vec3& p) { set_vec3(ParamGroup::position, i, p); }
    void set_log_scale(std::size_t i, const Vec3& s) { set_vec3(ParamGroup::log_scale, i, s); }
    void set_rotation(std::size_t i, const Quaternion& q) {
        auto r = row(ParamGroup::rotation, i);
        r[0] = q.w;
        r[1] = q.x;
        r[2] = q.y;
        r[3] = q.z;
    }
    void set_opacity_logit(std::size_t i, double v) { data(ParamGroup::opacity)[i] = v; }

    int sh_degree_rgb() const { return layout_.sh_degree_rgb; }
    int sh_degree_surf() const { return layout_.sh_degree_surf; }
    int surf_channels() const { return layout_.surf_channels; }

    /// Checks every structural and numeric invariant; throws ValidationError.
    void validate() const {
        if (layout_.sh_degree_rgb < 0 || layout_.sh_degree_rgb > kMaxShDegree || layout_.sh_degree_surf < 0 ||
            layout_.sh_degree_surf > kMaxShDegree) {
            throw ValidationError("SH degree out of range [0, 3]");
        }
        if (layout_.surf_channels < 1) throw ValidationError("surface-embedding channel count must be >= 1");
        for (ParamGroup g : kAllParamGroups) {
            if (data(g).size() != size() * stride(g)) {
                throw ValidationError("parameter group '" + std::string(param_group_name(g)) +
                                      "' length does not match kernel count");
            }
        }
        if (!all_finite()) throw ValidationError("cloud contains non-finite parameters");
        for (std::size_t i = 0; i < size(); ++i) {
            const double o = opacity(i);
            if (!(o > 0.0 && o < 1.0)) throw ValidationError("activated opacity outside (0, 1)");
            if (!(rotation(i).norm() > 0.0)) throw ValidationError("zero-norm rotation quaternion");
        }
    }

private:
    Vec3 vec3(ParamGroup g, std::size_t i) const {
        const auto r = row(g, i);
        return {r[0], r[1], r[2]};
    }
    void set_vec3(ParamGroup g, std::size_t i, const Vec3& v) {
        auto r = row(g, i);
        r[0] = v.x();
        r[1] = v.y();
        r[2] = v.z();
    }
};

/// Loss gradient for every optimizable parameter, shape-congruent with its cloud.
class GradientSet : public ParameterArrays {
public:
    GradientSet() = default;
    explicit GradientSet(const GaussianCloud& cloud) : ParameterArrays(cloud.layout(), cloud.size()) {}

    bool congruent_with(const GaussianCloud& cloud) const {
        return layout() == cloud.layout() && size() == cloud.size();
    }

    GradientSet& operator+=(const GradientSet& other) {
        for (ParamGroup g : kAllParamGroups) {
            auto& d = data(g);
            const auto& o = other.data(g);
            for (std::size_t k = 0; k < d.size(); ++k) d[k] += o[k];
        }
        return *this;
    }
};

struct InitConfig {
    int sh_degree_rgb = 3;
    int sh_degree_surf = 0;
    int surf_channels = 3;
    double initial_opacity = 0.1;
    int neighbors = 3;
};

/// One isotropic kernel per point: scale = mean distance to the nearest
/// `neighbors` points (fewer when not available), identity rotation, opacity
/// 0.1, RGB DC term reproducing the input color, zero embedding.
inline GaussianCloud init_from_points(std::span<const Vec3> points, std::span<const Vec3> colors,
                                      const InitConfig& config = {}) {
    if (points.empty()) throw ValidationError("init_from_points: empty point set");
    if (colors.size() != points.size()) throw ValidationError("init_from_points: colors/points length mismatch");
    const ParameterLayout layout{config.sh_degree_rgb, config.sh_degree_surf, config.surf_channels};
    GaussianCloud cloud(layout, points.size());
    const std::size_t n = points.size();

    // Exhaustive kNN with a bounded max-heap.
    std::vector<double> best;
    for (std::size_t i = 0; i < n; ++i) {
        best.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d2 = (points[i] - points[j]).squaredNorm();
            if (static_cast<int>(best.size()) < config.neighbors) {
                best.push_back(d2);
                std::push_heap(best.begin(), best.end());
            } else if (d2 < best.front()) {
                std::pop_heap(best.begin(), best.end());
                best.back() = d2;
                std::push_heap(best.begin(), best.end());
            }
        }
        double mean_dist = 1.0; // lone point
        if (!best.empty()) {
            double acc = 0.0;
            for (double d2 : best) acc += std::sqrt(d2);
            mean_dist = acc / static_cast<double>(best.size());
        }
        mean_dist = std::max(mean_dist, 1e-7);
        cloud.set_position(i, points[i]);
        cloud.set_log_scale(i, Vec3::Constant(std::log(mean_dist)));
        cloud.set_rotation(i, Quaternion::identity());
        cloud.set_opacity_logit(i, opacity_logit(config.initial_opacity));
        auto sh = cloud.sh_rgb(i);
        for (int c = 0; c < 3; ++c) sh[static_cast<std::size_t>(c)] = sh_dc_from_value(colors[i][c]);
    }
    return cloud;
}

} // namespace transplat
