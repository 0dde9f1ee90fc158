#pragma once

#include <transplat/cloud.hpp>
#include <transplat/errors.hpp>
#include <transplat/geometry.hpp>
#include <transplat/image.hpp>
#include <transplat/parallel.hpp>
#include <transplat/sh.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <vector>

namespace transplat {

inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;
inline constexpr double kValidAlpha = 1e-6;
inline constexpr double kMaxConditionNumber = 1e12;
inline constexpr double kFootprintSigmas = 3.0;

struct RenderSettings {
    Vec3 background = Vec3::Zero();
    /// Highest SH band evaluated for the RGB channel (progressive unlock).
    int active_sh_degree = kMaxShDegree;
    double near_plane = kDefaultNearPlane;
    /// Fixed-order gradient reduction. When false, per-kernel gradients are
    /// accumulated atomically and the summation order is not reproducible.
    bool deterministic = true;
    int tile_size = 16;
};

/// One projected, non-culled kernel.
struct Splat {
    std::size_t kernel = 0;
    Vec2 mean2d;
    Mat2 cov2d;
    double conic_a = 0.0; // inverse covariance [[a, b], [b, c]]
    double conic_b = 0.0;
    double conic_c = 0.0;
    double depth = 0.0;
    double opacity = 0.0;
    std::array<double, 3> rgb{};
    std::array<unsigned char, 3> rgb_unclamped{};
    // Touched pixel range, inclusive; empty when x0 > x1 or y0 > y1.
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

/// Projected kernels of one view in front-to-back order (ascending depth,
/// lower kernel index first on ties).
struct SortedSplatList {
    std::vector<Splat> splats;
    int surf_channels = 0;
    std::vector<double> surf;            // splats.size() x surf_channels
    std::vector<unsigned char> surf_ok;  // zero clamp inactive
    std::size_t culled = 0;
    std::size_t degenerate = 0;

    std::span<const double> surf_of(std::size_t s) const {
        return std::span<const double>(surf).subspan(s * static_cast<std::size_t>(surf_channels),
                                                     static_cast<std::size_t>(surf_channels));
    }
};

namespace detail {

inline bool project_splat(const GaussianCloud& cloud, std::size_t i, const Camera& cam, const RenderSettings& settings,
                          Splat& out, std::span<double> surf, std::span<unsigned char> surf_ok, bool& degenerate) {
    degenerate = false;
    const Vec3 mean = cloud.position(i);
    const auto proj = project_gaussian(mean, cloud.covariance(i), cam, settings.near_plane);
    if (!proj) return false;

    const Mat2& cov = proj->cov2d;
    const double det = cov.determinant();
    Eigen::SelfAdjointEigenSolver<Mat2> eig(cov, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues()[0];
    const double lmax = eig.eigenvalues()[1];
    if (!(det > 0.0) || !(lmin > 0.0) || lmax / lmin > kMaxConditionNumber) {
        degenerate = true;
        return false;
    }

    out.kernel = i;
    out.mean2d = proj->mean2d;
    out.cov2d = cov;
    out.conic_a = cov(1, 1) / det;
    out.conic_b = -cov(0, 1) / det;
    out.conic_c = cov(0, 0) / det;
    out.depth = proj->depth;
    out.opacity = cloud.opacity(i);

    const double radius = kFootprintSigmas * std::sqrt(lmax);
    out.x0 = std::max(0, static_cast<int>(std::ceil(out.mean2d.x() - radius - 0.5)));
    out.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(out.mean2d.x() + radius - 0.5)));
    out.y0 = std::max(0, static_cast<int>(std::ceil(out.mean2d.y() - radius - 0.5)));
    out.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(out.mean2d.y() + radius - 0.5)));

    const Vec3 dir = (mean - cam.center).normalized();
    eval_sh(cloud.sh_degree_rgb(), settings.active_sh_degree, 3, cloud.sh_rgb(i), dir, out.rgb, out.rgb_unclamped);
    eval_sh(cloud.sh_degree_surf(), cloud.sh_degree_surf(), cloud.surf_channels(), cloud.sh_surf(i), dir, surf,
            surf_ok);
    return true;
}

} // namespace detail

/// Projects every kernel, drops culled and degenerate ones, and orders the
/// rest front to back.
inline SortedSplatList sort_splats(const GaussianCloud& cloud, const Camera& cam, const RenderSettings& settings = {}) {
    const std::size_t n = cloud.size();
    const int c_surf = cloud.surf_channels();
    const std::size_t cs = static_cast<std::size_t>(c_surf);

    std::vector<Splat> all(n);
    std::vector<double> surf_all(n * cs, 0.0);
    std::vector<unsigned char> ok_all(n * cs, 0);
    std::vector<unsigned char> status(n, 0); // 1 = kept, 2 = degenerate

    parallel_for((n + 255) / 256, [&](std::size_t block) {
        const std::size_t end = std::min(n, (block + 1) * 256);
        for (std::size_t i = block * 256; i < end; ++i) {
            bool degenerate = false;
            const bool kept = detail::project_splat(cloud, i, cam, settings, all[i],
                                                    std::span<double>(surf_all).subspan(i * cs, cs),
                                                    std::span<unsigned char>(ok_all).subspan(i * cs, cs), degenerate);
            status[i] = kept ? 1 : (degenerate ? 2 : 0);
        }
    });

    std::vector<std::size_t> order;
    order.reserve(n);
    SortedSplatList list;
    list.surf_channels = c_surf;
    for (std::size_t i = 0; i < n; ++i) {
        if (status[i] == 1) order.push_back(i);
        else if (status[i] == 2) ++list.degenerate;
        else ++list.culled;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return all[a].depth < all[b].depth; });

    list.splats.reserve(order.size());
    list.surf.reserve(order.size() * cs);
    list.surf_ok.reserve(order.size() * cs);
    for (std::size_t i : order) {
        list.splats.push_back(all[i]);
        list.surf.insert(list.surf.end(), surf_all.begin() + static_cast<std::ptrdiff_t>(i * cs),
                         surf_all.begin() + static_cast<std::ptrdiff_t>((i + 1) * cs));
        list.surf_ok.insert(list.surf_ok.end(), ok_all.begin() + static_cast<std::ptrdiff_t>(i * cs),
                            ok_all.begin() + static_cast<std::ptrdiff_t>((i + 1) * cs));
    }
    return list;
}

struct RenderOutput {
    Image rgb;     // H x W x 3
    Image surf;    // H x W x C_surf
    Image depth;   // H x W x 1, 0 where invalid
    Image alpha;   // H x W x 1, accumulated sum of w_j
    Mask valid;    // alpha > 1e-6
    std::size_t culled = 0;
    std::size_t degenerate = 0;
};

/// Sorted splats plus per-tile splat lists; reused by the backward pass.
struct ForwardState {
    SortedSplatList list;
    int tiles_x = 0;
    int tiles_y = 0;
    int tile_size = 16;
    std::vector<std::vector<std::uint32_t>> tile_splats;
};

namespace detail {

struct TileSplat {
    double mx, my, a, b, c, opacity;
    int x0, x1, y0, y1;
    std::uint32_t index; // into SortedSplatList::splats
};

inline std::vector<TileSplat> gather_tile(const ForwardState& state, std::size_t tile) {
    const auto& ids = state.tile_splats[tile];
    std::vector<TileSplat> out;
    out.reserve(ids.size());
    for (std::uint32_t s : ids) {
        const Splat& sp = state.list.splats[s];
        out.push_back({sp.mean2d.x(), sp.mean2d.y(), sp.conic_a, sp.conic_b, sp.conic_c, sp.opacity, sp.x0, sp.x1,
                       sp.y0, sp.y1, s});
    }
    return out;
}

/// Alpha of a tile splat at a pixel center, or 0 when it does not contribute.
/// Writes the Gaussian falloff to `falloff`.
inline double splat_alpha(const TileSplat& t, int px, int py, double& dx, double& dy, double& falloff) {
    if (px < t.x0 || px > t.x1 || py < t.y0 || py > t.y1) return 0.0;
    dx = px + 0.5 - t.mx;
    dy = py + 0.5 - t.my;
    const double power = -0.5 * (t.a * dx * dx + t.c * dy * dy) - t.b * dx * dy;
    if (power > 0.0) return 0.0;
    falloff = std::exp(power);
    const double alpha = std::min(kMaxAlpha, t.opacity * falloff);
    return alpha < kMinAlpha ? 0.0 : alpha;
}

} // namespace detail

inline ForwardState prepare_forward(const GaussianCloud& cloud, const Camera& cam, const RenderSettings& settings) {
    ForwardState state;
    state.list = sort_splats(cloud, cam, settings);
    state.tile_size = std::max(1, settings.tile_size);
    state.tiles_x = (cam.width + state.tile_size - 1) / state.tile_size;
    state.tiles_y = (cam.height + state.tile_size - 1) / state.tile_size;
    state.tile_splats.assign(static_cast<std::size_t>(state.tiles_x) * state.tiles_y, {});
    for (std::size_t s = 0; s < state.list.splats.size(); ++s) {
        const Splat& sp = state.list.splats[s];
        if (sp.x0 > sp.x1 || sp.y0 > sp.y1) continue;
        for (int ty = sp.y0 / state.tile_size; ty <= sp.y1 / state.tile_size; ++ty) {
            for (int tx = sp.x0 / state.tile_size; tx <= sp.x1 / state.tile_size; ++tx) {
                state.tile_splats[static_cast<std::size_t>(ty) * state.tiles_x + tx].push_back(
                    static_cast<std::uint32_t>(s));
            }
        }
    }
    return state;
}

/// Front-to-back alpha compositing of RGB, surface embedding, normalized
/// depth and accumulated alpha from an already prepared splat list.
inline RenderOutput composite(const ForwardState& state, const Camera& cam, const RenderSettings& settings) {
    const int w = cam.width;
    const int h = cam.height;
    const int cs = state.list.surf_channels;
    RenderOutput out;
    out.rgb = Image(w, h, 3);
    out.surf = Image(w, h, cs);
    out.depth = Image(w, h, 1);
    out.alpha = Image(w, h, 1);
    out.valid = Mask(w, h);
    out.culled = state.list.culled;
    out.degenerate = state.list.degenerate;

    parallel_for(state.tile_splats.size(), [&](std::size_t tile) {
        const auto splats = detail::gather_tile(state, tile);
        const int tx = static_cast<int>(tile % static_cast<std::size_t>(state.tiles_x));
        const int ty = static_cast<int>(tile / static_cast<std::size_t>(state.tiles_x));
        const int px_end = std::min(w, (tx + 1) * state.tile_size);
        const int py_end = std::min(h, (ty + 1) * state.tile_size);
        std::vector<double> surf_acc(static_cast<std::size_t>(cs));
        for (int py = ty * state.tile_size; py < py_end; ++py) {
            for (int px = tx * state.tile_size; px < px_end; ++px) {
                double transmittance = 1.0;
                double weight_sum = 0.0;
                double depth_sum = 0.0;
                double rgb[3] = {0.0, 0.0, 0.0};
                std::fill(surf_acc.begin(), surf_acc.end(), 0.0);
                for (const auto& t : splats) {
                    double dx, dy, g;
                    const double alpha = detail::splat_alpha(t, px, py, dx, dy, g);
                    if (alpha == 0.0) continue;
                    const Splat& sp = state.list.splats[t.index];
                    const double wgt = alpha * transmittance;
                    for (int c = 0; c < 3; ++c) rgb[c] += wgt * sp.rgb[static_cast<std::size_t>(c)];
                    const auto s = state.list.surf_of(t.index);
                    for (int c = 0; c < cs; ++c) surf_acc[static_cast<std::size_t>(c)] += wgt * s[static_cast<std::size_t>(c)];
                    depth_sum += wgt * sp.depth;
                    weight_sum += wgt;
                    transmittance *= 1.0 - alpha;
                    if (transmittance < kTransmittanceCutoff) break;
                }
                for (int c = 0; c < 3; ++c) out.rgb.at(px, py, c) = rgb[c] + transmittance * settings.background[c];
                for (int c = 0; c < cs; ++c) out.surf.at(px, py, c) = surf_acc[static_cast<std::size_t>(c)];
                out.alpha.at(px, py) = weight_sum;
                if (weight_sum > kValidAlpha) {
                    out.depth.at(px, py) = depth_sum / weight_sum;
                    out.valid.set(px, py, true);
                }
            }
        }
    });
    return out;
}

inline RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const RenderSettings& settings = {}) {
    return composite(prepare_forward(cloud, cam, settings), cam, settings);
}

inline RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const Vec3& background) {
    RenderSettings settings;
    settings.background = background;
    return render(cloud, cam, settings);
}

/// Loss gradients w.r.t. the rendered RGB and surface images. An empty image
/// (zero channels) stands for an all-zero upstream.
struct RenderUpstream {
    Image d_rgb;
    Image d_surf;
};

struct BackwardResult {
    GradientSet grads;
    /// |dL/d mean2d| in pixels per kernel (densification statistic).
    std::vector<double> mean2d_grad_norm;
    /// Kernel touched at least one pixel with nonzero alpha in this view.
    std::vector<unsigned char> visible;
};

namespace detail {

// Screen-space gradient record per splat:
// [d_mean_x, d_mean_y, d_conic_a, d_conic_b, d_conic_c, d_opacity, d_rgb(3), d_surf(C), touched]
inline std::size_t screen_grad_stride(int surf_channels) { return 10 + static_cast<std::size_t>(surf_channels); }

struct Contribution {
    std::uint32_t local; // index into the tile's splat array
    double alpha;
    double falloff;
    double transmittance; // before this splat
    double dx, dy;
    bool clamped;
};

} // namespace detail

/// Exact analytic gradients of the rendered RGB and surface images. Shared
/// geometry (position, scale, rotation, opacity) receives contributions from
/// both channels; sh_rgb only from the RGB upstream, sh_surf only from the
/// surface upstream. Depth is a readout and is not differentiated.
inline BackwardResult backward(const GaussianCloud& cloud, const Camera& cam, const RenderSettings& settings,
                               const ForwardState& state, const RenderUpstream& upstream) {
    const int w = cam.width;
    const int h = cam.height;
    const int cs = state.list.surf_channels;
    const bool has_rgb = upstream.d_rgb.channels > 0;
    const bool has_surf = upstream.d_surf.channels > 0;
    if (has_rgb && (upstream.d_rgb.width != w || upstream.d_rgb.height != h || upstream.d_rgb.channels != 3)) {
        throw ValidationError("render_backward: rgb upstream shape mismatch");
    }
    if (has_surf && (upstream.d_surf.width != w || upstream.d_surf.height != h || upstream.d_surf.channels != cs)) {
        throw ValidationError("render_backward: surf upstream shape mismatch");
    }

    const std::size_t ns = state.list.splats.size();
    const std::size_t stride = detail::screen_grad_stride(cs);
    std::vector<double> screen(ns * stride, 0.0);
    const std::size_t n_tiles = state.tile_splats.size();
    std::vector<std::vector<double>> partials(settings.deterministic ? n_tiles : 0);

    parallel_for(n_tiles, [&](std::size_t tile) {
        const auto splats = detail::gather_tile(state, tile);
        if (splats.empty()) return;
        const int tx = static_cast<int>(tile % static_cast<std::size_t>(state.tiles_x));
        const int ty = static_cast<int>(tile / static_cast<std::size_t>(state.tiles_x));
        const int px_end = std::min(w, (tx + 1) * state.tile_size);
        const int py_end = std::min(h, (ty + 1) * state.tile_size);

        std::vector<double> local(splats.size() * stride, 0.0);
        std::vector<detail::Contribution> contrib;
        std::vector<double> suffix_surf(static_cast<std::size_t>(cs));
        std::vector<double> up_surf(static_cast<std::size_t>(cs), 0.0);

        for (int py = ty * state.tile_size; py < py_end; ++py) {
            for (int px = tx * state.tile_size; px < px_end; ++px) {
                double up_rgb[3] = {0.0, 0.0, 0.0};
                bool any = false;
                if (has_rgb) {
                    for (int c = 0; c < 3; ++c) {
                        up_rgb[c] = upstream.d_rgb.at(px, py, c);
                        any = any || up_rgb[c] != 0.0;
                    }
                }
                if (has_surf) {
                    for (int c = 0; c < cs; ++c) {
                        up_surf[static_cast<std::size_t>(c)] = upstream.d_surf.at(px, py, c);
                        any = any || up_surf[static_cast<std::size_t>(c)] != 0.0;
                    }
                }
                if (!any) continue;

                contrib.clear();
                double transmittance = 1.0;
                for (std::uint32_t k = 0; k < splats.size(); ++k) {
                    double dx, dy, g;
                    const double alpha = detail::splat_alpha(splats[k], px, py, dx, dy, g);
                    if (alpha == 0.0) continue;
                    contrib.push_back({k, alpha, g, transmittance, dx, dy, splats[k].opacity * g > kMaxAlpha});
                    transmittance *= 1.0 - alpha;
                    if (transmittance < kTransmittanceCutoff) break;
                }
                const double t_final = transmittance;

                double suffix_rgb[3] = {0.0, 0.0, 0.0};
                std::fill(suffix_surf.begin(), suffix_surf.end(), 0.0);
                double bg_term = 0.0;
                for (int c = 0; c < 3; ++c) bg_term += t_final * settings.background[c] * up_rgb[c];

                for (auto it = contrib.rbegin(); it != contrib.rend(); ++it) {
                    const detail::TileSplat& t = splats[it->local];
                    const Splat& sp = state.list.splats[t.index];
                    const auto s_color = state.list.surf_of(t.index);
                    double* g = &local[it->local * stride];
                    const double wgt = it->alpha * it->transmittance;

                    double own = 0.0;
                    double behind = bg_term;
                    for (int c = 0; c < 3; ++c) {
                        g[6 + c] += wgt * up_rgb[c];
                        own += sp.rgb[static_cast<std::size_t>(c)] * up_rgb[c];
                        behind += suffix_rgb[c] * up_rgb[c];
                    }
                    for (int c = 0; c < cs; ++c) {
                        const std::size_t cc = static_cast<std::size_t>(c);
                        g[9 + c] += wgt * up_surf[cc];
                        own += s_color[cc] * up_surf[cc];
                        behind += suffix_surf[cc] * up_surf[cc];
                    }
                    const double d_alpha = it->transmittance * own - behind / (1.0 - it->alpha);

                    for (int c = 0; c < 3; ++c) suffix_rgb[c] += wgt * sp.rgb[static_cast<std::size_t>(c)];
                    for (int c = 0; c < cs; ++c) {
                        suffix_surf[static_cast<std::size_t>(c)] += wgt * s_color[static_cast<std::size_t>(c)];
                    }

                    g[9 + cs] = 1.0;
                    if (it->clamped) continue;
                    g[5] += it->falloff * d_alpha;
                    const double d_power = t.opacity * d_alpha * it->falloff;
                    const double dx = it->dx, dy = it->dy;
                    // power = -0.5 (a dx^2 + c dy^2) - b dx dy, with (dx, dy) = pixel - mean.
                    g[0] += d_power * (t.a * dx + t.b * dy);
                    g[1] += d_power * (t.c * dy + t.b * dx);
                    g[2] += d_power * (-0.5 * dx * dx);
                    g[3] += d_power * (-dx * dy);
                    g[4] += d_power * (-0.5 * dy * dy);
                }
            }
        }

        if (settings.deterministic) {
            partials[tile] = std::move(local);
        } else {
            for (std::size_t k = 0; k < splats.size(); ++k) {
                double* dst = &screen[splats[k].index * stride];
                const double* src = &local[k * stride];
                for (std::size_t e = 0; e < stride; ++e) {
                    if (src[e] == 0.0) continue;
                    if (e == stride - 1) {
                        std::atomic_ref<double>(dst[e]).store(1.0, std::memory_order_relaxed);
                    } else {
                        std::atomic_ref<double>(dst[e]).fetch_add(src[e], std::memory_order_relaxed);
                    }
                }
            }
        }
    });

    if (settings.deterministic) {
        for (std::size_t tile = 0; tile < n_tiles; ++tile) {
            const auto& local = partials[tile];
            if (local.empty()) continue;
            const auto& ids = state.tile_splats[tile];
            for (std::size_t k = 0; k < ids.size(); ++k) {
                double* dst = &screen[ids[k] * stride];
                const double* src = &local[k * stride];
                for (std::size_t e = 0; e + 1 < stride; ++e) dst[e] += src[e];
                if (src[stride - 1] != 0.0) dst[stride - 1] = 1.0;
            }
        }
    }

    BackwardResult result;
    result.grads = GradientSet(cloud);
    result.mean2d_grad_norm.assign(cloud.size(), 0.0);
    result.visible.assign(cloud.size(), 0);

    parallel_for((ns + 255) / 256, [&](std::size_t block) {
        const std::size_t end = std::min(ns, (block + 1) * 256);
        std::vector<double> d_surf(static_cast<std::size_t>(cs));
        for (std::size_t s = block * 256; s < end; ++s) {
            const Splat& sp = state.list.splats[s];
            const double* g = &screen[s * stride];
            const std::size_t i = sp.kernel;
            if (g[9 + cs] == 0.0) continue;
            result.visible[i] = 1;

            const Vec2 d_mean2d(g[0], g[1]);
            result.mean2d_grad_norm[i] = d_mean2d.norm();

            // Conic -> 2D covariance: d cov = -Q dQ Q with the full-matrix dQ.
            Mat2 q;
            q << sp.conic_a, sp.conic_b, sp.conic_b, sp.conic_c;
            Mat2 d_q;
            d_q << g[2], 0.5 * g[3], 0.5 * g[3], g[4];
            const Mat2 d_cov2d = -q * d_q * q;

            const Vec3 mean = cloud.position(i);
            const Vec3 log_scale = cloud.log_scale(i);
            const Quaternion rot = cloud.rotation(i);
            const Mat3 cov = build_covariance(log_scale, rot);
            const ProjectionGradient pg = project_gaussian_backward(mean, cov, cam, d_mean2d, d_cov2d);
            const CovarianceGradient cg = build_covariance_backward(log_scale, rot, pg.d_cov);

            Vec3 d_mean = pg.d_mean;
            const Vec3 view = mean - cam.center;
            const double view_len = view.norm();
            const Vec3 dir = view / view_len;

            auto d_sh_rgb = result.grads.row(ParamGroup::sh_rgb, i);
            const Vec3 d_dir_rgb =
                eval_sh_backward(cloud.sh_degree_rgb(), settings.active_sh_degree, 3, cloud.sh_rgb(i), dir,
                                 std::span<const double>(g + 6, 3), sp.rgb_unclamped, d_sh_rgb);

            for (int c = 0; c < cs; ++c) d_surf[static_cast<std::size_t>(c)] = g[9 + c];
            auto d_sh_surf = result.grads.row(ParamGroup::sh_surf, i);
            const Vec3 d_dir_surf =
                eval_sh_backward(cloud.sh_degree_surf(), cloud.sh_degree_surf(), cs, cloud.sh_surf(i), dir, d_surf,
                                 std::span<const unsigned char>(state.list.surf_ok).subspan(
                                     s * static_cast<std::size_t>(cs), static_cast<std::size_t>(cs)),
                                 d_sh_surf);

            const Vec3 d_dir = d_dir_rgb + d_dir_surf;
            d_mean += (d_dir - dir * dir.dot(d_dir)) / view_len;

            auto gp = result.grads.row(ParamGroup::position, i);
            auto gs = result.grads.row(ParamGroup::log_scale, i);
            auto gr = result.grads.row(ParamGroup::rotation, i);
            for (int k = 0; k < 3; ++k) {
                gp[static_cast<std::size_t>(k)] = d_mean[k];
                gs[static_cast<std::size_t>(k)] = cg.d_log_scale[k];
            }
            gr[0] = cg.d_rotation.w;
            gr[1] = cg.d_rotation.x;
            gr[2] = cg.d_rotation.y;
            gr[3] = cg.d_rotation.z;
            const double o = sp.opacity;
            result.grads.data(ParamGroup::opacity)[i] = g[5] * o * (1.0 - o);
        }
    });
    return result;
}

/// Forward + backward in one call.
inline BackwardResult render_backward(const GaussianCloud& cloud, const Camera& cam, const RenderSettings& settings,
                                      const RenderUpstream& upstream) {
    const ForwardState state = prepare_forward(cloud, cam, settings);
    return backward(cloud, cam, settings, state, upstream);
}

} // namespace transplat
