#pragma once

#include <transplat/adam.hpp>
#include <transplat/cloud.hpp>
#include <transplat/errors.hpp>
#include <transplat/losses.hpp>
#include <transplat/metrics.hpp>
#include <transplat/rasterizer.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace transplat {

struct DensifyConfig {
    bool enabled = true;
    int start_iteration = 300;
    int stop_iteration = 15000;
    int interval = 100;
    /// Mean screen-space positional gradient, measured in NDC units.
    double grad_threshold = 2e-4;
    /// Kernels larger than this fraction of the scene extent are split.
    double percent_dense = 0.01;
    double prune_opacity = 0.005;
    std::size_t max_kernels = 200000;
    /// 0 disables the periodic opacity reset.
    int opacity_reset_interval = 0;
    double opacity_reset_value = 0.01;
};

struct TrainConfig {
    int iterations = 2000;
    double lambda = kDefaultLambda;
    LearningRates lr;
    /// Position rate decays exponentially to this value over the run.
    double position_lr_final = 1.6e-6;
    AdamConfig adam;
    DensifyConfig densify;
    /// One more RGB SH band every this many iterations.
    int sh_increase_interval = 1000;
    ChannelWeights weights;
    Vec3 background = Vec3::Zero();
    /// Multiplies the position rates and sets the split/clone boundary.
    /// 0 derives it from the camera centers.
    double scene_extent = 0.0;
    std::uint64_t seed = 0;
    bool deterministic = true;
    /// Restrict the surf-channel loss to pixels where the target embedding is non-zero.
    bool mask_surf_loss = false;

    void validate() const {
        if (iterations < 1) throw ConfigError("iterations must be >= 1");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
        for (ParamGroup g : kAllParamGroups) {
            if (!(lr.of(g) > 0.0)) {
                throw ConfigError("learning rate for '" + std::string(param_group_name(g)) + "' must be > 0");
            }
        }
        if (!(position_lr_final > 0.0)) throw ConfigError("position_lr_final must be > 0");
        if (!(weights.rgb >= 0.0 && weights.surf >= 0.0)) throw ConfigError("channel weights must be >= 0");
        if (densify.interval < 1) throw ConfigError("densify interval must be >= 1");
        if (!(densify.grad_threshold > 0.0)) throw ConfigError("densify grad threshold must be > 0");
        if (!(densify.prune_opacity >= 0.0 && densify.prune_opacity < 1.0)) {
            throw ConfigError("prune opacity must lie in [0, 1)");
        }
        if (densify.opacity_reset_interval < 0) throw ConfigError("opacity reset interval must be >= 0");
        if (sh_increase_interval < 1) throw ConfigError("sh_increase_interval must be >= 1");
        if (scene_extent < 0.0) throw ConfigError("scene_extent must be >= 0");
    }
};

struct TrainView {
    Camera camera;
    Image rgb;
    Image surf;
};

struct TrainReport {
    std::vector<LossBreakdown> history;
    std::vector<std::size_t> kernel_count;
    std::vector<int> view_index;
    double wall_seconds = 0.0;
    double scene_extent = 0.0;
    std::optional<DepthMetrics> heldout;
    std::vector<std::string> warnings;
};

/// 1.1 x the largest distance of a camera center from their centroid.
inline double camera_extent(const std::vector<TrainView>& views) {
    Vec3 mean = Vec3::Zero();
    for (const auto& v : views) mean += v.camera.center;
    mean /= static_cast<double>(views.size());
    double r = 0.0;
    for (const auto& v : views) r = std::max(r, (v.camera.center - mean).norm());
    return 1.1 * std::max(r, 1e-6);
}

/// Exponential interpolation from `init` at step 0 to `final` at `max_steps`.
inline double exponential_lr(double init, double final, int step, int max_steps) {
    const double t = std::clamp(static_cast<double>(step) / std::max(1, max_steps), 0.0, 1.0);
    return std::exp(std::log(init) * (1.0 - t) + std::log(final) * t);
}

struct DensifyStats {
    std::vector<double> grad_accum;
    std::vector<double> count;

    void reset(std::size_t n) {
        grad_accum.assign(n, 0.0);
        count.assign(n, 0.0);
    }
};

struct DensifyResult {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

/// Clones small and splits large high-gradient kernels, then prunes kernels
/// whose activated opacity is below the threshold. Optimizer state follows
/// the cloud: new kernels start with zero moments.
inline DensifyResult densify_and_prune(GaussianCloud& cloud, const DensifyStats& stats, const DensifyConfig& config,
                                       double scene_extent, std::mt19937_64& rng, AdamState* state = nullptr,
                                       std::vector<std::string>* warnings = nullptr) {
    const std::size_t n = cloud.size();
    if (stats.grad_accum.size() != n || stats.count.size() != n) {
        throw ValidationError("densify_and_prune: gradient statistics not aligned with cloud");
    }
    if (state && state->size() != n) throw ValidationError("densify_and_prune: optimizer state not aligned");
    DensifyResult result;
    const double boundary = config.percent_dense * scene_extent;

    std::vector<std::size_t> clone_ids, split_ids;
    for (std::size_t i = 0; i < n; ++i) {
        if (stats.count[i] <= 0.0) continue;
        if (stats.grad_accum[i] / stats.count[i] < config.grad_threshold) continue;
        const double max_scale = std::exp(cloud.log_scale(i).maxCoeff());
        (max_scale <= boundary ? clone_ids : split_ids).push_back(i);
    }
    const std::size_t growth = clone_ids.size() + split_ids.size();
    if (n + growth > config.max_kernels) {
        clone_ids.clear();
        split_ids.clear();
    }

    for (std::size_t i : clone_ids) cloud.append_from(cloud, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr double kSplitShrink = 1.6;
    for (std::size_t i : split_ids) {
        const Vec3 sigma = cloud.log_scale(i).array().exp();
        const Mat3 rot = quat_to_rotation(cloud.rotation(i).normalized());
        const Vec3 mean = cloud.position(i);
        for (int s = 0; s < 2; ++s) {
            cloud.append_from(cloud, i);
            const std::size_t k = cloud.size() - 1;
            const Vec3 sample(normal(rng) * sigma.x(), normal(rng) * sigma.y(), normal(rng) * sigma.z());
            cloud.set_position(k, mean + rot * sample);
            cloud.set_log_scale(k, (sigma / kSplitShrink).array().log());
        }
    }
    result.cloned = clone_ids.size();
    result.split = split_ids.size();
    if (state) state->append_zero(cloud.size() - n);

    std::vector<bool> keep(cloud.size(), true);
    for (std::size_t i : split_ids) keep[i] = false;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.opacity(i) < config.prune_opacity) keep[i] = false;
    }
    const std::size_t before = cloud.size();
    cloud.compact(keep);
    if (state) state->compact(keep);
    result.pruned = before - cloud.size() - split_ids.size();
    if (cloud.size() == 0 && before > 0) {
        const std::string msg = "density control pruned every kernel (all opacities below " +
                                std::to_string(config.prune_opacity) + ")";
        if (warnings) warnings->push_back(msg);
    }
    return result;
}

using TrainProgress = std::function<void(int iteration, const LossBreakdown&, std::size_t kernels)>;

/// Joint RGB + surface-embedding optimization of `cloud` against `views`.
inline std::pair<GaussianCloud, TrainReport> train(GaussianCloud cloud, const std::vector<TrainView>& views,
                                                   const TrainConfig& config, const TrainProgress& progress = {}) {
    config.validate();
    cloud.validate();
    if (views.empty()) throw ValidationError("train: at least one view is required");
    const int w = views.front().camera.width, h = views.front().camera.height;
    for (std::size_t v = 0; v < views.size(); ++v) {
        const auto& tv = views[v];
        if (tv.camera.width != w || tv.camera.height != h || tv.rgb.width != w || tv.rgb.height != h ||
            tv.rgb.channels != 3 || tv.surf.width != w || tv.surf.height != h ||
            tv.surf.channels != cloud.layout().surf_channels) {
            throw ValidationError("train: view " + std::to_string(v) +
                                  " does not match the shared image size or the cloud's channel layout");
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.scene_extent = config.scene_extent > 0.0 ? config.scene_extent : camera_extent(views);
    const double extent = report.scene_extent;

    std::mt19937_64 rng(config.seed);
    AdamState adam(cloud);
    DensifyStats stats;
    stats.reset(cloud.size());
    LearningRates lr = config.lr;

    RenderSettings settings;
    settings.background = config.background;
    settings.deterministic = config.deterministic;
    settings.active_sh_degree = 0;

    std::vector<std::optional<Mask>> surf_masks(views.size());
    if (config.mask_surf_loss) {
        const int half = kSsimWindow / 2;
        for (std::size_t v = 0; v < views.size(); ++v) {
            const Image& t = views[v].surf;
            Mask m(w, h);
            bool has_window = false;
            for (std::size_t p = 0; p < m.data.size(); ++p) {
                for (int c = 0; c < t.channels; ++c) {
                    if (t.data[p * static_cast<std::size_t>(t.channels) + static_cast<std::size_t>(c)] > 0.0) m.data[p] = 1;
                }
                const int x = static_cast<int>(p % static_cast<std::size_t>(w));
                const int y = static_cast<int>(p / static_cast<std::size_t>(w));
                if (m.data[p] && x >= half && x < w - half && y >= half && y < h - half) has_window = true;
            }
            if (has_window) {
                surf_masks[v] = std::move(m);
            } else {
                report.warnings.push_back("view " + std::to_string(v) +
                                          " has no embedding pixels to mask; its surf loss uses the full image");
            }
        }
    }

    std::vector<int> order;
    std::size_t cursor = 0;
    const double ndc_scale = 0.5 * std::max(w, h);

    report.history.reserve(static_cast<std::size_t>(config.iterations));
    for (int it = 1; it <= config.iterations; ++it) {
        if (it > 1 && (it - 1) % config.sh_increase_interval == 0) {
            settings.active_sh_degree = std::min(settings.active_sh_degree + 1, cloud.sh_degree_rgb());
        }
        lr.position = exponential_lr(config.lr.position * extent, config.position_lr_final * extent, it - 1,
                                     config.iterations);

        if (cursor == order.size()) {
            order.resize(views.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const int vi = order[cursor++];
        const TrainView& view = views[static_cast<std::size_t>(vi)];

        const ForwardState fwd = prepare_forward(cloud, view.camera, settings);
        const RenderOutput out = composite(fwd, view.camera, settings);
        const auto& surf_mask = surf_masks[static_cast<std::size_t>(vi)];
        JointLoss loss = joint_loss({out.rgb, view.rgb}, {out.surf, view.surf, surf_mask ? &*surf_mask : nullptr},
                                    config.lambda, config.weights);
        if (!std::isfinite(loss.breakdown.objective) || !std::isfinite(loss.breakdown.total)) {
            throw NumericalError("non-finite loss at iteration " + std::to_string(it) + " on view " +
                                 std::to_string(vi));
        }
        RenderUpstream up{std::move(loss.grad_rgb), std::move(loss.grad_surf)};
        if (config.weights.surf == 0.0) up.d_surf = Image();
        if (config.weights.rgb == 0.0) up.d_rgb = Image();
        BackwardResult grads = backward(cloud, view.camera, settings, fwd, up);

        const bool densifying = config.densify.enabled && it < config.densify.stop_iteration;
        if (densifying) {
            for (std::size_t i = 0; i < cloud.size(); ++i) {
                if (!grads.visible[i]) continue;
                stats.grad_accum[i] += grads.mean2d_grad_norm[i] * ndc_scale;
                stats.count[i] += 1.0;
            }
        }

        try {
            apply_gradients(cloud, grads.grads, adam, lr, config.adam);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at iteration " + std::to_string(it) + " on view " +
                                 std::to_string(vi));
        }

        if (densifying && it > config.densify.start_iteration && it % config.densify.interval == 0) {
            densify_and_prune(cloud, stats, config.densify, extent, rng, &adam, &report.warnings);
            stats.reset(cloud.size());
        }
        if (densifying && it < config.iterations && config.densify.opacity_reset_interval > 0 &&
            it % config.densify.opacity_reset_interval == 0) {
            const double cap = opacity_logit(config.densify.opacity_reset_value);
            for (std::size_t i = 0; i < cloud.size(); ++i) {
                cloud.set_opacity_logit(i, std::min(cloud.opacity_logit(i), cap));
            }
            adam.reset_group(ParamGroup::opacity);
        }

        report.history.push_back(loss.breakdown);
        report.kernel_count.push_back(cloud.size());
        report.view_index.push_back(vi);
        if (progress) progress(it, loss.breakdown, cloud.size());
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    cloud.validate();
    return {std::move(cloud), std::move(report)};
}

} // namespace transplat
