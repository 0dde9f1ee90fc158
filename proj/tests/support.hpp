#pragma once

// Shared fixtures for unit and acceptance tests: small randomized scenes and
// a central-difference gradient oracle independent of the backward pass.

#include <transplat/cloud.hpp>
#include <transplat/losses.hpp>
#include <transplat/rasterizer.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace transplat::testing {

struct GradientScene {
    GaussianCloud cloud;
    std::vector<Camera> cameras;
    std::vector<Image> rgb_targets;
    std::vector<Image> surf_targets;
    RenderSettings settings;
};

/// Kernels large enough to cover every pixel of a 16x16 view (footprint and
/// 1/255 cutoffs fall outside the image), opacities in [0.2, 0.6] so neither
/// the 0.99 clamp nor early termination triggers. Targets sit at least 0.05
/// away from the initial render so the L1 kinks are never crossed.
inline GradientScene make_gradient_scene(std::uint64_t seed, int kernels = 5, int views = 2, int size = 16,
                                         int surf_degree = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    GradientScene s;
    s.cloud = GaussianCloud(ParameterLayout{3, surf_degree, 3}, static_cast<std::size_t>(kernels));
    for (int i = 0; i < kernels; ++i) {
        const auto k = static_cast<std::size_t>(i);
        s.cloud.set_position(k, Vec3(0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng)));
        s.cloud.set_log_scale(k, Vec3(std::log(1.2 + 0.6 * unit(rng)), std::log(1.2 + 0.6 * unit(rng)),
                                      std::log(1.2 + 0.6 * unit(rng))));
        s.cloud.set_rotation(k, Quaternion{1.0 + 0.3 * u(rng), 0.4 * u(rng), 0.4 * u(rng), 0.4 * u(rng)});
        s.cloud.set_opacity_logit(k, opacity_logit(0.2 + 0.4 * unit(rng)));
        auto rgb = s.cloud.sh_rgb(k);
        for (std::size_t c = 0; c < rgb.size(); ++c) rgb[c] = c < 3 ? 0.5 * u(rng) : 0.1 * u(rng);
        auto surf = s.cloud.sh_surf(k);
        for (std::size_t c = 0; c < surf.size(); ++c) surf[c] = c < 3 ? 0.8 * u(rng) : 0.15 * u(rng);
    }
    s.settings.background = Vec3(unit(rng), unit(rng), unit(rng));

    for (int v = 0; v < views; ++v) {
        const double angle = 0.6 * v + 0.2 * u(rng);
        const Vec3 eye(3.0 * std::sin(angle), 0.4 * u(rng), -3.0 * std::cos(angle));
        s.cameras.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3(0, -1, 0), 20.0, 20.0, size, size));
        const RenderOutput out = render(s.cloud, s.cameras.back(), s.settings);
        Image rgb = out.rgb, surf = out.surf;
        for (double& x : rgb.data) x += (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.05 + 0.25 * unit(rng));
        for (double& x : surf.data) x += (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.05 + 0.25 * unit(rng));
        s.rgb_targets.push_back(std::move(rgb));
        s.surf_targets.push_back(std::move(surf));
    }
    return s;
}

inline double scene_objective(const GradientScene& s, const GaussianCloud& cloud, const ChannelWeights& w = {}) {
    double total = 0.0;
    for (std::size_t v = 0; v < s.cameras.size(); ++v) {
        const RenderOutput out = render(cloud, s.cameras[v], s.settings);
        total += joint_loss({out.rgb, s.rgb_targets[v]}, {out.surf, s.surf_targets[v]}, kDefaultLambda, w)
                     .breakdown.objective;
    }
    return total;
}

inline GradientSet scene_gradient(const GradientScene& s, const GaussianCloud& cloud, const ChannelWeights& w = {}) {
    GradientSet total(cloud);
    for (std::size_t v = 0; v < s.cameras.size(); ++v) {
        const ForwardState state = prepare_forward(cloud, s.cameras[v], s.settings);
        const RenderOutput out = composite(state, s.cameras[v], s.settings);
        JointLoss loss = joint_loss({out.rgb, s.rgb_targets[v]}, {out.surf, s.surf_targets[v]}, kDefaultLambda, w);
        RenderUpstream up{std::move(loss.grad_rgb), std::move(loss.grad_surf)};
        total += backward(cloud, s.cameras[v], s.settings, state, up).grads;
    }
    return total;
}

/// Central difference with one Richardson step, step 1e-4 scaled by the
/// parameter magnitude.
inline double central_difference(const std::function<double(double)>& f, double x) {
    const double h = 1e-4 * std::max(1.0, std::abs(x));
    const double d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    const double d2 = (f(x + 0.5 * h) - f(x - 0.5 * h)) / h;
    return (4.0 * d2 - d1) / 3.0;
}

struct GradientCheckReport {
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_relative = 0.0;
    std::string first_failure;
};

/// Compares every entry of `analytic` against central differences of
/// `objective`, accepting |a - fd| <= max(rel * |fd|, abs_floor).
inline GradientCheckReport check_gradients(const GaussianCloud& cloud, const GradientSet& analytic,
                                           const std::function<double(const GaussianCloud&)>& objective,
                                           double rel = 1e-4, double abs_floor = 1e-7) {
    GradientCheckReport report;
    GaussianCloud probe = cloud;
    for (ParamGroup g : kAllParamGroups) {
        auto& data = probe.data(g);
        for (std::size_t k = 0; k < data.size(); ++k) {
            const double x0 = data[k];
            const double fd = central_difference(
                [&](double x) {
                    data[k] = x;
                    return objective(probe);
                },
                x0);
            data[k] = x0;
            const double a = analytic.data(g)[k];
            const double err = std::abs(a - fd);
            const double tol = std::max(rel * std::abs(fd), abs_floor);
            ++report.checked;
            if (std::abs(fd) > abs_floor) report.worst_relative = std::max(report.worst_relative, err / std::abs(fd));
            if (err > tol) {
                if (report.failures == 0) {
                    report.first_failure = std::string(param_group_name(g)) + "[" + std::to_string(k) +
                                           "]: analytic " + std::to_string(a) + " vs fd " + std::to_string(fd);
                }
                ++report.failures;
            }
        }
    }
    return report;
}

} // namespace transplat::testing
