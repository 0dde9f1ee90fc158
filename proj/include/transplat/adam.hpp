#pragma once

#include <transplat/cloud.hpp>
#include <transplat/errors.hpp>

#include <array>
#include <cmath>
#include <string>

namespace transplat {

struct LearningRates {
    double position = 1.6e-4;
    double log_scale = 5e-3;
    double rotation = 1e-3;
    double opacity = 5e-2;
    double sh_rgb = 2.5e-3;
    double sh_surf = 2.5e-3;

    double of(ParamGroup g) const {
        switch (g) {
        case ParamGroup::position: return position;
        case ParamGroup::log_scale: return log_scale;
        case ParamGroup::rotation: return rotation;
        case ParamGroup::opacity: return opacity;
        case ParamGroup::sh_rgb: return sh_rgb;
        case ParamGroup::sh_surf: return sh_surf;
        }
        return 0.0;
    }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// First/second moments per parameter, laid out like the cloud. Each kernel
/// keeps its own step count so freshly added kernels get a proper bias
/// correction.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const GaussianCloud& cloud)
        : m_(cloud.layout(), cloud.size()), v_(cloud.layout(), cloud.size()), steps_(cloud.size(), 0) {}

    std::size_t size() const { return steps_.size(); }
    ParameterArrays& first_moment() { return m_; }
    ParameterArrays& second_moment() { return v_; }
    const ParameterArrays& first_moment() const { return m_; }
    const ParameterArrays& second_moment() const { return v_; }
    std::vector<long>& steps() { return steps_; }

    /// New kernels appended with zero moments.
    void append_zero(std::size_t n) {
        m_.resize(m_.size() + n);
        v_.resize(v_.size() + n);
        steps_.resize(steps_.size() + n, 0);
    }

    void compact(const std::vector<bool>& keep) {
        m_.compact(keep);
        v_.compact(keep);
        std::size_t out = 0;
        for (std::size_t i = 0; i < steps_.size(); ++i) {
            if (keep[i]) steps_[out++] = steps_[i];
        }
        steps_.resize(out);
    }

    void reset_group(ParamGroup g) {
        std::fill(m_.data(g).begin(), m_.data(g).end(), 0.0);
        std::fill(v_.data(g).begin(), v_.data(g).end(), 0.0);
    }

private:
    ParameterArrays m_;
    ParameterArrays v_;
    std::vector<long> steps_;
};

/// One Adam step over every group, then quaternion re-normalization.
/// Throws NumericalError naming the group on a non-finite gradient.
inline void apply_gradients(GaussianCloud& cloud, const GradientSet& grads, AdamState& state, const LearningRates& lr,
                            const AdamConfig& config = {}) {
    if (!grads.congruent_with(cloud) || state.size() != cloud.size()) {
        throw ValidationError("apply_gradients: gradient/optimizer state not congruent with cloud");
    }
    for (ParamGroup g : kAllParamGroups) {
        for (double v : grads.data(g)) {
            if (!std::isfinite(v)) {
                throw NumericalError("non-finite gradient in parameter group '" + std::string(param_group_name(g)) +
                                     "'; step aborted");
            }
        }
    }

    const std::size_t n = cloud.size();
    auto& steps = state.steps();
    for (auto& t : steps) ++t;

    for (ParamGroup g : kAllParamGroups) {
        const std::size_t s = cloud.stride(g);
        const double rate = lr.of(g);
        auto& p = cloud.data(g);
        auto& m = state.first_moment().data(g);
        auto& v = state.second_moment().data(g);
        const auto& gd = grads.data(g);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(steps[i]);
            const double bc1 = 1.0 - std::pow(config.beta1, t);
            const double bc2 = 1.0 - std::pow(config.beta2, t);
            for (std::size_t k = i * s; k < (i + 1) * s; ++k) {
                m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gd[k];
                v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gd[k] * gd[k];
                const double m_hat = m[k] / bc1;
                const double v_hat = v[k] / bc2;
                p[k] -= rate * m_hat / (std::sqrt(v_hat) + config.eps);
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const Quaternion q = cloud.rotation(i);
        if (q.norm() > 0.0) cloud.set_rotation(i, q.normalized());
    }
}

} // namespace transplat
