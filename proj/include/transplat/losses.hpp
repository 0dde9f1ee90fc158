#pragma once

#include <transplat/errors.hpp>
#include <transplat/image.hpp>

#include <array>
#include <cmath>
#include <vector>

namespace transplat {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kDefaultLambda = 0.2;

/// Rendered image, target, and an optional mask (nullptr = every pixel).
struct ImagePair {
    const Image& rendered;
    const Image& target;
    const Mask* mask = nullptr;
};

/// A scalar loss and its gradient w.r.t. the rendered image.
struct LossValue {
    double value = 0.0;
    Image grad;
};

namespace detail {

inline void check_pair(const ImagePair& pair, const char* what) {
    require_same_shape(pair.rendered, pair.target, what);
    if (pair.mask && (pair.mask->width != pair.rendered.width || pair.mask->height != pair.rendered.height)) {
        throw ValidationError(std::string(what) + ": mask shape differs from image shape");
    }
}

inline const std::array<double, kSsimWindow>& ssim_kernel_1d() {
    static const std::array<double, kSsimWindow> k = [] {
        std::array<double, kSsimWindow> w{};
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double d = i - kSsimWindow / 2;
            w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
            sum += w[static_cast<std::size_t>(i)];
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return k;
}

/// Separable Gaussian filter over fully-contained windows:
/// (w x h) -> (w - 10) x (h - 10).
inline std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
    const auto& k = ssim_kernel_1d();
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) acc += k[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) acc += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

/// Adjoint of filter_valid: (w - 10) x (h - 10) -> (w x h).
inline std::vector<double> filter_valid_adjoint(const std::vector<double>& src, int w, int h) {
    const auto& k = ssim_kernel_1d();
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = src[static_cast<std::size_t>(y) * ow + x];
            for (int i = 0; i < kSsimWindow; ++i) tmp[static_cast<std::size_t>(y + i) * ow + x] += k[static_cast<std::size_t>(i)] * v;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = tmp[static_cast<std::size_t>(y) * ow + x];
            for (int i = 0; i < kSsimWindow; ++i) out[static_cast<std::size_t>(y) * w + x + i] += k[static_cast<std::size_t>(i)] * v;
        }
    }
    return out;
}

inline std::vector<double> channel_plane(const Image& img, int c) {
    std::vector<double> p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * static_cast<std::size_t>(img.channels) + static_cast<std::size_t>(c)];
    return p;
}

} // namespace detail

/// Mean absolute difference over unmasked pixels x channels.
inline LossValue l1_loss(const ImagePair& pair) {
    detail::check_pair(pair, "l1_loss");
    const Image& a = pair.rendered;
    const Image& b = pair.target;
    const std::size_t c = static_cast<std::size_t>(a.channels);
    const std::size_t used = pair.mask ? pair.mask->count() : a.pixel_count();
    if (used == 0 || c == 0) throw ValidationError("l1_loss: empty mask, loss undefined");
    const double inv = 1.0 / static_cast<double>(used * c);

    LossValue out;
    out.grad = Image(a.width, a.height, a.channels);
    double sum = 0.0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (pair.mask && !pair.mask->data[p]) continue;
        for (std::size_t k = 0; k < c; ++k) {
            const double d = a.data[p * c + k] - b.data[p * c + k];
            sum += std::abs(d);
            out.grad.data[p * c + k] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
        }
    }
    out.value = sum * inv;
    return out;
}

struct SsimValue {
    double ssim = 0.0;
    Image grad; // d ssim / d rendered
};

/// Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5,
/// k1 = 0.01, k2 = 0.03, dynamic range 1) and channels, with its analytic
/// gradient w.r.t. the rendered image. With a mask, only windows centred on
/// masked pixels are averaged.
inline SsimValue ssim(const ImagePair& pair, bool with_grad = true) {
    detail::check_pair(pair, "ssim");
    const Image& xi = pair.rendered;
    const Image& yi = pair.target;
    const int w = xi.width;
    const int h = xi.height;
    if (w < kSsimWindow || h < kSsimWindow) {
        throw ValidationError("ssim: image " + std::to_string(w) + "x" + std::to_string(h) +
                              " is smaller than the 11x11 window");
    }
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    const std::size_t npos = static_cast<std::size_t>(ow) * oh;
    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;

    std::vector<double> weight(npos, 1.0);
    double weight_sum = static_cast<double>(npos);
    if (pair.mask) {
        weight_sum = 0.0;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const double v = pair.mask->at(x + kSsimWindow / 2, y + kSsimWindow / 2) ? 1.0 : 0.0;
                weight[static_cast<std::size_t>(y) * ow + x] = v;
                weight_sum += v;
            }
        }
        if (weight_sum == 0.0) throw ValidationError("ssim: mask leaves no windows, loss undefined");
    }
    const double norm = 1.0 / (weight_sum * xi.channels);

    SsimValue out;
    if (with_grad) out.grad = Image(w, h, xi.channels);
    double total = 0.0;
    for (int ch = 0; ch < xi.channels; ++ch) {
        const auto x = detail::channel_plane(xi, ch);
        const auto y = detail::channel_plane(yi, ch);
        std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mu_x = detail::filter_valid(x, w, h);
        const auto mu_y = detail::filter_valid(y, w, h);
        const auto e_xx = detail::filter_valid(xx, w, h);
        const auto e_yy = detail::filter_valid(yy, w, h);
        const auto e_xy = detail::filter_valid(xy, w, h);

        // d s / d x_i, summed over windows, is  C + D (y_i - x_i) + F x_i; grouped so
        // that every coefficient is exactly zero when the windows of x and y agree.
        std::vector<double> g_c(npos), g_d(npos), g_f(npos);
        for (std::size_t p = 0; p < npos; ++p) {
            const double mx = mu_x[p], my = mu_y[p];
            const double sxx = e_xx[p] - mx * mx;
            const double syy = e_yy[p] - my * my;
            const double sxy = e_xy[p] - mx * my;
            const double a1 = 2.0 * mx * my + c1;
            const double a2 = 2.0 * sxy + c2;
            const double b1 = mx * mx + my * my + c1;
            const double b2 = sxx + syy + c2;
            const double s = (a1 * a2) / (b1 * b2);
            total += weight[p] * s;
            if (!with_grad) continue;
            const double k = 2.0 * weight[p] * norm / (b1 * b2);
            g_c[p] = k * ((my * a2 - s * mx * b2) + (s * mx * b1 - a1 * my));
            g_d[p] = k * a1;
            g_f[p] = k * (a1 - s * b1);
        }
        if (!with_grad) continue;
        const auto b_c = detail::filter_valid_adjoint(g_c, w, h);
        const auto b_d = detail::filter_valid_adjoint(g_d, w, h);
        const auto b_f = detail::filter_valid_adjoint(g_f, w, h);
        for (std::size_t i = 0; i < x.size(); ++i) {
            out.grad.data[i * static_cast<std::size_t>(xi.channels) + static_cast<std::size_t>(ch)] =
                b_c[i] + b_d[i] * (y[i] - x[i]) + b_f[i] * x[i];
        }
    }
    out.ssim = total / (weight_sum * xi.channels);
    return out;
}

/// D-SSIM = (1 - SSIM) / 2.
inline LossValue dssim_loss(const ImagePair& pair) {
    SsimValue s = ssim(pair, true);
    LossValue out;
    out.value = 0.5 * (1.0 - s.ssim);
    out.grad = std::move(s.grad);
    for (double& g : out.grad.data) g *= -0.5;
    return out;
}

struct LossBreakdown {
    double total = 0.0;     // 0.5 l_rgb + 0.5 l_surf
    double l_rgb = 0.0;
    double l_surf = 0.0;
    double l1_rgb = 0.0;
    double dssim_rgb = 0.0;
    double l1_surf = 0.0;
    double dssim_surf = 0.0;
    /// The value actually optimized: rgb_weight l_rgb + surf_weight l_surf.
    /// Equals `total` for the default (0.5, 0.5) weights.
    double objective = 0.0;
};

struct ChannelWeights {
    double rgb = 0.5;
    double surf = 0.5;
};

struct JointLoss {
    LossBreakdown breakdown;
    Image grad_rgb;  // d objective / d rendered rgb
    Image grad_surf; // d objective / d rendered surf
};

/// (1 - lambda) L1 + lambda D-SSIM for one channel group.
inline LossValue channel_loss(const ImagePair& pair, double lambda, double* l1_out = nullptr,
                              double* dssim_out = nullptr) {
    LossValue l1 = l1_loss(pair);
    LossValue ds = dssim_loss(pair);
    LossValue out;
    out.value = (1.0 - lambda) * l1.value + lambda * ds.value;
    out.grad = std::move(l1.grad);
    for (std::size_t i = 0; i < out.grad.data.size(); ++i) {
        out.grad.data[i] = (1.0 - lambda) * out.grad.data[i] + lambda * ds.grad.data[i];
    }
    if (l1_out) *l1_out = l1.value;
    if (dssim_out) *dssim_out = ds.value;
    return out;
}

/// Joint objective over the RGB and surface-embedding renders. The breakdown's
/// `total` is always the equal-weight average; `weights` only changes
/// `objective` and the returned gradients (rgb-only ablation uses surf = 0).
inline JointLoss joint_loss(const ImagePair& rgb_pair, const ImagePair& surf_pair, double lambda = kDefaultLambda,
                            const ChannelWeights& weights = {}) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("joint_loss: lambda must lie in [0, 1]");
    JointLoss out;
    auto& b = out.breakdown;
    LossValue rgb = channel_loss(rgb_pair, lambda, &b.l1_rgb, &b.dssim_rgb);
    LossValue surf = channel_loss(surf_pair, lambda, &b.l1_surf, &b.dssim_surf);
    b.l_rgb = rgb.value;
    b.l_surf = surf.value;
    b.total = 0.5 * b.l_rgb + 0.5 * b.l_surf;
    b.objective = weights.rgb * b.l_rgb + weights.surf * b.l_surf;
    out.grad_rgb = std::move(rgb.grad);
    out.grad_surf = std::move(surf.grad);
    for (double& g : out.grad_rgb.data) g *= weights.rgb;
    for (double& g : out.grad_surf.data) g *= weights.surf;
    return out;
}

} // namespace transplat
