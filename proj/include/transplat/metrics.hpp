#pragma once

#include <transplat/errors.hpp>
#include <transplat/image.hpp>
#include <transplat/losses.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace transplat {

inline constexpr double kPsnrCap = 99.0;

struct ViewDepthMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double valid_pixel_fraction = 0.0;
    std::size_t evaluated = 0; // mask ∩ pred-valid
    std::size_t masked = 0;    // mask pixels
};

/// Depth-completion errors. Per-view figures pool pixels; aggregates average
/// views uniformly. Pixel-pooled aggregates are kept alongside.
struct DepthMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double valid_pixel_fraction = 0.0;
    double pooled_mae = 0.0;
    double pooled_rmse = 0.0;
    std::vector<ViewDepthMetrics> per_view;
};

/// Like depth_metrics, but a view with no valid prediction inside the mask
/// yields evaluated = 0 and zero errors instead of throwing.
inline ViewDepthMetrics view_depth_metrics(const Image& pred, const Mask& pred_valid, const Image& gt,
                                           const Mask& mask) {
    if (pred.width != gt.width || pred.height != gt.height || pred.channels != 1 || gt.channels != 1 ||
        mask.width != gt.width || mask.height != gt.height || pred_valid.width != gt.width ||
        pred_valid.height != gt.height) {
        throw ValidationError("depth_metrics: shape mismatch between prediction, ground truth and masks");
    }
    ViewDepthMetrics m;
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t p = 0; p < gt.data.size(); ++p) {
        if (!mask.data[p]) continue;
        ++m.masked;
        if (!pred_valid.data[p]) continue;
        const double e = pred.data[p] - gt.data[p];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        ++m.evaluated;
    }
    if (m.masked == 0) throw ValidationError("depth_metrics: evaluation mask is empty");
    m.valid_pixel_fraction = static_cast<double>(m.evaluated) / static_cast<double>(m.masked);
    if (m.evaluated == 0) return m;
    m.mae = abs_sum / static_cast<double>(m.evaluated);
    m.rmse = std::sqrt(sq_sum / static_cast<double>(m.evaluated));
    return m;
}

/// Errors over mask ∩ pred-valid pixels. Invalid predictions inside the mask
/// lower valid_pixel_fraction and are excluded from MAE/RMSE.
inline ViewDepthMetrics depth_metrics(const Image& pred, const Mask& pred_valid, const Image& gt, const Mask& mask) {
    ViewDepthMetrics m = view_depth_metrics(pred, pred_valid, gt, mask);
    if (m.evaluated == 0) throw ValidationError("depth_metrics: no valid predicted pixels inside the mask");
    return m;
}

/// Aggregates per-view results. Views where every masked pixel is invalid
/// count with valid fraction 0 and are left out of the error averages.
inline DepthMetrics aggregate_depth_metrics(const std::vector<ViewDepthMetrics>& views) {
    DepthMetrics out;
    out.per_view = views;
    if (views.empty()) throw ValidationError("aggregate_depth_metrics: no views");
    double mae = 0.0, mse_pool = 0.0, abs_pool = 0.0, rmse = 0.0, frac = 0.0;
    std::size_t with_errors = 0, pixels = 0;
    for (const auto& v : views) {
        frac += v.valid_pixel_fraction;
        if (v.evaluated == 0) continue;
        mae += v.mae;
        rmse += v.rmse;
        abs_pool += v.mae * static_cast<double>(v.evaluated);
        mse_pool += v.rmse * v.rmse * static_cast<double>(v.evaluated);
        pixels += v.evaluated;
        ++with_errors;
    }
    if (with_errors == 0) throw ValidationError("depth_metrics: no valid predicted pixels in any view");
    out.mae = mae / static_cast<double>(with_errors);
    out.rmse = rmse / static_cast<double>(with_errors);
    out.valid_pixel_fraction = frac / static_cast<double>(views.size());
    out.pooled_mae = abs_pool / static_cast<double>(pixels);
    out.pooled_rmse = std::sqrt(mse_pool / static_cast<double>(pixels));
    return out;
}

struct ImageMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

inline double psnr(const Image& pred, const Image& gt) {
    require_same_shape(pred, gt, "psnr");
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - gt.data[i];
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(pred.data.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

/// Mean SSIM with a direct (non-separable) 11x11 window over fully-contained
/// positions. Independent of the separable path used by the loss.
inline double ssim_direct(const Image& a, const Image& b) {
    require_same_shape(a, b, "ssim");
    if (a.width < kSsimWindow || a.height < kSsimWindow) throw ValidationError("ssim: image smaller than window");
    std::array<double, kSsimWindow * kSsimWindow> win{};
    double wsum = 0.0;
    for (int j = 0; j < kSsimWindow; ++j) {
        for (int i = 0; i < kSsimWindow; ++i) {
            const double dx = i - kSsimWindow / 2, dy = j - kSsimWindow / 2;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
            win[static_cast<std::size_t>(j * kSsimWindow + i)] = v;
            wsum += v;
        }
    }
    for (double& v : win) v /= wsum;
    const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
    const int ow = a.width - kSsimWindow + 1, oh = a.height - kSsimWindow + 1;
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double mx = 0, my = 0, exx = 0, eyy = 0, exy = 0;
                for (int j = 0; j < kSsimWindow; ++j) {
                    for (int i = 0; i < kSsimWindow; ++i) {
                        const double wv = win[static_cast<std::size_t>(j * kSsimWindow + i)];
                        const double va = a.at(x + i, y + j, c), vb = b.at(x + i, y + j, c);
                        mx += wv * va;
                        my += wv * vb;
                        exx += wv * va * va;
                        eyy += wv * vb * vb;
                        exy += wv * va * vb;
                    }
                }
                const double sxx = exx - mx * mx, syy = eyy - my * my, sxy = exy - mx * my;
                total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
            }
        }
    }
    return total / (static_cast<double>(ow) * oh * a.channels);
}

inline ImageMetrics image_metrics(const Image& pred, const Image& gt) {
    return {psnr(pred, gt), ssim_direct(pred, gt)};
}

} // namespace transplat
