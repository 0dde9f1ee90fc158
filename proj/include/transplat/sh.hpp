#pragma once

#include <transplat/errors.hpp>
#include <transplat/geometry.hpp>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace transplat {

inline constexpr int kMaxShDegree = 3;
inline constexpr double kShColorOffset = 0.5;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Real SH basis constants, sign convention of the common Gaussian-splatting
// PLY ecosystem.
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kShC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                                -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kShC3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                                0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                                -0.5900435899266435};

using ShBasis = std::array<double, 16>;
using ShBasisGradient = std::array<Vec3, 16>;

/// Basis values Y_k(d) for k < (degree+1)^2. Entries past the degree are zero.
inline ShBasis sh_basis(int degree, const Vec3& d) {
    ShBasis y{};
    y[0] = kShC0;
    if (degree < 1) return y;
    const double x = d.x(), yy = d.y(), z = d.z();
    y[1] = -kShC1 * yy;
    y[2] = kShC1 * z;
    y[3] = -kShC1 * x;
    if (degree < 2) return y;
    const double xx = x * x, y2 = yy * yy, zz = z * z;
    y[4] = kShC2[0] * x * yy;
    y[5] = kShC2[1] * yy * z;
    y[6] = kShC2[2] * (2.0 * zz - xx - y2);
    y[7] = kShC2[3] * x * z;
    y[8] = kShC2[4] * (xx - y2);
    if (degree < 3) return y;
    y[9] = kShC3[0] * yy * (3.0 * xx - y2);
    y[10] = kShC3[1] * x * yy * z;
    y[11] = kShC3[2] * yy * (4.0 * zz - xx - y2);
    y[12] = kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * y2);
    y[13] = kShC3[4] * x * (4.0 * zz - xx - y2);
    y[14] = kShC3[5] * z * (xx - y2);
    y[15] = kShC3[6] * x * (xx - 3.0 * y2);
    return y;
}

/// Partial derivatives of each basis polynomial w.r.t. the (unconstrained)
/// direction components. Callers project onto the sphere tangent themselves.
inline ShBasisGradient sh_basis_gradient(int degree, const Vec3& d) {
    ShBasisGradient g;
    for (auto& v : g) v.setZero();
    if (degree < 1) return g;
    const double x = d.x(), y = d.y(), z = d.z();
    g[1] = Vec3(0.0, -kShC1, 0.0);
    g[2] = Vec3(0.0, 0.0, kShC1);
    g[3] = Vec3(-kShC1, 0.0, 0.0);
    if (degree < 2) return g;
    const double xx = x * x, yy = y * y, zz = z * z;
    g[4] = kShC2[0] * Vec3(y, x, 0.0);
    g[5] = kShC2[1] * Vec3(0.0, z, y);
    g[6] = kShC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    g[7] = kShC2[3] * Vec3(z, 0.0, x);
    g[8] = kShC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) return g;
    g[9] = kShC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    g[10] = kShC3[1] * Vec3(y * z, x * z, x * y);
    g[11] = kShC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    g[12] = kShC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    g[13] = kShC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    g[14] = kShC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
    g[15] = kShC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    return g;
}

/// Per-kernel SH coefficients: (degree+1)^2 coefficient vectors of dimension
/// `channels`, coefficient-major.
struct ShCoefficients {
    int degree = 0;
    int channels = 3;
    std::vector<double> coeffs;

    ShCoefficients() = default;
    ShCoefficients(int degree_, int channels_)
        : degree(degree_), channels(channels_),
          coeffs(static_cast<std::size_t>(sh_coeff_count(degree_) * channels_), 0.0) {
        validate();
    }

    double& at(int k, int c) { return coeffs[static_cast<std::size_t>(k * channels + c)]; }
    double at(int k, int c) const { return coeffs[static_cast<std::size_t>(k * channels + c)]; }

    void validate() const {
        if (degree < 0 || degree > kMaxShDegree) throw ValidationError("SH degree must be in [0, 3]");
        if (channels < 1) throw ValidationError("SH channel count must be >= 1");
        if (coeffs.size() != static_cast<std::size_t>(sh_coeff_count(degree) * channels)) {
            throw ValidationError("SH coefficient count " + std::to_string(coeffs.size()) + " does not match degree " +
                                  std::to_string(degree));
        }
    }
};

/// Evaluates sum_k c_k Y_k(dir) + 0.5 per channel into `out` and returns, per
/// channel, whether the zero clamp was inactive. `active_degree` may be lower
/// than `degree` (progressive unlock); higher bands are then ignored.
inline void eval_sh(int degree, int active_degree, int channels, std::span<const double> coeffs, const Vec3& dir,
                    std::span<double> out, std::span<unsigned char> unclamped = {}) {
    const int used = std::min(degree, active_degree);
    const ShBasis y = sh_basis(used, dir);
    const int n = sh_coeff_count(used);
    for (int c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += coeffs[static_cast<std::size_t>(k * channels + c)] * y[k];
        const double v = acc + kShColorOffset;
        const bool ok = v >= 0.0;
        out[static_cast<std::size_t>(c)] = ok ? v : 0.0;
        if (!unclamped.empty()) unclamped[static_cast<std::size_t>(c)] = ok ? 1 : 0;
    }
}

inline std::vector<double> eval_sh(const ShCoefficients& sh, const Vec3& view_dir) {
    sh.validate();
    std::vector<double> out(static_cast<std::size_t>(sh.channels));
    eval_sh(sh.degree, sh.degree, sh.channels, sh.coeffs, view_dir, out);
    return out;
}

/// Backward of eval_sh. Accumulates dL/dcoeffs into `d_coeffs` and returns
/// dL/d(direction) as a free 3-vector (not yet projected onto the sphere).
inline Vec3 eval_sh_backward(int degree, int active_degree, int channels, std::span<const double> coeffs,
                             const Vec3& dir, std::span<const double> d_out, std::span<const unsigned char> unclamped,
                             std::span<double> d_coeffs) {
    const int used = std::min(degree, active_degree);
    const ShBasis y = sh_basis(used, dir);
    const ShBasisGradient gy = sh_basis_gradient(used, dir);
    const int n = sh_coeff_count(used);
    Vec3 d_dir = Vec3::Zero();
    for (int c = 0; c < channels; ++c) {
        if (!unclamped[static_cast<std::size_t>(c)]) continue;
        const double g = d_out[static_cast<std::size_t>(c)];
        if (g == 0.0) continue;
        for (int k = 0; k < n; ++k) {
            const std::size_t idx = static_cast<std::size_t>(k * channels + c);
            d_coeffs[idx] += g * y[k];
            d_dir += g * coeffs[idx] * gy[k];
        }
    }
    return d_dir;
}

/// Degree-0 coefficient that makes eval_sh return `value` exactly (before clamp).
inline double sh_dc_from_value(double value) { return (value - kShColorOffset) / kShC0; }

} // namespace transplat
