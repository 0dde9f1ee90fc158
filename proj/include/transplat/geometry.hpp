#pragma once

#include <transplat/errors.hpp>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <optional>

namespace transplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Rotation parameter of a kernel. Stored unnormalized, (w, x, y, z) order;
/// consumers normalize before use.
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    static constexpr Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quaternion normalized() const {
        const double n = norm();
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw ValidationError("degenerate rotation: quaternion has zero or non-finite norm");
        }
        return {w / n, x / n, y / n, z / n};
    }

    Quaternion operator-() const { return {-w, -x, -y, -z}; }
    friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

/// Rotation matrix of the normalized quaternion.
inline Mat3 quat_to_rotation(const Quaternion& q_in) {
    const Quaternion q = q_in.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

/// Pulls dL/dR back to the raw (unnormalized) quaternion.
inline Quaternion quat_to_rotation_backward(const Quaternion& q_in, const Mat3& d_rot) {
    const double n = q_in.norm();
    const Quaternion q = q_in.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    const Mat3& g = d_rot;

    // Partials of each rotation entry w.r.t. the unit quaternion components.
    const double gw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    const double gx = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                             w * g(2, 1) - 2.0 * x * g(2, 2));
    const double gy = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                             z * g(2, 1) - 2.0 * y * g(2, 2));
    const double gz = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                             y * g(1, 2) + x * g(2, 0) + y * g(2, 1));

    // Project out the radial component: d(q/|q|)/dq = (I - q q^T) / |q|.
    const double radial = gw * w + gx * x + gy * y + gz * z;
    return {(gw - radial * w) / n, (gx - radial * x) / n, (gy - radial * y) / n, (gz - radial * z) / n};
}

/// Sigma = R diag(exp(2 s)) R^T.
inline Mat3 build_covariance(const Vec3& log_scale, const Quaternion& q) {
    const Mat3 r = quat_to_rotation(q);
    const Mat3 m = r * log_scale.array().exp().matrix().asDiagonal();
    return m * m.transpose();
}

struct CovarianceGradient {
    Vec3 d_log_scale;
    Quaternion d_rotation;
};

/// Pulls a (symmetric) dL/dSigma back to log-scale and raw quaternion.
inline CovarianceGradient build_covariance_backward(const Vec3& log_scale, const Quaternion& q, const Mat3& d_cov) {
    const Mat3 r = quat_to_rotation(q);
    const Vec3 scale = log_scale.array().exp().matrix();
    const Mat3 m = r * scale.asDiagonal();
    const Mat3 d_m = (d_cov + d_cov.transpose()) * m;

    CovarianceGradient out;
    Mat3 d_r;
    for (int j = 0; j < 3; ++j) {
        out.d_log_scale[j] = d_m.col(j).dot(r.col(j)) * scale[j];
        d_r.col(j) = d_m.col(j) * scale[j];
    }
    out.d_rotation = quat_to_rotation_backward(q, d_r);
    return out;
}

/// Pinhole camera. The pose is held as the world-to-camera rotation plus the
/// camera center in world coordinates, so camera-to-world round-trips exactly.
/// Image coordinates place the center of pixel (i, j) at (i + 0.5, j + 0.5).
/// Camera frame: +x right, +y down, +z forward.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    int width = 1;
    int height = 1;
    Mat3 rotation = Mat3::Identity();
    Vec3 center = Vec3::Zero();

    Vec3 translation() const { return -(rotation * center); }
    Vec3 to_camera(const Vec3& p) const { return rotation * (p - center); }

    Eigen::Matrix4d camera_to_world() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation.transpose();
        m.topRightCorner<3, 1>() = center;
        return m;
    }

    /// Builds a camera from a camera-to-world rigid transform.
    static Camera from_camera_to_world(const Eigen::Matrix4d& c2w, double fx, double fy, double cx, double cy,
                                       int width, int height) {
        Camera cam;
        cam.fx = fx;
        cam.fy = fy;
        cam.cx = cx;
        cam.cy = cy;
        cam.width = width;
        cam.height = height;
        cam.rotation = c2w.topLeftCorner<3, 3>().transpose();
        cam.center = c2w.topRightCorner<3, 1>();
        return cam;
    }

    /// Camera at `eye` looking at `target`, image "up" roughly along `up`.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width,
                          int height) {
        const Vec3 forward = (target - eye).normalized();
        const Vec3 right = forward.cross(up).normalized();
        const Vec3 down = forward.cross(right);
        Camera cam;
        cam.fx = fx;
        cam.fy = fy;
        cam.cx = 0.5 * width;
        cam.cy = 0.5 * height;
        cam.width = width;
        cam.height = height;
        cam.rotation.row(0) = right.transpose();
        cam.rotation.row(1) = down.transpose();
        cam.rotation.row(2) = forward.transpose();
        cam.center = eye;
        return cam;
    }

    /// Unit world-space direction of the ray through image point (u, v).
    Vec3 ray_direction(double u, double v) const {
        const Vec3 d_cam((u - cx) / fx, (v - cy) / fy, 1.0);
        return (rotation.transpose() * d_cam).normalized();
    }

    void validate(double tolerance = 1e-9) const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
        if (width < 1 || height < 1) throw ValidationError("camera image size must be at least 1x1");
        const double err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
        if (!(err <= tolerance) || std::abs(rotation.determinant() - 1.0) > tolerance) {
            throw ValidationError("camera rotation is not orthonormal (error " + std::to_string(err) + ")");
        }
    }
};

inline constexpr double kDefaultNearPlane = 0.01;
inline constexpr double kLowPassVariance = 0.3;

/// d(u, v)/d(camera-frame point) for the pinhole model.
inline Mat23 projection_jacobian(const Vec3& p_cam, const Camera& cam) {
    const double inv_z = 1.0 / p_cam.z();
    Mat23 j;
    j << cam.fx * inv_z, 0.0, -cam.fx * p_cam.x() * inv_z * inv_z, 0.0, cam.fy * inv_z,
        -cam.fy * p_cam.y() * inv_z * inv_z;
    return j;
}

struct Projection {
    Vec2 mean2d;
    Mat2 cov2d;
    double depth = 0.0;
};

/// EWA projection of a 3D Gaussian. Returns nullopt (culled) when the mean is
/// not in front of the near plane.
inline std::optional<Projection> project_gaussian(const Vec3& mean, const Mat3& cov, const Camera& cam,
                                                  double near_plane = kDefaultNearPlane) {
    const Vec3 p = cam.to_camera(mean);
    if (!(p.z() > near_plane)) return std::nullopt;
    const Mat23 t = projection_jacobian(p, cam) * cam.rotation;
    Projection out;
    out.mean2d = Vec2(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
    out.cov2d = t * cov * t.transpose() + kLowPassVariance * Mat2::Identity();
    out.depth = p.z();
    return out;
}

struct ProjectionGradient {
    Vec3 d_mean;
    Mat3 d_cov;
};

/// Pulls gradients on (mean2d, cov2d) back to the world mean and 3D covariance.
/// `d_cov2d` uses the full-matrix convention (each of the four entries
/// independent); it is symmetrized internally.
inline ProjectionGradient project_gaussian_backward(const Vec3& mean, const Mat3& cov, const Camera& cam,
                                                    const Vec2& d_mean2d, const Mat2& d_cov2d) {
    const Vec3 p = cam.to_camera(mean);
    const double x = p.x(), y = p.y(), z = p.z();
    const double inv_z = 1.0 / z;
    const double inv_z2 = inv_z * inv_z;
    const Mat23 jac = projection_jacobian(p, cam);
    const Mat23 t = jac * cam.rotation;
    const Mat2 g = 0.5 * (d_cov2d + d_cov2d.transpose());

    ProjectionGradient out;
    out.d_cov = t.transpose() * g * t;

    // cov2d = J W Sigma W^T J^T, with J a function of the camera-frame point.
    const Mat23 d_t = 2.0 * g * t * cov;
    const Mat23 d_j = d_t * cam.rotation.transpose();

    Vec3 d_p;
    d_p.x() = d_mean2d.x() * cam.fx * inv_z + d_j(0, 2) * (-cam.fx * inv_z2);
    d_p.y() = d_mean2d.y() * cam.fy * inv_z + d_j(1, 2) * (-cam.fy * inv_z2);
    d_p.z() = d_mean2d.x() * (-cam.fx * x * inv_z2) + d_mean2d.y() * (-cam.fy * y * inv_z2) +
              d_j(0, 0) * (-cam.fx * inv_z2) + d_j(0, 2) * (2.0 * cam.fx * x * inv_z2 * inv_z) +
              d_j(1, 1) * (-cam.fy * inv_z2) + d_j(1, 2) * (2.0 * cam.fy * y * inv_z2 * inv_z);
    out.d_mean = cam.rotation.transpose() * d_p;
    return out;
}

} // namespace transplat
