#pragma once

// Rotation-group helpers: hat/vee, exponential and logarithm maps, their
// Jacobians, and the relative-rotation difference used by orientation tasks.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace gmr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

namespace so3 {

inline Mat3 hat(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

inline Vec3 vee(const Mat3& m) {
    return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * 0.5;
}

/// Rodrigues formula. Exact to machine precision for every angle.
inline Mat3 exp(const Vec3& v) {
    const double theta2 = v.squaredNorm();
    const double theta = std::sqrt(theta2);
    const Mat3 k = hat(v);
    double a, b;
    if (theta < 1e-4) {
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    return Mat3::Identity() + a * k + b * k * k;
}

/// Axis-angle vector of `r`, with norm in [0, pi].
///
/// At exactly pi the sign of the axis is ambiguous; the returned axis has its
/// largest-magnitude component positive.
inline Vec3 log(const Mat3& r) {
    const Vec3 w = vee(r);  // sin(theta) * axis
    const double s = w.norm();
    const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
    const double theta = std::atan2(s, c);

    if (c > -0.99) {
        if (s < 1e-8) {
            // theta ~ s here; theta / sin(theta) = 1 + theta^2 / 6
            return w * (1.0 + theta * theta / 6.0);
        }
        return w * (theta / s);
    }

    // Near pi: recover the axis from the symmetric part, (1 - c) * a a^T.
    const Mat3 sym = 0.5 * (r + r.transpose()) - c * Mat3::Identity();
    Eigen::Index k = 0;
    sym.diagonal().maxCoeff(&k);
    Vec3 axis = sym.col(k) / std::sqrt(sym(k, k) * (1.0 - c));
    axis.normalize();
    if (s > 1e-12) {
        if (axis.dot(w) < 0.0) axis = -axis;
    } else {
        Eigen::Index m = 0;
        axis.cwiseAbs().maxCoeff(&m);
        if (axis(m) < 0.0) axis = -axis;
    }
    return axis * theta;
}

/// Inverse of the left Jacobian: d log(exp(d) exp(phi)) / d d at d = 0.
inline Mat3 left_jacobian_inverse(const Vec3& phi) {
    const double theta2 = phi.squaredNorm();
    const double theta = std::sqrt(theta2);
    const Mat3 k = hat(phi);
    double coeff;
    if (theta < 1e-4) {
        coeff = 1.0 / 12.0 + theta2 / 720.0;
    } else {
        coeff = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    }
    return Mat3::Identity() - 0.5 * k + coeff * k * k;
}

/// Inverse of the right Jacobian: d log(exp(phi) exp(d)) / d d at d = 0.
inline Mat3 right_jacobian_inverse(const Vec3& phi) { return left_jacobian_inverse(-phi); }

inline Mat3 rotation(const Vec3& axis, double angle) { return exp(axis.normalized() * angle); }

inline Mat3 rot_x(double angle) { return exp(Vec3::UnitX() * angle); }
inline Mat3 rot_y(double angle) { return exp(Vec3::UnitY() * angle); }
inline Mat3 rot_z(double angle) { return exp(Vec3::UnitZ() * angle); }

/// Orthonormal to within `tol` and right-handed.
inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
    return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(r.determinant() - 1.0) <= tol;
}

/// Heading of the body's forward (+X) axis projected on the ground plane.
/// Returns `fallback` when the forward axis is within 1e-6 of vertical.
inline double yaw_of(const Mat3& r, double fallback = 0.0) {
    const Vec3 f = r.col(0);
    if (std::hypot(f.x(), f.y()) < 1e-6) return fallback;
    return std::atan2(f.y(), f.x());
}

}  // namespace so3

/// Relative rotation from `a` to `b` in the tangent space at `a`: log(a^-1 b).
inline Vec3 rot_minus(const Mat3& a, const Mat3& b) { return so3::log(a.transpose() * b); }

}  // namespace gmr
