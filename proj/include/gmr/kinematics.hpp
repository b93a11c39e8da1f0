#pragma once

#include "gmr/bvh.hpp"
#include "gmr/robot_model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <vector>

namespace gmr {

struct BodyPoseSet {
    std::vector<Vec3> positions;
    std::vector<Mat3> orientations;
};

/// 6 x (6 + n) geometric Jacobian in the world frame. Rows 0-2 are linear
/// velocity of the body origin, rows 3-5 angular velocity. Columns 0-2 are
/// base linear velocity, 3-5 base angular velocity (world frame), then one
/// column per joint.
using BodyJacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

inline BodyPoseSet robot_fk(const RobotModel& model, const GeneralizedCoords& q) {
    BodyPoseSet out;
    const std::size_t n = model.bodies.size();
    out.positions.resize(n);
    out.orientations.resize(n);
    out.positions[0] = q.root_position;
    out.orientations[0] = q.root_orientation.normalized().toRotationMatrix();
    for (std::size_t b = 1; b < n; ++b) {
        const RobotBody& body = model.bodies[b];
        const std::size_t p = *body.parent;
        out.positions[b] = out.positions[p] + out.orientations[p] * body.offset;
        Mat3 r = out.orientations[p] * body.rotation;
        if (body.joint) {
            const RobotJoint& j = model.joints[*body.joint];
            r = r * so3::exp(j.axis * q.joint_values(static_cast<Eigen::Index>(*body.joint)));
        }
        out.orientations[b] = r;
    }
    return out;
}

/// Jacobian of `body` given poses already computed by robot_fk at the same q.
inline BodyJacobian body_jacobian(const RobotModel& model, const BodyPoseSet& poses, std::size_t body) {
    BodyJacobian jac = BodyJacobian::Zero(6, static_cast<Eigen::Index>(model.tangent_dim()));
    const Vec3& p = poses.positions[body];
    jac.block<3, 3>(0, 0).setIdentity();
    jac.block<3, 3>(0, 3) = -so3::hat(p - poses.positions[0]);
    jac.block<3, 3>(3, 3).setIdentity();
    std::optional<std::size_t> b = body;
    while (b && *b != 0) {
        const RobotBody& rb = model.bodies[*b];
        if (rb.joint) {
            const Vec3 axis = poses.orientations[*b] * model.joints[*rb.joint].axis;
            const Eigen::Index col = 6 + static_cast<Eigen::Index>(*rb.joint);
            jac.block<3, 1>(0, col) = axis.cross(p - poses.positions[*b]);
            jac.block<3, 1>(3, col) = axis;
        }
        b = rb.parent;
    }
    return jac;
}

inline BodyJacobian body_jacobian(const RobotModel& model, const GeneralizedCoords& q, std::size_t body) {
    return body_jacobian(model, robot_fk(model, q), body);
}

/// Vertical (Z) extent of the skeleton's rest pose, End Sites included.
inline double skeleton_height(const HumanSkeleton& skeleton) {
    if (skeleton.size() == 0) throw ValidationError("skeleton is empty");
    const HumanPoseSet rest = human_fk(skeleton, rest_frame(skeleton));
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Vec3& p : rest.positions) {
        lo = std::min(lo, p.z());
        hi = std::max(hi, p.z());
    }
    const double h = hi - lo;
    if (h <= 1e-6) throw ValidationError("degenerate skeleton height " + std::to_string(h));
    return h;
}

}  // namespace gmr
