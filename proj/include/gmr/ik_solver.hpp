#pragma once

// Box-constrained differential inverse kinematics.
//
// Tasks ask a robot body to reach a target position and/or orientation. At a
// configuration q the stacked task error e(q) and its Jacobian J satisfy
//
//   e(q (+) d) ~= e(q) + J d
//
// for a tangent displacement d = qdot * dt (base linear velocity, base
// world-frame angular velocity, joint rates). One differential step solves
//
//   min_qdot  || e + J qdot dt ||_W^2 + damping || qdot dt ||^2
//   s.t.      (q- - q) / dt <= qdot_joint <= (q+ - q) / dt
//
// and integration moves q by qdot * dt.

#include "gmr/box_qp.hpp"
#include "gmr/errors.hpp"
#include "gmr/kinematics.hpp"
#include "gmr/robot_model.hpp"
#include "gmr/so3.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gmr {

struct IkTask {
    std::size_t body = 0;
    std::optional<Vec3> target_position;
    std::optional<Mat3> target_orientation;
    double position_weight = 0.0;
    double orientation_weight = 0.0;

    bool has_position() const { return target_position && position_weight > 0.0; }
    bool has_orientation() const { return target_orientation && orientation_weight > 0.0; }
};

struct SolverParams {
    double dt = 0.1;
    double damping = 1e-6;
    double value_change_threshold = 1e-3;
    int max_iterations = 10;
    /// Halve a step that would increase the objective (up to 10 times).
    bool line_search = true;
    /// Return the lowest-value iterate instead of the last one.
    bool keep_best = false;
};

inline void validate(const SolverParams& p) {
    if (!(p.dt > 0.0)) throw ValidationError("solver dt must be positive");
    if (!(p.damping >= 0.0)) throw ValidationError("solver damping must be non-negative");
    if (p.max_iterations < 1) throw ValidationError("solver max_iterations must be at least 1");
    if (!(p.value_change_threshold >= 0.0)) throw ValidationError("solver value_change_threshold must be >= 0");
}

struct StackedTasks {
    Eigen::VectorXd error;
    Eigen::MatrixXd jacobian;  // rows x tangent_dim
    Eigen::VectorXd weights;   // diagonal of W

    /// Weighted squared error e' W e.
    double value() const { return error.dot(weights.cwiseProduct(error)); }
};

namespace ik_detail {

inline std::size_t row_count(std::span<const IkTask> tasks) {
    std::size_t rows = 0;
    for (const IkTask& t : tasks) rows += (t.has_position() ? 3 : 0) + (t.has_orientation() ? 3 : 0);
    return rows;
}

inline void check_tasks(const RobotModel& model, std::span<const IkTask> tasks) {
    for (const IkTask& t : tasks) {
        if (t.body >= model.bodies.size()) throw ValidationError("IK task references body index out of range");
        if (t.position_weight < 0.0 || t.orientation_weight < 0.0) throw ValidationError("IK task weight is negative");
    }
}

}  // namespace ik_detail

/// Position rows hold p_target - p_body; orientation rows hold
/// rot_minus(R_body, R_target), the body-frame rotation still needed to reach
/// the target.
inline StackedTasks stack_tasks(const RobotModel& model, const GeneralizedCoords& q, std::span<const IkTask> tasks) {
    ik_detail::check_tasks(model, tasks);
    const BodyPoseSet poses = robot_fk(model, q);
    const auto rows = static_cast<Eigen::Index>(ik_detail::row_count(tasks));
    const auto cols = static_cast<Eigen::Index>(model.tangent_dim());
    StackedTasks st;
    st.error.resize(rows);
    st.jacobian.resize(rows, cols);
    st.weights.resize(rows);
    Eigen::Index r = 0;
    for (const IkTask& t : tasks) {
        if (!t.has_position() && !t.has_orientation()) continue;
        const BodyJacobian jac = body_jacobian(model, poses, t.body);
        if (t.has_position()) {
            st.error.segment<3>(r) = *t.target_position - poses.positions[t.body];
            st.jacobian.middleRows(r, 3) = -jac.topRows<3>();
            st.weights.segment<3>(r).setConstant(t.position_weight);
            r += 3;
        }
        if (t.has_orientation()) {
            const Mat3& rb = poses.orientations[t.body];
            const Vec3 e = rot_minus(rb, *t.target_orientation);
            st.error.segment<3>(r) = e;
            st.jacobian.middleRows(r, 3) = -(so3::left_jacobian_inverse(e) * rb.transpose()) * jac.bottomRows<3>();
            st.weights.segment<3>(r).setConstant(t.orientation_weight);
            r += 3;
        }
    }
    return st;
}

/// Objective value at q without building Jacobians.
inline double task_value(const RobotModel& model, const GeneralizedCoords& q, std::span<const IkTask> tasks) {
    const BodyPoseSet poses = robot_fk(model, q);
    double v = 0.0;
    for (const IkTask& t : tasks) {
        if (t.has_position()) v += t.position_weight * (*t.target_position - poses.positions[t.body]).squaredNorm();
        if (t.has_orientation()) {
            v += t.orientation_weight * rot_minus(poses.orientations[t.body], *t.target_orientation).squaredNorm();
        }
    }
    return v;
}

/// Velocity bounds (q- - q)/dt, (q+ - q)/dt on joints, unbounded on the base.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> velocity_bounds(const RobotModel& model, const GeneralizedCoords& q,
                                                                   double dt) {
    const auto n = static_cast<Eigen::Index>(model.tangent_dim());
    constexpr double inf = std::numeric_limits<double>::infinity();
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -inf);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, inf);
    for (std::size_t j = 0; j < model.joint_count(); ++j) {
        const auto i = static_cast<Eigen::Index>(j);
        lo(6 + i) = (model.joints[j].lower - q.joint_values(i)) / dt;
        hi(6 + i) = (model.joints[j].upper - q.joint_values(i)) / dt;
    }
    return {lo, hi};
}

/// Box-QP for one differential step on an already stacked problem.
inline Eigen::VectorXd solve_step(const RobotModel& model, const GeneralizedCoords& q, const StackedTasks& st,
                                  const SolverParams& params) {
    const auto n = static_cast<Eigen::Index>(model.tangent_dim());
    const double dt = params.dt;
    // Work in displacement d = qdot dt so the Hessian stays independent of dt.
    const Eigen::MatrixXd wj = st.weights.asDiagonal() * st.jacobian;
    Eigen::MatrixXd h = st.jacobian.transpose() * wj;
    h.diagonal().array() += params.damping;
    const Eigen::VectorXd g = wj.transpose() * st.error;

    constexpr double inf = std::numeric_limits<double>::infinity();
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -inf);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, inf);
    for (std::size_t j = 0; j < model.joint_count(); ++j) {
        const auto i = static_cast<Eigen::Index>(j);
        lo(6 + i) = model.joints[j].lower - q.joint_values(i);
        hi(6 + i) = model.joints[j].upper - q.joint_values(i);
    }
    if (params.damping == 0.0) {
        // Keep the Hessian definite for rank-deficient Jacobians.
        h.diagonal().array() += 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
    }
    BoxQpResult qp = solve_box_qp(h, g, lo, hi);
    if (!qp.converged) {
        throw SolverError("box QP did not converge after " + std::to_string(qp.iterations) +
                              " iterations (KKT residual " + std::to_string(qp.kkt_residual) + ")",
                          qp.kkt_residual);
    }
    return qp.x / dt;
}

inline Eigen::VectorXd solve_step(const RobotModel& model, const GeneralizedCoords& q, std::span<const IkTask> tasks,
                                  const SolverParams& params) {
    return solve_step(model, q, stack_tasks(model, q, tasks), params);
}

/// Moves q along qdot for dt. Joint values are clamped to their limits and
/// the root quaternion is re-normalized.
inline GeneralizedCoords integrate(const RobotModel& model, const GeneralizedCoords& q, const Eigen::VectorXd& qdot,
                                   double dt) {
    GeneralizedCoords out = q;
    out.root_position += qdot.head<3>() * dt;
    const Mat3 r = so3::exp(qdot.segment<3>(3) * dt) * q.root_orientation.normalized().toRotationMatrix();
    out.root_orientation = Quat(r).normalized();
    for (std::size_t j = 0; j < model.joint_count(); ++j) {
        const auto i = static_cast<Eigen::Index>(j);
        out.joint_values(i) =
            std::clamp(q.joint_values(i) + qdot(6 + i) * dt, model.joints[j].lower, model.joints[j].upper);
    }
    return out;
}

struct ConvergenceResult {
    GeneralizedCoords q;
    int iterations = 0;
    double value = 0.0;
};

/// Repeats solve_step + integrate until the objective changes by less than
/// `value_change_threshold` or `max_iterations` steps have been taken.
inline ConvergenceResult solve_to_convergence(const RobotModel& model, const GeneralizedCoords& q0,
                                              std::span<const IkTask> tasks, const SolverParams& params) {
    validate(params);
    ConvergenceResult res{q0, 0, task_value(model, q0, tasks)};
    GeneralizedCoords best = q0;
    double best_value = res.value;
    for (int it = 1; it <= params.max_iterations; ++it) {
        const Eigen::VectorXd qdot = solve_step(model, res.q, tasks, params);
        GeneralizedCoords next = integrate(model, res.q, qdot, params.dt);
        double value = task_value(model, next, tasks);
        if (params.line_search && value > res.value) {
            double alpha = 1.0;
            bool improved = false;
            for (int k = 0; k < 10 && !improved; ++k) {
                alpha *= 0.5;
                GeneralizedCoords trial = integrate(model, res.q, qdot * alpha, params.dt);
                const double v = task_value(model, trial, tasks);
                if (v <= res.value) {
                    next = std::move(trial);
                    value = v;
                    improved = true;
                }
            }
            if (!improved) {
                next = res.q;
                value = res.value;
            }
        }
        const double change = std::abs(value - res.value);
        res.q = std::move(next);
        res.value = value;
        res.iterations = it;
        if (value < best_value) {
            best_value = value;
            best = res.q;
        }
        if (change < params.value_change_threshold) break;
    }
    if (params.keep_best && best_value < res.value) {
        res.q = std::move(best);
        res.value = best_value;
    }
    return res;
}

}  // namespace gmr
