#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace gmr;
using gmr::testing::axis_angle;

namespace {

IkTask position_task(std::size_t body, const Vec3& target, double weight = 1.0) {
    IkTask t;
    t.body = body;
    t.target_position = target;
    t.position_weight = weight;
    return t;
}

IkTask orientation_task(std::size_t body, const Mat3& target, double weight = 1.0) {
    IkTask t;
    t.body = body;
    t.target_orientation = target;
    t.orientation_weight = weight;
    return t;
}

Vec3 tip_position(const RobotModel& m, const GeneralizedCoords& q) {
    return gmr::testing::naive_fk(m, q).back().topRightCorner<3, 1>();
}

/// Analytic planar IK: the wrist (last joint) is placed one link back from the
/// target along heading `phi`, then the first two links solve the classic
/// two-link problem for the wrist point.
std::optional<Eigen::Vector3d> planar_three_link_ik(const Vec3& target, double phi) {
    const double wx = target.x() - std::cos(phi);
    const double wy = target.y() - std::sin(phi);
    const double c2 = (wx * wx + wy * wy - 2.0) / 2.0;
    if (std::abs(c2) > 1.0) return std::nullopt;
    const double q2 = std::acos(c2);
    const double q1 = std::atan2(wy, wx) - std::atan2(std::sin(q2), 1.0 + std::cos(q2));
    const double q3 = std::remainder(phi - q1 - q2, 2.0 * std::numbers::pi);
    return Eigen::Vector3d(q1, q2, q3);
}

}  // namespace

TEST(StackTasks, SatisfiedPositionTaskHasZeroError) {
    const RobotModel m = gmr::testing::planar_arm();
    const GeneralizedCoords q = default_coords(m);
    const std::vector<IkTask> tasks{position_task(4, Vec3(3, 0, 0))};
    const StackedTasks st = stack_tasks(m, q, tasks);
    EXPECT_EQ(st.error, Eigen::VectorXd::Zero(3));
    EXPECT_EQ(st.jacobian.rows(), 3);
    EXPECT_EQ(st.jacobian.cols(), 9);
}

TEST(StackTasks, WeightsOnTheirRows) {
    const RobotModel m = gmr::testing::planar_arm();
    const std::vector<IkTask> tasks{position_task(2, Vec3(1, 1, 0), 1.0), position_task(3, Vec3(0, 1, 0), 4.0)};
    const StackedTasks st = stack_tasks(m, default_coords(m), tasks);
    Eigen::VectorXd expected(6);
    expected << 1, 1, 1, 4, 4, 4;
    EXPECT_EQ(st.weights, expected);
}

TEST(StackTasks, OrientationErrorAboutX) {
    const RobotModel m = gmr::testing::planar_arm();
    GeneralizedCoords q = default_coords(m);
    q.root_orientation = Quat(axis_angle(Vec3(0.2, -0.5, 1), 0.8));
    const Mat3 current = robot_fk(m, q).orientations[2];
    // Target is the current orientation rotated by 0.2 rad about +X in the body frame.
    const std::vector<IkTask> tasks{orientation_task(2, current * axis_angle(Vec3::UnitX(), 0.2))};
    const StackedTasks st = stack_tasks(m, q, tasks);
    EXPECT_NEAR(st.error(0), 0.2, 1e-14);
    EXPECT_NEAR(st.error(1), 0.0, 1e-14);
    EXPECT_NEAR(st.error(2), 0.0, 1e-14);
}

TEST(StackTasks, LinearizationPredictsErrorChange) {
    // e(q (+) d) ~= e(q) + J d, checked with the independent perturbation.
    std::mt19937_64 rng(41);
    for (int t = 0; t < 50; ++t) {
        const RobotModel m = gmr::testing::random_tree(rng);
        const GeneralizedCoords q = gmr::testing::random_coords(m, rng);
        const std::size_t body = m.bodies.size() - 1;
        const std::vector<IkTask> tasks{position_task(body, gmr::testing::random_vec(rng), 2.0),
                                        orientation_task(body, gmr::testing::random_rotation(rng), 3.0)};
        const StackedTasks st = stack_tasks(m, q, tasks);
        const Eigen::Index n = static_cast<Eigen::Index>(m.tangent_dim());
        Eigen::VectorXd dir(n);
        for (Eigen::Index i = 0; i < n; ++i) dir(i) = gmr::testing::uniform(rng, -1, 1);
        if (st.error.tail<3>().norm() > 3.0) continue;  // log is not smooth near pi
        const double h = 1e-6;
        const Eigen::VectorXd ep = stack_tasks(m, gmr::testing::perturb(q, dir * h), tasks).error;
        const Eigen::VectorXd em = stack_tasks(m, gmr::testing::perturb(q, -dir * h), tasks).error;
        EXPECT_LT(((ep - em) / (2 * h) - st.jacobian * dir).cwiseAbs().maxCoeff(), 1e-5);
    }
}

TEST(StackTasks, ValueIsWeightedSquaredError) {
    const RobotModel m = gmr::testing::planar_arm();
    const std::vector<IkTask> tasks{position_task(4, Vec3(1, 1, 0), 2.0),
                                    orientation_task(4, axis_angle(Vec3::UnitZ(), 0.5), 3.0)};
    const StackedTasks st = stack_tasks(m, default_coords(m), tasks);
    const double expected = 2.0 * (Vec3(1, 1, 0) - Vec3(3, 0, 0)).squaredNorm() + 3.0 * 0.25;
    EXPECT_NEAR(st.value(), expected, 1e-14);
    EXPECT_NEAR(task_value(m, default_coords(m), tasks), expected, 1e-14);
}

TEST(StackTasks, UnknownBodyRejected) {
    const RobotModel m = gmr::testing::planar_arm();
    const std::vector<IkTask> tasks{position_task(99, Vec3::Zero())};
    EXPECT_THROW(stack_tasks(m, default_coords(m), tasks), ValidationError);
}

TEST(SolveStep, ZeroErrorGivesZeroVelocity) {
    const RobotModel m = gmr::testing::planar_arm();
    const std::vector<IkTask> tasks{position_task(4, Vec3(3, 0, 0)), gmr::testing::pin_base()};
    const Eigen::VectorXd qdot = solve_step(m, default_coords(m), tasks, SolverParams{});
    EXPECT_EQ(qdot, Eigen::VectorXd::Zero(9));
}

TEST(SolveStep, MatchesWeightedPseudoInverse) {
    std::mt19937_64 rng(42);
    for (int t = 0; t < 50; ++t) {
        RobotModel m = gmr::testing::random_tree(rng);
        for (RobotJoint& j : m.joints) {
            j.lower = -1e6;
            j.upper = 1e6;
        }
        const GeneralizedCoords q = gmr::testing::random_coords(m, rng, 1e-6);
        const std::size_t body = m.bodies.size() - 1;
        const Vec3 target = robot_fk(m, q).positions[body] + gmr::testing::random_vec(rng, 0.1);
        const double w = gmr::testing::uniform(rng, 0.5, 5.0);
        const std::vector<IkTask> tasks{position_task(body, target, w)};
        SolverParams p;
        p.damping = 1e-9;
        p.dt = gmr::testing::uniform(rng, 0.05, 1.0);
        const Eigen::VectorXd qdot = solve_step(m, q, tasks, p);
        // Oracle: finite-difference Jacobian and SVD pseudo-inverse.
        const Eigen::MatrixXd jlin = -gmr::testing::finite_difference_jacobian(m, q, body).topRows(3);
        const Eigen::Vector3d e = target - robot_fk(m, q).positions[body];
        const Eigen::MatrixXd sw = std::sqrt(w) * Eigen::MatrixXd::Identity(3, 3);
        const Eigen::VectorXd oracle =
            -(sw * jlin).completeOrthogonalDecomposition().pseudoInverse() * (sw * e) / p.dt;
        EXPECT_LT((qdot - oracle).norm(), 1e-6) << "instance " << t;
    }
}

TEST(SolveStep, BindingUpperBoundIsExact) {
    // 2-DoF arm with a soft-pinned base. Reaching the target needs joint 0 to
    // pass its upper limit within one step.
    RobotModel m = gmr::testing::planar_arm(2);
    m.joints[0].lower = -0.5;
    m.joints[0].upper = 0.3;
    GeneralizedCoords q = default_coords(m);
    q.joint_values << 0.1, 0.4;
    SolverParams p;
    p.dt = 1.0;
    p.damping = 0.2;
    const std::vector<IkTask> tasks{position_task(3, Vec3(std::cos(1.2) * 1.9, std::sin(1.2) * 1.9, 0), 1.0),
                                    gmr::testing::pin_base(1.0)};
    const Eigen::VectorXd qdot = solve_step(m, q, tasks, p);
    EXPECT_EQ(qdot(6), (m.joints[0].upper - q.joint_values(0)) / p.dt);
    const StackedTasks st = stack_tasks(m, q, tasks);
    const auto [lo, hi] = velocity_bounds(m, q, p.dt);
    const Eigen::VectorXd oracle = gmr::testing::projected_gradient_step(st, p.dt, p.damping, lo, hi);
    EXPECT_EQ(oracle(6), hi(6));
    EXPECT_LT((qdot - oracle).norm(), 1e-5);
    // The unconstrained solution would have gone past the bound.
    const auto inf = Eigen::VectorXd::Constant(9, std::numeric_limits<double>::infinity());
    EXPECT_GT(gmr::testing::projected_gradient_step(st, p.dt, p.damping, -inf, inf)(6), hi(6));
}

TEST(SolveStep, MatchesProjectedGradientOracle) {
    std::mt19937_64 rng(43);
    int binding = 0;
    for (int t = 0; t < 40; ++t) {
        RobotModel m = gmr::testing::random_tree(rng, 2);
        const GeneralizedCoords q = gmr::testing::random_coords(m, rng, 0.9);
        std::vector<IkTask> tasks;
        for (std::size_t b = 0; b < m.bodies.size(); ++b) {
            IkTask task;
            task.body = b;
            task.target_position = robot_fk(m, q).positions[b] + gmr::testing::random_vec(rng, 0.5);
            task.target_orientation = axis_angle(gmr::testing::random_unit(rng), gmr::testing::uniform(rng, 0, 1)) *
                                      robot_fk(m, q).orientations[b];
            task.position_weight = gmr::testing::uniform(rng, 0.5, 2.0);
            task.orientation_weight = gmr::testing::uniform(rng, 0.5, 2.0);
            tasks.push_back(task);
        }
        SolverParams p;
        p.dt = 1.0;
        p.damping = gmr::testing::uniform(rng, 0.2, 1.0);
        const Eigen::VectorXd qdot = solve_step(m, q, tasks, p);
        const StackedTasks st = stack_tasks(m, q, tasks);
        const auto [lo, hi] = velocity_bounds(m, q, p.dt);
        const Eigen::VectorXd oracle = gmr::testing::projected_gradient_step(st, p.dt, p.damping, lo, hi);
        EXPECT_LT((qdot - oracle).norm(), 1e-5) << "instance " << t;
        for (Eigen::Index i = 6; i < qdot.size(); ++i) binding += (qdot(i) == lo(i) || qdot(i) == hi(i));
    }
    EXPECT_GT(binding, 0);
}

TEST(SolveStep, KktStationarity) {
    std::mt19937_64 rng(44);
    const RobotModel m = gmr::testing::load_g1_like();
    for (int t = 0; t < 20; ++t) {
        const GeneralizedCoords q = gmr::testing::random_coords(m, rng);
        std::vector<IkTask> tasks;
        for (std::size_t b = 0; b < m.bodies.size(); b += 3) {
            tasks.push_back(position_task(b, gmr::testing::random_vec(rng, 1.0), 10.0));
            tasks.push_back(orientation_task(b, gmr::testing::random_rotation(rng), 1.0));
        }
        const SolverParams p;
        const Eigen::VectorXd qdot = solve_step(m, q, tasks, p);
        const StackedTasks st = stack_tasks(m, q, tasks);
        // Objective in qdot: || e + J qdot dt ||_W^2 + damping || qdot dt ||^2.
        const Eigen::MatrixXd wj = st.weights.asDiagonal() * st.jacobian;
        Eigen::MatrixXd h = p.dt * p.dt * (st.jacobian.transpose() * wj);
        h.diagonal().array() += p.damping * p.dt * p.dt;
        const Eigen::VectorXd g = p.dt * (wj.transpose() * st.error);
        const auto [lo, hi] = velocity_bounds(m, q, p.dt);
        const Eigen::VectorXd grad = h * qdot + g;
        for (Eigen::Index i = 0; i < qdot.size(); ++i) {
            EXPECT_GE(qdot(i), lo(i));
            EXPECT_LE(qdot(i), hi(i));
            if (qdot(i) > lo(i) && qdot(i) < hi(i)) {
                EXPECT_LT(std::abs(grad(i)), 1e-8 * std::max(1.0, g.cwiseAbs().maxCoeff()));
            } else if (qdot(i) == lo(i)) {
                EXPECT_GT(grad(i), -1e-8 * std::max(1.0, g.cwiseAbs().maxCoeff()));
            } else {
                EXPECT_LT(grad(i), 1e-8 * std::max(1.0, g.cwiseAbs().maxCoeff()));
            }
        }
    }
}

TEST(SolveStep, DeterministicBitForBit) {
    const RobotModel m = gmr::testing::load_g1_like();
    std::mt19937_64 rng(45);
    const GeneralizedCoords q = gmr::testing::random_coords(m, rng);
    std::vector<IkTask> tasks;
    for (std::size_t b = 1; b < m.bodies.size(); b += 2) tasks.push_back(position_task(b, gmr::testing::random_vec(rng)));
    const Eigen::VectorXd a = solve_step(m, q, tasks, SolverParams{});
    const Eigen::VectorXd b = solve_step(m, q, tasks, SolverParams{});
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())), 0);
}

TEST(Integrate, ZeroVelocityKeepsCoordinates) {
    const RobotModel m = gmr::testing::planar_arm();
    GeneralizedCoords q = default_coords(m);
    q.root_position = Vec3(1, 2, 3);
    q.joint_values << 0.1, -0.2, 0.3;
    const GeneralizedCoords out = integrate(m, q, Eigen::VectorXd::Zero(9), 0.1);
    EXPECT_EQ(out.root_position, q.root_position);
    EXPECT_EQ(out.joint_values, q.joint_values);
    EXPECT_EQ(out.root_orientation.coeffs(), q.root_orientation.coeffs());
}

TEST(Integrate, AngularVelocityQuarterTurn) {
    const RobotModel m = gmr::testing::planar_arm();
    Eigen::VectorXd qdot = Eigen::VectorXd::Zero(9);
    qdot(5) = std::numbers::pi / 2;
    const GeneralizedCoords out = integrate(m, default_coords(m), qdot, 1.0);
    EXPECT_LT((out.root_orientation.toRotationMatrix() - axis_angle(Vec3::UnitZ(), std::numbers::pi / 2)).norm(),
              1e-15);
    EXPECT_NEAR(out.root_orientation.norm(), 1.0, 1e-15);
}

TEST(Integrate, AngularVelocityIsWorldFrame) {
    const RobotModel m = gmr::testing::planar_arm();
    GeneralizedCoords q = default_coords(m);
    const Mat3 r0 = axis_angle(Vec3(1, 0, 1), 0.7);
    q.root_orientation = Quat(r0);
    Eigen::VectorXd qdot = Eigen::VectorXd::Zero(9);
    qdot.segment<3>(3) = Vec3(0.1, 0.2, -0.3);
    const GeneralizedCoords out = integrate(m, q, qdot, 0.5);
    const Mat3 expected = axis_angle(Vec3(0.1, 0.2, -0.3), 0.5 * Vec3(0.1, 0.2, -0.3).norm()) * r0;
    EXPECT_LT((out.root_orientation.toRotationMatrix() - expected).norm(), 1e-14);
}

TEST(Integrate, JointAtUpperLimitStays) {
    const RobotModel m = gmr::testing::planar_arm();
    GeneralizedCoords q = default_coords(m);
    q.joint_values(0) = m.joints[0].upper;
    // Target requires turning joint 0 further positive.
    const std::vector<IkTask> tasks{position_task(4, Vec3(-1, 1, 0)), gmr::testing::pin_base()};
    const Eigen::VectorXd qdot = solve_step(m, q, tasks, SolverParams{});
    EXPECT_LE(qdot(6), 0.0);
    const GeneralizedCoords out = integrate(m, q, qdot, 0.1);
    EXPECT_LE(out.joint_values(0), m.joints[0].upper);
    Eigen::VectorXd push = Eigen::VectorXd::Zero(9);
    push(6) = 5.0;
    EXPECT_EQ(integrate(m, q, push, 0.1).joint_values(0), m.joints[0].upper);
}

TEST(Convergence, AlreadyOptimalStopsAfterOneIteration) {
    const RobotModel m = gmr::testing::planar_arm();
    const std::vector<IkTask> tasks{position_task(4, Vec3(3, 0, 0)), gmr::testing::pin_base()};
    const ConvergenceResult r = solve_to_convergence(m, default_coords(m), tasks, SolverParams{});
    EXPECT_EQ(r.iterations, 1);
    EXPECT_EQ(r.value, 0.0);
}

TEST(Convergence, PlanarArmReachesRadius1p5) {
    const RobotModel m = gmr::testing::planar_arm();
    // Targets in front of the bent start pose; behind it the arm jams into
    // its limits, which is a local-minimum case rather than a reach test.
    for (double angle : {0.0, 0.7, 1.5, -1.0, -1.5}) {
        const Vec3 target(1.5 * std::cos(angle), 1.5 * std::sin(angle), 0.0);
        // Oracle: an exact in-limit solution exists.
        std::optional<Eigen::Vector3d> analytic;
        for (int k = 0; k <= 60 && !analytic; ++k) {
            const auto cand = planar_three_link_ik(target, angle + 0.1 * (k % 2 == 0 ? k / 2 : -(k + 1) / 2));
            if (cand && (cand->array().abs() < 3.0).all()) analytic = cand;
        }
        ASSERT_TRUE(analytic);
        GeneralizedCoords qa = default_coords(m);
        qa.joint_values = *analytic;
        ASSERT_LT((tip_position(m, qa) - target).norm(), 1e-12);
        ASSERT_TRUE((qa.joint_values.array().abs() < 3.0).all());

        GeneralizedCoords q0 = default_coords(m);
        q0.joint_values << 0.3, 0.3, 0.3;
        const std::vector<IkTask> tasks{position_task(4, target), gmr::testing::pin_base()};
        const ConvergenceResult r = solve_to_convergence(m, q0, tasks, SolverParams{});
        EXPECT_LT((tip_position(m, r.q) - target).norm(), 1e-3) << "angle " << angle;
        EXPECT_LE(r.iterations, 10);
    }
}

TEST(Convergence, UnreachableTargetUsesAllIterations) {
    // Directions the arm can stretch toward without folding into a limit: the
    // floating base keeps creeping toward the target, so the value never settles.
    const RobotModel m = gmr::testing::planar_arm();
    for (double angle : {0.0, 0.7, 2.0, -0.5, -1.75}) {
        GeneralizedCoords q0 = default_coords(m);
        q0.joint_values << 0.3, 0.3, 0.3;
        const std::vector<IkTask> tasks{position_task(4, Vec3(10 * std::cos(angle), 10 * std::sin(angle), 0)),
                                        gmr::testing::pin_base()};
        const ConvergenceResult r = solve_to_convergence(m, q0, tasks, SolverParams{});
        EXPECT_EQ(r.iterations, 10) << "angle " << angle;
        EXPECT_GT(r.value, 40.0);
    }
}

TEST(Convergence, LimitJammedArmMaySettleEarly) {
    // Target behind the arm: joints run into their limits and the value
    // change drops below threshold before the budget is spent.
    const RobotModel m = gmr::testing::planar_arm();
    GeneralizedCoords q0 = default_coords(m);
    q0.joint_values << 0.3, 0.3, 0.3;
    const std::vector<IkTask> tasks{position_task(4, Vec3(10 * std::cos(-2.25), 10 * std::sin(-2.25), 0)),
                                    gmr::testing::pin_base()};
    const ConvergenceResult r = solve_to_convergence(m, q0, tasks, SolverParams{});
    EXPECT_LT(r.iterations, 10);
    EXPECT_EQ(r.q.joint_values(1), m.joints[1].upper);
}

TEST(Convergence, DescentAndFeasibility) {
    // Running k iterations is a prefix of running k + 1, so the sequence of
    // values can be read off one budget at a time.
    const RobotModel m = gmr::testing::load_g1_like();
    std::mt19937_64 rng(46);
    for (int t = 0; t < 10; ++t) {
        const GeneralizedCoords q0 = gmr::testing::random_coords(m, rng, 0.5);
        std::vector<IkTask> tasks;
        const GeneralizedCoords qs = gmr::testing::random_coords(m, rng, 0.5);
        const BodyPoseSet target = robot_fk(m, qs);
        for (std::size_t b = 0; b < m.bodies.size(); b += 2) {
            IkTask task;
            task.body = b;
            task.target_position = target.positions[b];
            task.target_orientation = target.orientations[b];
            task.position_weight = 10.0;
            task.orientation_weight = 1.0;
            tasks.push_back(task);
        }
        double previous = task_value(m, q0, tasks);
        SolverParams p;
        p.value_change_threshold = 0.0;
        for (int k = 1; k <= 10; ++k) {
            p.max_iterations = k;
            const ConvergenceResult r = solve_to_convergence(m, q0, tasks, p);
            EXPECT_LE(r.value, previous + 1e-12) << "iteration " << k;
            previous = r.value;
            for (std::size_t j = 0; j < m.joint_count(); ++j) {
                EXPECT_GE(r.q.joint_values(static_cast<Eigen::Index>(j)), m.joints[j].lower);
                EXPECT_LE(r.q.joint_values(static_cast<Eigen::Index>(j)), m.joints[j].upper);
            }
            EXPECT_NEAR(r.q.root_orientation.norm(), 1.0, 1e-9);
        }
    }
}

TEST(Convergence, KeepBestNeverWorse) {
    const RobotModel m = gmr::testing::planar_arm();
    GeneralizedCoords q0 = default_coords(m);
    q0.joint_values << 0.3, 0.3, 0.3;
    const std::vector<IkTask> tasks{position_task(4, Vec3(0, 10, 0)), gmr::testing::pin_base()};
    SolverParams p;
    p.line_search = false;
    p.keep_best = true;
    const ConvergenceResult best = solve_to_convergence(m, q0, tasks, p);
    EXPECT_LE(best.value, task_value(m, q0, tasks));
    EXPECT_NEAR(best.value, task_value(m, best.q, tasks), 1e-12);
}

TEST(Convergence, InvalidParamsRejected) {
    const RobotModel m = gmr::testing::planar_arm();
    const std::vector<IkTask> tasks{gmr::testing::pin_base()};
    SolverParams p;
    p.dt = 0.0;
    EXPECT_THROW(solve_to_convergence(m, default_coords(m), tasks, p), ValidationError);
    p = SolverParams{};
    p.max_iterations = 0;
    EXPECT_THROW(solve_to_convergence(m, default_coords(m), tasks, p), ValidationError);
}

TEST(Convergence, DefaultConstants) {
    const SolverParams p;
    EXPECT_EQ(p.value_change_threshold, 0.001);
    EXPECT_EQ(p.max_iterations, 10);
    EXPECT_EQ(p.dt, 0.1);
    EXPECT_EQ(p.damping, 1e-6);
    EXPECT_FALSE(p.keep_best);
}
