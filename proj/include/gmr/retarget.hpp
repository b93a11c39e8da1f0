#pragma once

// Human-to-robot motion retargeting.
//
// Pipeline per frame:
//   1. key-body mapping between human joints and robot bodies (config)
//   2. rest-pose orientation alignment offsets
//   3. non-uniform local scaling of the human key-body positions
//   4. IK on orientations of all pairs plus end-effector positions
//   5. IK on orientations and positions of all pairs, warm-started from 4
// Sequences warm-start each frame from the previous solution; afterwards the
// lowest robot body over the whole motion is lifted (or lowered) to z = 0.

#include "gmr/bvh.hpp"
#include "gmr/errors.hpp"
#include "gmr/ik_solver.hpp"
#include "gmr/kinematics.hpp"
#include "gmr/robot_model.hpp"

#include <nlohmann/json.hpp>

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gmr {

struct PairWeights {
    double position = 0.0;
    double orientation = 0.0;
};

struct KeyBodyPair {
    std::string human;
    std::string robot;
    std::size_t human_index = 0;
    std::size_t robot_index = 0;
    bool end_effector = false;
    double scale = 1.0;  // s_b; ignored for the root pair
    std::optional<Mat3> rotation_offset;  // applied as R_human * offset
    Vec3 position_offset = Vec3::Zero();  // in the target body frame
    PairWeights stage1;
    PairWeights stage2;
};

inline constexpr int kConfigSchemaVersion = 1;

// Invented defaults; every value can be overridden per pair.
inline constexpr PairWeights kDefaultStage1{0.0, 1.0};
inline constexpr PairWeights kDefaultStage1EndEffector{5.0, 1.0};
inline constexpr PairWeights kDefaultStage2{10.0, 1.0};
inline constexpr PairWeights kDefaultStage2EndEffector{20.0, 1.0};

struct RetargetConfig {
    std::vector<KeyBodyPair> mapping;
    std::size_t root_pair = 0;  // mapping entry holding the human root joint
    double root_scale = 1.0;    // s_root
    double h_ref = 0.0;         // meters
    SolverParams stage1_solver;
    SolverParams stage2_solver;
    std::map<std::string, std::pair<double, double>> limit_overrides;

    std::vector<std::size_t> ee_subset() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < mapping.size(); ++i) {
            if (mapping[i].end_effector) out.push_back(i);
        }
        return out;
    }
};

/// Per-pair target position and orientation, indexed like config.mapping.
struct Target {
    Vec3 position = Vec3::Zero();
    Mat3 orientation = Mat3::Identity();
};
using TargetSet = std::vector<Target>;

struct RobotMotion {
    std::vector<GeneralizedCoords> frames;
    double frame_dt = 0.0;
};

/// Checks every invariant of `config` against the skeleton and model and
/// resolves name indices in place.
inline void validate(RetargetConfig& config, const HumanSkeleton& skeleton, const RobotModel& model) {
    if (config.mapping.empty()) throw ValidationError("config mapping is empty");
    if (!(config.h_ref > 0.0)) throw ValidationError("config h_ref must be positive");
    if (!(config.root_scale > 0.0)) throw ValidationError("config root_scale must be positive");
    validate(config.stage1_solver);
    validate(config.stage2_solver);
    std::optional<std::size_t> root;
    for (std::size_t i = 0; i < config.mapping.size(); ++i) {
        KeyBodyPair& p = config.mapping[i];
        const std::string label = "pair (" + p.human + ", " + p.robot + ")";
        auto h = skeleton.index_of(p.human);
        if (!h) throw ValidationError(label + ": unknown human joint '" + p.human + "'");
        auto r = model.body_index(p.robot);
        if (!r) throw ValidationError(label + ": unknown robot body '" + p.robot + "'");
        p.human_index = *h;
        p.robot_index = *r;
        if (!(p.scale > 0.0)) throw ValidationError(label + ": scale must be positive");
        for (double w : {p.stage1.position, p.stage1.orientation, p.stage2.position, p.stage2.orientation}) {
            if (!(w >= 0.0)) throw ValidationError(label + ": weights must be non-negative");
        }
        if (!p.end_effector && p.stage1.position != 0.0) {
            throw ValidationError(label + ": stage 1 position weight must be zero for non end-effectors");
        }
        if (p.rotation_offset && !so3::is_rotation(*p.rotation_offset, 1e-6)) {
            throw ValidationError(label + ": rotation offset is not a rotation");
        }
        if (*h == 0) root = i;
    }
    if (!root) throw ValidationError("config mapping must include the human root joint '" + skeleton.joints[0].name + "'");
    if (config.mapping[*root].robot_index != 0) {
        throw ValidationError("the human root joint must map to the robot base body '" + model.bodies[0].name + "'");
    }
    config.root_pair = *root;
}

namespace config_detail {

using nlohmann::json;

inline Vec3 vec3(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw ValidationError(what + " must be a 3-array");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline PairWeights weights(const json& j, PairWeights fallback) {
    PairWeights w = fallback;
    w.position = j.value("position", w.position);
    w.orientation = j.value("orientation", w.orientation);
    return w;
}

inline SolverParams solver(const json& j) {
    SolverParams p;
    p.dt = j.value("dt", p.dt);
    p.damping = j.value("damping", p.damping);
    p.value_change_threshold = j.value("value_change_threshold", p.value_change_threshold);
    p.max_iterations = j.value("max_iterations", p.max_iterations);
    p.line_search = j.value("line_search", p.line_search);
    p.keep_best = j.value("keep_best", p.keep_best);
    return p;
}

}  // namespace config_detail

/// Reads a retargeting config document (JSON) and validates it.
inline RetargetConfig load_config(std::string_view text, const HumanSkeleton& skeleton, const RobotModel& model) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::Syntax, 0, std::string("config JSON: ") + e.what());
    }
    RetargetConfig cfg;
    try {
        if (!doc.contains("schema_version") || doc.at("schema_version").get<int>() != kConfigSchemaVersion) {
            throw ValidationError("config: missing or unsupported schema_version");
        }
        if (!doc.contains("h_ref")) throw ValidationError("config: missing h_ref");
        cfg.h_ref = doc.at("h_ref").get<double>();
        cfg.root_scale = doc.value("root_scale", 1.0);
        if (doc.contains("stage1_solver")) cfg.stage1_solver = config_detail::solver(doc.at("stage1_solver"));
        if (doc.contains("stage2_solver")) cfg.stage2_solver = config_detail::solver(doc.at("stage2_solver"));
        if (doc.contains("limit_overrides")) {
            for (const auto& [name, range] : doc.at("limit_overrides").items()) {
                if (!range.is_array() || range.size() != 2) {
                    throw ValidationError("config: limit override for '" + name + "' must be [lower, upper]");
                }
                cfg.limit_overrides[name] = {range[0].get<double>(), range[1].get<double>()};
            }
        }
        for (const json& m : doc.at("mapping")) {
            KeyBodyPair p;
            p.human = m.at("human").get<std::string>();
            p.robot = m.at("robot").get<std::string>();
            p.end_effector = m.value("end_effector", false);
            p.scale = m.value("scale", 1.0);
            const std::string label = "pair (" + p.human + ", " + p.robot + ")";
            if (m.contains("rotation_offset_wxyz")) {
                const json& r = m.at("rotation_offset_wxyz");
                if (!r.is_array() || r.size() != 4) throw ValidationError(label + ": rotation_offset_wxyz must be a 4-array");
                Quat q(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>());
                if (q.norm() < 1e-12) throw ValidationError(label + ": zero rotation offset quaternion");
                p.rotation_offset = q.normalized().toRotationMatrix();
            }
            if (m.contains("position_offset")) p.position_offset = config_detail::vec3(m.at("position_offset"), label + " position_offset");
            p.stage1 = p.end_effector ? kDefaultStage1EndEffector : kDefaultStage1;
            p.stage2 = p.end_effector ? kDefaultStage2EndEffector : kDefaultStage2;
            if (m.contains("stage1_weights")) p.stage1 = config_detail::weights(m.at("stage1_weights"), p.stage1);
            if (m.contains("stage2_weights")) p.stage2 = config_detail::weights(m.at("stage2_weights"), p.stage2);
            cfg.mapping.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    validate(cfg, skeleton, model);
    return cfg;
}

/// Orientation offsets that map each human rest orientation onto the robot
/// rest orientation of its pair: R_human_rest * offset = R_robot_rest.
/// Offsets supplied in the config are returned unchanged.
inline std::vector<Mat3> align_rest_pose(const HumanPoseSet& human_rest, const BodyPoseSet& robot_rest,
                                         const RetargetConfig& config) {
    std::vector<Mat3> out;
    out.reserve(config.mapping.size());
    for (const KeyBodyPair& p : config.mapping) {
        if (p.rotation_offset) {
            out.push_back(*p.rotation_offset);
        } else {
            out.push_back(human_rest.orientations[p.human_index].transpose() * robot_rest.orientations[p.robot_index]);
        }
    }
    return out;
}

/// Copy of `config` with every pair's rotation offset filled in.
inline RetargetConfig with_alignment(RetargetConfig config, const std::vector<Mat3>& offsets) {
    for (std::size_t i = 0; i < config.mapping.size(); ++i) config.mapping[i].rotation_offset = offsets[i];
    return config;
}

/// Key-body targets for one human pose:
///
///   p_target = (h / h_ref) s_b (p_b - p_root) + (h / h_ref) s_root p_root
///
/// which reduces to (h / h_ref) s_root p_root for the root itself.
inline TargetSet scale_frame(const HumanPoseSet& pose, double height, const RetargetConfig& config) {
    if (!(height > 0.0)) throw ValidationError("skeleton height must be positive");
    const double ratio = height / config.h_ref;
    const double root_gain = ratio * config.root_scale;
    const Vec3& p_root = pose.positions[config.mapping[config.root_pair].human_index];
    TargetSet targets(config.mapping.size());
    for (std::size_t i = 0; i < config.mapping.size(); ++i) {
        const KeyBodyPair& p = config.mapping[i];
        const Vec3& p_body = pose.positions[p.human_index];
        Target& t = targets[i];
        const double gain = ratio * p.scale;
        if (i == config.root_pair) {
            t.position = root_gain * p_root;
        } else if (gain == root_gain) {
            // Same factor on both terms: the root cancels algebraically.
            t.position = gain * p_body;
        } else {
            t.position = gain * (p_body - p_root) + root_gain * p_root;
        }
        t.orientation = pose.orientations[p.human_index];
        if (p.rotation_offset) t.orientation = t.orientation * *p.rotation_offset;
        if (!p.position_offset.isZero()) t.position += t.orientation * p.position_offset;
    }
    return targets;
}

enum class InitMode { RootFromTarget, WarmStart };

struct FrameResult {
    GeneralizedCoords q;
    int stage1_iterations = 0;
    int stage2_iterations = 0;
    double stage1_value = 0.0;
    double stage2_value = 0.0;
};

inline std::vector<IkTask> stage_tasks(const TargetSet& targets, const RetargetConfig& config, int stage) {
    std::vector<IkTask> tasks;
    tasks.reserve(config.mapping.size());
    for (std::size_t i = 0; i < config.mapping.size(); ++i) {
        const KeyBodyPair& p = config.mapping[i];
        const PairWeights& w = stage == 1 ? p.stage1 : p.stage2;
        IkTask t;
        t.body = p.robot_index;
        t.orientation_weight = w.orientation;
        t.target_orientation = targets[i].orientation;
        if (stage == 2 || p.end_effector) {
            t.position_weight = w.position;
            t.target_position = targets[i].position;
        }
        if (t.has_position() || t.has_orientation()) tasks.push_back(std::move(t));
    }
    return tasks;
}

/// Two-stage IK for a single frame. `model` is used as given (limit overrides
/// must already be applied).
inline FrameResult retarget_frame(const TargetSet& targets, const RetargetConfig& config, const RobotModel& model,
                                  const GeneralizedCoords& q_init, InitMode init_mode) {
    if (targets.size() != config.mapping.size()) throw ValidationError("target set does not match the mapping");
    GeneralizedCoords q = q_init;
    if (init_mode == InitMode::RootFromTarget) {
        const Target& root = targets[config.root_pair];
        const double previous = so3::yaw_of(q_init.root_orientation.normalized().toRotationMatrix());
        const double yaw = so3::yaw_of(root.orientation, previous);
        q.root_position = root.position;
        q.root_orientation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
    }
    FrameResult out;
    const std::vector<IkTask> tasks1 = stage_tasks(targets, config, 1);
    ConvergenceResult s1 = solve_to_convergence(model, q, tasks1, config.stage1_solver);
    const std::vector<IkTask> tasks2 = stage_tasks(targets, config, 2);
    ConvergenceResult s2 = solve_to_convergence(model, s1.q, tasks2, config.stage2_solver);
    out.q = std::move(s2.q);
    out.stage1_iterations = s1.iterations;
    out.stage2_iterations = s2.iterations;
    out.stage1_value = s1.value;
    out.stage2_value = s2.value;
    return out;
}

/// Shifts every frame's root height by the lowest body height over the whole
/// motion, so that the new minimum is at z = 0.
inline RobotMotion height_normalize(const RobotMotion& motion, const RobotModel& model) {
    if (motion.frames.empty()) throw ValidationError("cannot height-normalize an empty motion");
    double lowest = std::numeric_limits<double>::infinity();
    for (const GeneralizedCoords& q : motion.frames) {
        for (const Vec3& p : robot_fk(model, q).positions) lowest = std::min(lowest, p.z());
    }
    RobotMotion out = motion;
    if (lowest == 0.0) return out;
    for (GeneralizedCoords& q : out.frames) q.root_position.z() -= lowest;
    return out;
}

struct SequenceStats {
    std::vector<int> stage1_iterations;
    std::vector<int> stage2_iterations;
};

/// Retargets a whole motion. Frame 0 initializes the root from its target;
/// later frames warm-start from the previous solution. Limit overrides from
/// the config are applied to `model` first.
inline RobotMotion retarget_sequence(const HumanSkeleton& skeleton, const HumanMotion& motion,
                                     const RetargetConfig& config, const RobotModel& model,
                                     SequenceStats* stats = nullptr) {
    if (motion.frames.empty()) throw ValidationError("motion has no frames");
    const RobotModel robot = tighten_limits(model, config.limit_overrides);
    const double height = skeleton_height(skeleton);
    const GeneralizedCoords rest = default_coords(robot);
    const RetargetConfig aligned = with_alignment(
        config, align_rest_pose(human_fk(skeleton, rest_frame(skeleton)), robot_fk(robot, rest), config));

    RobotMotion out;
    out.frame_dt = motion.frame_dt;
    out.frames.reserve(motion.frames.size());
    if (stats) {
        stats->stage1_iterations.clear();
        stats->stage2_iterations.clear();
    }
    GeneralizedCoords q = rest;
    for (std::size_t f = 0; f < motion.frames.size(); ++f) {
        const TargetSet targets = scale_frame(human_fk(skeleton, motion.frames[f]), height, aligned);
        FrameResult r;
        try {
            r = retarget_frame(targets, aligned, robot, q, f == 0 ? InitMode::RootFromTarget : InitMode::WarmStart);
        } catch (const SolverError& e) {
            throw SolverError("frame " + std::to_string(f) + ": " + e.what(), e.residual(), static_cast<long>(f));
        }
        q = r.q;
        out.frames.push_back(std::move(r.q));
        if (stats) {
            stats->stage1_iterations.push_back(r.stage1_iterations);
            stats->stage2_iterations.push_back(r.stage2_iterations);
        }
    }
    return height_normalize(out, robot);
}

}  // namespace gmr
