#pragma once

// Motion quality analysis: tracking errors between two robot motions and
// detectors for common retargeting artifacts (ground penetration, limb
// self-intersection, joint velocity spikes, foot sliding).

#include "gmr/errors.hpp"
#include "gmr/kinematics.hpp"
#include "gmr/retarget.hpp"
#include "gmr/robot_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gmr {

struct Capsule {
    std::string body;
    std::size_t body_index = 0;
    Vec3 a = Vec3::Zero();  // segment endpoints in the body frame
    Vec3 b = Vec3::Zero();
    double radius = 0.0;
};

struct DetectorThresholds {
    double penetration_eps = 0.005;  // m
    double contact_height = 0.05;    // m
    double slide_speed = 0.2;        // m/s
    double spike_rate = 10.0;        // rad/s
};

struct GeometryConfig {
    std::vector<double> clearance_radius;  // per body, meters
    std::vector<Capsule> capsules;
    std::vector<std::size_t> feet;
    DetectorThresholds thresholds;
};

/// Geometry config with no capsules, no feet, zero clearance radii.
inline GeometryConfig default_geometry(const RobotModel& model) {
    GeometryConfig g;
    g.clearance_radius.assign(model.bodies.size(), 0.0);
    return g;
}

inline constexpr int kGeometrySchemaVersion = 1;

inline GeometryConfig parse_geometry_config(std::string_view text, const RobotModel& model) {
    using nlohmann::json;
    GeometryConfig g = default_geometry(model);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::Syntax, 0, std::string("geometry JSON: ") + e.what());
    }
    auto body = [&](const std::string& name) {
        auto idx = model.body_index(name);
        if (!idx) throw ValidationError("geometry: unknown body '" + name + "'");
        return *idx;
    };
    try {
        if (!doc.contains("schema_version") || doc.at("schema_version").get<int>() != kGeometrySchemaVersion) {
            throw ValidationError("geometry: missing or unsupported schema_version");
        }
        if (doc.contains("clearance_radius")) {
            for (const auto& [name, r] : doc.at("clearance_radius").items()) {
                const double v = r.get<double>();
                if (!(v >= 0.0)) throw ValidationError("geometry: clearance radius must be >= 0");
                g.clearance_radius[body(name)] = v;
            }
        }
        if (doc.contains("capsules")) {
            for (const json& c : doc.at("capsules")) {
                Capsule cap;
                cap.body = c.at("body").get<std::string>();
                cap.body_index = body(cap.body);
                const auto& a = c.at("a");
                const auto& b = c.at("b");
                cap.a = Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
                cap.b = Vec3(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>());
                cap.radius = c.at("radius").get<double>();
                if (!(cap.radius >= 0.0)) throw ValidationError("geometry: capsule radius must be >= 0");
                g.capsules.push_back(std::move(cap));
            }
        }
        if (doc.contains("feet")) {
            for (const json& f : doc.at("feet")) g.feet.push_back(body(f.get<std::string>()));
        }
        if (doc.contains("thresholds")) {
            const json& t = doc.at("thresholds");
            g.thresholds.penetration_eps = t.value("penetration_eps", g.thresholds.penetration_eps);
            g.thresholds.contact_height = t.value("contact_height", g.thresholds.contact_height);
            g.thresholds.slide_speed = t.value("slide_speed", g.thresholds.slide_speed);
            g.thresholds.spike_rate = t.value("spike_rate", g.thresholds.spike_rate);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("geometry: ") + e.what());
    }
    const auto& t = g.thresholds;
    if (!(t.penetration_eps >= 0.0) || !(t.contact_height > 0.0) || !(t.slide_speed > 0.0) || !(t.spike_rate > 0.0)) {
        throw ValidationError("geometry: thresholds must be positive");
    }
    return g;
}

// ---------------------------------------------------------------------------
// Tracking errors

struct TrackingErrors {
    double e_g_mpbpe = 0.0;  // mm, global body positions
    double e_mpbpe = 0.0;    // mm, body positions relative to the root
    double e_mpjpe = 0.0;    // 1e-3 rad, joint values
};

inline TrackingErrors tracking_errors(const RobotMotion& reference, const RobotMotion& actual, const RobotModel& model) {
    if (reference.frames.size() != actual.frames.size()) {
        throw ValidationError("frame count mismatch: reference has " + std::to_string(reference.frames.size()) +
                              ", actual has " + std::to_string(actual.frames.size()));
    }
    TrackingErrors out;
    if (reference.frames.empty()) return out;
    const std::size_t nb = model.bodies.size();
    const std::size_t nj = model.joint_count();
    double global = 0.0, local = 0.0, joint = 0.0;
    for (std::size_t f = 0; f < reference.frames.size(); ++f) {
        const BodyPoseSet pr = robot_fk(model, reference.frames[f]);
        const BodyPoseSet pa = robot_fk(model, actual.frames[f]);
        for (std::size_t b = 0; b < nb; ++b) {
            global += (pr.positions[b] - pa.positions[b]).norm();
            local += ((pr.positions[b] - pr.positions[0]) - (pa.positions[b] - pa.positions[0])).norm();
        }
        const Eigen::VectorXd& qr = reference.frames[f].joint_values;
        const Eigen::VectorXd& qa = actual.frames[f].joint_values;
        if (nj > 0) joint += (qr - qa).cwiseAbs().sum();
    }
    const double frames = static_cast<double>(reference.frames.size());
    out.e_g_mpbpe = 1000.0 * global / (frames * static_cast<double>(nb));
    out.e_mpbpe = 1000.0 * local / (frames * static_cast<double>(nb));
    out.e_mpjpe = nj > 0 ? 1000.0 * joint / (frames * static_cast<double>(nj)) : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Detectors

struct PenetrationFrame {
    double min_clearance = 0.0;  // m, negative below ground
    std::size_t body = 0;        // body attaining the minimum
    bool flagged = false;
    double magnitude = 0.0;  // penetration depth when flagged
};

inline std::vector<PenetrationFrame> detect_ground_penetration(const RobotMotion& motion, const RobotModel& model,
                                                               const GeometryConfig& geom) {
    std::vector<PenetrationFrame> out;
    out.reserve(motion.frames.size());
    for (const GeneralizedCoords& q : motion.frames) {
        const BodyPoseSet poses = robot_fk(model, q);
        PenetrationFrame pf;
        pf.min_clearance = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < poses.positions.size(); ++b) {
            const double r = b < geom.clearance_radius.size() ? geom.clearance_radius[b] : 0.0;
            const double c = poses.positions[b].z() - r;
            if (c < pf.min_clearance) {
                pf.min_clearance = c;
                pf.body = b;
            }
        }
        pf.flagged = pf.min_clearance < -geom.thresholds.penetration_eps;
        pf.magnitude = pf.flagged ? -pf.min_clearance : 0.0;
        out.push_back(pf);
    }
    return out;
}

/// Minimum distance between segments [p1, q1] and [p2, q2], closed form
/// (clamped closest-point parameters). Handles degenerate segments.
inline double segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
    constexpr double eps = 1e-15;
    const Vec3 d1 = q1 - p1;
    const Vec3 d2 = q2 - p2;
    const Vec3 r = p1 - p2;
    const double a = d1.squaredNorm();
    const double e = d2.squaredNorm();
    const double f = d2.dot(r);
    double s = 0.0, t = 0.0;
    if (a <= eps && e <= eps) return r.norm();
    if (a <= eps) {
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e <= eps) {
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2);
            const double denom = a * e - b * b;
            s = denom > eps * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            t = (b * s + f) / e;
            if (t < 0.0) {
                t = 0.0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    return ((p1 + d1 * s) - (p2 + d2 * t)).norm();
}

struct CapsuleContact {
    std::size_t capsule_a = 0;
    std::size_t capsule_b = 0;
    double distance = 0.0;  // between segment axes
    double depth = 0.0;     // r_a + r_b - distance
};

/// Capsule pairs on the same or adjacent bodies are never tested.
inline std::vector<std::vector<CapsuleContact>> detect_self_intersection(const RobotMotion& motion,
                                                                         const RobotModel& model,
                                                                         const GeometryConfig& geom) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < geom.capsules.size(); ++i) {
        for (std::size_t j = i + 1; j < geom.capsules.size(); ++j) {
            const std::size_t a = geom.capsules[i].body_index;
            const std::size_t b = geom.capsules[j].body_index;
            const bool adjacent = a == b || model.bodies[a].parent == b || model.bodies[b].parent == a;
            if (!adjacent) pairs.emplace_back(i, j);
        }
    }
    std::vector<std::vector<CapsuleContact>> out(motion.frames.size());
    for (std::size_t f = 0; f < motion.frames.size(); ++f) {
        const BodyPoseSet poses = robot_fk(model, motion.frames[f]);
        auto world = [&](const Capsule& c, const Vec3& local) {
            return Vec3(poses.positions[c.body_index] + poses.orientations[c.body_index] * local);
        };
        for (const auto& [i, j] : pairs) {
            const Capsule& ca = geom.capsules[i];
            const Capsule& cb = geom.capsules[j];
            const double d = segment_distance(world(ca, ca.a), world(ca, ca.b), world(cb, cb.a), world(cb, cb.b));
            if (d < ca.radius + cb.radius) out[f].push_back({i, j, d, ca.radius + cb.radius - d});
        }
    }
    return out;
}

struct VelocitySpike {
    std::size_t joint = 0;
    double rate = 0.0;  // rad/s
};

/// Per frame, the joints whose rate |q_t - q_{t-1}| / dt exceeds the spike
/// threshold. Frame 0 is never flagged; fewer than two frames yields an
/// empty result.
inline std::vector<std::vector<VelocitySpike>> detect_velocity_spikes(const RobotMotion& motion,
                                                                      const GeometryConfig& geom) {
    if (motion.frames.size() < 2) return {};
    std::vector<std::vector<VelocitySpike>> out(motion.frames.size());
    for (std::size_t f = 1; f < motion.frames.size(); ++f) {
        const Eigen::VectorXd& cur = motion.frames[f].joint_values;
        const Eigen::VectorXd& prev = motion.frames[f - 1].joint_values;
        for (Eigen::Index j = 0; j < cur.size(); ++j) {
            const double rate = std::abs(cur(j) - prev(j)) / motion.frame_dt;
            if (rate > geom.thresholds.spike_rate) out[f].push_back({static_cast<std::size_t>(j), rate});
        }
    }
    return out;
}

struct FootSlide {
    std::size_t foot = 0;  // body index
    double speed = 0.0;    // horizontal, m/s
    bool in_contact = false;
    bool flagged = false;
};

/// Per frame and foot. A foot slides when it is below the contact height on
/// both this and the previous frame while moving faster than the slide speed.
inline std::vector<std::vector<FootSlide>> detect_foot_sliding(const RobotMotion& motion, const RobotModel& model,
                                                               const GeometryConfig& geom) {
    for (std::size_t foot : geom.feet) {
        if (foot >= model.bodies.size()) throw ValidationError("foot body index out of range");
    }
    std::vector<std::vector<FootSlide>> out(motion.frames.size());
    std::vector<Vec3> previous;
    for (std::size_t f = 0; f < motion.frames.size(); ++f) {
        const BodyPoseSet poses = robot_fk(model, motion.frames[f]);
        for (std::size_t k = 0; k < geom.feet.size(); ++k) {
            const Vec3& p = poses.positions[geom.feet[k]];
            FootSlide s;
            s.foot = geom.feet[k];
            s.in_contact = p.z() < geom.thresholds.contact_height;
            if (f > 0) {
                const Vec3& pp = previous[k];
                s.speed = std::hypot(p.x() - pp.x(), p.y() - pp.y()) / motion.frame_dt;
                const bool was_in_contact = pp.z() < geom.thresholds.contact_height;
                s.flagged = s.in_contact && was_in_contact && s.speed > geom.thresholds.slide_speed;
            }
            out[f].push_back(s);
        }
        previous.resize(geom.feet.size());
        for (std::size_t k = 0; k < geom.feet.size(); ++k) previous[k] = poses.positions[geom.feet[k]];
    }
    return out;
}

/// Same as above, resolving foot names against the model.
inline std::vector<std::vector<FootSlide>> detect_foot_sliding(const RobotMotion& motion, const RobotModel& model,
                                                               GeometryConfig geom,
                                                               const std::vector<std::string>& foot_names) {
    geom.feet.clear();
    for (const std::string& n : foot_names) {
        auto idx = model.body_index(n);
        if (!idx) throw ValidationError("unknown foot body '" + n + "'");
        geom.feet.push_back(*idx);
    }
    return detect_foot_sliding(motion, model, geom);
}

// ---------------------------------------------------------------------------
// Report

struct QualityReport {
    std::optional<TrackingErrors> errors;
    std::vector<PenetrationFrame> penetration;
    std::vector<std::vector<CapsuleContact>> self_intersection;
    std::vector<std::vector<VelocitySpike>> velocity_spikes;
    std::vector<std::vector<FootSlide>> foot_sliding;

    std::size_t penetration_count() const {
        return static_cast<std::size_t>(std::count_if(penetration.begin(), penetration.end(),
                                                      [](const PenetrationFrame& p) { return p.flagged; }));
    }
    std::size_t self_intersection_count() const {
        std::size_t n = 0;
        for (const auto& f : self_intersection) n += f.size();
        return n;
    }
    std::size_t velocity_spike_count() const {
        std::size_t n = 0;
        for (const auto& f : velocity_spikes) n += f.size();
        return n;
    }
    std::size_t foot_sliding_count() const {
        std::size_t n = 0;
        for (const auto& f : foot_sliding) {
            n += static_cast<std::size_t>(std::count_if(f.begin(), f.end(), [](const FootSlide& s) { return s.flagged; }));
        }
        return n;
    }
};

/// Runs every detector on `motion`; adds tracking errors when `reference` is
/// given (motion is then the actual one).
inline QualityReport analyze(const RobotMotion& motion, const RobotModel& model, const GeometryConfig& geom,
                             const RobotMotion* reference = nullptr) {
    QualityReport r;
    if (reference) r.errors = tracking_errors(*reference, motion, model);
    r.penetration = detect_ground_penetration(motion, model, geom);
    r.self_intersection = detect_self_intersection(motion, model, geom);
    r.velocity_spikes = detect_velocity_spikes(motion, geom);
    r.foot_sliding = detect_foot_sliding(motion, model, geom);
    return r;
}

inline nlohmann::json to_json(const QualityReport& r, const RobotModel& model, const GeometryConfig& geom) {
    using nlohmann::json;
    json doc;
    doc["schema_version"] = 1;
    if (r.errors) {
        doc["tracking_errors"] = {{"e_g_mpbpe_mm", r.errors->e_g_mpbpe},
                                  {"e_mpbpe_mm", r.errors->e_mpbpe},
                                  {"e_mpjpe_mrad", r.errors->e_mpjpe}};
    } else {
        doc["tracking_errors"] = nullptr;
    }
    doc["counts"] = {{"penetration", r.penetration_count()},
                     {"self_intersection", r.self_intersection_count()},
                     {"velocity_spike", r.velocity_spike_count()},
                     {"foot_sliding", r.foot_sliding_count()}};
    doc["frame_count"] = r.penetration.size();

    json pen = json::array();
    for (const PenetrationFrame& p : r.penetration) {
        pen.push_back({{"min_clearance", p.min_clearance},
                       {"body", model.bodies[p.body].name},
                       {"flagged", p.flagged},
                       {"magnitude", p.magnitude}});
    }
    json self = json::array();
    for (const auto& frame : r.self_intersection) {
        json f = json::array();
        for (const CapsuleContact& c : frame) {
            f.push_back({{"body_a", geom.capsules[c.capsule_a].body},
                         {"body_b", geom.capsules[c.capsule_b].body},
                         {"distance", c.distance},
                         {"depth", c.depth}});
        }
        self.push_back(std::move(f));
    }
    json spikes = json::array();
    for (const auto& frame : r.velocity_spikes) {
        json f = json::array();
        for (const VelocitySpike& s : frame) f.push_back({{"joint", model.joints[s.joint].name}, {"rate", s.rate}});
        spikes.push_back(std::move(f));
    }
    json slides = json::array();
    for (const auto& frame : r.foot_sliding) {
        json f = json::array();
        for (const FootSlide& s : frame) {
            f.push_back({{"foot", model.bodies[s.foot].name},
                         {"speed", s.speed},
                         {"in_contact", s.in_contact},
                         {"flagged", s.flagged}});
        }
        slides.push_back(std::move(f));
    }
    doc["frames"] = {{"penetration", std::move(pen)},
                     {"self_intersection", std::move(self)},
                     {"velocity_spikes", std::move(spikes)},
                     {"foot_sliding", std::move(slides)}};
    return doc;
}

}  // namespace gmr
