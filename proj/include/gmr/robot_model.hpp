#pragma once

// Floating-base kinematic trees with revolute joints.
//
// A RobotModel is a list of bodies in topological order (body 0 is the
// floating base). Each non-base body hangs from its parent through a fixed
// transform and, optionally, one revolute joint:
//
//   world_T_body = world_T_parent * (offset, rotation) * Rot(axis, q_joint)
//
// Fixed URDF joints never survive into the model: the child body is kept
// (so it can be used as a key body) but re-attached to the nearest movable
// ancestor with the composed fixed transform.

#include "gmr/errors.hpp"
#include "gmr/so3.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gmr {

struct RobotJoint {
    std::string name;
    std::size_t body = 0;  // child body driven by this joint
    Vec3 axis = Vec3::UnitZ();  // unit, in the body frame
    double lower = 0.0;
    double upper = 0.0;
    std::optional<double> default_value;
};

struct RobotBody {
    std::string name;
    std::optional<std::size_t> parent;  // absent only for the base
    Vec3 offset = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();
    std::optional<std::size_t> joint;
};

struct RobotModel {
    std::string name;
    std::vector<RobotBody> bodies;
    std::vector<RobotJoint> joints;
    double default_root_height = 0.0;

    std::size_t joint_count() const { return joints.size(); }
    /// Dimension of the velocity / tangent space: 6 base DoF plus one per joint.
    std::size_t tangent_dim() const { return 6 + joints.size(); }

    std::optional<std::size_t> body_index(std::string_view n) const {
        for (std::size_t i = 0; i < bodies.size(); ++i) {
            if (bodies[i].name == n) return i;
        }
        return std::nullopt;
    }

    std::optional<std::size_t> joint_index(std::string_view n) const {
        for (std::size_t i = 0; i < joints.size(); ++i) {
            if (joints[i].name == n) return i;
        }
        return std::nullopt;
    }

    /// True if `ancestor` lies on the path from the base to `body` (inclusive).
    bool is_ancestor(std::size_t ancestor, std::size_t body) const {
        std::optional<std::size_t> b = body;
        while (b) {
            if (*b == ancestor) return true;
            b = bodies[*b].parent;
        }
        return false;
    }
};

/// Root position, root orientation and joint values.
struct GeneralizedCoords {
    Vec3 root_position = Vec3::Zero();
    Quat root_orientation = Quat::Identity();
    Eigen::VectorXd joint_values;

    /// Number of scalar coordinates: 3 + 4 + joint count.
    std::size_t size() const { return 7 + static_cast<std::size_t>(joint_values.size()); }
};

/// Throws ValidationError describing the first broken invariant.
inline void validate(const RobotModel& model) {
    if (model.bodies.empty()) throw ValidationError("robot model has no bodies");
    if (model.bodies[0].parent) throw ValidationError("body 0 must be the floating base");
    std::set<std::string> names;
    for (std::size_t i = 0; i < model.bodies.size(); ++i) {
        const RobotBody& b = model.bodies[i];
        if (!names.insert(b.name).second) throw ValidationError("duplicate body name '" + b.name + "'");
        if (i > 0 && (!b.parent || *b.parent >= i)) {
            throw ValidationError("body '" + b.name + "' is not topologically ordered");
        }
        if (!so3::is_rotation(b.rotation)) throw ValidationError("body '" + b.name + "' has an invalid rotation");
        if (b.joint && (*b.joint >= model.joints.size() || model.joints[*b.joint].body != i)) {
            throw ValidationError("body '" + b.name + "' has an inconsistent joint index");
        }
        if (i == 0 && b.joint) throw ValidationError("the floating base cannot carry a revolute joint");
    }
    std::set<std::string> joint_names;
    for (const RobotJoint& j : model.joints) {
        if (!joint_names.insert(j.name).second) throw ValidationError("duplicate joint name '" + j.name + "'");
        if (j.body >= model.bodies.size() || model.bodies[j.body].joint == std::nullopt) {
            throw ValidationError("joint '" + j.name + "' references an invalid body");
        }
        if (!(j.lower <= j.upper)) throw ValidationError("joint '" + j.name + "' has lower > upper");
        if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw ValidationError("joint '" + j.name + "' axis is not unit");
        if (j.default_value && (*j.default_value < j.lower || *j.default_value > j.upper)) {
            throw ValidationError("joint '" + j.name + "' default lies outside its limits");
        }
    }
}

/// Replaces the limits of the named joints. Each interval must lie inside the
/// current one.
inline RobotModel tighten_limits(const RobotModel& model,
                                 const std::map<std::string, std::pair<double, double>>& overrides) {
    RobotModel out = model;
    for (const auto& [name, range] : overrides) {
        auto idx = out.joint_index(name);
        if (!idx) throw ValidationError("limit override names unknown joint '" + name + "'");
        RobotJoint& j = out.joints[*idx];
        if (!(range.first <= range.second)) {
            throw ValidationError("limit override for '" + name + "' has lower > upper");
        }
        if (range.first < j.lower || range.second > j.upper) {
            throw ValidationError("limit override for '" + name + "' widens [" + std::to_string(j.lower) + ", " +
                                  std::to_string(j.upper) + "]");
        }
        j.lower = range.first;
        j.upper = range.second;
    }
    return out;
}

/// Rest configuration: identity base orientation at the model's default root
/// height, joints at their declared defaults or clamp(0, lower, upper).
inline GeneralizedCoords default_coords(const RobotModel& model) {
    GeneralizedCoords q;
    q.root_position = Vec3(0.0, 0.0, model.default_root_height);
    q.joint_values.resize(static_cast<Eigen::Index>(model.joint_count()));
    for (std::size_t i = 0; i < model.joint_count(); ++i) {
        const RobotJoint& j = model.joints[i];
        q.joint_values(static_cast<Eigen::Index>(i)) =
            std::clamp(j.default_value.value_or(0.0), j.lower, j.upper);
    }
    return q;
}

// ---------------------------------------------------------------------------
// URDF subset

namespace urdf {

struct Link {
    std::string name;
};

struct Joint {
    std::string name;
    std::string type;
    std::string parent;
    std::string child;
    Vec3 xyz = Vec3::Zero();
    Vec3 rpy = Vec3::Zero();
    Vec3 axis = Vec3::UnitX();
    std::optional<double> lower;
    std::optional<double> upper;
};

/// The literal link/joint lists of a URDF document, before tree building.
struct Document {
    std::string name;
    std::vector<Link> links;
    std::vector<Joint> joints;
};

/// Fixed-axis roll-pitch-yaw: Rz(yaw) * Ry(pitch) * Rx(roll).
inline Mat3 rpy_to_rotation(const Vec3& rpy) {
    return so3::rot_z(rpy.z()) * so3::rot_y(rpy.y()) * so3::rot_x(rpy.x());
}

namespace detail {

namespace pt = boost::property_tree;

inline Vec3 parse_vec3(const std::string& s, const std::string& what) {
    std::istringstream is(s);
    Vec3 v;
    if (!(is >> v.x() >> v.y() >> v.z())) {
        throw ParseError(ParseError::Kind::Syntax, 0, "malformed 3-vector '" + s + "' in " + what);
    }
    return v;
}

inline std::optional<std::string> attr(const pt::ptree& node, const std::string& key) {
    if (auto v = node.get_optional<std::string>("<xmlattr>." + key)) return *v;
    return std::nullopt;
}

inline void warn(std::vector<std::string>* warnings, std::set<std::string>& seen, const std::string& msg) {
    if (warnings && seen.insert(msg).second) warnings->push_back(msg);
}

}  // namespace detail

inline Document parse_document(std::string_view text, std::vector<std::string>* warnings = nullptr) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream is{std::string(text)};
        pt::read_xml(is, tree);
    } catch (const pt::xml_parser_error& e) {
        throw ParseError(ParseError::Kind::Syntax, e.line(), "URDF: " + e.message());
    }
    auto robot = tree.get_child_optional("robot");
    if (!robot) throw ParseError(ParseError::Kind::MissingSection, 0, "URDF: missing <robot> element");

    std::set<std::string> seen;
    Document doc;
    doc.name = detail::attr(*robot, "name").value_or("");
    for (const auto& [tag, node] : *robot) {
        if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
        if (tag == "link") {
            auto n = detail::attr(node, "name");
            if (!n) throw ParseError(ParseError::Kind::Schema, 0, "URDF: <link> without a name");
            doc.links.push_back({*n});
            for (const auto& child : node) {
                if (child.first != "<xmlattr>" && child.first != "<xmlcomment>") {
                    detail::warn(warnings, seen, "ignored <link> child <" + child.first + ">");
                }
            }
        } else if (tag == "joint") {
            Joint j;
            j.name = detail::attr(node, "name").value_or("");
            j.type = detail::attr(node, "type").value_or("");
            if (j.name.empty() || j.type.empty()) {
                throw ParseError(ParseError::Kind::Schema, 0, "URDF: <joint> needs name and type");
            }
            for (const auto& [ctag, cnode] : node) {
                if (ctag == "<xmlattr>" || ctag == "<xmlcomment>") continue;
                if (ctag == "parent") {
                    j.parent = detail::attr(cnode, "link").value_or("");
                } else if (ctag == "child") {
                    j.child = detail::attr(cnode, "link").value_or("");
                } else if (ctag == "origin") {
                    if (auto s = detail::attr(cnode, "xyz")) j.xyz = detail::parse_vec3(*s, "joint '" + j.name + "'");
                    if (auto s = detail::attr(cnode, "rpy")) j.rpy = detail::parse_vec3(*s, "joint '" + j.name + "'");
                } else if (ctag == "axis") {
                    if (auto s = detail::attr(cnode, "xyz")) j.axis = detail::parse_vec3(*s, "joint '" + j.name + "'");
                } else if (ctag == "limit") {
                    if (auto s = detail::attr(cnode, "lower")) j.lower = std::stod(*s);
                    if (auto s = detail::attr(cnode, "upper")) j.upper = std::stod(*s);
                } else if (ctag == "mimic") {
                    throw ParseError(ParseError::Kind::UnsupportedJoint, 0,
                                     "URDF: mimic joint '" + j.name + "' is not supported");
                } else {
                    detail::warn(warnings, seen, "ignored <joint> child <" + ctag + ">");
                }
            }
            if (j.parent.empty() || j.child.empty()) {
                throw ParseError(ParseError::Kind::Schema, 0, "URDF: joint '" + j.name + "' needs parent and child");
            }
            doc.joints.push_back(std::move(j));
        } else {
            detail::warn(warnings, seen, "ignored <robot> child <" + tag + ">");
        }
    }
    return doc;
}

/// Builds the fused floating-base tree from a parsed URDF document.
inline RobotModel build_model(const Document& doc) {
    std::map<std::string, std::size_t> link_index;
    for (std::size_t i = 0; i < doc.links.size(); ++i) {
        if (!link_index.emplace(doc.links[i].name, i).second) {
            throw ParseError(ParseError::Kind::Schema, 0, "URDF: duplicate link '" + doc.links[i].name + "'");
        }
    }

    std::optional<std::string> floating_parent;
    std::optional<std::string> floating_child;
    std::vector<const Joint*> tree_joints;
    for (const Joint& j : doc.joints) {
        if (j.type == "prismatic" || j.type == "planar") {
            throw ParseError(ParseError::Kind::UnsupportedJoint, 0,
                             "URDF: unsupported " + j.type + " joint '" + j.name + "'");
        }
        if (j.type != "revolute" && j.type != "continuous" && j.type != "fixed" && j.type != "floating") {
            throw ParseError(ParseError::Kind::UnsupportedJoint, 0,
                             "URDF: unknown joint type '" + j.type + "' on '" + j.name + "'");
        }
        if (j.type == "floating") {
            if (floating_child) throw ParseError(ParseError::Kind::Schema, 0, "URDF: more than one floating joint");
            floating_parent = j.parent;
            floating_child = j.child;
            continue;
        }
        tree_joints.push_back(&j);
    }

    std::map<std::string, const Joint*> parent_joint;
    std::map<std::string, std::vector<const Joint*>> children;
    for (const Joint* j : tree_joints) {
        if (!link_index.count(j->child) || !link_index.count(j->parent)) {
            throw ParseError(ParseError::Kind::Schema, 0, "URDF: joint '" + j->name + "' references an unknown link");
        }
        if (!parent_joint.emplace(j->child, j).second) {
            throw ParseError(ParseError::Kind::KinematicLoop, 0,
                             "URDF: kinematic loop, link '" + j->child + "' has two parent joints");
        }
        children[j->parent].push_back(j);
    }

    std::string base;
    if (floating_child) {
        if (!link_index.count(*floating_child)) {
            throw ParseError(ParseError::Kind::Schema, 0, "URDF: floating joint child is not a link");
        }
        if (parent_joint.count(*floating_child)) {
            throw ParseError(ParseError::Kind::KinematicLoop, 0, "URDF: floating base link also has a parent joint");
        }
        if (children.count(*floating_parent)) {
            throw ParseError(ParseError::Kind::Schema, 0,
                             "URDF: the floating joint's parent link '" + *floating_parent + "' has other children");
        }
        base = *floating_child;
    } else {
        std::vector<std::string> roots;
        for (const Link& l : doc.links) {
            if (!parent_joint.count(l.name)) roots.push_back(l.name);
        }
        if (roots.empty()) throw ParseError(ParseError::Kind::KinematicLoop, 0, "URDF: kinematic loop, no root link");
        if (roots.size() > 1) {
            throw ParseError(ParseError::Kind::Schema, 0, "URDF: multiple root links ('" + roots[0] + "', '" + roots[1] + "')");
        }
        base = roots.front();
    }

    RobotModel model;
    model.name = doc.name;
    model.bodies.push_back({base, std::nullopt, Vec3::Zero(), Mat3::Identity(), std::nullopt});

    // Depth-first in document order. `anchor` is the nearest movable ancestor
    // body; (at_p, at_r) is the transform from it to the current link frame.
    struct Item {
        std::string link;
        std::size_t anchor;
        Vec3 at_p;
        Mat3 at_r;
    };
    std::vector<Item> stack{{base, 0, Vec3::Zero(), Mat3::Identity()}};
    std::set<std::string> visited{base};
    while (!stack.empty()) {
        Item item = std::move(stack.back());
        stack.pop_back();
        auto it = children.find(item.link);
        if (it == children.end()) continue;
        for (auto c = it->second.rbegin(); c != it->second.rend(); ++c) {
            const Joint& j = **c;
            if (!visited.insert(j.child).second) {
                throw ParseError(ParseError::Kind::KinematicLoop, 0, "URDF: kinematic loop through '" + j.child + "'");
            }
        }
        // Children are pushed in reverse so they pop (and get numbered) in order.
        std::vector<Item> pending;
        for (const Joint* jp : it->second) {
            const Joint& j = *jp;
            const Vec3 p = item.at_p + item.at_r * j.xyz;
            const Mat3 r = item.at_r * rpy_to_rotation(j.rpy);
            RobotBody body{j.child, item.anchor, p, r, std::nullopt};
            const std::size_t idx = model.bodies.size();
            if (j.type == "fixed") {
                model.bodies.push_back(std::move(body));
                pending.push_back({j.child, item.anchor, p, r});
                continue;
            }
            if (j.axis.norm() < 1e-12) {
                throw ParseError(ParseError::Kind::Schema, 0, "URDF: joint '" + j.name + "' has a zero axis");
            }
            RobotJoint rj{j.name, idx, j.axis.normalized(), -std::numbers::pi, std::numbers::pi, std::nullopt};
            if (j.type == "revolute") {
                if (!j.lower || !j.upper) {
                    throw ParseError(ParseError::Kind::MissingLimits, 0,
                                     "URDF: revolute joint '" + j.name + "' is missing lower/upper limits");
                }
                rj.lower = *j.lower;
                rj.upper = *j.upper;
            } else if (j.lower && j.upper) {
                rj.lower = *j.lower;
                rj.upper = *j.upper;
            }
            if (!(rj.lower <= rj.upper)) {
                throw ParseError(ParseError::Kind::Schema, 0, "URDF: joint '" + j.name + "' has lower > upper");
            }
            body.joint = model.joints.size();
            model.joints.push_back(std::move(rj));
            model.bodies.push_back(std::move(body));
            pending.push_back({j.child, idx, Vec3::Zero(), Mat3::Identity()});
        }
        for (auto p = pending.rbegin(); p != pending.rend(); ++p) stack.push_back(std::move(*p));
    }
    if (visited.size() != doc.links.size() - (floating_parent && link_index.count(*floating_parent) ? 1 : 0)) {
        throw ParseError(ParseError::Kind::KinematicLoop, 0, "URDF: links unreachable from the base (kinematic loop)");
    }
    return model;
}

}  // namespace urdf

// ---------------------------------------------------------------------------
// Native JSON

inline constexpr int kRobotSchemaVersion = 1;

namespace native_detail {

inline Vec3 vec3(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ParseError(ParseError::Kind::Schema, 0, std::string(what) + " must be a 3-array");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace native_detail

inline RobotModel parse_native_robot(std::string_view text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::Syntax, 0, std::string("robot JSON: ") + e.what());
    }
    try {
        if (!doc.contains("schema_version")) {
            throw ParseError(ParseError::Kind::Schema, 0, "robot JSON: missing schema_version");
        }
        if (doc.at("schema_version").get<int>() != kRobotSchemaVersion) {
            throw ParseError(ParseError::Kind::Schema, 0, "robot JSON: unsupported schema_version");
        }
        RobotModel model;
        model.name = doc.value("name", "");
        model.default_root_height = doc.value("default_root_height", 0.0);
        for (const json& b : doc.at("bodies")) {
            RobotBody body;
            body.name = b.at("name").get<std::string>();
            if (b.contains("parent") && !b.at("parent").is_null()) {
                const std::string parent = b.at("parent").get<std::string>();
                auto p = model.body_index(parent);
                if (!p) {
                    throw ParseError(ParseError::Kind::Schema, 0,
                                     "robot JSON: body '" + body.name + "' lists parent '" + parent +
                                         "' before it is defined");
                }
                body.parent = *p;
            } else if (!model.bodies.empty()) {
                throw ParseError(ParseError::Kind::Schema, 0, "robot JSON: only the first body may omit its parent");
            }
            if (b.contains("offset")) body.offset = native_detail::vec3(b.at("offset"), "offset");
            if (b.contains("rotation_wxyz")) {
                const json& r = b.at("rotation_wxyz");
                Quat q(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>());
                body.rotation = q.normalized().toRotationMatrix();
            }
            if (b.contains("joint")) {
                const json& jj = b.at("joint");
                const std::string type = jj.value("type", "revolute");
                if (type != "revolute" && type != "continuous") {
                    throw ParseError(ParseError::Kind::UnsupportedJoint, 0,
                                     "robot JSON: unsupported " + type + " joint on body '" + body.name + "'");
                }
                RobotJoint joint;
                joint.name = jj.at("name").get<std::string>();
                joint.body = model.bodies.size();
                joint.axis = native_detail::vec3(jj.at("axis"), "axis");
                if (joint.axis.norm() < 1e-12) throw ParseError(ParseError::Kind::Schema, 0, "robot JSON: zero axis");
                joint.axis.normalize();
                if (jj.contains("lower") && jj.contains("upper")) {
                    joint.lower = jj.at("lower").get<double>();
                    joint.upper = jj.at("upper").get<double>();
                } else if (type == "continuous") {
                    joint.lower = -std::numbers::pi;
                    joint.upper = std::numbers::pi;
                } else {
                    throw ParseError(ParseError::Kind::MissingLimits, 0,
                                     "robot JSON: revolute joint '" + joint.name + "' is missing limits");
                }
                if (jj.contains("default")) joint.default_value = jj.at("default").get<double>();
                body.joint = model.joints.size();
                model.joints.push_back(std::move(joint));
            }
            model.bodies.push_back(std::move(body));
        }
        return model;
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::Schema, 0, std::string("robot JSON: ") + e.what());
    }
}

inline std::string to_native_json(const RobotModel& model) {
    using nlohmann::json;
    json doc;
    doc["schema_version"] = kRobotSchemaVersion;
    doc["name"] = model.name;
    doc["default_root_height"] = model.default_root_height;
    json bodies = json::array();
    for (const RobotBody& b : model.bodies) {
        json jb;
        jb["name"] = b.name;
        if (b.parent) {
            jb["parent"] = model.bodies[*b.parent].name;
            jb["offset"] = {b.offset.x(), b.offset.y(), b.offset.z()};
            const Quat q(b.rotation);
            jb["rotation_wxyz"] = {q.w(), q.x(), q.y(), q.z()};
        }
        if (b.joint) {
            const RobotJoint& j = model.joints[*b.joint];
            jb["joint"] = {{"name", j.name}, {"axis", {j.axis.x(), j.axis.y(), j.axis.z()}},
                           {"lower", j.lower}, {"upper", j.upper}};
            if (j.default_value) jb["joint"]["default"] = *j.default_value;
        }
        bodies.push_back(std::move(jb));
    }
    doc["bodies"] = std::move(bodies);
    return doc.dump(2);
}

enum class RobotFormat { UrdfSubset, Native };

/// Loads a robot description and validates the resulting model.
/// Ignored URDF tags are reported through `warnings` when provided.
inline RobotModel parse_robot(std::string_view text, RobotFormat format,
                              std::vector<std::string>* warnings = nullptr) {
    RobotModel model = format == RobotFormat::UrdfSubset ? urdf::build_model(urdf::parse_document(text, warnings))
                                                         : parse_native_robot(text);
    validate(model);
    return model;
}

}  // namespace gmr
