#pragma once

// Text serialization of retargeted robot motions.
//
// CSV: one header row, then one row per frame:
//   time, root_x, root_y, root_z, root_qw, root_qx, root_qy, root_qz, <joints...>
// JSON: {"schema_version", "robot", "frame_dt", "joint_names", "frames": [
//   {"root_position": [3], "root_orientation_wxyz": [4], "joint_values": [n]}]}
//
// Numbers are written in shortest round-trip form, so output bytes depend
// only on the values.

#include "gmr/detail/text.hpp"
#include "gmr/errors.hpp"
#include "gmr/retarget.hpp"
#include "gmr/robot_model.hpp"

#include <nlohmann/json.hpp>

#include <sstream>
#include <string>
#include <string_view>

namespace gmr {

inline constexpr int kMotionSchemaVersion = 1;

inline std::string write_motion_csv(const RobotMotion& motion, const RobotModel& model) {
    using detail::format_double;
    std::ostringstream os;
    os << "time,root_x,root_y,root_z,root_qw,root_qx,root_qy,root_qz";
    for (const RobotJoint& j : model.joints) os << ',' << j.name;
    os << '\n';
    for (std::size_t f = 0; f < motion.frames.size(); ++f) {
        const GeneralizedCoords& q = motion.frames[f];
        const Quat& r = q.root_orientation;
        os << format_double(static_cast<double>(f) * motion.frame_dt);
        for (double v : {q.root_position.x(), q.root_position.y(), q.root_position.z(), r.w(), r.x(), r.y(), r.z()}) {
            os << ',' << format_double(v);
        }
        for (Eigen::Index j = 0; j < q.joint_values.size(); ++j) os << ',' << format_double(q.joint_values(j));
        os << '\n';
    }
    return os.str();
}

/// `fallback_dt` is used when the file holds a single frame.
inline RobotMotion read_motion_csv(std::string_view text, const RobotModel& model, double fallback_dt = 1.0 / 30.0) {
    const auto lines = detail::split_lines(text);
    const std::size_t columns = 8 + model.joint_count();
    RobotMotion motion;
    std::vector<double> times;
    bool header = true;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        std::string_view line = lines[li];
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                cells.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (cells.size() != columns) {
            throw ParseError(ParseError::Kind::ChannelCountMismatch, li + 1,
                             "motion CSV: expected " + std::to_string(columns) + " columns, found " +
                                 std::to_string(cells.size()));
        }
        if (header) {
            header = false;
            if (cells[0] == "time") continue;
        }
        std::vector<double> v(columns);
        for (std::size_t c = 0; c < columns; ++c) {
            auto d = detail::parse_double(cells[c]);
            if (!d) throw ParseError(ParseError::Kind::Syntax, li + 1, "motion CSV: malformed number");
            v[c] = *d;
        }
        GeneralizedCoords q;
        times.push_back(v[0]);
        q.root_position = Vec3(v[1], v[2], v[3]);
        q.root_orientation = Quat(v[4], v[5], v[6], v[7]).normalized();
        q.joint_values.resize(static_cast<Eigen::Index>(model.joint_count()));
        for (std::size_t j = 0; j < model.joint_count(); ++j) q.joint_values(static_cast<Eigen::Index>(j)) = v[8 + j];
        motion.frames.push_back(std::move(q));
    }
    if (motion.frames.empty()) throw ParseError(ParseError::Kind::Syntax, 0, "motion CSV: no frames");
    motion.frame_dt = times.size() >= 2 ? times[1] - times[0] : fallback_dt;
    if (!(motion.frame_dt > 0.0)) throw ParseError(ParseError::Kind::Syntax, 0, "motion CSV: non-increasing time column");
    return motion;
}

inline std::string write_motion_json(const RobotMotion& motion, const RobotModel& model) {
    using nlohmann::json;
    json doc;
    doc["schema_version"] = kMotionSchemaVersion;
    doc["robot"] = model.name;
    doc["frame_dt"] = motion.frame_dt;
    json names = json::array();
    for (const RobotJoint& j : model.joints) names.push_back(j.name);
    doc["joint_names"] = std::move(names);
    json frames = json::array();
    for (const GeneralizedCoords& q : motion.frames) {
        const Quat& r = q.root_orientation;
        json values = json::array();
        for (Eigen::Index j = 0; j < q.joint_values.size(); ++j) values.push_back(q.joint_values(j));
        frames.push_back({{"root_position", {q.root_position.x(), q.root_position.y(), q.root_position.z()}},
                          {"root_orientation_wxyz", {r.w(), r.x(), r.y(), r.z()}},
                          {"joint_values", std::move(values)}});
    }
    doc["frames"] = std::move(frames);
    return doc.dump(1) + "\n";
}

inline RobotMotion read_motion_json(std::string_view text, const RobotModel& model) {
    using nlohmann::json;
    try {
        const json doc = json::parse(text);
        if (doc.at("schema_version").get<int>() != kMotionSchemaVersion) {
            throw ParseError(ParseError::Kind::Schema, 0, "motion JSON: unsupported schema_version");
        }
        const auto& names = doc.at("joint_names");
        if (names.size() != model.joint_count()) {
            throw ParseError(ParseError::Kind::Schema, 0, "motion JSON: joint count does not match the robot model");
        }
        for (std::size_t j = 0; j < model.joint_count(); ++j) {
            if (names[j].get<std::string>() != model.joints[j].name) {
                throw ParseError(ParseError::Kind::Schema, 0,
                                 "motion JSON: joint '" + names[j].get<std::string>() + "' does not match model order");
            }
        }
        RobotMotion motion;
        motion.frame_dt = doc.at("frame_dt").get<double>();
        for (const json& f : doc.at("frames")) {
            GeneralizedCoords q;
            const auto& p = f.at("root_position");
            const auto& r = f.at("root_orientation_wxyz");
            const auto& v = f.at("joint_values");
            if (v.size() != model.joint_count()) throw ParseError(ParseError::Kind::Schema, 0, "motion JSON: joint value count");
            q.root_position = Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
            q.root_orientation =
                Quat(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>()).normalized();
            q.joint_values.resize(static_cast<Eigen::Index>(v.size()));
            for (std::size_t j = 0; j < v.size(); ++j) q.joint_values(static_cast<Eigen::Index>(j)) = v[j].get<double>();
            motion.frames.push_back(std::move(q));
        }
        if (motion.frames.empty()) throw ParseError(ParseError::Kind::Syntax, 0, "motion JSON: no frames");
        return motion;
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::Schema, 0, std::string("motion JSON: ") + e.what());
    }
}

}  // namespace gmr
