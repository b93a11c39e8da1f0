#pragma once

// BVH (Biovision Hierarchy) ingestion, serialization and human forward
// kinematics.
//
// Internal convention: meters, Z-up, right-handed. Euler channels are
// intrinsic rotations composed in the order they are declared in the file.

#include "gmr/detail/text.hpp"
#include "gmr/errors.hpp"
#include "gmr/so3.hpp"

#include <array>
#include <cstddef>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace gmr {

enum class Channel { Xposition, Yposition, Zposition, Xrotation, Yrotation, Zrotation };

inline bool is_rotation_channel(Channel c) { return c >= Channel::Xrotation; }
/// 0, 1 or 2 for the x, y or z axis of the channel.
inline int channel_axis(Channel c) { return static_cast<int>(c) % 3; }

inline std::string_view channel_name(Channel c) {
    static constexpr std::array<std::string_view, 6> names = {
        "Xposition", "Yposition", "Zposition", "Xrotation", "Yrotation", "Zrotation"};
    return names[static_cast<std::size_t>(c)];
}

inline std::optional<Channel> channel_from_name(std::string_view s) {
    for (int i = 0; i < 6; ++i) {
        if (channel_name(static_cast<Channel>(i)) == s) return static_cast<Channel>(i);
    }
    return std::nullopt;
}

struct HumanJoint {
    std::string name;
    std::optional<std::size_t> parent;
    Vec3 offset = Vec3::Zero();  // meters, internal axes
    std::vector<Channel> channels;  // empty for End Sites

    bool has_rotation() const {
        for (Channel c : channels) {
            if (is_rotation_channel(c)) return true;
        }
        return false;
    }
};

struct HumanSkeleton {
    std::vector<HumanJoint> joints;  // topologically sorted, root first

    std::size_t size() const { return joints.size(); }

    std::optional<std::size_t> index_of(std::string_view name) const {
        for (std::size_t i = 0; i < joints.size(); ++i) {
            if (joints[i].name == name) return i;
        }
        return std::nullopt;
    }

    std::size_t channel_count() const {
        std::size_t n = 0;
        for (const auto& j : joints) n += j.channels.size();
        return n;
    }
};

/// One sampled pose. Both vectors are indexed by joint; joints without
/// position channels carry a zero translation, joints without rotation
/// channels carry the identity.
struct HumanFrame {
    std::vector<Vec3> translations;  // position channel values, meters
    std::vector<Mat3> rotations;     // local joint rotations

    const Vec3& root_translation() const { return translations.front(); }
    Vec3& root_translation() { return translations.front(); }
};

struct HumanMotion {
    std::vector<HumanFrame> frames;
    double frame_dt = 0.0;  // seconds

    double duration() const { return static_cast<double>(frames.size()) * frame_dt; }
};

struct HumanPoseSet {
    std::vector<Vec3> positions;     // world, meters
    std::vector<Mat3> orientations;  // world
};

enum class AxisConvention { YUpToZUp, None };

struct BvhOptions {
    double unit_scale = 0.01;  // file units to meters
    AxisConvention axis = AxisConvention::YUpToZUp;
};

struct BvhData {
    HumanSkeleton skeleton;
    HumanMotion motion;
};

namespace bvh_detail {

/// World rotation mapping file axes to internal axes: (x, y, z) -> (x, -z, y).
inline Mat3 axis_rotation(AxisConvention axis) {
    if (axis == AxisConvention::None) return Mat3::Identity();
    Mat3 a;
    a << 1, 0, 0,
         0, 0, -1,
         0, 1, 0;
    return a;
}

struct Token {
    std::string_view text;
    std::size_t line;
};

class TokenStream {
public:
    TokenStream(const std::vector<std::string_view>& lines) : lines_(lines) { advance_line(); }

    bool done() const { return line_ >= lines_.size(); }

    /// Line index (0-based) where the next token lives.
    std::size_t line_index() const { return line_; }

    Token peek() {
        if (done()) throw ParseError(ParseError::Kind::Syntax, lines_.size(), "unexpected end of file");
        return {tokens_[pos_], line_ + 1};
    }

    Token next() {
        Token t = peek();
        ++pos_;
        if (pos_ >= tokens_.size()) {
            ++line_;
            advance_line();
        }
        return t;
    }

    Token expect(std::string_view word) {
        Token t = next();
        if (t.text != word) {
            throw ParseError(ParseError::Kind::Syntax, t.line,
                             "expected '" + std::string(word) + "', found '" + std::string(t.text) + "'");
        }
        return t;
    }

    double number() {
        Token t = next();
        auto v = detail::parse_double(t.text);
        if (!v) throw ParseError(ParseError::Kind::Syntax, t.line, "expected a number, found '" + std::string(t.text) + "'");
        return *v;
    }

    /// Makes the stream resume at the start of the line after the current token.
    std::size_t finish_line() {
        if (pos_ != 0) {
            ++line_;
            advance_line();
        }
        return line_;
    }

private:
    void advance_line() {
        pos_ = 0;
        while (line_ < lines_.size()) {
            tokens_ = detail::split_ws(lines_[line_]);
            if (!tokens_.empty()) return;
            ++line_;
        }
        tokens_.clear();
    }

    const std::vector<std::string_view>& lines_;
    std::size_t line_ = 0;
    std::size_t pos_ = 0;
    std::vector<std::string_view> tokens_;
};

struct RawJoint {
    HumanJoint joint;
    std::array<double, 3> raw_offset{};
};

inline void parse_joint(TokenStream& ts, std::optional<std::size_t> parent, std::string name,
                        std::vector<RawJoint>& out) {
    const std::size_t self = out.size();
    out.push_back({});
    out[self].joint.name = std::move(name);
    out[self].joint.parent = parent;

    ts.expect("{");
    ts.expect("OFFSET");
    for (int i = 0; i < 3; ++i) out[self].raw_offset[i] = ts.number();

    std::size_t end_sites = 0;
    bool seen_channels = false;
    for (;;) {
        Token t = ts.next();
        if (t.text == "}") break;
        if (t.text == "CHANNELS") {
            if (seen_channels) throw ParseError(ParseError::Kind::Syntax, t.line, "duplicate CHANNELS");
            seen_channels = true;
            const double n = ts.number();
            if (n < 0 || n > 6 || n != static_cast<int>(n)) {
                throw ParseError(ParseError::Kind::Syntax, t.line, "invalid channel count");
            }
            std::array<int, 6> seen{};
            int rotations = 0;
            for (int i = 0; i < static_cast<int>(n); ++i) {
                Token c = ts.next();
                auto ch = channel_from_name(c.text);
                if (!ch) {
                    throw ParseError(ParseError::Kind::UnknownChannel, c.line,
                                     "unknown channel '" + std::string(c.text) + "'");
                }
                if (seen[static_cast<std::size_t>(*ch)]++) {
                    throw ParseError(ParseError::Kind::Syntax, c.line, "duplicate channel '" + std::string(c.text) + "'");
                }
                if (is_rotation_channel(*ch)) ++rotations;
                out[self].joint.channels.push_back(*ch);
            }
            if (rotations != 0 && rotations != 3) {
                throw ParseError(ParseError::Kind::Syntax, t.line,
                                 "rotation channels must name all three axes");
            }
        } else if (t.text == "JOINT") {
            Token n = ts.next();
            parse_joint(ts, self, std::string(n.text), out);
        } else if (t.text == "End") {
            ts.expect("Site");
            std::string site = out[self].joint.name + "_End";
            if (end_sites > 0) site += std::to_string(end_sites);
            ++end_sites;
            const std::size_t idx = out.size();
            out.push_back({});
            out[idx].joint.name = std::move(site);
            out[idx].joint.parent = self;
            ts.expect("{");
            ts.expect("OFFSET");
            for (int i = 0; i < 3; ++i) out[idx].raw_offset[i] = ts.number();
            ts.expect("}");
        } else {
            throw ParseError(ParseError::Kind::Syntax, t.line, "unexpected token '" + std::string(t.text) + "'");
        }
    }
}

inline Mat3 euler_to_rotation(const std::array<int, 3>& axes, const std::array<double, 3>& radians) {
    Mat3 r = Mat3::Identity();
    for (int i = 0; i < 3; ++i) r = r * so3::exp(Vec3::Unit(axes[i]) * radians[i]);
    return r;
}

}  // namespace bvh_detail

/// Parses a complete BVH document.
///
/// Offsets and position channels are multiplied by `unit_scale` and, for
/// `YUpToZUp`, rotated by the fixed map (x, y, z) -> (x, -z, y); joint
/// rotations are conjugated by the same map. End Sites become joints with no
/// channels, named after their parent with an `_End` suffix.
inline BvhData parse_bvh(std::string_view text, const BvhOptions& options = {}) {
    using bvh_detail::Token;
    const auto lines = detail::split_lines(text);
    bvh_detail::TokenStream ts(lines);

    if (ts.done() || ts.peek().text != "HIERARCHY") {
        throw ParseError(ParseError::Kind::MissingSection, ts.done() ? 1 : ts.peek().line,
                         "missing HIERARCHY section");
    }
    ts.next();
    Token root = ts.next();
    if (root.text != "ROOT") throw ParseError(ParseError::Kind::Syntax, root.line, "expected 'ROOT'");
    std::vector<bvh_detail::RawJoint> raw;
    bvh_detail::parse_joint(ts, std::nullopt, std::string(ts.next().text), raw);

    if (ts.done() || ts.peek().text != "MOTION") {
        throw ParseError(ParseError::Kind::MissingSection, ts.done() ? lines.size() : ts.peek().line,
                         "missing MOTION section");
    }
    ts.next();
    Token frames_tok = ts.expect("Frames:");
    const double declared = ts.number();
    if (declared < 1 || declared != static_cast<double>(static_cast<long>(declared))) {
        throw ParseError(ParseError::Kind::Syntax, frames_tok.line, "frame count must be a positive integer");
    }
    ts.expect("Frame");
    Token time_tok = ts.expect("Time:");
    const double dt = ts.number();
    if (!(dt > 0.0)) throw ParseError(ParseError::Kind::Syntax, time_tok.line, "frame time must be positive");

    const Mat3 axis = bvh_detail::axis_rotation(options.axis);
    BvhData out;
    out.motion.frame_dt = dt;
    auto& joints = out.skeleton.joints;
    joints.reserve(raw.size());
    for (auto& r : raw) {
        r.joint.offset = axis * (Vec3(r.raw_offset[0], r.raw_offset[1], r.raw_offset[2]) * options.unit_scale);
        joints.push_back(std::move(r.joint));
    }

    const std::size_t n_channels = out.skeleton.channel_count();
    const double deg = std::numbers::pi / 180.0;
    const std::size_t expected = static_cast<std::size_t>(declared);
    for (std::size_t li = ts.finish_line(); li < lines.size(); ++li) {
        const auto values = detail::split_ws(lines[li]);
        if (values.empty()) continue;
        if (out.motion.frames.size() == expected) {
            throw ParseError(ParseError::Kind::FrameCountMismatch, li + 1,
                             "more frame lines than the declared " + std::to_string(expected));
        }
        if (values.size() != n_channels) {
            throw ParseError(ParseError::Kind::ChannelCountMismatch, li + 1,
                             "expected " + std::to_string(n_channels) + " channel values, found " +
                                 std::to_string(values.size()));
        }
        HumanFrame frame;
        frame.translations.assign(joints.size(), Vec3::Zero());
        frame.rotations.assign(joints.size(), Mat3::Identity());
        std::size_t k = 0;
        for (std::size_t j = 0; j < joints.size(); ++j) {
            Vec3 t = Vec3::Zero();
            std::array<int, 3> axes{};
            std::array<double, 3> angles{};
            int n_rot = 0;
            for (Channel c : joints[j].channels) {
                auto v = detail::parse_double(values[k++]);
                if (!v) throw ParseError(ParseError::Kind::Syntax, li + 1, "malformed channel value");
                if (is_rotation_channel(c)) {
                    axes[n_rot] = channel_axis(c);
                    angles[n_rot++] = *v * deg;
                } else {
                    t(channel_axis(c)) = *v;
                }
            }
            frame.translations[j] = axis * (t * options.unit_scale);
            if (n_rot == 3) {
                frame.rotations[j] = axis * bvh_detail::euler_to_rotation(axes, angles) * axis.transpose();
            }
        }
        out.motion.frames.push_back(std::move(frame));
    }
    if (out.motion.frames.size() != expected) {
        throw ParseError(ParseError::Kind::FrameCountMismatch, frames_tok.line,
                         "declared " + std::to_string(expected) + " frames, found " +
                             std::to_string(out.motion.frames.size()));
    }
    return out;
}

/// Writes `skeleton` and `motion` back to BVH text, undoing the unit and axis
/// conversion described by `options`. Rotations are re-expressed as Euler
/// angles in each joint's declared channel order.
inline std::string serialize_bvh(const HumanSkeleton& skeleton, const HumanMotion& motion,
                                 const BvhOptions& options = {}) {
    using detail::format_double;
    const Mat3 axis = bvh_detail::axis_rotation(options.axis);
    const double inv_scale = 1.0 / options.unit_scale;
    std::ostringstream os;

    std::vector<std::vector<std::size_t>> children(skeleton.size());
    for (std::size_t j = 1; j < skeleton.size(); ++j) children[*skeleton.joints[j].parent].push_back(j);

    auto write_offset = [&](const Vec3& offset, const std::string& indent) {
        const Vec3 raw = axis.transpose() * offset * inv_scale;
        os << indent << "OFFSET " << format_double(raw.x()) << ' ' << format_double(raw.y()) << ' '
           << format_double(raw.z()) << '\n';
    };

    auto write_joint = [&](auto&& self, std::size_t j, int depth) -> void {
        const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
        const HumanJoint& joint = skeleton.joints[j];
        if (joint.channels.empty() && children[j].empty() && joint.parent) {
            os << indent << "End Site\n" << indent << "{\n";
            write_offset(joint.offset, indent + "  ");
            os << indent << "}\n";
            return;
        }
        os << indent << (joint.parent ? "JOINT " : "ROOT ") << joint.name << '\n' << indent << "{\n";
        write_offset(joint.offset, indent + "  ");
        os << indent << "  CHANNELS " << joint.channels.size();
        for (Channel c : joint.channels) os << ' ' << channel_name(c);
        os << '\n';
        for (std::size_t c : children[j]) self(self, c, depth + 1);
        os << indent << "}\n";
    };

    os << "HIERARCHY\n";
    write_joint(write_joint, 0, 0);
    os << "MOTION\nFrames: " << motion.frames.size() << "\nFrame Time: " << format_double(motion.frame_dt) << '\n';

    const double rad = 180.0 / std::numbers::pi;
    for (const HumanFrame& frame : motion.frames) {
        bool first = true;
        auto emit = [&](double v) {
            if (!first) os << ' ';
            first = false;
            os << format_double(v);
        };
        for (std::size_t j = 0; j < skeleton.size(); ++j) {
            const auto& channels = skeleton.joints[j].channels;
            const Vec3 t = axis.transpose() * frame.translations[j] * inv_scale;
            Vec3 angles = Vec3::Zero();
            if (skeleton.joints[j].has_rotation()) {
                std::array<int, 3> axes{};
                int n = 0;
                for (Channel c : channels) {
                    if (is_rotation_channel(c)) axes[n++] = channel_axis(c);
                }
                const Mat3 local = axis.transpose() * frame.rotations[j] * axis;
                angles = local.eulerAngles(axes[0], axes[1], axes[2]) * rad;
            }
            int n = 0;
            for (Channel c : channels) emit(is_rotation_channel(c) ? angles(n++) : t(channel_axis(c)));
        }
        os << '\n';
    }
    return os.str();
}

/// All-zero channel frame for `skeleton`.
inline HumanFrame rest_frame(const HumanSkeleton& skeleton) {
    HumanFrame f;
    f.translations.assign(skeleton.size(), Vec3::Zero());
    f.rotations.assign(skeleton.size(), Mat3::Identity());
    return f;
}

/// World pose of every joint. A joint's pose is its parent's pose composed
/// with its offset (plus position channels) and then its channel rotation.
inline HumanPoseSet human_fk(const HumanSkeleton& skeleton, const HumanFrame& frame) {
    HumanPoseSet pose;
    pose.positions.resize(skeleton.size());
    pose.orientations.resize(skeleton.size());
    for (std::size_t j = 0; j < skeleton.size(); ++j) {
        const HumanJoint& joint = skeleton.joints[j];
        const Vec3 local = joint.offset + frame.translations[j];
        if (!joint.parent) {
            pose.positions[j] = local;
            pose.orientations[j] = frame.rotations[j];
        } else {
            const std::size_t p = *joint.parent;
            pose.positions[j] = pose.positions[p] + pose.orientations[p] * local;
            pose.orientations[j] = pose.orientations[p] * frame.rotations[j];
        }
    }
    return pose;
}

}  // namespace gmr
