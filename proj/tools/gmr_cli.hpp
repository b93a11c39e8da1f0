#pragma once

// Command-line front end: `gmr info`, `gmr retarget`, `gmr analyze`.
//
// Data goes to files; progress and diagnostics go to the `err` stream only.
// Exit codes: 0 ok, 1 I/O or usage, 2 validation, 3 parse, 4 solver,
// 5 detector budget exceeded.

#include "gmr/gmr.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace gmr::cli {

enum ExitCode : int {
    kOk = 0,
    kIo = 1,
    kValidation = 2,
    kParse = 3,
    kSolver = 4,
    kGating = 5,
};

class IoError : public Error {
public:
    using Error::Error;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << data;
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

inline std::string lower_ext(const std::string& path) {
    std::string e = std::filesystem::path(path).extension().string();
    for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

inline RobotModel load_robot(const std::string& path, std::ostream& err) {
    const std::string text = read_file(path);
    const std::string ext = lower_ext(path);
    std::vector<std::string> warnings;
    RobotModel model = parse_robot(text, ext == ".json" ? RobotFormat::Native : RobotFormat::UrdfSubset, &warnings);
    for (const auto& w : warnings) err << "warning: " << path << ": " << w << '\n';
    return model;
}

inline RobotMotion load_motion(const std::string& path, const RobotModel& model) {
    const std::string text = read_file(path);
    return lower_ext(path) == ".json" ? read_motion_json(text, model) : read_motion_csv(text, model);
}

inline AxisConvention parse_axis(const std::string& s) {
    if (s == "y-up" || s == "yup") return AxisConvention::YUpToZUp;
    if (s == "none") return AxisConvention::None;
    throw ValidationError("unknown --axis '" + s + "' (expected y-up or none)");
}

/// Runs `body`, mapping library exceptions to exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kParse;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << '\n';
        return kValidation;
    } catch (const SolverError& e) {
        err << "solver error: " << e.what() << '\n';
        return kSolver;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    }
}

// ---------------------------------------------------------------------------

struct InfoOptions {
    std::string path;
    double unit_scale = 0.01;
    std::string axis = "y-up";
};

inline int cmd_info(const InfoOptions& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (lower_ext(o.path) == ".bvh") {
            const BvhData bvh = parse_bvh(read_file(o.path), {o.unit_scale, parse_axis(o.axis)});
            std::size_t end_sites = 0;
            for (const auto& j : bvh.skeleton.joints) end_sites += j.channels.empty() ? 1 : 0;
            char line[128];
            out << "skeleton: " << bvh.skeleton.size() << " joints (" << end_sites << " end sites), "
                << bvh.skeleton.channel_count() << " channels\n";
            out << "root: " << bvh.skeleton.joints[0].name << '\n';
            out << "frames: " << bvh.motion.frames.size() << '\n';
            std::snprintf(line, sizeof line, "fps: %.3f\n", 1.0 / bvh.motion.frame_dt);
            out << line;
            std::snprintf(line, sizeof line, "duration: %.3f s\n", bvh.motion.duration());
            out << line;
            std::snprintf(line, sizeof line, "height: %.4f m\n", skeleton_height(bvh.skeleton));
            out << line;
            return kOk;
        }
        const RobotModel model = load_robot(o.path, err);
        out << "robot: " << (model.name.empty() ? "(unnamed)" : model.name) << '\n';
        out << "bodies: " << model.bodies.size() << " (base '" << model.bodies[0].name << "')\n";
        out << "joints: " << model.joint_count() << '\n';
        char line[256];
        for (const RobotJoint& j : model.joints) {
            std::snprintf(line, sizeof line, "  %-32s body=%-28s lower=%+.4f upper=%+.4f\n", j.name.c_str(),
                          model.bodies[j.body].name.c_str(), j.lower, j.upper);
            out << line;
        }
        return kOk;
    });
}

// ---------------------------------------------------------------------------

struct RetargetOptions {
    std::vector<std::string> bvh_paths;
    std::string robot_path;
    std::string config_path;
    std::string out_path;
    std::string format = "csv";
    double unit_scale = 0.01;
    std::string axis = "y-up";
    int jobs = 1;
    bool seedless = false;
};

struct RetargetJobResult {
    std::string output;
    std::size_t frames = 0;
};

inline RetargetJobResult retarget_one(const std::string& bvh_path, const std::string& out_path, const RobotModel& model,
                                      const std::string& config_text, const RetargetOptions& o) {
    const auto start = std::chrono::steady_clock::now();
    const BvhData bvh = parse_bvh(read_file(bvh_path), {o.unit_scale, parse_axis(o.axis)});
    const RetargetConfig config = load_config(config_text, bvh.skeleton, model);
    SequenceStats stats;
    const RobotMotion motion = retarget_sequence(bvh.skeleton, bvh.motion, config, model, &stats);
    const RobotModel limited = tighten_limits(model, config.limit_overrides);
    write_file(out_path, o.format == "json" ? write_motion_json(motion, limited) : write_motion_csv(motion, limited));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    nlohmann::json manifest;
    manifest["tool"] = "gmr";
    manifest["version"] = kVersion;
    manifest["inputs"] = {{"bvh", bvh_path}, {"robot", o.robot_path}, {"config", o.config_path}};
    manifest["output"] = out_path;
    manifest["format"] = o.format;
    manifest["config_sha256"] = sha256_hex(config_text);
    manifest["unit_scale"] = o.unit_scale;
    manifest["axis"] = o.axis;
    manifest["frames"] = motion.frames.size();
    manifest["wall_clock_seconds"] = seconds;
    manifest["frames_per_second"] = seconds > 0.0 ? static_cast<double>(motion.frames.size()) / seconds : 0.0;
    manifest["stage1_iterations"] = stats.stage1_iterations;
    manifest["stage2_iterations"] = stats.stage2_iterations;
    write_file(out_path + ".manifest.json", manifest.dump(2) + "\n");
    return {out_path, motion.frames.size()};
}

inline int cmd_retarget(const RetargetOptions& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() -> int {
        if (o.format != "csv" && o.format != "json") throw ValidationError("--format must be csv or json");
        if (o.jobs < 1) throw ValidationError("--jobs must be at least 1");
        if (o.bvh_paths.empty()) throw ValidationError("no BVH input given");
        const RobotModel model = load_robot(o.robot_path, err);
        const std::string config_text = read_file(o.config_path);

        std::vector<std::string> outputs;
        if (o.bvh_paths.size() == 1) {
            outputs.push_back(o.out_path);
        } else {
            std::filesystem::create_directories(o.out_path);
            for (const auto& p : o.bvh_paths) {
                outputs.push_back(
                    (std::filesystem::path(o.out_path) / std::filesystem::path(p).stem()).string() + "." + o.format);
            }
        }

        std::vector<int> codes(o.bvh_paths.size(), kOk);
        std::vector<std::string> logs(o.bvh_paths.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < o.bvh_paths.size(); i = next++) {
                std::ostringstream log;
                codes[i] = guarded(log, [&] {
                    const RetargetJobResult r = retarget_one(o.bvh_paths[i], outputs[i], model, config_text, o);
                    log << "retargeted " << r.frames << " frames: " << o.bvh_paths[i] << " -> " << r.output << '\n';
                    return kOk;
                });
                logs[i] = log.str();
            }
        };
        const int threads = std::min<int>(o.jobs, static_cast<int>(o.bvh_paths.size()));
        std::vector<std::thread> pool;
        for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        int code = kOk;
        for (std::size_t i = 0; i < logs.size(); ++i) {
            err << logs[i];
            if (codes[i] != kOk && code == kOk) code = codes[i];
        }
        (void)out;
        return code;
    });
}

// ---------------------------------------------------------------------------

struct AnalyzeOptions {
    std::string reference_path;
    std::string actual_path;  // empty: single-motion detectors only
    std::string robot_path;
    std::string geometry_path;  // empty: default thresholds, no capsules/feet
    std::string out_path;
    std::vector<std::string> fail_on;  // detector[=budget]
};

inline int cmd_analyze(const AnalyzeOptions& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() -> int {
        static const std::vector<std::string> detectors = {"penetration", "self_intersection", "velocity_spike",
                                                           "foot_sliding"};
        std::map<std::string, std::size_t> budgets;
        for (const std::string& entry : o.fail_on) {
            const auto eq = entry.find('=');
            const std::string name = entry.substr(0, eq);
            if (std::find(detectors.begin(), detectors.end(), name) == detectors.end()) {
                throw ValidationError("--fail-on: unknown detector '" + name + "'");
            }
            std::size_t budget = 0;
            if (eq != std::string::npos) {
                try {
                    budget = std::stoul(entry.substr(eq + 1));
                } catch (const std::exception&) {
                    throw ValidationError("--fail-on: malformed budget in '" + entry + "'");
                }
            }
            budgets[name] = budget;
        }

        const RobotModel model = load_robot(o.robot_path, err);
        const GeometryConfig geom =
            o.geometry_path.empty() ? default_geometry(model) : parse_geometry_config(read_file(o.geometry_path), model);
        const RobotMotion reference = load_motion(o.reference_path, model);
        QualityReport report;
        if (o.actual_path.empty()) {
            report = analyze(reference, model, geom);
        } else {
            const RobotMotion actual = load_motion(o.actual_path, model);
            report = analyze(actual, model, geom, &reference);
        }
        write_file(o.out_path, to_json(report, model, geom).dump(2) + "\n");

        const std::map<std::string, std::size_t> counts = {
            {"penetration", report.penetration_count()},
            {"self_intersection", report.self_intersection_count()},
            {"velocity_spike", report.velocity_spike_count()},
            {"foot_sliding", report.foot_sliding_count()}};
        for (const auto& [name, n] : counts) err << name << ": " << n << " flagged\n";
        int code = kOk;
        for (const auto& [name, budget] : budgets) {
            if (counts.at(name) > budget) {
                err << "gate failed: " << name << " count " << counts.at(name) << " exceeds budget " << budget << '\n';
                code = kGating;
            }
        }
        (void)out;
        return code;
    });
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Human-to-humanoid motion retargeting"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    InfoOptions info;
    auto* info_cmd = app.add_subcommand("info", "Summarize a BVH file or a robot description");
    info_cmd->add_option("path", info.path, "BVH, URDF or native robot JSON file")->required();
    info_cmd->add_option("--unit-scale", info.unit_scale, "BVH units to meters")->capture_default_str();
    info_cmd->add_option("--axis", info.axis, "BVH axis convention: y-up or none")->capture_default_str();

    RetargetOptions rt;
    auto* rt_cmd = app.add_subcommand("retarget", "Retarget BVH motion onto a robot");
    rt_cmd->add_option("bvh", rt.bvh_paths, "Input BVH file(s)")->required();
    rt_cmd->add_option("--robot", rt.robot_path, "URDF or native robot JSON")->required();
    rt_cmd->add_option("--config", rt.config_path, "Retargeting config JSON")->required();
    rt_cmd->add_option("--out,-o", rt.out_path, "Output file (directory for several inputs)")->required();
    rt_cmd->add_option("--format", rt.format, "csv or json")->capture_default_str();
    rt_cmd->add_option("--unit-scale", rt.unit_scale, "BVH units to meters")->capture_default_str();
    rt_cmd->add_option("--axis", rt.axis, "BVH axis convention: y-up or none")->capture_default_str();
    rt_cmd->add_option("--jobs,-j", rt.jobs, "Parallel jobs across input files")->capture_default_str();
    rt_cmd->add_flag("--seedless", rt.seedless, "Assert that no random number generation is used");

    AnalyzeOptions an;
    auto* an_cmd = app.add_subcommand("analyze", "Tracking errors and artifact detection");
    an_cmd->add_option("reference", an.reference_path, "Reference motion (CSV or JSON)")->required();
    an_cmd->add_option("--actual", an.actual_path, "Motion compared against the reference");
    an_cmd->add_option("--robot", an.robot_path, "URDF or native robot JSON")->required();
    an_cmd->add_option("--geometry", an.geometry_path, "Geometry / threshold config JSON");
    an_cmd->add_option("--out,-o", an.out_path, "Report JSON path")->required();
    an_cmd->add_option("--fail-on", an.fail_on, "detector[=budget]: exit 5 when the flag count exceeds budget");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kIo;
    }

    if (*info_cmd) return cmd_info(info, out, err);
    if (*rt_cmd) return cmd_retarget(rt, out, err);
    return cmd_analyze(an, out, err);
}

}  // namespace gmr::cli
