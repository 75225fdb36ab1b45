#include "sclslam/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "sclslam/error.hpp"

namespace sclslam {

namespace fs = std::filesystem;

void PipelineConfig::validate() const {
    if (!(keyframe_gap_m > 0.0) || !(keyframe_gap_rad > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "keyframe gaps must be positive");
    }
    if (!(scan_leaf > 0.0) || !(map_leaf > 0.0) || !(loop_measure.submap_leaf > 0.0)) {
        throw Error(ErrorCode::kInvalidLeaf, "voxel leaves must be positive");
    }
    descriptor.validate();
    icp.validate();
    for (double s : {odom_sigma_t, odom_sigma_r, loop_sigma_t, loop_sigma_r, prior_sigma_t, prior_sigma_r}) {
        if (!(s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "covariance sigmas must be positive");
    }
}

namespace {

struct ConfigEntry {
    const char* key;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

double to_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || !std::isfinite(x)) {
        throw Error(ErrorCode::kParseError, "config key '" + key + "': expected a number, got '" + v + "'");
    }
    return x;
}

int to_int(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const long x = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0') {
        throw Error(ErrorCode::kParseError, "config key '" + key + "': expected an integer, got '" + v + "'");
    }
    return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error(ErrorCode::kParseError, "config key '" + key + "': expected a boolean, got '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string from_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

#define SCL_DOUBLE(name, field)                                                             \
    ConfigEntry {                                                                           \
        name, [](PipelineConfig& c, const std::string& v) { c.field = to_double(name, v); }, \
            [](const PipelineConfig& c) { return from_double(c.field); }                    \
    }
#define SCL_INT(name, field)                                                             \
    ConfigEntry {                                                                        \
        name, [](PipelineConfig& c, const std::string& v) { c.field = to_int(name, v); }, \
            [](const PipelineConfig& c) { return std::to_string(c.field); }              \
    }
#define SCL_BOOL(name, field)                                                             \
    ConfigEntry {                                                                         \
        name, [](PipelineConfig& c, const std::string& v) { c.field = to_bool(name, v); }, \
            [](const PipelineConfig& c) { return std::string(c.field ? "true" : "false"); } \
    }

const std::vector<ConfigEntry>& config_entries() {
    static const std::vector<ConfigEntry> entries = {
        SCL_DOUBLE("keyframe_gap_m", keyframe_gap_m),
        SCL_DOUBLE("keyframe_gap_rad", keyframe_gap_rad),
        SCL_BOOL("planar_mode", planar_mode),
        SCL_BOOL("loops_enabled", loops_enabled),
        SCL_BOOL("deterministic", deterministic),
        SCL_DOUBLE("scan_leaf", scan_leaf),
        SCL_DOUBLE("map_leaf", map_leaf),
        SCL_INT("sc_num_rings", descriptor.num_rings),
        SCL_INT("sc_num_sectors", descriptor.num_sectors),
        SCL_DOUBLE("sc_max_radius", descriptor.max_radius),
        SCL_DOUBLE("sc_min_height_offset", descriptor.min_height_offset),
        SCL_INT("loop_candidates", loop_search.num_candidates),
        SCL_DOUBLE("loop_threshold", loop_search.loop_threshold),
        SCL_INT("loop_exclusion_window", loop_search.exclusion_window),
        SCL_DOUBLE("icp_max_corr_dist", icp.max_corr_dist),
        SCL_INT("icp_max_iterations", icp.max_iterations),
        SCL_DOUBLE("icp_translation_eps", icp.translation_eps),
        SCL_DOUBLE("icp_rotation_eps", icp.rotation_eps),
        SCL_DOUBLE("icp_fitness_accept", icp.fitness_accept),
        SCL_INT("submap_half_width", loop_measure.submap_half_width),
        SCL_DOUBLE("submap_leaf", loop_measure.submap_leaf),
        SCL_INT("solver_max_iters", solver.max_iters),
        SCL_DOUBLE("solver_lambda_init", solver.lambda_init),
        SCL_DOUBLE("solver_cost_tol", solver.cost_tol),
        SCL_DOUBLE("solver_step_tol", solver.step_tol),
        ConfigEntry{"solver_jacobians",
                    [](PipelineConfig& c, const std::string& v) {
                        if (v == "numeric") {
                            c.solver.jacobians = JacobianMode::kNumeric;
                        } else if (v == "analytic") {
                            c.solver.jacobians = JacobianMode::kAnalytic;
                        } else {
                            throw Error(ErrorCode::kParseError, "solver_jacobians must be numeric or analytic");
                        }
                    },
                    [](const PipelineConfig& c) {
                        return std::string(c.solver.jacobians == JacobianMode::kNumeric ? "numeric" : "analytic");
                    }},
        SCL_DOUBLE("odom_sigma_t", odom_sigma_t),
        SCL_DOUBLE("odom_sigma_r", odom_sigma_r),
        SCL_DOUBLE("loop_sigma_t", loop_sigma_t),
        SCL_DOUBLE("loop_sigma_r", loop_sigma_r),
        SCL_DOUBLE("prior_sigma_t", prior_sigma_t),
        SCL_DOUBLE("prior_sigma_r", prior_sigma_r),
        ConfigEntry{"loop_kernel",
                    [](PipelineConfig& c, const std::string& v) {
                        using T = RobustKernel::Type;
                        if (v == "none") c.loop_kernel.type = T::kNone;
                        else if (v == "cauchy") c.loop_kernel.type = T::kCauchy;
                        else if (v == "huber") c.loop_kernel.type = T::kHuber;
                        else if (v == "scaled") c.loop_kernel.type = T::kScaled;
                        else throw Error(ErrorCode::kParseError, "loop_kernel must be none, cauchy, huber or scaled");
                    },
                    [](const PipelineConfig& c) {
                        switch (c.loop_kernel.type) {
                            case RobustKernel::Type::kNone: return std::string("none");
                            case RobustKernel::Type::kCauchy: return std::string("cauchy");
                            case RobustKernel::Type::kHuber: return std::string("huber");
                            case RobustKernel::Type::kScaled: return std::string("scaled");
                        }
                        return std::string("none");
                    }},
        SCL_DOUBLE("loop_kernel_param", loop_kernel.param),
    };
    return entries;
}

#undef SCL_DOUBLE
#undef SCL_INT
#undef SCL_BOOL

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    for (const ConfigEntry& e : config_entries()) {
        if (key == e.key) {
            e.set(cfg, value);
            return;
        }
    }
    throw Error(ErrorCode::kParseError, "unknown config key '" + key + "'");
}

void apply_config_text(PipelineConfig& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::kParseError, "config line " + std::to_string(lineno) + ": expected key = value");
        }
        set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void apply_config_file(PipelineConfig& cfg, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    apply_config_text(cfg, text.str());
}

std::string format_config(const PipelineConfig& cfg) {
    std::string out;
    for (const ConfigEntry& e : config_entries()) out += std::string(e.key) + " = " + e.get(cfg) + "\n";
    return out;
}

PoseFile read_pose_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open pose file " + path.string());
    PoseFile file;
    std::optional<std::size_t> tokens_per_line;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<double> v;
        std::string tok;
        while (ls >> tok) {
            char* end = nullptr;
            const double x = std::strtod(tok.c_str(), &end);
            if (*end != '\0') {
                throw Error(ErrorCode::kParseError,
                            path.string() + ":" + std::to_string(lineno) + ": malformed number '" + tok + "'");
            }
            v.push_back(x);
        }
        if (v.empty()) continue;
        if (!tokens_per_line) {
            if (v.size() != 12 && v.size() != 8) {
                throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(lineno) +
                                                        ": expected 12 (KITTI) or 8 (TUM) values, got " +
                                                        std::to_string(v.size()));
            }
            tokens_per_line = v.size();
            file.format = v.size() == 12 ? PoseFileFormat::kKitti : PoseFileFormat::kTum;
        } else if (v.size() != *tokens_per_line) {
            throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                                    std::to_string(*tokens_per_line) + " values, got " +
                                                    std::to_string(v.size()));
        }
        StampedPose sp;
        if (file.format == PoseFileFormat::kKitti) {
            sp.pose.rotation << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
            sp.pose.translation << v[3], v[7], v[11];
            sp.pose = renormalized(sp.pose);
        } else {
            sp.timestamp = v[0];
            sp.pose = from_quaternion(Vector3(v[1], v[2], v[3]), v[4], v[5], v[6], v[7]);
        }
        file.poses.push_back(sp);
    }
    return file;
}

void write_kitti_poses(const fs::path& path, const std::vector<Pose>& poses) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
    for (const Pose& p : poses) out << format_kitti(p) << '\n';
    if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

std::vector<fs::path> list_scans(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::kIoError, "scan directory " + dir.string() + " not found");
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".pcd" || ext == ".ply")) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Frame> ingest(const fs::path& odometry_file, const fs::path& scan_dir) {
    PoseFile poses = read_pose_file(odometry_file);
    const std::vector<fs::path> scans = list_scans(scan_dir);
    if (poses.poses.size() != scans.size()) {
        throw Error(ErrorCode::kFormatMismatch, std::to_string(poses.poses.size()) + " odometry poses but " +
                                                    std::to_string(scans.size()) + " scans");
    }
    std::vector<Frame> frames;
    frames.reserve(scans.size());
    for (std::size_t i = 0; i < scans.size(); ++i) frames.push_back({poses.poses[i], read_cloud(scans[i])});
    return frames;
}

bool select_keyframe(const std::optional<Pose>& last_keyframe, const Pose& current, const PipelineConfig& cfg) {
    if (!last_keyframe) return true;
    const Pose delta = between(*last_keyframe, current);
    return delta.translation.norm() >= cfg.keyframe_gap_m || rotation_angle(delta.rotation) >= cfg.keyframe_gap_rad;
}

SlamResult run_slam(const std::vector<Frame>& frames, const PipelineConfig& cfg) {
    cfg.validate();
    SlamResult result;
    ScanContextDatabase db(cfg.loop_search);
    PoseGraph& graph = result.graph;
    std::vector<PointCloud> scans;
    const Matrix6 odom_cov = diagonal_covariance(cfg.odom_sigma_t, cfg.odom_sigma_r);
    const Matrix6 loop_cov = diagonal_covariance(cfg.loop_sigma_t, cfg.loop_sigma_r);
    const Matrix6 prior_cov = diagonal_covariance(cfg.prior_sigma_t, cfg.prior_sigma_r);

    std::optional<Pose> last_odom;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const Pose odom = cfg.planar_mode ? flatten_to_plane(frames[f].odometry.pose) : frames[f].odometry.pose;
        if (!select_keyframe(last_odom, odom, cfg)) continue;

        PointCloud scan = frames[f].scan;
        if (cfg.planar_mode) {
            for (Vector3& p : scan.points) p.z() = 0.0;
        }
        scan = round_to_float(voxel_downsample(scan, cfg.scan_leaf));

        Keyframe kf;
        kf.id = static_cast<int>(result.keyframes.size());
        kf.frame_index = f;
        kf.odom_pose = odom;
        kf.descriptor = make_descriptor(scan, cfg.descriptor);

        if (kf.id == 0) {
            graph.add_pose(odom);
            graph.add_prior(0, odom, prior_cov);
        } else {
            graph.add_odometry_factor(kf.id - 1, between(*last_odom, odom), odom_cov);
        }
        last_odom = odom;
        db.add_keyframe(kf.id, kf.descriptor);
        scans.push_back(scan);
        result.keyframes.push_back(std::move(kf));

        if (!cfg.loops_enabled) continue;
        const int k = result.keyframes.back().id;
        const std::optional<LoopCandidate> candidate = db.detect_loop(k);
        if (!candidate) continue;

        std::optional<LoopMeasurement> m;
        try {
            const std::vector<Pose> snapshot = graph.poses();
            m = measure_loop_constraint(scans.back(), scans, snapshot, *candidate, snapshot[static_cast<std::size_t>(k)],
                                        cfg.icp, cfg.descriptor, cfg.loop_measure);
        } catch (const Error& e) {
            result.messages.push_back("loop " + std::to_string(candidate->matched_id) + "-" + std::to_string(k) +
                                      " skipped: " + e.what());
            continue;
        }
        if (!m) {
            result.messages.push_back("loop " + std::to_string(candidate->matched_id) + "-" + std::to_string(k) +
                                      " rejected: ICP fitness below threshold");
            continue;
        }
        graph.add_loop_factor(candidate->matched_id, k, m->relative, loop_cov, cfg.loop_kernel);
        result.loops.push_back({candidate->matched_id, k, candidate->shift, candidate->distance, m->fitness});
        result.reports.push_back(optimize(graph, cfg.solver));
    }

    for (std::size_t i = 0; i < scans.size(); ++i) result.keyframes[i].scan = std::move(scans[i]);
    result.optimized = graph.poses();
    return result;
}

void save_outputs(const SlamResult& result, const fs::path& out_dir) {
    std::error_code ec;
    for (const char* sub : {"Scans", "SCDs"}) {
        fs::remove_all(out_dir / sub, ec);
        fs::create_directories(out_dir / sub, ec);
        if (ec) throw Error(ErrorCode::kIoError, "cannot create " + (out_dir / sub).string());
    }
    char name[32];
    std::vector<Pose> odom;
    for (const Keyframe& kf : result.keyframes) {
        std::snprintf(name, sizeof(name), "%06d.pcd", kf.id);
        write_cloud(out_dir / "Scans" / name, kf.scan, CloudFormat::kPcdBinary);
        std::snprintf(name, sizeof(name), "%06d.scd", kf.id);
        write_descriptor(out_dir / "SCDs" / name, kf.descriptor);
        odom.push_back(kf.odom_pose);
    }
    write_kitti_poses(out_dir / "optimized_poses.txt", result.optimized);
    write_kitti_poses(out_dir / "odom_poses.txt", odom);

    std::ofstream loops(out_dir / "loops.txt", std::ios::trunc);
    if (!loops) throw Error(ErrorCode::kIoError, "cannot write " + (out_dir / "loops.txt").string());
    loops << "# j k distance fitness\n";
    char buf[128];
    for (const LoopRecord& l : result.loops) {
        std::snprintf(buf, sizeof(buf), "%d %d %.6f %.6f\n", l.j, l.k, l.distance, l.fitness);
        loops << buf;
    }
    if (!loops) throw Error(ErrorCode::kIoError, "failed writing loops.txt");
}

PointCloud assemble_map(const std::vector<Pose>& poses, const std::vector<PointCloud>& scans, double leaf) {
    if (poses.size() != scans.size()) {
        throw Error(ErrorCode::kFormatMismatch, std::to_string(poses.size()) + " poses but " +
                                                    std::to_string(scans.size()) + " scans");
    }
    if (!(leaf > 0.0)) throw Error(ErrorCode::kInvalidLeaf, "map leaf must be positive");
    PointCloud world;
    for (std::size_t i = 0; i < poses.size(); ++i) world.append(transform_cloud(poses[i], scans[i]));
    return voxel_downsample(world, leaf);
}

std::size_t assemble_map(const fs::path& poses_file, const fs::path& scans_dir, double leaf, const fs::path& out_ply) {
    if (!(leaf > 0.0)) throw Error(ErrorCode::kInvalidLeaf, "map leaf must be positive");
    const PoseFile file = read_pose_file(poses_file);
    const std::vector<fs::path> paths = list_scans(scans_dir);
    if (file.poses.size() != paths.size()) {
        throw Error(ErrorCode::kFormatMismatch, std::to_string(file.poses.size()) + " poses but " +
                                                    std::to_string(paths.size()) + " scans");
    }
    std::vector<Pose> poses;
    std::vector<PointCloud> scans;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        poses.push_back(file.poses[i].pose);
        scans.push_back(read_cloud(paths[i]));
    }
    const PointCloud map = assemble_map(poses, scans, leaf);
    write_cloud(out_ply, map, CloudFormat::kPlyAscii);
    return map.size();
}

}  // namespace sclslam
