// sclslam: batch loop-closing back-end for LiDAR odometry.
//
//   sclslam run        --odom FILE --scans DIR --out DIR [--config FILE] [--planar] [--no-loops] [--set k=v]...
//   sclslam map        --poses FILE --scans DIR --out FILE.ply [--leaf M] | --dir SAVER_DIR --out FILE.ply
//   sclslam simulate   --out DIR [--seed N] [--perimeter M] [--overlap M] [--noise M]
//   sclslam eval       --est FILE --gt FILE
//   sclslam export-g2o --odom FILE --scans DIR --out FILE.g2o [--config FILE] [--planar] [--no-loops]

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sclslam/error.hpp"
#include "sclslam/pipeline.hpp"
#include "sclslam/simulator.hpp"

namespace fs = std::filesystem;
using namespace sclslam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

struct RunArgs {
    std::string odom;
    std::string scans;
    std::string out;
    std::string config;
    bool planar = false;
    bool no_loops = false;
    std::vector<std::string> overrides;
};

void add_run_flags(CLI::App* cmd, RunArgs& a, const char* out_help) {
    cmd->add_option("--odom", a.odom, "odometry poses (KITTI or TUM)")->required();
    cmd->add_option("--scans", a.scans, "directory of per-frame .pcd/.ply scans")->required();
    cmd->add_option("--out", a.out, out_help)->required();
    cmd->add_option("--config", a.config, "key = value configuration file");
    cmd->add_flag("--planar", a.planar, "zero z on ingestion");
    cmd->add_flag("--no-loops", a.no_loops, "disable loop closing");
    cmd->add_option("--set", a.overrides, "override one config key (key=value)");
}

PipelineConfig build_config(const RunArgs& a) {
    PipelineConfig cfg;
    if (!a.config.empty()) apply_config_file(cfg, a.config);
    for (const std::string& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.planar) cfg.planar_mode = true;
    if (a.no_loops) cfg.loops_enabled = false;
    cfg.validate();
    return cfg;
}

void print_solve_summary(const SlamResult& result) {
    std::printf("keyframes: %zu\n", result.keyframes.size());
    std::printf("loops: %zu\n", result.loops.size());
    for (const std::string& m : result.messages) std::printf("note: %s\n", m.c_str());
    if (!result.reports.empty()) {
        std::printf("initial_cost: %.6f\n", result.reports.back().initial_cost);
        std::printf("final_cost: %.6f\n", result.reports.back().final_cost);
    } else {
        const double c = total_cost(result.graph);
        std::printf("initial_cost: %.6f\n", c);
        std::printf("final_cost: %.6f\n", c);
    }
}

int cmd_run(const RunArgs& a) {
    const PipelineConfig cfg = build_config(a);
    const SlamResult result = run_slam(ingest(a.odom, a.scans), cfg);
    const fs::path out(a.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + out.string());
    save_outputs(result, out);
    std::ofstream echo(out / "config.txt", std::ios::trunc);
    echo << format_config(cfg);
    if (!echo) throw Error(ErrorCode::kIoError, "cannot write " + (out / "config.txt").string());
    print_solve_summary(result);
    std::printf("output: %s\n", out.string().c_str());
    return kExitOk;
}

int cmd_export_g2o(const RunArgs& a) {
    const PipelineConfig cfg = build_config(a);
    const SlamResult result = run_slam(ingest(a.odom, a.scans), cfg);
    write_g2o(fs::path(a.out), result.graph);
    print_solve_summary(result);
    std::printf("vertices: %zu\nedges: %zu\n", result.graph.num_poses(), result.graph.factors().size());
    std::printf("output: %s\n", a.out.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LiDAR SLAM back-end with Scan Context loop closing"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    RunArgs run_args;
    CLI::App* run = app.add_subcommand("run", "detect loops, optimize and save place-wise outputs");
    add_run_flags(run, run_args, "output directory");

    RunArgs g2o_args;
    CLI::App* g2o = app.add_subcommand("export-g2o", "run the pipeline and dump the pose graph as g2o");
    add_run_flags(g2o, g2o_args, "output .g2o file");

    std::string map_poses, map_scans, map_dir, map_out;
    std::optional<double> map_leaf;
    CLI::App* map = app.add_subcommand("map", "merge saved scans into one map");
    map->add_option("--dir", map_dir, "saver directory (uses optimized_poses.txt and Scans/)");
    map->add_option("--poses", map_poses, "pose file")->excludes("--dir");
    map->add_option("--scans", map_scans, "scan directory")->excludes("--dir");
    map->add_option("--out", map_out, "output .ply")->required();
    map->add_option("--leaf", map_leaf, "voxel leaf in metres (default 0.2)");

    std::string sim_out;
    std::uint64_t sim_seed = SimulationConfig{}.seed;
    std::optional<double> sim_perimeter, sim_overlap, sim_noise;
    CLI::App* sim = app.add_subcommand("simulate", "write a synthetic dataset");
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_option("--seed", sim_seed, "world and noise seed");
    sim->add_option("--perimeter", sim_perimeter, "square loop perimeter in metres");
    sim->add_option("--overlap", sim_overlap, "metres driven past the start");
    sim->add_option("--noise", sim_noise, "range noise sigma in metres");

    std::string eval_est, eval_gt;
    CLI::App* eval = app.add_subcommand("eval", "absolute trajectory error after rigid alignment");
    eval->add_option("--est", eval_est, "estimated poses")->required();
    eval->add_option("--gt", eval_gt, "ground-truth poses")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*run) return cmd_run(run_args);
        if (*g2o) return cmd_export_g2o(g2o_args);
        if (*map) {
            if (map_dir.empty() && (map_poses.empty() || map_scans.empty())) {
                std::fprintf(stderr, "map: give --dir or both --poses and --scans\n%s", map->help().c_str());
                return kExitInput;
            }
            const fs::path poses = map_dir.empty() ? fs::path(map_poses) : fs::path(map_dir) / "optimized_poses.txt";
            const fs::path scans = map_dir.empty() ? fs::path(map_scans) : fs::path(map_dir) / "Scans";
            const std::size_t n = assemble_map(poses, scans, map_leaf.value_or(PipelineConfig{}.map_leaf), map_out);
            std::printf("points: %zu\noutput: %s\n", n, map_out.c_str());
            return kExitOk;
        }
        if (*sim) {
            SimulationConfig cfg;
            cfg.seed = sim_seed;
            if (sim_perimeter) cfg.perimeter = *sim_perimeter;
            if (sim_overlap) cfg.overlap = *sim_overlap;
            if (sim_noise) cfg.lidar.range_noise_sigma = *sim_noise;
            if (!(cfg.perimeter > 0.0) || cfg.overlap < 0.0 || cfg.lidar.range_noise_sigma < 0.0) {
                throw Error(ErrorCode::kInvalidArgument, "perimeter must be positive, overlap and noise non-negative");
            }
            const Dataset data = simulate(cfg);
            write_dataset(sim_out, data);
            std::printf("poses: %zu\noutput: %s\n", data.ground_truth.size(), sim_out.c_str());
            return kExitOk;
        }
        if (*eval) {
            std::vector<Pose> est, gt;
            for (const StampedPose& p : read_pose_file(eval_est).poses) est.push_back(p.pose);
            for (const StampedPose& p : read_pose_file(eval_gt).poses) gt.push_back(p.pose);
            if (est.size() != gt.size()) {
                throw Error(ErrorCode::kFormatMismatch, std::to_string(est.size()) + " estimated poses but " +
                                                            std::to_string(gt.size()) + " ground-truth poses");
            }
            const AteResult ate = evaluate_ate(est, gt);
            std::printf("ate_rmse: %.3f\n", ate.rmse);
            std::printf("ate_x: %.3f\nate_y: %.3f\nate_z: %.3f\n", ate.rmse_axis.x(), ate.rmse_axis.y(),
                        ate.rmse_axis.z());
            return kExitOk;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.is_input_error() ? kExitInput : kExitInternal;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
    return kExitInternal;
}
