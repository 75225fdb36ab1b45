#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sclslam/posegraph.hpp"
#include "sclslam/registration.hpp"
#include "sclslam/scancontext.hpp"

namespace sclslam {

struct PipelineConfig {
    double keyframe_gap_m = 1.0;
    double keyframe_gap_rad = 0.2;
    bool planar_mode = false;
    bool loops_enabled = true;
    bool deterministic = true;

    double scan_leaf = 0.25;  // saver / keyframe scan voxel
    double map_leaf = 0.2;

    DescriptorParams descriptor;
    LoopSearchParams loop_search;
    IcpParams icp;
    LoopMeasureParams loop_measure;
    SolverConfig solver;

    double odom_sigma_t = 0.1;
    double odom_sigma_r = 0.01;
    double loop_sigma_t = 0.3;
    double loop_sigma_r = 0.03;
    double prior_sigma_t = 1e-4;
    double prior_sigma_r = 1e-4;
    RobustKernel loop_kernel = RobustKernel::cauchy(1.0);

    void validate() const;
};

/// Applies `key = value` lines ('#' comments allowed). Throws ParseError on an
/// unknown key or malformed value.
void apply_config_text(PipelineConfig& cfg, const std::string& text);
void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path);
/// Sets a single key; same errors as apply_config_text.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);
/// Every key in a fixed order, round-trippable through apply_config_text.
std::string format_config(const PipelineConfig& cfg);

struct StampedPose {
    Pose pose;
    std::optional<double> timestamp;  // TUM input only
};

enum class PoseFileFormat { kKitti, kTum };

struct PoseFile {
    PoseFileFormat format = PoseFileFormat::kKitti;
    std::vector<StampedPose> poses;
};

/// KITTI (12 numbers) or TUM (t x y z qx qy qz qw), detected from the token
/// count of the first data line.
PoseFile read_pose_file(const std::filesystem::path& path);
void write_kitti_poses(const std::filesystem::path& path, const std::vector<Pose>& poses);

/// Point cloud files (.pcd / .ply) in a directory, sorted by file name.
std::vector<std::filesystem::path> list_scans(const std::filesystem::path& dir);

struct Frame {
    StampedPose odometry;
    PointCloud scan;
};

/// Pairs odometry poses with scans by index. Throws FormatMismatch when the
/// counts differ.
std::vector<Frame> ingest(const std::filesystem::path& odometry_file, const std::filesystem::path& scan_dir);

bool select_keyframe(const std::optional<Pose>& last_keyframe, const Pose& current, const PipelineConfig& cfg);

struct Keyframe {
    int id = 0;
    std::size_t frame_index = 0;  // position in the input stream
    Pose odom_pose;
    PointCloud scan;  // downsampled, sensor frame
    Descriptor descriptor;
};

struct LoopRecord {
    int j = 0;
    int k = 0;
    int shift = 0;
    double distance = 0.0;
    double fitness = 0.0;
};

struct SlamResult {
    std::vector<Keyframe> keyframes;
    std::vector<Pose> optimized;
    std::vector<LoopRecord> loops;
    std::vector<SolveReport> reports;
    PoseGraph graph;
    std::vector<std::string> messages;  // skipped loop measurements and similar
};

SlamResult run_slam(const std::vector<Frame>& frames, const PipelineConfig& cfg);

/// Writes Scans/%06d.pcd, SCDs/%06d.scd, optimized_poses.txt, odom_poses.txt
/// and loops.txt under out_dir, replacing earlier saver output.
void save_outputs(const SlamResult& result, const std::filesystem::path& out_dir);

PointCloud assemble_map(const std::vector<Pose>& poses, const std::vector<PointCloud>& scans, double leaf);

/// Reads a saved trajectory and scan directory, writes the merged map as
/// ASCII PLY and returns its point count.
std::size_t assemble_map(const std::filesystem::path& poses_file, const std::filesystem::path& scans_dir,
                         double leaf, const std::filesystem::path& out_ply);

}  // namespace sclslam
