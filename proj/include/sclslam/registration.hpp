#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sclslam/pointcloud.hpp"
#include "sclslam/scancontext.hpp"

namespace sclslam {

struct IcpParams {
    double max_corr_dist = 1.0;  // m
    int max_iterations = 50;
    double translation_eps = 1e-6;  // m
    double rotation_eps = 1e-6;     // rad
    double fitness_accept = 0.5;

    void validate() const;
};

// Diagnostics for one ICP iteration. rmse_after is evaluated on the same
// correspondence set after the closed-form fit.
struct IcpIteration {
    double rmse_before = 0.0;
    double rmse_after = 0.0;
    std::size_t correspondences = 0;
    bool same_correspondences = false;  // identical pairs to the previous iteration
};

struct IcpResult {
    Pose transform;  // source -> target
    double fitness = 0.0;
    double inlier_rmse = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<IcpIteration> history;
};

/// Closed-form rigid fit (scale fixed to 1) minimizing sum |R s + t - d|^2.
Pose fit_rigid(std::span<const Vector3> source, std::span<const Vector3> target);

/// Point-to-point ICP. Throws EmptyCloud, or NoCorrespondences when the first
/// iteration finds no pair within max_corr_dist.
IcpResult icp(const PointCloud& source, const PointCloud& target, const Pose& init, const IcpParams& params);

/// Union of keyframe scans with ids in [center - half_width, center + half_width],
/// each moved into the world frame by its pose, then voxel-downsampled.
PointCloud build_submap(std::span<const PointCloud> scans, std::span<const Pose> poses, int center_id,
                        int half_width, double leaf);

struct LoopMeasureParams {
    int submap_half_width = 12;  // keyframes
    double submap_leaf = 0.4;    // m
};

struct LoopMeasurement {
    Pose relative;  // z_jk: pose of k in the frame of j
    double fitness = 0.0;
    IcpResult icp;
};

/// Registers the query scan against the submap around the matched keyframe.
/// The ICP seed keeps the odometry relative pose but takes its yaw from the
/// descriptor shift; a co-located seed (same yaw, zero offset) is also tried
/// and the better-fitting result kept. Returns nullopt when fitness is below
/// fitness_accept.
std::optional<LoopMeasurement> measure_loop_constraint(const PointCloud& query_scan,
                                                       std::span<const PointCloud> scans,
                                                       std::span<const Pose> poses,
                                                       const LoopCandidate& candidate,
                                                       const Pose& query_pose_est,
                                                       const IcpParams& icp_params,
                                                       const DescriptorParams& sc_params,
                                                       const LoopMeasureParams& measure_params = {});

}  // namespace sclslam
