#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sclslam/pointcloud.hpp"

namespace sclslam {

struct Box {
    Vector3 min;
    Vector3 max;
};

// Vertical pole standing on the ground.
struct Cylinder {
    double x = 0.0;
    double y = 0.0;
    double radius = 0.3;
    double height = 5.0;
};

// Ground plane z = 0 plus analytic primitives resting on it.
struct World {
    std::vector<Box> boxes;
    std::vector<Cylinder> cylinders;
};

struct WorldParams {
    double extent_m = 100.0;  // side of the square placement region, centred on the path
    int n_boxes = 20;
    int n_cylinders = 30;
    double corridor_half_width = 4.0;  // m kept free around the path
};

World generate_world(std::uint64_t seed, const WorldParams& params, const std::vector<Pose>& path);

struct LidarModel {
    int azimuth_steps = 360;
    std::vector<double> elevations;  // rad
    double max_range = 80.0;
    double range_noise_sigma = 0.0;

    /// 16 channels evenly spread over [-15 deg, +15 deg].
    static LidarModel vlp16(double range_noise_sigma = 0.0);
};

/// Casts every (azimuth, elevation) ray from the sensor pose and returns the
/// nearest hits in the sensor frame, ordered azimuth-major, elevation-minor.
PointCloud render_scan(const World& world, const Pose& sensor_pose, const LidarModel& model,
                       std::uint64_t noise_seed = 0);

struct DriftModel {
    double translation_sigma = 0.0;  // m per step, each axis
    double yaw_sigma = 0.0;          // rad per step
    double yaw_bias = 0.0;           // rad per step
    double z_bias = 0.0;             // m per step
    std::uint64_t seed = 0;
};

/// Dead-reckons perturbed ground-truth increments from gt[0].
std::vector<Pose> simulate_odometry(const std::vector<Pose>& ground_truth, const DriftModel& drift);

struct AteResult {
    double rmse = 0.0;
    Vector3 rmse_axis = Vector3::Zero();
    Pose alignment;  // applied to the estimate
};

/// Rigid (no scale) least-squares alignment of the estimated positions onto
/// the ground truth, then RMSE of the translation residuals.
AteResult evaluate_ate(const std::vector<Pose>& estimated, const std::vector<Pose>& ground_truth);

/// Square loop of the given perimeter, one pose per `step` metres, heading
/// along the direction of travel, continuing `overlap` metres past the start.
std::vector<Pose> square_loop_trajectory(double perimeter, double step, double overlap, double sensor_height);

struct SimulationConfig {
    std::uint64_t seed = 7;
    double perimeter = 150.0;
    double step = 1.0;
    double overlap = 20.0;
    double sensor_height = 1.8;
    WorldParams world;
    LidarModel lidar = LidarModel::vlp16(0.02);
    DriftModel drift{0.01, 0.0005, 0.002, 0.02, 11};
};

struct Dataset {
    World world;
    std::vector<Pose> ground_truth;
    std::vector<Pose> odometry;
    std::vector<PointCloud> scans;  // float-rounded, sensor frame
};

Dataset simulate(const SimulationConfig& config);

/// Writes odom.txt (KITTI), gt_poses.txt and Scans/%06d.pcd (binary).
void write_dataset(const std::filesystem::path& dir, const Dataset& data);

}  // namespace sclslam
