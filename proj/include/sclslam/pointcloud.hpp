#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "sclslam/geometry.hpp"

namespace sclslam {

struct PointCloud {
    std::vector<Vector3> points;
    // Either empty or one value per point.
    std::vector<float> intensity;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_intensity() const { return !intensity.empty(); }

    void push_back(const Vector3& p) { points.push_back(p); }
    void push_back(const Vector3& p, float i) {
        points.push_back(p);
        intensity.push_back(i);
    }
    void append(const PointCloud& other);
};

/// Drops non-finite points. Returns the number dropped.
std::size_t drop_nonfinite(PointCloud& cloud);

/// One centroid per occupied voxel of side `leaf`, ordered by ascending
/// (ix, iy, iz) voxel index with ix = floor(x / leaf). Throws InvalidLeaf.
PointCloud voxel_downsample(const PointCloud& cloud, double leaf);

PointCloud transform_cloud(const Pose& pose, const PointCloud& cloud);

/// Rounds coordinates to float precision, matching what the binary saver
/// stores.
PointCloud round_to_float(const PointCloud& cloud);

enum class CloudFormat { kPcdBinary, kPcdAscii, kPlyAscii };

/// Reads a .pcd (ascii or binary) or .ply (ascii) file. Non-finite points are
/// dropped; the count is written to `dropped` when given.
PointCloud read_cloud(const std::filesystem::path& path, std::size_t* dropped = nullptr);

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud, CloudFormat format);

}  // namespace sclslam
