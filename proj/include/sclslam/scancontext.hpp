#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <utility>
#include <vector>

#include "sclslam/pointcloud.hpp"

namespace sclslam {

struct DescriptorParams {
    int num_rings = 20;
    int num_sectors = 60;
    double max_radius = 80.0;        // m
    double min_height_offset = 2.0;  // m, added to z so ground returns encode positive

    void validate() const;
    double sector_angle() const;
};

// Polar ring x sector matrix of per-bin maximum heights (0 = empty bin).
struct Descriptor {
    Eigen::MatrixXd matrix;    // num_rings x num_sectors
    Eigen::VectorXd ring_key;  // per-ring occupancy ratio

    int num_rings() const { return static_cast<int>(matrix.rows()); }
    int num_sectors() const { return static_cast<int>(matrix.cols()); }
};

struct DescriptorMatch {
    double distance = 1.0;
    int shift = 0;
};

struct LoopCandidate {
    int matched_id = -1;
    int shift = 0;
    double distance = 1.0;
};

Descriptor make_descriptor(const PointCloud& cloud, const DescriptorParams& params);

/// Wraps an already-filled matrix and computes its ring key.
Descriptor descriptor_from_matrix(Eigen::MatrixXd matrix);

/// Rotation-aligned distance. Column j of `a` is compared with column
/// (j + shift) mod S of `b`; the minimizing shift is returned (ties go to the
/// smaller shift). Throws ShapeMismatch.
DescriptorMatch descriptor_distance(const Descriptor& a, const Descriptor& b);

Eigen::VectorXd ring_key(const Eigen::MatrixXd& matrix);

/// Moves column j to column (j + n) mod S.
Descriptor circshift(const Descriptor& d, int n);

struct LoopSearchParams {
    int num_candidates = 10;  // nearest ring keys examined
    double loop_threshold = 0.2;
    int exclusion_window = 30;  // keyframes
};

// Keyframe descriptor store with exact ring-key retrieval. One writer at a
// time; detect_loop may run concurrently with other readers.
class ScanContextDatabase {
public:
    explicit ScanContextDatabase(LoopSearchParams params = {}) : params_(params) {}

    void add_keyframe(int id, Descriptor d);

    /// Best revisit candidate for a stored query, or nullopt (always nullopt on
    /// an empty database). Throws UnknownId.
    std::optional<LoopCandidate> detect_loop(int query_id) const;

    std::size_t size() const;
    const Descriptor& descriptor(int id) const;
    const LoopSearchParams& params() const { return params_; }

private:
    std::size_t index_of(int id) const;

    LoopSearchParams params_;
    mutable std::shared_mutex mutex_;
    std::vector<int> ids_;
    std::vector<Descriptor> descriptors_;
};

/// Descriptor text: num_rings lines of num_sectors values, '%.6f'.
void write_descriptor(const std::filesystem::path& path, const Descriptor& d);
Descriptor read_descriptor(const std::filesystem::path& path);

}  // namespace sclslam
