#include "sclslam/registration.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <exception>
#include <string>

#include "nearest_neighbor.hpp"
#include "sclslam/error.hpp"

namespace sclslam {

void IcpParams::validate() const {
    if (!(max_corr_dist > 0.0) || max_iterations <= 0 || !(translation_eps > 0.0) || !(rotation_eps > 0.0) ||
        !(fitness_accept > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "ICP parameters must all be positive");
    }
}

Pose fit_rigid(std::span<const Vector3> source, std::span<const Vector3> target) {
    const std::size_t n = source.size();
    Vector3 cs = Vector3::Zero();
    Vector3 ct = Vector3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        cs += source[i];
        ct += target[i];
    }
    cs /= static_cast<double>(n);
    ct /= static_cast<double>(n);
    Matrix3 h = Matrix3::Zero();
    for (std::size_t i = 0; i < n; ++i) h += (source[i] - cs) * (target[i] - ct).transpose();

    Eigen::JacobiSVD<Matrix3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Matrix3 u = svd.matrixU();
    const Matrix3 v = svd.matrixV();
    Matrix3 d = Matrix3::Identity();
    if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    const Matrix3 r = v * d * u.transpose();
    return {r, ct - r * cs};
}

namespace {

struct Pairs {
    std::vector<std::size_t> src;
    std::vector<long> tgt;
    std::vector<Vector3> moved;
    std::vector<Vector3> matched;
};

Pairs associate(const std::vector<Vector3>& source, const Pose& t, const detail::RadiusGrid& grid,
                const std::vector<Vector3>& target) {
    Pairs p;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Vector3 q = transform_point(t, source[i]);
        const long j = grid.nearest(q);
        if (j < 0) continue;
        p.src.push_back(i);
        p.tgt.push_back(j);
        p.moved.push_back(q);
        p.matched.push_back(target[static_cast<std::size_t>(j)]);
    }
    return p;
}

double rmse_of(const std::vector<Vector3>& a, const std::vector<Vector3>& b, const Pose& t) {
    if (a.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (transform_point(t, a[i]) - b[i]).squaredNorm();
    return std::sqrt(sum / static_cast<double>(a.size()));
}

}  // namespace

IcpResult icp(const PointCloud& source, const PointCloud& target, const Pose& init, const IcpParams& params) {
    params.validate();
    if (source.empty() || target.empty()) {
        throw Error(ErrorCode::kEmptyCloud, source.empty() ? "source cloud is empty" : "target cloud is empty");
    }
    const detail::RadiusGrid grid(target.points, params.max_corr_dist);

    IcpResult result;
    result.transform = init;
    Pairs previous;
    for (int iter = 0; iter < params.max_iterations; ++iter) {
        Pairs pairs = associate(source.points, result.transform, grid, target.points);
        if (pairs.src.empty()) {
            if (iter == 0) {
                throw Error(ErrorCode::kNoCorrespondences,
                            "no target point within " + std::to_string(params.max_corr_dist) +
                                " m of any source point at the initial guess");
            }
            break;
        }
        const Pose delta = fit_rigid(pairs.moved, pairs.matched);
        IcpIteration it;
        it.correspondences = pairs.src.size();
        it.rmse_before = rmse_of(pairs.moved, pairs.matched, Pose::identity());
        it.rmse_after = rmse_of(pairs.moved, pairs.matched, delta);
        it.same_correspondences = iter > 0 && pairs.src == previous.src && pairs.tgt == previous.tgt;
        result.history.push_back(it);

        result.transform = renormalized(compose(delta, result.transform));
        result.iterations = iter + 1;
        previous = std::move(pairs);
        if (delta.translation.norm() < params.translation_eps &&
            rotation_angle(delta.rotation) < params.rotation_eps) {
            result.converged = true;
            break;
        }
    }

    const Pairs final_pairs = associate(source.points, result.transform, grid, target.points);
    result.fitness = static_cast<double>(final_pairs.src.size()) / static_cast<double>(source.size());
    result.inlier_rmse = rmse_of(final_pairs.moved, final_pairs.matched, Pose::identity());
    return result;
}

PointCloud build_submap(std::span<const PointCloud> scans, std::span<const Pose> poses, int center_id,
                        int half_width, double leaf) {
    if (scans.size() != poses.size()) {
        throw Error(ErrorCode::kInvalidArgument, "scan and pose counts differ");
    }
    const int n = static_cast<int>(scans.size());
    if (center_id < 0 || center_id >= n) {
        throw Error(ErrorCode::kUnknownId, "keyframe " + std::to_string(center_id) + " does not exist");
    }
    const int lo = std::max(0, center_id - std::max(0, half_width));
    const int hi = std::min(n - 1, center_id + std::max(0, half_width));
    PointCloud world;
    for (int i = lo; i <= hi; ++i) world.append(transform_cloud(poses[i], scans[i]));
    return voxel_downsample(world, leaf);
}

std::optional<LoopMeasurement> measure_loop_constraint(const PointCloud& query_scan,
                                                       std::span<const PointCloud> scans,
                                                       std::span<const Pose> poses,
                                                       const LoopCandidate& candidate,
                                                       const Pose& query_pose_est,
                                                       const IcpParams& icp_params,
                                                       const DescriptorParams& sc_params,
                                                       const LoopMeasureParams& measure_params) {
    const int j = candidate.matched_id;
    const PointCloud submap =
        build_submap(scans, poses, j, measure_params.submap_half_width, measure_params.submap_leaf);
    const Pose& pose_j = poses[static_cast<std::size_t>(j)];

    // Replace the odometry yaw with the one implied by the descriptor shift.
    const Pose odom_rel = between(pose_j, query_pose_est);
    const Matrix3 tilt = rotz(-yaw_of(odom_rel.rotation)).rotation * odom_rel.rotation;
    const Matrix3 seeded_rotation = rotz(-candidate.shift * sc_params.sector_angle()).rotation * tilt;
    const Pose seeds[2] = {{seeded_rotation, odom_rel.translation}, {seeded_rotation, Vector3::Zero()}};

    std::optional<IcpResult> best;
    std::exception_ptr first_error;
    for (const Pose& seed : seeds) {
        try {
            IcpResult r = icp(query_scan, submap, compose(pose_j, seed), icp_params);
            const bool better = !best || r.fitness > best->fitness ||
                                (r.fitness == best->fitness && r.inlier_rmse < best->inlier_rmse);
            if (better) best = std::move(r);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kNoCorrespondences) throw;
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (!best) std::rethrow_exception(first_error);
    if (best->fitness < icp_params.fitness_accept) return std::nullopt;
    LoopMeasurement m;
    m.relative = between(pose_j, best->transform);
    m.fitness = best->fitness;
    m.icp = std::move(*best);
    return m;
}

}  // namespace sclslam
