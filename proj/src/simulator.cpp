#include "sclslam/simulator.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "sclslam/error.hpp"

namespace sclslam {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

double point_segment_distance_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (a + t * ab - p).norm();
}

// Distance from an axis-aligned rectangle to a segment, sampled finely along
// the segment (exact enough for corridor clearance checks).
double rect_segment_distance(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi, const Eigen::Vector2d& a,
                             const Eigen::Vector2d& b) {
    const int samples = std::max(2, static_cast<int>(std::ceil((b - a).norm() / 0.1)) + 1);
    double best = kInf;
    for (int s = 0; s < samples; ++s) {
        const Eigen::Vector2d p = a + (b - a) * (static_cast<double>(s) / (samples - 1));
        const Eigen::Vector2d q = p.cwiseMax(lo).cwiseMin(hi);
        best = std::min(best, (p - q).norm());
    }
    return best;
}

double ray_box(const Vector3& o, const Vector3& d, const Box& box) {
    double tmin = 0.0;
    double tmax = kInf;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d(a)) < 1e-15) {
            if (o(a) < box.min(a) || o(a) > box.max(a)) return kInf;
            continue;
        }
        double t0 = (box.min(a) - o(a)) / d(a);
        double t1 = (box.max(a) - o(a)) / d(a);
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return kInf;
    }
    return tmin > 0.0 ? tmin : kInf;
}

double ray_cylinder(const Vector3& o, const Vector3& d, const Cylinder& c) {
    double best = kInf;
    const double ox = o.x() - c.x;
    const double oy = o.y() - c.y;
    const double a = d.x() * d.x() + d.y() * d.y();
    if (a > 1e-15) {
        const double b = 2.0 * (ox * d.x() + oy * d.y());
        const double cc = ox * ox + oy * oy - c.radius * c.radius;
        const double disc = b * b - 4.0 * a * cc;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
                const double z = o.z() + t * d.z();
                if (t > 0.0 && z >= 0.0 && z <= c.height) {
                    best = std::min(best, t);
                    break;
                }
            }
        }
    }
    if (std::abs(d.z()) > 1e-15) {
        const double t = (c.height - o.z()) / d.z();
        if (t > 0.0) {
            const double x = ox + t * d.x();
            const double y = oy + t * d.y();
            if (x * x + y * y <= c.radius * c.radius) best = std::min(best, t);
        }
    }
    return best;
}

}  // namespace

World generate_world(std::uint64_t seed, const WorldParams& params, const std::vector<Pose>& path) {
    if (params.n_boxes < 0 || params.n_cylinders < 0 || !(params.extent_m > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "world needs extent > 0 and non-negative primitive counts");
    }
    Eigen::Vector2d centre = Eigen::Vector2d::Zero();
    if (!path.empty()) {
        Eigen::Vector2d lo = path.front().translation.head<2>();
        Eigen::Vector2d hi = lo;
        for (const Pose& p : path) {
            lo = lo.cwiseMin(p.translation.head<2>());
            hi = hi.cwiseMax(p.translation.head<2>());
        }
        centre = 0.5 * (lo + hi);
    }
    std::vector<Eigen::Vector2d> polyline;
    for (const Pose& p : path) polyline.push_back(p.translation.head<2>());
    if (polyline.size() == 1) polyline.push_back(polyline.front());

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(-0.5 * params.extent_m, 0.5 * params.extent_m);
    std::uniform_real_distribution<double> box_side(2.0, 8.0);
    std::uniform_real_distribution<double> box_height(3.0, 15.0);
    std::uniform_real_distribution<double> pole_radius(0.2, 0.6);
    std::uniform_real_distribution<double> pole_height(3.0, 8.0);
    constexpr int kMaxAttempts = 10000;

    auto clear_of_path = [&](auto&& distance_to_segment) {
        for (std::size_t s = 0; s + 1 < polyline.size(); ++s) {
            if (distance_to_segment(polyline[s], polyline[s + 1]) < params.corridor_half_width) return false;
        }
        return true;
    };

    World world;
    for (int n = 0; n < params.n_boxes; ++n) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
            const Eigen::Vector2d c = centre + Eigen::Vector2d(pos(rng), pos(rng));
            const double sx = box_side(rng);
            const double sy = box_side(rng);
            const double h = box_height(rng);
            const Eigen::Vector2d lo = c - 0.5 * Eigen::Vector2d(sx, sy);
            const Eigen::Vector2d hi = c + 0.5 * Eigen::Vector2d(sx, sy);
            if (!clear_of_path([&](const auto& a, const auto& b) { return rect_segment_distance(lo, hi, a, b); })) {
                continue;
            }
            world.boxes.push_back({Vector3(lo.x(), lo.y(), 0.0), Vector3(hi.x(), hi.y(), h)});
            placed = true;
        }
        if (!placed) throw Error(ErrorCode::kInvalidArgument, "could not place a box clear of the path");
    }
    for (int n = 0; n < params.n_cylinders; ++n) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
            const Eigen::Vector2d c = centre + Eigen::Vector2d(pos(rng), pos(rng));
            const double r = pole_radius(rng);
            const double h = pole_height(rng);
            if (!clear_of_path([&](const auto& a, const auto& b) { return point_segment_distance_2d(c, a, b) - r; })) {
                continue;
            }
            world.cylinders.push_back({c.x(), c.y(), r, h});
            placed = true;
        }
        if (!placed) throw Error(ErrorCode::kInvalidArgument, "could not place a cylinder clear of the path");
    }
    return world;
}

LidarModel LidarModel::vlp16(double range_noise_sigma) {
    LidarModel m;
    m.range_noise_sigma = range_noise_sigma;
    for (int i = 0; i < 16; ++i) m.elevations.push_back((-15.0 + 2.0 * i) * kPi / 180.0);
    return m;
}

PointCloud render_scan(const World& world, const Pose& sensor_pose, const LidarModel& model,
                       std::uint64_t noise_seed) {
    if (model.azimuth_steps < 8 || !(model.max_range > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "lidar model needs >= 8 azimuth steps and max_range > 0");
    }
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const Vector3& o = sensor_pose.translation;

    PointCloud cloud;
    for (int a = 0; a < model.azimuth_steps; ++a) {
        const double az = 2.0 * kPi * a / model.azimuth_steps;
        for (double el : model.elevations) {
            const Vector3 dir_ego(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
            const Vector3 d = sensor_pose.rotation * dir_ego;
            double t = kInf;
            if (d.z() < -1e-15) t = -o.z() / d.z();
            for (const Box& b : world.boxes) t = std::min(t, ray_box(o, d, b));
            for (const Cylinder& c : world.cylinders) t = std::min(t, ray_cylinder(o, d, c));
            if (!(t <= model.max_range) || t <= 0.0) continue;
            const double range = model.range_noise_sigma > 0.0 ? t + model.range_noise_sigma * noise(rng) : t;
            cloud.push_back(dir_ego * range);
        }
    }
    return cloud;
}

std::vector<Pose> simulate_odometry(const std::vector<Pose>& ground_truth, const DriftModel& drift) {
    std::vector<Pose> odom;
    if (ground_truth.empty()) return odom;
    std::mt19937_64 rng(drift.seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    odom.push_back(ground_truth.front());
    for (std::size_t i = 0; i + 1 < ground_truth.size(); ++i) {
        const Pose step = between(ground_truth[i], ground_truth[i + 1]);
        const double yaw = drift.yaw_bias + drift.yaw_sigma * unit(rng);
        Vector3 dt;
        for (int a = 0; a < 3; ++a) dt(a) = drift.translation_sigma * unit(rng);
        dt.z() += drift.z_bias;
        const Pose noisy{rotz(yaw).rotation * step.rotation, step.translation + dt};
        odom.push_back(renormalized(compose(odom.back(), noisy)));
    }
    return odom;
}

AteResult evaluate_ate(const std::vector<Pose>& estimated, const std::vector<Pose>& ground_truth) {
    if (estimated.size() != ground_truth.size() || estimated.size() < 3) {
        throw Error(ErrorCode::kInvalidArgument, "ATE needs equal-length trajectories of at least 3 poses");
    }
    const Eigen::Index n = static_cast<Eigen::Index>(estimated.size());
    Eigen::Matrix3Xd src(3, n), dst(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        src.col(i) = estimated[static_cast<std::size_t>(i)].translation;
        dst.col(i) = ground_truth[static_cast<std::size_t>(i)].translation;
    }
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
    AteResult out;
    out.alignment = {t.topLeftCorner<3, 3>(), t.topRightCorner<3, 1>()};
    Vector3 sq = Vector3::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector3 r = transform_point(out.alignment, src.col(i)) - dst.col(i);
        sq += r.cwiseAbs2();
    }
    sq /= static_cast<double>(n);
    out.rmse_axis = sq.cwiseSqrt();
    out.rmse = std::sqrt(sq.sum());
    return out;
}

std::vector<Pose> square_loop_trajectory(double perimeter, double step, double overlap, double sensor_height) {
    if (!(perimeter > 0.0) || !(step > 0.0) || overlap < 0.0) {
        throw Error(ErrorCode::kInvalidArgument, "trajectory needs perimeter > 0, step > 0, overlap >= 0");
    }
    const double side = perimeter / 4.0;
    const int count = static_cast<int>(std::floor((perimeter + overlap) / step + 1e-9)) + 1;
    std::vector<Pose> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double s = std::fmod(i * step, perimeter);
        const int leg = std::min(3, static_cast<int>(std::floor(s / side + 1e-12)));
        const double u = s - leg * side;
        Vector3 p(0.0, 0.0, sensor_height);
        switch (leg) {
            case 0: p.x() = u; break;
            case 1: p.x() = side; p.y() = u; break;
            case 2: p.x() = side - u; p.y() = side; break;
            default: p.y() = side - u; break;
        }
        Pose pose = rotz(leg * 0.5 * kPi);
        pose.translation = p;
        out.push_back(pose);
    }
    return out;
}

Dataset simulate(const SimulationConfig& config) {
    Dataset data;
    data.ground_truth = square_loop_trajectory(config.perimeter, config.step, config.overlap, config.sensor_height);
    data.world = generate_world(config.seed, config.world, data.ground_truth);
    data.odometry = simulate_odometry(data.ground_truth, config.drift);
    data.scans.reserve(data.ground_truth.size());
    for (std::size_t i = 0; i < data.ground_truth.size(); ++i) {
        const PointCloud scan = render_scan(data.world, data.ground_truth[i], config.lidar, config.seed * 100003ULL + i);
        data.scans.push_back(round_to_float(scan));
    }
    return data;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir / "Scans", ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + (dir / "Scans").string());
    auto write_poses = [](const fs::path& path, const std::vector<Pose>& poses) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
        for (const Pose& p : poses) out << format_kitti(p) << '\n';
    };
    write_poses(dir / "odom.txt", data.odometry);
    write_poses(dir / "gt_poses.txt", data.ground_truth);
    char name[32];
    for (std::size_t i = 0; i < data.scans.size(); ++i) {
        std::snprintf(name, sizeof(name), "%06zu.pcd", i);
        write_cloud(dir / "Scans" / name, data.scans[i], CloudFormat::kPcdBinary);
    }
}

}  // namespace sclslam
