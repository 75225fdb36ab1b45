#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "sclslam/error.hpp"
#include "sclslam/simulator.hpp"

using namespace sclslam;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Unsigned distance from a point to the closest analytic surface in the world.
double surface_distance(const World& w, const Vector3& p) {
    double best = std::abs(p.z());
    for (const Box& b : w.boxes) {
        const Vector3 q = p.cwiseMax(b.min).cwiseMin(b.max);
        const bool inside = (p.array() >= b.min.array()).all() && (p.array() <= b.max.array()).all();
        if (!inside) {
            best = std::min(best, (p - q).norm());
        } else {
            const Vector3 lo = p - b.min, hi = b.max - p;
            best = std::min(best, std::min(lo.minCoeff(), hi.minCoeff()));
        }
    }
    for (const Cylinder& c : w.cylinders) {
        const double r = std::hypot(p.x() - c.x, p.y() - c.y);
        const double dz = p.z() > c.height ? p.z() - c.height : (p.z() < 0 ? -p.z() : 0.0);
        const double dr = std::abs(r - c.radius);
        if (p.z() >= 0 && p.z() <= c.height) best = std::min(best, dr);
        if (r <= c.radius) best = std::min(best, std::abs(p.z() - c.height));
        best = std::min(best, std::hypot(std::max(0.0, r - c.radius), dz));
    }
    return best;
}

}  // namespace

TEST(World, GroundOnlyAndDeterministic) {
    const std::vector<Pose> path = square_loop_trajectory(60.0, 1.0, 0.0, 1.8);
    const World empty = generate_world(1, WorldParams{100.0, 0, 0, 4.0}, path);
    EXPECT_TRUE(empty.boxes.empty());
    EXPECT_TRUE(empty.cylinders.empty());
    const World a = generate_world(5, WorldParams{}, path);
    const World b = generate_world(5, WorldParams{}, path);
    ASSERT_EQ(a.boxes.size(), 20u);
    ASSERT_EQ(a.cylinders.size(), 30u);
    for (std::size_t i = 0; i < a.boxes.size(); ++i) EXPECT_EQ(a.boxes[i].min, b.boxes[i].min);
    for (std::size_t i = 0; i < a.cylinders.size(); ++i) EXPECT_EQ(a.cylinders[i].x, b.cylinders[i].x);
}

TEST(World, PrimitivesInsideExtentAndClearOfCorridor) {
    const std::vector<Pose> path = square_loop_trajectory(150.0, 1.0, 20.0, 1.8);
    const WorldParams params;
    const World w = generate_world(7, params, path);
    Vector3 lo = path[0].translation, hi = lo;
    for (const Pose& p : path) {
        lo = lo.cwiseMin(p.translation);
        hi = hi.cwiseMax(p.translation);
    }
    const Vector3 c = 0.5 * (lo + hi);
    auto clear = [&](double x, double y, double margin) {
        for (const Pose& p : path) {
            if (std::hypot(p.translation.x() - x, p.translation.y() - y) < margin) return false;
        }
        return true;
    };
    for (const Box& b : w.boxes) {
        const Vector3 centre = 0.5 * (b.min + b.max);
        EXPECT_LE(std::abs(centre.x() - c.x()), params.extent_m / 2);
        EXPECT_LE(std::abs(centre.y() - c.y()), params.extent_m / 2);
        EXPECT_GE(b.min.z(), 0.0);
        // closest point of the box footprint to each path point
        for (const Pose& p : path) {
            const double dx = std::max({b.min.x() - p.translation.x(), 0.0, p.translation.x() - b.max.x()});
            const double dy = std::max({b.min.y() - p.translation.y(), 0.0, p.translation.y() - b.max.y()});
            EXPECT_GE(std::hypot(dx, dy), params.corridor_half_width - 1e-9);
        }
    }
    for (const Cylinder& cy : w.cylinders) {
        EXPECT_LE(std::abs(cy.x - c.x()), params.extent_m / 2);
        EXPECT_LE(std::abs(cy.y - c.y()), params.extent_m / 2);
        EXPECT_TRUE(clear(cy.x, cy.y, params.corridor_half_width + cy.radius - 1e-9));
    }
}

TEST(Render, DownwardChannelHitsGroundAtHandComputedRange) {
    LidarModel m;
    m.azimuth_steps = 8;
    m.elevations = {-15.0 * kPi / 180.0};
    const PointCloud c = render_scan(World{}, trans(0, 0, 1), m);
    ASSERT_EQ(c.size(), 8u);
    const double expected = 1.0 / std::sin(15.0 * kPi / 180.0);
    for (const Vector3& p : c.points) {
        EXPECT_NEAR(p.norm(), expected, 1e-9);
        EXPECT_NEAR(p.z(), -1.0, 1e-9);
    }
    EXPECT_NEAR(expected, 3.8637, 1e-4);
}

TEST(Render, BoxBeyondRangeIgnored) {
    World w;
    w.boxes.push_back(Box{Vector3(200, -5, 0), Vector3(210, 5, 10)});
    const LidarModel m = LidarModel::vlp16();
    const PointCloud with_box = render_scan(w, trans(0, 0, 1.8), m);
    const PointCloud ground = render_scan(World{}, trans(0, 0, 1.8), m);
    ASSERT_EQ(with_box.size(), ground.size());
    for (std::size_t i = 0; i < ground.size(); ++i) EXPECT_EQ(with_box.points[i], ground.points[i]);
    for (const Vector3& p : ground.points) EXPECT_NEAR(p.z(), -1.8, 1e-9);
}

TEST(Render, NoHitsGivesEmptyCloud) {
    LidarModel m;
    m.elevations = {0.1, 0.2};
    EXPECT_TRUE(render_scan(World{}, trans(0, 0, 1), m).empty());
}

TEST(Render, Deterministic) {
    const std::vector<Pose> path = square_loop_trajectory(60.0, 1.0, 0.0, 1.8);
    const World w = generate_world(3, WorldParams{60.0, 10, 10, 4.0}, path);
    const PointCloud a = render_scan(w, path[5], LidarModel::vlp16());
    const PointCloud b = render_scan(w, path[5], LidarModel::vlp16());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.points[i], b.points[i]);
}

TEST(Render, HitsLieOnSurfaces) {
    const std::vector<Pose> path = square_loop_trajectory(100.0, 1.0, 0.0, 1.8);
    const World w = generate_world(11, WorldParams{80.0, 15, 25, 4.0}, path);
    for (double sigma : {0.0, 0.02}) {
        LidarModel m = LidarModel::vlp16(sigma);
        for (int idx : {0, 13, 40, 77}) {
            const PointCloud c = render_scan(w, path[idx], m, 99);
            ASSERT_FALSE(c.empty());
            // Range noise moves a hit along its ray, so its distance to the
            // surface is at most |noise|.
            int above_ground = 0, beyond_3sigma = 0;
            double sum_sq = 0.0, worst = 0.0;
            for (const Vector3& p : c.points) {
                const Vector3 world_p = transform_point(path[idx], p);
                const double dist = surface_distance(w, world_p);
                sum_sq += dist * dist;
                worst = std::max(worst, dist);
                beyond_3sigma += dist > 3 * sigma + 1e-9;
                above_ground += world_p.z() > 0.05;
            }
            EXPECT_GT(above_ground, 0);
            EXPECT_LE(std::sqrt(sum_sq / c.size()), sigma * 1.05 + 1e-9);
            EXPECT_LE(worst, 6 * sigma + 1e-9);
            EXPECT_LE(beyond_3sigma, 0.01 * c.size());
        }
    }
}

TEST(Odometry, ZeroNoiseEqualsGroundTruth) {
    const std::vector<Pose> gt = square_loop_trajectory(40.0, 1.0, 5.0, 1.8);
    const std::vector<Pose> odom = simulate_odometry(gt, DriftModel{});
    ASSERT_EQ(odom.size(), gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        EXPECT_LT((odom[i].translation - gt[i].translation).norm(), 1e-9);
        EXPECT_LT((odom[i].rotation - gt[i].rotation).norm(), 1e-9);
    }
}

TEST(Odometry, YawBiasOnStraightLineFollowsArc) {
    std::vector<Pose> line;
    for (int i = 0; i <= 100; ++i) line.push_back(trans(i, 0, 0));
    const double bias = 0.003;
    const std::vector<Pose> odom = simulate_odometry(line, DriftModel{0, 0, bias, 0, 0});
    double prev = 0.0, prev_growth = 0.0;
    for (std::size_t n = 1; n < odom.size(); ++n) {
        // dead reckoning with heading k*bias before step k+1
        double x = 0, y = 0;
        for (std::size_t k = 0; k < n; ++k) {
            x += std::cos(k * bias);
            y += std::sin(k * bias);
        }
        EXPECT_NEAR(odom[n].translation.x(), x, 1e-9);
        EXPECT_NEAR(odom[n].translation.y(), y, 1e-9);
        const double lateral = std::abs(odom[n].translation.y());
        const double growth = lateral - prev;
        EXPECT_GE(growth, prev_growth);
        prev = lateral;
        prev_growth = growth;
    }
    EXPECT_GT(std::abs(odom[100].translation.y()) - std::abs(odom[50].translation.y()),
              std::abs(odom[50].translation.y()));
}

TEST(Odometry, SeededDeterminism) {
    const std::vector<Pose> gt = square_loop_trajectory(40.0, 1.0, 0.0, 1.8);
    const DriftModel d{0.05, 0.01, 0.001, 0.01, 42};
    const auto a = simulate_odometry(gt, d), b = simulate_odometry(gt, d);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].matrix(), b[i].matrix());
    const auto c = simulate_odometry(gt, DriftModel{0.05, 0.01, 0.001, 0.01, 43});
    EXPECT_NE(a.back().matrix(), c.back().matrix());
}

TEST(Ate, IdentityAndRigidInvariance) {
    const std::vector<Pose> gt = square_loop_trajectory(40.0, 1.0, 0.0, 1.8);
    EXPECT_NEAR(evaluate_ate(gt, gt).rmse, 0.0, 1e-12);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<Pose> noisy;
    for (const Pose& p : gt) noisy.push_back(compose(trans(n(rng), n(rng), n(rng)), p));
    const Pose g = from_rotation_translation(so3_exp(Vector3(0.3, -0.2, 2.0)), Vector3(10, -4, 3));
    std::vector<Pose> moved;
    for (const Pose& p : gt) moved.push_back(compose(g, p));
    EXPECT_NEAR(evaluate_ate(moved, gt).rmse, 0.0, 1e-9);
    std::vector<Pose> moved_noisy;
    for (const Pose& p : noisy) moved_noisy.push_back(compose(g, p));
    EXPECT_NEAR(evaluate_ate(moved_noisy, gt).rmse, evaluate_ate(noisy, gt).rmse, 1e-9);
}

TEST(Ate, FourPointHandExample) {
    // gt on the x axis; estimate raised by 1 m on its second half. After
    // centring, the xz cross terms are sum(ex gx) = 5 and sum(ez gx) = 2, so the
    // best rotation about y leaves 11 - 2 sqrt(29) of squared residual.
    std::vector<Pose> gt, est;
    for (int i = 0; i < 4; ++i) {
        gt.push_back(trans(i, 0, 0));
        est.push_back(trans(i, 0, i >= 2 ? 1.0 : 0.0));
    }
    const double expected = std::sqrt((11.0 - 2.0 * std::sqrt(29.0)) / 4.0);
    const AteResult ate = evaluate_ate(est, gt);
    EXPECT_NEAR(ate.rmse, expected, 1e-12);
    EXPECT_NEAR(ate.rmse_axis.y(), 0.0, 1e-12);

    // brute force over rotations about y agrees
    double best = 1e9;
    for (int a = -600; a <= 600; ++a) {
        const Matrix3 r = so3_exp(Vector3(0, a * 1e-3, 0));
        Vector3 mu_e = Vector3::Zero(), mu_g = Vector3::Zero();
        for (int i = 0; i < 4; ++i) {
            mu_e += r * est[i].translation / 4;
            mu_g += gt[i].translation / 4;
        }
        double s = 0;
        for (int i = 0; i < 4; ++i) s += (r * est[i].translation - mu_e - gt[i].translation + mu_g).squaredNorm();
        best = std::min(best, std::sqrt(s / 4));
    }
    EXPECT_NEAR(best, expected, 1e-5);
}

TEST(Ate, TooFewPoses) {
    std::vector<Pose> two = {Pose::identity(), trans(1, 0, 0)};
    EXPECT_THROW(evaluate_ate(two, two), Error);
    std::vector<Pose> three = {Pose::identity(), trans(1, 0, 0), trans(2, 0, 0)};
    EXPECT_THROW(evaluate_ate(three, two), Error);
}

TEST(Dataset, WriteIsDeterministicAndComplete) {
    SimulationConfig cfg;
    cfg.perimeter = 40.0;
    cfg.overlap = 0.0;
    cfg.world = WorldParams{40.0, 4, 6, 3.0};
    const Dataset d = simulate(cfg);
    ASSERT_EQ(d.scans.size(), 41u);  // both endpoints of the 40 m loop
    const fs::path a = fs::temp_directory_path() / "sclslam_ds_a";
    const fs::path b = fs::temp_directory_path() / "sclslam_ds_b";
    fs::remove_all(a);
    fs::remove_all(b);
    write_dataset(a, d);
    write_dataset(b, simulate(cfg));
    EXPECT_EQ(slurp(a / "odom.txt"), slurp(b / "odom.txt"));
    EXPECT_EQ(slurp(a / "gt_poses.txt"), slurp(b / "gt_poses.txt"));
    EXPECT_EQ(slurp(a / "Scans" / "000017.pcd"), slurp(b / "Scans" / "000017.pcd"));
    int n = 0;
    for (const auto& e : fs::directory_iterator(a / "Scans")) n += e.path().extension() == ".pcd";
    EXPECT_EQ(n, 41);
}
