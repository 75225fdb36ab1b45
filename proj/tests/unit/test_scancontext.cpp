#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <thread>

#include "sclslam/error.hpp"
#include "sclslam/scancontext.hpp"

using namespace sclslam;

namespace {

constexpr double kPi = std::numbers::pi;

// Column-wise cosine distance written directly from its definition.
std::pair<double, int> brute_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const int S = static_cast<int>(a.cols());
    double best = 2.0;
    int best_shift = 0;
    for (int n = 0; n < S; ++n) {
        double sum = 0.0;
        int used = 0;
        for (int j = 0; j < S; ++j) {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (int r = 0; r < a.rows(); ++r) {
                const double x = a(r, j), y = b(r, (j + n) % S);
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if (na == 0.0 && nb == 0.0) continue;
            ++used;
            if (na > 0.0 && nb > 0.0) sum += dot / std::sqrt(na * nb);
        }
        const double d = used == 0 ? 1.0 : 1.0 - sum / used;
        if (d < best) {
            best = d;
            best_shift = n;
        }
    }
    return {best, best_shift};
}

Eigen::MatrixXd random_sparse(int rows, int cols, double fill, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (u(rng) < fill) m(r, c) = 0.1 + 5.0 * u(rng);
    return m;
}

}  // namespace

TEST(Descriptor, EmptyCloudIsZero) {
    const Descriptor d = make_descriptor(PointCloud{}, DescriptorParams{});
    EXPECT_EQ(d.matrix.rows(), 20);
    EXPECT_EQ(d.matrix.cols(), 60);
    EXPECT_EQ(d.matrix.norm(), 0.0);
    EXPECT_EQ(d.ring_key.norm(), 0.0);
}

TEST(Descriptor, SinglePointBinning) {
    DescriptorParams p;
    PointCloud c;
    c.push_back(Vector3(p.max_radius / 2, 1e-9, 1.0));
    const Descriptor d = make_descriptor(c, p);
    EXPECT_EQ((d.matrix.array() != 0.0).count(), 1);
    EXPECT_DOUBLE_EQ(d.matrix(p.num_rings / 2, p.num_sectors / 2), 3.0);
}

TEST(Descriptor, ClampsAndDiscards) {
    DescriptorParams p;
    PointCloud c;
    c.push_back(Vector3(5, 5, -10.0));          // below -offset: clamps to 0
    c.push_back(Vector3(p.max_radius, 0, 1.0));  // range == max_radius: discarded
    c.push_back(Vector3(0, 0, 0.5));             // origin, sector of atan2(0,0)
    const Descriptor d = make_descriptor(c, p);
    EXPECT_EQ((d.matrix.array() != 0.0).count(), 1);
    EXPECT_DOUBLE_EQ(d.matrix(0, p.num_sectors / 2), 2.5);
}

TEST(Descriptor, MatchesRebinningOracle) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-90.0, 90.0), z(-3.0, 10.0);
    DescriptorParams p;
    PointCloud c;
    for (int i = 0; i < 5000; ++i) c.push_back(Vector3(u(rng), u(rng), z(rng)));
    Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(p.num_rings, p.num_sectors);
    for (const Vector3& q : c.points) {
        const double range = std::hypot(q.x(), q.y());
        if (range >= p.max_radius) continue;
        const int ring = static_cast<int>(std::floor(p.num_rings * range / p.max_radius));
        int sector = static_cast<int>(std::floor(p.num_sectors * (std::atan2(q.y(), q.x()) + kPi) / (2 * kPi)));
        sector = std::min(sector, p.num_sectors - 1);
        oracle(ring, sector) = std::max(oracle(ring, sector), std::max(0.0, q.z() + p.min_height_offset));
    }
    const Descriptor d = make_descriptor(c, p);
    EXPECT_EQ((d.matrix - oracle).cwiseAbs().maxCoeff(), 0.0);
    for (int r = 0; r < p.num_rings; ++r) {
        EXPECT_DOUBLE_EQ(d.ring_key[r], (oracle.row(r).array() != 0.0).count() / double(p.num_sectors));
    }
}

TEST(Descriptor, OneSectorRotationShiftsOneColumn) {
    DescriptorParams p;
    PointCloud c;
    // points at sector centres so a one-sector rotation keeps each inside a single bin
    for (int s = 0; s < p.num_sectors; s += 3) {
        const double az = -kPi + (s + 0.5) * p.sector_angle();
        const double r = 5.0 + 2.0 * s;
        c.push_back(Vector3(r * std::cos(az), r * std::sin(az), 0.05 * s));
    }
    PointCloud rot;
    for (const Vector3& q : c.points) rot.push_back(transform_point(rotz(p.sector_angle()), q));
    const Descriptor a = make_descriptor(c, p);
    const Descriptor b = make_descriptor(rot, p);
    EXPECT_LT((circshift(a, 1).matrix - b.matrix).cwiseAbs().maxCoeff(), 1e-12);
    const DescriptorMatch m = descriptor_distance(a, b);
    EXPECT_NEAR(m.distance, 0.0, 1e-12);
    EXPECT_EQ(m.shift, 1);
}

TEST(Distance, Examples) {
    std::mt19937_64 rng(2);
    const Descriptor d = descriptor_from_matrix(random_sparse(20, 60, 0.3, rng));
    const DescriptorMatch self = descriptor_distance(d, d);
    EXPECT_NEAR(self.distance, 0.0, 1e-12);
    EXPECT_EQ(self.shift, 0);
    const DescriptorMatch shifted = descriptor_distance(d, circshift(d, 3));
    EXPECT_NEAR(shifted.distance, 0.0, 1e-12);
    EXPECT_EQ(shifted.shift, 3);
}

TEST(Distance, DisjointColumnsGiveOne) {
    // Under every shift the nonzero column of a meets either a zero column of b
    // or an orthogonal one.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 6), b = Eigen::MatrixXd::Zero(4, 6);
    a(0, 0) = 1.0;
    a(2, 0) = 2.0;
    b(1, 3) = 1.0;
    const DescriptorMatch m = descriptor_distance(descriptor_from_matrix(a), descriptor_from_matrix(b));
    EXPECT_DOUBLE_EQ(m.distance, 1.0);
}

TEST(Distance, BothEmptyIsOne) {
    const Descriptor z = descriptor_from_matrix(Eigen::MatrixXd::Zero(3, 8));
    EXPECT_DOUBLE_EQ(descriptor_distance(z, z).distance, 1.0);
}

TEST(Distance, MatchesBruteForceOracle) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const Eigen::MatrixXd a = random_sparse(6, 12, 0.4, rng);
        const Eigen::MatrixXd b = random_sparse(6, 12, 0.4, rng);
        const auto [dist, shift] = brute_distance(a, b);
        const DescriptorMatch m = descriptor_distance(descriptor_from_matrix(a), descriptor_from_matrix(b));
        EXPECT_NEAR(m.distance, dist, 1e-12);
        EXPECT_EQ(m.shift, shift);
    }
}

TEST(Distance, SymmetricUpToShiftNegation) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 100; ++t) {
        const Descriptor a = descriptor_from_matrix(random_sparse(20, 60, 0.3, rng));
        const Descriptor b = descriptor_from_matrix(random_sparse(20, 60, 0.3, rng));
        const DescriptorMatch ab = descriptor_distance(a, b);
        const DescriptorMatch ba = descriptor_distance(b, a);
        EXPECT_NEAR(ab.distance, ba.distance, 1e-12);
        EXPECT_EQ((ab.shift + ba.shift) % 60, 0);
    }
}

TEST(Distance, ShapeMismatch) {
    try {
        descriptor_distance(descriptor_from_matrix(Eigen::MatrixXd::Ones(2, 4)),
                            descriptor_from_matrix(Eigen::MatrixXd::Ones(2, 5)));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    }
}

TEST(RingKey, Properties) {
    EXPECT_EQ(ring_key(Eigen::MatrixXd::Zero(3, 5)).norm(), 0.0);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 5);
    m.row(1).setConstant(2.0);
    m(2, 4) = 1.0;
    const Eigen::VectorXd k = ring_key(m);
    EXPECT_DOUBLE_EQ(k[1], 1.0);
    EXPECT_DOUBLE_EQ(k[2], 0.2);
    std::mt19937_64 rng(5);
    const Descriptor d = descriptor_from_matrix(random_sparse(20, 60, 0.3, rng));
    for (int n = 0; n < 60; n += 7) EXPECT_EQ(circshift(d, n).ring_key, d.ring_key);
}

TEST(Database, AddAndErrors) {
    ScanContextDatabase db;
    const Descriptor d = descriptor_from_matrix(Eigen::MatrixXd::Ones(20, 60));
    for (int i = 0; i < 3; ++i) db.add_keyframe(i, d);
    EXPECT_EQ(db.size(), 3u);
    try {
        db.add_keyframe(1, d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kDuplicateId);
    }
    EXPECT_THROW(db.add_keyframe(5, descriptor_from_matrix(Eigen::MatrixXd::Ones(20, 10))), Error);
    try {
        db.detect_loop(17);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kUnknownId);
    }
}

TEST(Database, EmptyAndExcluded) {
    ScanContextDatabase empty;
    EXPECT_FALSE(empty.detect_loop(0).has_value());
    ScanContextDatabase db;
    const Descriptor d = descriptor_from_matrix(Eigen::MatrixXd::Ones(20, 60));
    for (int i = 0; i < 5; ++i) db.add_keyframe(i, d);
    EXPECT_FALSE(db.detect_loop(4).has_value());
}

TEST(Database, FindsExactRevisitAmongFillers) {
    std::mt19937_64 rng(6);
    const Descriptor place = descriptor_from_matrix(random_sparse(20, 60, 0.4, rng));
    for (int shift : {0, 7}) {
        ScanContextDatabase db;
        db.add_keyframe(0, place);
        for (int i = 1; i <= 100; ++i) db.add_keyframe(i, descriptor_from_matrix(random_sparse(20, 60, 0.4, rng)));
        db.add_keyframe(101, circshift(place, shift));
        const auto c = db.detect_loop(101);
        ASSERT_TRUE(c.has_value());
        EXPECT_EQ(c->matched_id, 0);
        EXPECT_EQ(c->shift, shift);
        EXPECT_NEAR(c->distance, 0.0, 1e-12);
    }
}

TEST(Database, ThresholdRejects) {
    std::mt19937_64 rng(7);
    ScanContextDatabase db(LoopSearchParams{10, 0.2, 2});
    for (int i = 0; i < 10; ++i) db.add_keyframe(i, descriptor_from_matrix(random_sparse(20, 60, 0.3, rng)));
    EXPECT_FALSE(db.detect_loop(9).has_value());
}

TEST(Database, ConcurrentReadersAgree) {
    std::mt19937_64 rng(8);
    ScanContextDatabase db(LoopSearchParams{50, 1.0, 5});
    for (int i = 0; i < 80; ++i) db.add_keyframe(i, descriptor_from_matrix(random_sparse(20, 60, 0.3, rng)));
    const auto expected = db.detect_loop(79);
    std::vector<std::thread> threads;
    std::vector<int> ok(4, 0);
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (int r = 0; r < 20; ++r) {
                const auto c = db.detect_loop(79);
                ok[t] += c && expected && c->matched_id == expected->matched_id && c->shift == expected->shift;
            }
        });
    }
    for (auto& th : threads) th.join();
    for (int v : ok) EXPECT_EQ(v, 20);
}

TEST(DescriptorFile, RoundTripSixDecimals) {
    const auto dir = std::filesystem::temp_directory_path() / "sclslam_scd";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(9);
    const Descriptor d = descriptor_from_matrix(random_sparse(20, 60, 0.3, rng));
    write_descriptor(dir / "a.scd", d);
    const Descriptor r = read_descriptor(dir / "a.scd");
    ASSERT_EQ(r.matrix.rows(), 20);
    ASSERT_EQ(r.matrix.cols(), 60);
    EXPECT_LT((r.matrix - d.matrix).cwiseAbs().maxCoeff(), 5.1e-7);
}
