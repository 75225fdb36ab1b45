#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sclslam/error.hpp"
#include "sclslam/geometry.hpp"

using namespace sclslam;

namespace {

constexpr double kPi = std::numbers::pi;

double pose_gap(const Pose& a, const Pose& b) {
    return std::max((a.rotation - b.rotation).cwiseAbs().maxCoeff(),
                    (a.translation - b.translation).cwiseAbs().maxCoeff());
}

Vector3 random_axis_angle(std::mt19937_64& rng, double max_angle) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, max_angle);
    Vector3 axis(n(rng), n(rng), n(rng));
    return axis.normalized() * u(rng);
}

Pose random_pose(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> t(-10.0, 10.0);
    return from_rotation_translation(so3_exp(random_axis_angle(rng, 3.0)), Vector3(t(rng), t(rng), t(rng)));
}

// Rodrigues written out independently of the library.
Matrix3 rodrigues(const Vector3& phi) {
    const double th = phi.norm();
    if (th == 0.0) return Matrix3::Identity();
    const Vector3 k = phi / th;
    Matrix3 K;
    K << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
    return Matrix3::Identity() + std::sin(th) * K + (1 - std::cos(th)) * K * K;
}

}  // namespace

TEST(Compose, IdentityAndTranslations) {
    EXPECT_LT(pose_gap(compose(Pose::identity(), Pose::identity()), Pose::identity()), 1e-15);
    EXPECT_LT(pose_gap(compose(trans(1, 0, 0), trans(0, 2, 0)), trans(1, 2, 0)), 1e-15);
}

TEST(Compose, RotationThenTranslation) {
    const Pose p = compose(rotz(kPi / 2), trans(1, 0, 0));
    EXPECT_LT((p.rotation - rotz(kPi / 2).rotation).norm(), 1e-15);
    EXPECT_LT((p.translation - Vector3(0, 1, 0)).norm(), 1e-15);
}

TEST(Between, Examples) {
    std::mt19937_64 rng(1);
    const Pose t = random_pose(rng);
    EXPECT_LT(pose_gap(between(t, t), Pose::identity()), 1e-12);
    EXPECT_LT(pose_gap(between(Pose::identity(), trans(3, 0, 0)), trans(3, 0, 0)), 1e-15);
    EXPECT_LT(pose_gap(between(rotz(kPi / 2), rotz(kPi)), rotz(kPi / 2)), 1e-15);
}

TEST(Between, ComposeRecoversTarget) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
        const Pose a = random_pose(rng);
        const Pose b = random_pose(rng);
        EXPECT_LT(pose_gap(compose(a, between(a, b)), b), 1e-9);
    }
}

TEST(Exp, Examples) {
    EXPECT_LT(pose_gap(se3_exp(Twist{}), Pose::identity()), 1e-15);
    EXPECT_LT(pose_gap(se3_exp(Twist{Vector3(1, 0, 0), Vector3::Zero()}), trans(1, 0, 0)), 1e-15);
    const Pose r = se3_exp(Twist{Vector3::Zero(), Vector3(0, 0, kPi / 2)});
    EXPECT_LT(pose_gap(r, rotz(kPi / 2)), 1e-15);
}

TEST(Exp, RotationMatchesRodrigues) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const Vector3 phi = random_axis_angle(rng, 3.1);
        EXPECT_LT((so3_exp(phi) - rodrigues(phi)).norm(), 1e-12);
    }
}

TEST(Exp, TranslationMatchesIntegratedScrewMotion) {
    // exp of a constant twist equals the flow of the rigid-body ODE; integrate it.
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector3 phi = random_axis_angle(rng, 2.5);
        const Vector3 rho(0.3 * trial, -1.0, 2.0);
        const int n = 20000;
        Matrix3 r = Matrix3::Identity();
        Vector3 t = Vector3::Zero();
        const Matrix3 step = rodrigues(phi / n);
        for (int k = 0; k < n; ++k) {
            // midpoint rule on t' = R rho
            const Matrix3 half = rodrigues(phi / (2.0 * n));
            t += r * half * rho / n;
            r = r * step;
        }
        const Pose p = se3_exp(Twist{rho, phi});
        EXPECT_LT((p.translation - t).norm(), 1e-7);
        EXPECT_LT((p.rotation - r).norm(), 1e-9);
    }
}

TEST(Log, Examples) {
    EXPECT_LT(se3_log(Pose::identity()).vector().norm(), 1e-15);
    const Twist t = se3_log(trans(0, 0, 5));
    EXPECT_LT((t.rho - Vector3(0, 0, 5)).norm(), 1e-15);
    EXPECT_LT(t.phi.norm(), 1e-15);
}

TEST(Log, RoundTripRandomTwists) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 1000; ++i) {
        const Twist x{Vector3(u(rng), u(rng), u(rng)), random_axis_angle(rng, 3.0)};
        EXPECT_LT((se3_log(se3_exp(x)).vector() - x.vector()).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Log, SmallAnglesStayAccurate) {
    for (double th : {1e-12, 1e-9, 1e-6, 1e-4, 1e-2}) {
        const Twist x{Vector3(1, -2, 0.5), Vector3(th, -th, 0.5 * th)};
        EXPECT_LT((se3_log(se3_exp(x)).vector() - x.vector()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Log, NearPiAnglesRoundTrip) {
    for (double th : {3.0, 3.1, 3.14, kPi - 1e-5}) {
        const Vector3 phi = Vector3(0.3, -0.5, 0.8).normalized() * th;
        EXPECT_LT((so3_log(so3_exp(phi)) - phi).norm(), 1e-7) << th;
    }
}

TEST(Log, AngleNearPiThrows) {
    try {
        so3_log(so3_exp(Vector3(0, 0, kPi)));
        FAIL() << "expected AngleNearPi";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kAngleNearPi);
    }
    EXPECT_THROW(se3_log(rotz(kPi)), Error);
}

TEST(TransformPoint, Examples) {
    EXPECT_LT((transform_point(Pose::identity(), Vector3(1, 2, 3)) - Vector3(1, 2, 3)).norm(), 1e-15);
    EXPECT_LT((transform_point(trans(1, 0, 0), Vector3::Zero()) - Vector3(1, 0, 0)).norm(), 1e-15);
    EXPECT_LT((transform_point(rotz(kPi / 2), Vector3(1, 0, 0)) - Vector3(0, 1, 0)).norm(), 1e-12);
}

TEST(GroupAxioms, RandomSamples) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 500; ++i) {
        const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        EXPECT_LT(pose_gap(compose(compose(a, b), c), compose(a, compose(b, c))), 1e-9);
        EXPECT_LT(pose_gap(compose(a, inverse(a)), Pose::identity()), 1e-9);
        EXPECT_LT(pose_gap(compose(inverse(a), a), Pose::identity()), 1e-9);
        EXPECT_LT(pose_gap(compose(a, Pose::identity()), a), 1e-15);
        EXPECT_LT(pose_gap(compose(Pose::identity(), a), a), 1e-15);
        const Vector3 x(u(rng), u(rng), u(rng));
        EXPECT_LT((transform_point(compose(a, b), x) - transform_point(a, transform_point(b, x))).norm(), 1e-9);
    }
}

TEST(Adjoint, ConjugatesExponential) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < 50; ++i) {
        const Pose p = random_pose(rng);
        Vector6 x;
        for (int k = 0; k < 6; ++k) x[k] = u(rng);
        const Pose lhs = se3_exp(Twist::from_vector(adjoint(p) * x));
        const Pose rhs = compose(compose(p, se3_exp(Twist::from_vector(x))), inverse(p));
        EXPECT_LT(pose_gap(lhs, rhs), 1e-9);
    }
}

TEST(Jacobians, LeftJacobianInverse) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 50; ++i) {
        const Vector3 phi = random_axis_angle(rng, 3.0);
        EXPECT_LT((so3_left_jacobian(phi) * so3_left_jacobian_inverse(phi) - Matrix3::Identity()).norm(), 1e-9);
    }
}

TEST(Jacobians, RightJacobianInverseMatchesFiniteDifference) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double h = 1e-6;
    for (int i = 0; i < 20; ++i) {
        Vector6 xv;
        for (int k = 0; k < 6; ++k) xv[k] = u(rng);
        const Twist x = Twist::from_vector(xv);
        const Pose ex = se3_exp(x);
        Matrix6 fd;
        for (int k = 0; k < 6; ++k) {
            Vector6 d = Vector6::Zero();
            d[k] = h;
            const Vector6 plus = se3_log(compose(ex, se3_exp(Twist::from_vector(d)))).vector();
            const Vector6 minus = se3_log(compose(ex, se3_exp(Twist::from_vector(-d)))).vector();
            fd.col(k) = (plus - minus) / (2 * h);
        }
        EXPECT_LT((fd - se3_right_jacobian_inverse(x)).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Orthonormalize, RestoresRotation) {
    Matrix3 r = rotz(0.7).rotation;
    r(0, 1) += 1e-4;
    r(2, 2) -= 2e-4;
    const Matrix3 o = orthonormalize(r);
    EXPECT_LT((o.transpose() * o - Matrix3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(o.determinant(), 1.0, 1e-12);
    EXPECT_LT((o - rotz(0.7).rotation).norm(), 1e-3);
}

TEST(Planar, FlattenKeepsYawAndXy) {
    const Pose p = from_rotation_translation(so3_exp(Vector3(0.1, -0.05, 0.8)), Vector3(1, 2, 3));
    const Pose f = flatten_to_plane(p);
    EXPECT_NEAR(f.translation.z(), 0.0, 1e-15);
    EXPECT_NEAR(f.translation.x(), 1.0, 1e-15);
    EXPECT_NEAR(yaw_of(f.rotation), yaw_of(p.rotation), 1e-12);
    EXPECT_LT((f.rotation - rotz(yaw_of(p.rotation)).rotation).norm(), 1e-12);
}

TEST(Kitti, FormatAndParse) {
    const Pose p = compose(trans(1.5, -2.25, 3.0), rotz(0.25));
    const std::string line = format_kitti(p);
    EXPECT_EQ(line.substr(0, 12), "0.968912422 ");
    EXPECT_LT(pose_gap(parse_kitti(line), p), 1e-9);
    EXPECT_EQ(format_kitti(Pose::identity()),
              "1.000000000 0.000000000 0.000000000 0.000000000 0.000000000 1.000000000 0.000000000 "
              "0.000000000 0.000000000 0.000000000 1.000000000 0.000000000");
}

TEST(Kitti, ParseErrors) {
    EXPECT_THROW(parse_kitti("1 2 3"), Error);
    EXPECT_THROW(parse_kitti("1 0 0 0 0 1 0 0 0 0 1 x"), Error);
}

TEST(Quaternion, RoundTrip) {
    std::mt19937_64 rng(10);
    for (int i = 0; i < 50; ++i) {
        const Pose p = random_pose(rng);
        const Eigen::Quaterniond q = to_quaternion(p);
        EXPECT_LT(pose_gap(from_quaternion(p.translation, q.x(), q.y(), q.z(), q.w()), p), 1e-12);
    }
}
