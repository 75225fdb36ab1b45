#include "sclslam/geometry.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sclslam/error.hpp"

namespace sclslam {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNearPiMargin = 1e-6;
constexpr double kSmallAngle = 1e-8;

Vector3 vee(const Matrix3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

}  // namespace

Eigen::Matrix4d Pose::matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

Vector6 Twist::vector() const {
    Vector6 v;
    v << rho, phi;
    return v;
}

Twist Twist::from_vector(const Vector6& v) { return {v.head<3>(), v.tail<3>()}; }

Pose trans(double x, double y, double z) { return {Matrix3::Identity(), Vector3(x, y, z)}; }

Pose rotz(double yaw) {
    return {Eigen::AngleAxisd(yaw, Vector3::UnitZ()).toRotationMatrix(), Vector3::Zero()};
}

Pose from_rotation_translation(const Matrix3& r, const Vector3& t) { return {r, t}; }

Pose inverse(const Pose& p) {
    const Matrix3 rt = p.rotation.transpose();
    return {rt, -(rt * p.translation)};
}

Pose compose(const Pose& a, const Pose& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose between(const Pose& a, const Pose& b) {
    const Matrix3 rt = a.rotation.transpose();
    return {rt * b.rotation, rt * (b.translation - a.translation)};
}

Vector3 transform_point(const Pose& p, const Vector3& x) {
    return p.rotation * x + p.translation;
}

Matrix3 hat(const Vector3& v) {
    Matrix3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

Matrix3 so3_exp(const Vector3& phi) {
    const double theta = phi.norm();
    const Matrix3 k = hat(phi);
    if (theta < kSmallAngle) return Matrix3::Identity() + k + 0.5 * k * k;
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    return Matrix3::Identity() + a * k + b * k * k;
}

double rotation_angle(const Matrix3& r) {
    const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
    const double s = 0.5 * vee(r - r.transpose()).norm();
    return std::atan2(s, c);
}

Vector3 so3_log(const Matrix3& r) {
    const Vector3 skew = vee(r - r.transpose());
    const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
    const double s = 0.5 * skew.norm();
    const double theta = std::atan2(s, c);
    if (theta >= kPi - kNearPiMargin) {
        std::ostringstream msg;
        msg << "rotation angle " << theta << " is within " << kNearPiMargin << " of pi";
        throw Error(ErrorCode::kAngleNearPi, msg.str());
    }
    if (theta < kSmallAngle) return 0.5 * skew;
    if (theta < 3.0) return (theta / (2.0 * s)) * skew;

    // Near pi the skew part loses precision; recover the axis from the
    // symmetric part, sign from the skew part.
    const Matrix3 b = 0.5 * (r + r.transpose()) - c * Matrix3::Identity();
    Eigen::Index k = 0;
    b.diagonal().maxCoeff(&k);
    Vector3 axis = b.col(k) / std::sqrt(b(k, k) * (1.0 - c));
    axis.normalize();
    if (axis.dot(skew) < 0.0) axis = -axis;
    return theta * axis;
}

double yaw_of(const Matrix3& r) { return std::atan2(r(1, 0), r(0, 0)); }

Matrix3 so3_left_jacobian(const Vector3& phi) {
    const double theta = phi.norm();
    const Matrix3 k = hat(phi);
    if (theta < 1e-5) return Matrix3::Identity() + 0.5 * k + k * k / 6.0;
    const double t2 = theta * theta;
    return Matrix3::Identity() + (1.0 - std::cos(theta)) / t2 * k +
           (theta - std::sin(theta)) / (t2 * theta) * k * k;
}

Matrix3 so3_left_jacobian_inverse(const Vector3& phi) {
    const double theta = phi.norm();
    const Matrix3 k = hat(phi);
    if (theta < 1e-5) return Matrix3::Identity() - 0.5 * k + k * k / 12.0;
    const double coeff = 1.0 / (theta * theta) -
                         (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    return Matrix3::Identity() - 0.5 * k + coeff * k * k;
}

Pose se3_exp(const Twist& t) {
    return {so3_exp(t.phi), so3_left_jacobian(t.phi) * t.rho};
}

Twist se3_log(const Pose& p) {
    const Vector3 phi = so3_log(p.rotation);
    return {so3_left_jacobian_inverse(phi) * p.translation, phi};
}

Matrix3 orthonormalize(const Matrix3& r) {
    Eigen::JacobiSVD<Matrix3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix3 u = svd.matrixU();
    const Matrix3 v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
    return u * v.transpose();
}

Pose renormalized(const Pose& p) { return {orthonormalize(p.rotation), p.translation}; }

Matrix6 adjoint(const Pose& p) {
    Matrix6 ad = Matrix6::Zero();
    ad.topLeftCorner<3, 3>() = p.rotation;
    ad.topRightCorner<3, 3>() = hat(p.translation) * p.rotation;
    ad.bottomRightCorner<3, 3>() = p.rotation;
    return ad;
}

namespace {

// Off-diagonal block of the SE(3) left Jacobian for (rho, phi) ordering.
Matrix3 se3_left_q(const Vector3& rho, const Vector3& phi) {
    const Matrix3 rx = hat(rho);
    const Matrix3 px = hat(phi);
    const double theta = phi.norm();
    double c1, c2, c3;
    if (theta < 1e-4) {
        const double t2 = theta * theta;
        c1 = 1.0 / 6.0 - t2 / 120.0;
        c2 = 1.0 / 24.0 - t2 / 720.0;
        c3 = 1.0 / 120.0;
    } else {
        const double t2 = theta * theta;
        const double s = std::sin(theta);
        const double c = std::cos(theta);
        c1 = (theta - s) / (t2 * theta);
        c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
        c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
    }
    const Matrix3 pr = px * rx;
    const Matrix3 rp = rx * px;
    const Matrix3 prp = pr * px;
    return 0.5 * rx + c1 * (pr + rp + prp) + c2 * (px * pr + rp * px - 3.0 * prp) +
           c3 * (prp * px + px * prp);
}

}  // namespace

Matrix6 se3_right_jacobian_inverse(const Twist& x) {
    // Jr(x) = Jl(-x).
    const Vector3 rho = -x.rho;
    const Vector3 phi = -x.phi;
    const Matrix3 jinv = so3_left_jacobian_inverse(phi);
    const Matrix3 q = se3_left_q(rho, phi);
    Matrix6 out = Matrix6::Zero();
    out.topLeftCorner<3, 3>() = jinv;
    out.topRightCorner<3, 3>() = -jinv * q * jinv;
    out.bottomRightCorner<3, 3>() = jinv;
    return out;
}

Pose flatten_to_plane(const Pose& p) {
    Pose out = rotz(yaw_of(p.rotation));
    out.translation = Vector3(p.translation.x(), p.translation.y(), 0.0);
    return out;
}

std::string format_kitti(const Pose& p) {
    char buf[512];
    const Matrix3& r = p.rotation;
    const Vector3& t = p.translation;
    std::snprintf(buf, sizeof(buf),
                  "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f",
                  r(0, 0), r(0, 1), r(0, 2), t(0), r(1, 0), r(1, 1), r(1, 2), t(1),
                  r(2, 0), r(2, 1), r(2, 2), t(2));
    return buf;
}

Pose parse_kitti(std::string_view line) {
    std::istringstream in{std::string(line)};
    double v[12];
    for (double& x : v) {
        if (!(in >> x)) {
            throw Error(ErrorCode::kParseError, "expected 12 numbers in KITTI pose line '" +
                                                    std::string(line) + "'");
        }
    }
    Pose p;
    p.rotation << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    p.translation << v[3], v[7], v[11];
    return p;
}

Pose from_quaternion(const Vector3& t, double qx, double qy, double qz, double qw) {
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (q.norm() == 0.0) throw Error(ErrorCode::kParseError, "zero quaternion");
    q.normalize();
    return {q.toRotationMatrix(), t};
}

Eigen::Quaterniond to_quaternion(const Pose& p) {
    Eigen::Quaterniond q(p.rotation);
    q.normalize();
    return q;
}

}  // namespace sclslam
