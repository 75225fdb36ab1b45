#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <string>
#include <string_view>

namespace sclslam {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

// Rigid transform in SE(3). Maps points from its child frame into its parent
// frame: x_parent = rotation * x_child + translation.
struct Pose {
    Matrix3 rotation = Matrix3::Identity();
    Vector3 translation = Vector3::Zero();

    static Pose identity() { return {}; }
    Eigen::Matrix4d matrix() const;
};

// Tangent vector of SE(3). Component order is (rho, phi) =
// (tx, ty, tz, rx, ry, rz) everywhere in the library.
struct Twist {
    Vector3 rho = Vector3::Zero();
    Vector3 phi = Vector3::Zero();

    Vector6 vector() const;
    static Twist from_vector(const Vector6& v);
};

Pose trans(double x, double y, double z);
Pose rotz(double yaw);
Pose from_rotation_translation(const Matrix3& r, const Vector3& t);

Pose inverse(const Pose& p);

/// a * b: apply b, then a.
Pose compose(const Pose& a, const Pose& b);

/// a^-1 * b, the pose of b expressed in the frame of a.
Pose between(const Pose& a, const Pose& b);

Vector3 transform_point(const Pose& p, const Vector3& x);

Matrix3 hat(const Vector3& v);
Matrix3 so3_exp(const Vector3& phi);
/// Principal-branch rotation log. Throws AngleNearPi within 1e-6 of pi.
Vector3 so3_log(const Matrix3& r);
double rotation_angle(const Matrix3& r);
double yaw_of(const Matrix3& r);

Pose se3_exp(const Twist& t);
/// Inverse of se3_exp for rotation angles below pi - 1e-6; throws
/// Error(kAngleNearPi) otherwise.
Twist se3_log(const Pose& p);

/// Projects the rotation back onto SO(3) (polar decomposition via SVD).
Matrix3 orthonormalize(const Matrix3& r);
Pose renormalized(const Pose& p);

/// Adjoint of p acting on (rho, phi) twists: exp(Ad(p) x) = p exp(x) p^-1.
Matrix6 adjoint(const Pose& p);

Matrix3 so3_left_jacobian(const Vector3& phi);
Matrix3 so3_left_jacobian_inverse(const Vector3& phi);
/// Inverse of the SE(3) right Jacobian: log(exp(x) exp(d)) ~ x + Jr^-1(x) d.
Matrix6 se3_right_jacobian_inverse(const Twist& x);

/// Keeps only yaw and the xy translation (planar operation).
Pose flatten_to_plane(const Pose& p);

/// KITTI convention: 12 numbers, row-major 3x4 [R|t], '%.9f'.
std::string format_kitti(const Pose& p);
/// Parses a 12-number KITTI line. Throws Error(kParseError).
Pose parse_kitti(std::string_view line);

Pose from_quaternion(const Vector3& t, double qx, double qy, double qz, double qw);
Eigen::Quaterniond to_quaternion(const Pose& p);

}  // namespace sclslam
