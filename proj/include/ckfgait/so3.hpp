#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace ckfgait {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Unit quaternion, Hamilton convention, scalar (w) first. All frames are
// right-handed. q rotates vector coordinates from the body/sensor frame into
// the world frame: v_world = rotateVector(q, v_body).
using Quat = Eigen::Quaterniond;

Quat quatNormalized(const Quat& q);

// Hamilton product a*b, renormalized so chained products stay unit.
Quat quatMultiply(const Quat& a, const Quat& b);

// Inverse of a unit quaternion (its conjugate).
Quat quatInverse(const Quat& q);

Mat3 quatToRotation(const Quat& q);
Quat rotationToQuat(const Mat3& r);

Vec3 rotateVector(const Quat& q, const Vec3& v);

// Exponential map: axis-angle vector (axis * angle, radians) to rotation.
Mat3 so3Exp(const Vec3& axis_angle);
Quat quatExp(const Vec3& axis_angle);

// Logarithm map: rotation matrix to axis-angle vector with norm in [0, pi].
Vec3 so3Log(const Mat3& r);

// Rotation angle in [0, pi].
double rotationAngle(const Mat3& r);

Quat yawQuat(double yaw);

bool isUnitQuat(const Quat& q, double tol = 1e-9);
bool isRotation(const Mat3& r, double tol = 1e-9);

}  // namespace ckfgait
