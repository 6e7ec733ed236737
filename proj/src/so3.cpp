#include "ckfgait/so3.hpp"

#include <cmath>

namespace ckfgait {

namespace {

Vec3 vee(const Mat3& skew) {
  return Vec3(skew(2, 1), skew(0, 2), skew(1, 0));
}

}  // namespace

Quat quatNormalized(const Quat& q) {
  Quat out = q;
  out.normalize();
  return out;
}

Quat quatMultiply(const Quat& a, const Quat& b) {
  return quatNormalized(a * b);
}

Quat quatInverse(const Quat& q) {
  return q.conjugate();
}

Mat3 quatToRotation(const Quat& q) {
  return quatNormalized(q).toRotationMatrix();
}

Quat rotationToQuat(const Mat3& r) {
  return quatNormalized(Quat(r));
}

Vec3 rotateVector(const Quat& q, const Vec3& v) {
  return quatToRotation(q) * v;
}

Mat3 so3Exp(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-12) {
    Mat3 out = Mat3::Identity();
    out(0, 1) = -axis_angle.z();
    out(1, 0) = axis_angle.z();
    out(0, 2) = axis_angle.y();
    out(2, 0) = -axis_angle.y();
    out(1, 2) = -axis_angle.x();
    out(2, 1) = axis_angle.x();
    return out;
  }
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Quat quatExp(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-12) {
    return quatNormalized(Quat(1.0, 0.5 * axis_angle.x(), 0.5 * axis_angle.y(),
                               0.5 * axis_angle.z()));
  }
  return quatNormalized(Quat(Eigen::AngleAxisd(angle, axis_angle / angle)));
}

Vec3 so3Log(const Mat3& r) {
  const Vec3 w = 0.5 * vee(r - r.transpose());  // sin(angle) * axis
  const double s = w.norm();
  const double c = 0.5 * (r.trace() - 1.0);
  const double angle = std::atan2(s, c);

  if (angle < 1e-9) {
    return w;  // angle/sin(angle) -> 1
  }
  if (angle < M_PI - 1e-6) {
    return (angle / s) * w;
  }
  // Near pi the antisymmetric part vanishes; recover the axis from
  // (R + I)/2 = a a^T + cos-term corrections, picking the best-conditioned
  // column (largest diagonal entry).
  const Mat3 b = 0.5 * (r + Mat3::Identity());
  int j = 0;
  b.diagonal().maxCoeff(&j);
  Vec3 axis = b.col(j) / std::sqrt(b(j, j));
  axis.normalize();
  if (axis.dot(w) < 0.0) {
    axis = -axis;
  }
  return angle * axis;
}

double rotationAngle(const Mat3& r) {
  return so3Log(r).norm();
}

Quat yawQuat(double yaw) {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

bool isUnitQuat(const Quat& q, double tol) {
  return std::abs(q.norm() - 1.0) <= tol;
}

bool isRotation(const Mat3& r, double tol) {
  const Mat3 should_be_identity = r * r.transpose();
  return (should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace ckfgait
