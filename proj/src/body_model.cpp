#include "ckfgait/body_model.hpp"

#include <cmath>

#include "ckfgait/errors.hpp"

namespace ckfgait {

void BodyDimensions::validate() const {
  const double lengths[] = {pelvis_width, thigh_left, thigh_right, shank_left,
                            shank_right};
  for (double v : lengths) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DataError("body dimensions must be positive and finite");
    }
  }
  if (!std::isfinite(standing_pelvis_z) || !std::isfinite(floor_z)) {
    throw DataError("body reference heights must be finite");
  }
}

Vec3 hipPosition(const Vec3& mid_pelvis, const Quat& pelvis_q,
                 double pelvis_width, Side side) {
  const double sign = side == Side::kLeft ? 1.0 : -1.0;
  const Vec3 pelvis_y = quatToRotation(pelvis_q).col(1);
  return mid_pelvis + sign * 0.5 * pelvis_width * pelvis_y;
}

Vec3 kneePosition(const Vec3& ankle, const Quat& shank_q, double shank_len) {
  const Vec3 shank_z = quatToRotation(shank_q).col(2);
  return ankle + shank_len * shank_z;
}

Vec3 thighVector(const StateVec& x, const Quat& pelvis_q, const Quat& shank_q,
                 const BodyDimensions& dims, Side side) {
  const Vec3 mp = x.segment<3>(kMpPos);
  const Vec3 ankle = x.segment<3>(anklePosIndex(side));
  const Vec3 hip = hipPosition(mp, pelvis_q, dims.pelvis_width, side);
  const Vec3 knee = kneePosition(ankle, shank_q, dims.shank(side));
  return hip - knee;
}

double kneeAngle(const Vec3& thigh_dir, const Mat3& shank_r) {
  const double dz = -thigh_dir.dot(shank_r.col(2));
  const double dx = -thigh_dir.dot(shank_r.col(0));
  if (std::abs(dz) < 1e-12 && std::abs(dx) < 1e-12) {
    throw GeometryError("knee angle undefined: thigh direction orthogonal to "
                        "shank x and z axes");
  }
  double alpha = std::atan2(dz, dx) + M_PI / 2.0;
  if (alpha >= 1.5 * M_PI) {
    alpha -= 2.0 * M_PI;
  }
  return alpha;
}

Mat3 thighOrientation(const Vec3& thigh_dir, const Mat3& shank_r) {
  const Vec3 y = shank_r.col(1);
  Vec3 x = y.cross(thigh_dir);
  const double nx = x.norm();
  if (nx < 1e-6) {
    throw GeometryError("thigh orientation undefined: thigh direction "
                        "parallel to the shank y-axis");
  }
  x /= nx;
  Mat3 out;
  out.col(0) = x;
  out.col(1) = y;
  out.col(2) = x.cross(y);
  return out;
}

PoseSnapshot assemblePose(const StateVec& x, const SegmentOrientations& meas,
                          const BodyDimensions& dims, double t) {
  PoseSnapshot pose;
  pose.t = t;
  pose.ori = meas;
  pose.mid_pelvis = x.segment<3>(kMpPos);
  pose.ankle_l = x.segment<3>(anklePosIndex(Side::kLeft));
  pose.ankle_r = x.segment<3>(anklePosIndex(Side::kRight));
  pose.hip_l = hipPosition(pose.mid_pelvis, meas.pelvis, dims.pelvis_width,
                           Side::kLeft);
  pose.hip_r = hipPosition(pose.mid_pelvis, meas.pelvis, dims.pelvis_width,
                           Side::kRight);
  pose.knee_l = kneePosition(pose.ankle_l, meas.lshank, dims.shank_left);
  pose.knee_r = kneePosition(pose.ankle_r, meas.rshank, dims.shank_right);

  const Vec3 tau_l = pose.hip_l - pose.knee_l;
  const Vec3 tau_r = pose.hip_r - pose.knee_r;
  if (tau_l.norm() < 1e-6 || tau_r.norm() < 1e-6) {
    throw GeometryError("degenerate thigh vector while assembling pose");
  }
  pose.ori.lthigh = rotationToQuat(
      thighOrientation(tau_l.normalized(), quatToRotation(meas.lshank)));
  pose.ori.rthigh = rotationToQuat(
      thighOrientation(tau_r.normalized(), quatToRotation(meas.rshank)));
  return pose;
}

}  // namespace ckfgait
