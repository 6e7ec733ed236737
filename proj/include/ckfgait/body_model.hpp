#pragma once

#include "ckfgait/so3.hpp"

namespace ckfgait {

enum class Side { kLeft, kRight };

inline const char* sideName(Side s) {
  return s == Side::kLeft ? "left" : "right";
}

// Segment lengths and reference heights, metres. pelvis_width is the
// hip-to-hip distance d_p; the mid-pelvis point sits halfway between the hips.
struct BodyDimensions {
  double pelvis_width = 0.23;
  double thigh_left = 0.41;
  double thigh_right = 0.41;
  double shank_left = 0.42;
  double shank_right = 0.42;
  double standing_pelvis_z = 0.86;  // pelvis height z_p at the first sample
  double floor_z = 0.08;            // ankle height z_f when the foot is planted

  double thigh(Side s) const {
    return s == Side::kLeft ? thigh_left : thigh_right;
  }
  double shank(Side s) const {
    return s == Side::kLeft ? shank_left : shank_right;
  }
  void validate() const;  // throws DataError on non-positive lengths
};

// World orientations of the five tracked segments. pelvis/lshank/rshank come
// from the sensors; lthigh/rthigh are derived from the constrained state.
struct SegmentOrientations {
  Quat pelvis = Quat::Identity();
  Quat lshank = Quat::Identity();
  Quat rshank = Quat::Identity();
  Quat lthigh = Quat::Identity();
  Quat rthigh = Quat::Identity();
};

struct PoseSnapshot {
  double t = 0.0;
  Vec3 mid_pelvis = Vec3::Zero();
  Vec3 hip_l = Vec3::Zero();
  Vec3 hip_r = Vec3::Zero();
  Vec3 knee_l = Vec3::Zero();
  Vec3 knee_r = Vec3::Zero();
  Vec3 ankle_l = Vec3::Zero();
  Vec3 ankle_r = Vec3::Zero();
  SegmentOrientations ori;

  const Vec3& hip(Side s) const { return s == Side::kLeft ? hip_l : hip_r; }
  const Vec3& knee(Side s) const { return s == Side::kLeft ? knee_l : knee_r; }
  const Vec3& ankle(Side s) const {
    return s == Side::kLeft ? ankle_l : ankle_r;
  }
  const Quat& thigh(Side s) const {
    return s == Side::kLeft ? ori.lthigh : ori.rthigh;
  }
  const Quat& shank(Side s) const {
    return s == Side::kLeft ? ori.lshank : ori.rshank;
  }
};

// Filter state layout: [p_mp p_la p_ra v_mp v_la v_ra], 3 entries each.
constexpr int kStateDim = 18;
using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using StateMat = Eigen::Matrix<double, kStateDim, kStateDim>;

constexpr int kMpPos = 0;
constexpr int kMpVel = 9;
inline int anklePosIndex(Side s) { return s == Side::kLeft ? 3 : 6; }
inline int ankleVelIndex(Side s) { return s == Side::kLeft ? 12 : 15; }

// Hip centre from the mid-pelvis point along the pelvis y-axis; the left hip
// lies on +y, the right hip on -y.
Vec3 hipPosition(const Vec3& mid_pelvis, const Quat& pelvis_q,
                 double pelvis_width, Side side);

// Knee centre from the ankle along the shank z-axis.
Vec3 kneePosition(const Vec3& ankle, const Quat& shank_q, double shank_len);

// Thigh vector hip - knee evaluated at the given state and orientations.
Vec3 thighVector(const StateVec& x, const Quat& pelvis_q, const Quat& shank_q,
                 const BodyDimensions& dims, Side side);

// Knee flexion angle from the unit thigh direction and the shank rotation,
// mapped to [-pi/2, 3pi/2). A straight leg gives 0; flexion is positive.
double kneeAngle(const Vec3& thigh_dir, const Mat3& shank_r);

// Thigh rotation with the shank y-axis as second column and the thigh
// direction as third column, re-orthonormalized.
Mat3 thighOrientation(const Vec3& thigh_dir, const Mat3& shank_r);

// Full joint set plus derived thigh orientations for one frame.
PoseSnapshot assemblePose(const StateVec& x, const SegmentOrientations& meas,
                          const BodyDimensions& dims, double t);

}  // namespace ckfgait
