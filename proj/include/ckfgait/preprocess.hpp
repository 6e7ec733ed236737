#pragma once

#include <span>
#include <vector>

#include "ckfgait/body_model.hpp"
#include "ckfgait/so3.hpp"

namespace ckfgait {

// One raw sample from a single IMU: sensor-frame specific force plus the
// sensor fusion orientation estimate q^W_S. Gyro rates are carried through
// untouched; nothing downstream consumes them.
struct RawImuSample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
  Quat orientation = Quat::Identity();
};

struct ContactFlags {
  bool left = false;
  bool right = false;

  bool get(Side s) const { return s == Side::kLeft ? left : right; }
  void set(Side s, bool v) { (s == Side::kLeft ? left : right) = v; }
};

// One synchronized frame across the three IMUs, already in the world frame
// with gravity removed.
struct ImuFrame {
  double t = 0.0;
  Vec3 accel_mp = Vec3::Zero();  // mid-pelvis sensor
  Vec3 accel_la = Vec3::Zero();  // left ankle sensor
  Vec3 accel_ra = Vec3::Zero();  // right ankle sensor
  Quat q_pelvis = Quat::Identity();
  Quat q_lshank = Quat::Identity();
  Quat q_rshank = Quat::Identity();
  ContactFlags contact;

  const Vec3& accel(Side s) const {
    return s == Side::kLeft ? accel_la : accel_ra;
  }
  const Quat& shank(Side s) const {
    return s == Side::kLeft ? q_lshank : q_rshank;
  }
};

// Closed sample-index interval [begin, end] during which a foot is planted.
struct StepInterval {
  int begin = 0;
  int end = 0;
};

struct StepEvents {
  std::vector<StepInterval> left;
  std::vector<StepInterval> right;

  const std::vector<StepInterval>& side(Side s) const {
    return s == Side::kLeft ? left : right;
  }
  std::vector<StepInterval>& side(Side s) {
    return s == Side::kLeft ? left : right;
  }
  bool inContact(Side s, int index) const;
};

inline const Vec3 kDefaultGravity{0.0, 0.0, 9.81};

// World orientation of a body segment from its sensor orientation and the
// fixed segment-to-sensor mounting offset.
Quat segmentOrientation(const Quat& sensor_q, const Quat& seg_to_sensor);

// Mounting offset from one calibration sample in a known reference pose.
Quat calibrateOffset(const Quat& reference_body_q, const Quat& sensor_q);

// Gravity-free acceleration in the world frame.
Vec3 worldInertialAccel(const Quat& sensor_q, const Vec3& raw_accel,
                        const Vec3& gravity = kDefaultGravity);

// Flags a sample as in-contact when the per-axis variance of the world
// acceleration, summed over axes in a centred window, falls below the
// threshold; contiguous flags merge into intervals. Windows are truncated at
// the series edges. Returns no intervals when the series is shorter than the
// window.
std::vector<StepInterval> detectSteps(std::span<const Vec3> accel_world,
                                      double sample_rate_hz,
                                      double window_s = 0.25,
                                      double variance_threshold = 1.0);

// Heading offset between a reference acceleration series and an IMU-derived
// one, found by grid search over [-pi, pi). The returned yaw is the rotation
// to apply to the IMU series so it best matches the reference in x/y RMSE.
double yawOffsetSearch(std::span<const Vec3> ref_accel,
                       std::span<const Vec3> imu_accel,
                       double grid_step_rad = 0.1 * M_PI / 180.0);

// Stamps per-frame contact flags from step events.
void applyStepEvents(std::vector<ImuFrame>& frames, const StepEvents& events);

// Inverse of applyStepEvents: contiguous contact flags to intervals.
StepEvents eventsFromFlags(const std::vector<ImuFrame>& frames);

}  // namespace ckfgait
