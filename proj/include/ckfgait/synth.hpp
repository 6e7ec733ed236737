#pragma once

#include <cstdint>
#include <vector>

#include "ckfgait/body_model.hpp"
#include "ckfgait/preprocess.hpp"

namespace ckfgait {

enum class PathType { kStraight, kFigureEight, kZigzag };

// Parameters of the scripted walking pattern. Trials begin and end with a
// standstill so the filter can be initialized from a resting pose.
struct GaitParams {
  double cadence = 1.1;              // steps per second; 0 gives a static trial
  double stride_length = 0.9;        // advance of one foot per gait cycle, m
  double stance_fraction = 0.6;      // fraction of the cycle with foot contact
  double peak_knee_flexion = 60.0 * M_PI / 180.0;
  PathType path = PathType::kStraight;
  double duration = 30.0;            // total trial length, s
  double sample_rate_hz = 100.0;
  double lead_in = 2.0;              // standstill before the first step, s
  double lead_out = 1.0;             // standstill kept free of steps at the end
  BodyDimensions body;
  uint64_t rng_seed = 1;

  void validate() const;  // throws DataError
};

struct TravelledDistance {
  double pelvis = 0.0;
  double ankle_l = 0.0;
  double ankle_r = 0.0;
};

struct GroundTruthTrial {
  std::vector<PoseSnapshot> poses;
  std::vector<ImuFrame> frames;  // noiseless, with true contact flags
  StepEvents events;             // true stance intervals
  TravelledDistance ttd_xy;      // accumulated horizontal path length
};

// Scripted gait with closed-form kinematics: ankle and pelvis trajectories
// are piecewise-analytic, segment orientations come from exact two-link leg
// geometry, and accelerations are analytic second derivatives. Stance samples
// have exactly zero ankle velocity and ankle height equal to the floor.
GroundTruthTrial generateGait(const GaitParams& params);

// Adds zero-mean Gaussian noise to the world accelerations and perturbs each
// orientation by a small random axis-angle rotation (left-multiplied).
// Deterministic for a fixed seed.
std::vector<ImuFrame> corrupt(const std::vector<ImuFrame>& frames,
                              double accel_noise_sd, double ori_noise_sd,
                              uint64_t seed);

}  // namespace ckfgait
