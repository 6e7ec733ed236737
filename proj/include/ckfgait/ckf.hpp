#pragma once

#include <vector>

#include "ckfgait/body_model.hpp"
#include "ckfgait/preprocess.hpp"

namespace ckfgait {

using Vec4 = Eigen::Vector4d;
using Vec9 = Eigen::Matrix<double, 9, 1>;

// Process/measurement variances plus the constrained-update settings. The
// defaults are the tuning the filter ships with.
struct NoiseConfig {
  double dt = 0.01;  // nominal sample interval, s

  Vec9 sigma2_acc = Vec9::Constant(100.0);         // input accel, (m/s^2)^2
  Vec3 sigma2_mp = Vec3(100.0, 100.0, 0.1);        // pelvis pseudo-meas
  Vec4 sigma2_ls = Vec4(0.01, 0.01, 0.01, 1e-4);   // [vel xyz, pos z]
  Vec4 sigma2_rs = Vec4(0.01, 0.01, 0.01, 1e-4);
  Vec9 sigma2_lim = Vec9::Constant(100.0);         // covariance limiter, m^2

  double sckf_threshold = 100.0;
  int max_sckf_iterations = 200;

  void validate() const;  // throws DataError
};

struct FilterState {
  StateVec x = StateVec::Zero();
  StateMat P = StateMat::Identity();
};

struct SystemMatrices {
  StateMat F = StateMat::Identity();
  Eigen::Matrix<double, kStateDim, 9> G =
      Eigen::Matrix<double, kStateDim, 9>::Zero();
  StateMat Q = StateMat::Zero();
};

// Stacked pseudo-measurement for one frame: rows depend on which feet are in
// contact (3, 7 or 11).
struct MeasurementModel {
  Eigen::MatrixXd H;
  Eigen::VectorXd y;
  Eigen::VectorXd sigma2;
};

enum class ConstraintLabel {
  kThighLenL,
  kHingeL,
  kKneeRomL,
  kThighLenR,
  kHingeR,
  kKneeRomR,
};

// Linearized constraints D x = d at a given state.
struct ConstraintSystem {
  Eigen::MatrixXd D;
  Eigen::VectorXd d;
  std::vector<ConstraintLabel> labels;
};

// Per-side cap for the knee range-of-motion constraint, radians.
struct KneeMax {
  double left = M_PI;
  double right = M_PI;

  double get(Side s) const { return s == Side::kLeft ? left : right; }
};

// Nonlinear constraint residuals at a state. hinge_* is the dot product of
// the unit thigh direction with the shank y-axis (dimensionless).
struct ConstraintResiduals {
  double thigh_len_l = 0.0;
  double hinge_l = 0.0;
  double thigh_len_r = 0.0;
  double hinge_r = 0.0;
  double knee_l = 0.0;  // knee angle, NaN when undefined
  double knee_r = 0.0;
  double rom_violation_l = 0.0;  // distance outside [0, knee_max], rad
  double rom_violation_r = 0.0;
};

struct SckfResult {
  FilterState state;
  int iterations = 0;
  bool converged = false;
};

struct StepResult {
  PoseSnapshot pose;
  FilterState state;
  int sckf_iterations = 0;
  bool sckf_converged = true;
  ConstraintResiduals residuals;  // post-projection
};

SystemMatrices buildSystemMatrices(const NoiseConfig& cfg);

FilterState initialize(const StateVec& x0, double p0_scale = 0.5);

// Constant-velocity prediction driven by the stacked world accelerations
// u = [a_mp a_la a_ra].
FilterState predict(const FilterState& state, const Vec9& u,
                    const SystemMatrices& sys);

MeasurementModel buildMeasurement(const ContactFlags& contact,
                                  const BodyDimensions& dims,
                                  const NoiseConfig& cfg);

// Kalman state update only. The covariance is finalized afterwards by
// covarianceLimit, which folds the same measurement in together with the
// limiter pseudo-measurement.
FilterState measurementUpdate(const FilterState& state,
                              const MeasurementModel& meas);

// Joint covariance update of the frame measurement and the position limiter.
// Leaves the state vector untouched (the limiter observes the current
// position estimate, so its innovation is identically zero).
FilterState covarianceLimit(const FilterState& state,
                            const MeasurementModel& meas,
                            const NoiseConfig& cfg);

ConstraintSystem buildConstraints(const StateVec& x,
                                  const SegmentOrientations& oris,
                                  const BodyDimensions& dims,
                                  const KneeMax& knee_max);

ConstraintResiduals constraintResiduals(const StateVec& x,
                                        const SegmentOrientations& oris,
                                        const BodyDimensions& dims,
                                        const KneeMax& knee_max);

// Iterated constrained projection of the state onto the linearized body
// constraints, applied as pseudo-measurements with exponentially tightening
// weights. Only the state moves; the covariance passes through unchanged.
SckfResult sckfProject(const FilterState& state,
                       const SegmentOrientations& oris,
                       const BodyDimensions& dims, const KneeMax& knee_max,
                       const NoiseConfig& cfg);

// Full predict/update/limit/project cycle per frame.
class Filter {
 public:
  Filter(const BodyDimensions& dims, const NoiseConfig& noise);

  void initializeState(const StateVec& x0, double p0_scale = 0.5);
  StepResult step(const ImuFrame& frame, const SegmentOrientations& oris);

  const FilterState& state() const { return state_; }
  const BodyDimensions& dims() const { return dims_; }

 private:
  BodyDimensions dims_;
  NoiseConfig noise_;
  FilterState state_;
  double last_t_ = 0.0;
  bool has_time_ = false;
};

}  // namespace ckfgait
