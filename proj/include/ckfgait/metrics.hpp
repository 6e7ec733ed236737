#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckfgait/body_model.hpp"
#include "ckfgait/preprocess.hpp"

namespace ckfgait {

// Aligned estimated/reference pose series. Alignment is root-anchored: every
// estimated frame is translated so its mid-pelvis coincides with the
// reference one before position errors are taken.
struct TrialComparison {
  std::span<const PoseSnapshot> estimated;
  std::span<const PoseSnapshot> reference;
};

// Per-frame angle series for both legs, radians. Hip angles are the intrinsic
// Euler decomposition of the pelvis-relative thigh rotation; the sagittal
// component is the rotation about Y, frontal about X, transverse about Z,
// whatever the extraction order.
struct JointAngleSeries {
  std::vector<double> knee_left, knee_right;
  std::vector<double> hip_sagittal_left, hip_sagittal_right;
  std::vector<double> hip_frontal_left, hip_frontal_right;
  std::vector<double> hip_transverse_left, hip_transverse_right;
};

struct JointAngleStat {
  double rmse_biased = 0.0;
  double rmse_unbiased = 0.0;
  // Pooled over both sides; empty when a series has no usable variation
  // (straight-line walking keeps some hip components flat).
  std::optional<double> cc;
};

struct TtdDeviation {
  double pelvis = 0.0;
  double left_ankle = 0.0;
  double right_ankle = 0.0;
};

struct MetricReport {
  double e_pos = 0.0;          // metres
  double e_ori_biased = 0.0;   // radians
  double e_ori_unbiased = 0.0; // radians
  JointAngleStat knee_sagittal;
  JointAngleStat hip_sagittal;
  JointAngleStat hip_frontal;
  JointAngleStat hip_transverse;
  // Present when step events with at least two occurrences were supplied.
  std::optional<TtdDeviation> ttd;
};

// "ZXY" and friends to axis indices (X=0, Y=1, Z=2); throws DataError on
// anything that is not a permutation of the three axes.
std::array<int, 3> parseEulerOrder(const std::string& order);

constexpr std::array<int, 3> kDefaultEulerOrder{2, 0, 1};  // Z-X-Y

// Intrinsic Tait-Bryan angles of r for the given axis sequence, returned in
// sequence order. The middle angle is clamped into its asin domain.
Vec3 intrinsicEulerAngles(const Mat3& r, const std::array<int, 3>& axes);

// Mean joint position error over {hips, knees, ankles}, root-anchored,
// RMS-aggregated over frames.
double positionRmse(const TrialComparison& cmp);

// Per-frame mean rotational offset magnitude of the two thighs, RMS over
// frames. With remove_bias the per-side mean offset rotation is taken out
// first; if that does not help it is skipped, so the unbiased value never
// exceeds the biased one.
double orientationRmse(const TrialComparison& cmp, bool remove_bias);

JointAngleSeries jointAngleSeries(
    std::span<const PoseSnapshot> trial,
    const std::array<int, 3>& euler_order = kDefaultEulerOrder);

// Pearson correlation; throws DataError on length mismatch, fewer than two
// samples, or an exactly constant series.
double correlationCoefficient(std::span<const double> a,
                              std::span<const double> b);

// |TTD_est - TTD_ref| / TTD_ref for the pelvis and left ankle over left-step
// events and the right ankle over right-step events. Event times are the
// starts of the contact intervals. Throws DataError when events fall outside
// the trials, fewer than two events exist for a needed side, or TTD_ref is 0.
TtdDeviation ttdDeviation(std::span<const PoseSnapshot> estimated,
                          std::span<const PoseSnapshot> reference,
                          const StepEvents& events);

// Full report. TTD is filled when both sides carry at least two events.
MetricReport evaluateTrial(const TrialComparison& cmp,
                           const StepEvents& events,
                           const std::array<int, 3>& euler_order =
                               kDefaultEulerOrder,
                           bool remove_bias = true);

}  // namespace ckfgait
