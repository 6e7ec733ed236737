#include "ckfgait/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ckfgait/errors.hpp"

namespace ckfgait {
namespace {

constexpr Side kSides[] = {Side::kLeft, Side::kRight};

// Angle series whose total range is below this are treated as flat and get
// no correlation value instead of one computed from rounding noise.
constexpr double kFlatSeriesRange = 1e-9;

double quatAngle(const Quat& q) {
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

void requireAligned(const TrialComparison& cmp) {
  if (cmp.estimated.size() != cmp.reference.size()) {
    throw DataError("trial comparison length mismatch: estimated " +
                    std::to_string(cmp.estimated.size()) + " vs reference " +
                    std::to_string(cmp.reference.size()));
  }
}

// Relative thigh rotations q_ref * q_est^-1 for one side across the trial.
std::vector<Quat> thighOffsets(const TrialComparison& cmp, Side s) {
  std::vector<Quat> out;
  out.reserve(cmp.estimated.size());
  for (size_t k = 0; k < cmp.estimated.size(); ++k) {
    out.push_back(quatMultiply(cmp.reference[k].thigh(s),
                               quatInverse(cmp.estimated[k].thigh(s))));
  }
  return out;
}

// Chordal mean: normalized sign-aligned quaternion sum. Falls back to the
// identity when the sum cancels out.
Quat chordalMean(const std::vector<Quat>& qs) {
  Eigen::Vector4d sum = Eigen::Vector4d::Zero();
  for (const Quat& q : qs) {
    Eigen::Vector4d c(q.w(), q.x(), q.y(), q.z());
    if (sum.dot(c) < 0.0) c = -c;
    sum += c;
  }
  if (sum.norm() < 1e-12) return Quat::Identity();
  sum.normalize();
  return Quat(sum[0], sum[1], sum[2], sum[3]);
}

double rmsOverFrames(const std::vector<double>& per_frame) {
  if (per_frame.empty()) return 0.0;
  double acc = 0.0;
  for (double v : per_frame) acc += v * v;
  return std::sqrt(acc / static_cast<double>(per_frame.size()));
}

std::vector<int> eventStarts(const std::vector<StepInterval>& intervals,
                             size_t n_frames) {
  std::vector<int> starts;
  starts.reserve(intervals.size());
  for (const StepInterval& iv : intervals) {
    if (iv.begin < 0 || iv.begin >= static_cast<int>(n_frames)) {
      throw DataError("step event index " + std::to_string(iv.begin) +
                      " outside trial of " + std::to_string(n_frames) +
                      " frames");
    }
    starts.push_back(iv.begin);
  }
  return starts;
}

template <typename PointFn>
double travelledXy(std::span<const PoseSnapshot> trial,
                   const std::vector<int>& event_indices, PointFn point) {
  double total = 0.0;
  for (size_t i = 1; i < event_indices.size(); ++i) {
    const Vec3 a = point(trial[static_cast<size_t>(event_indices[i - 1])]);
    const Vec3 b = point(trial[static_cast<size_t>(event_indices[i])]);
    total += (b.head<2>() - a.head<2>()).norm();
  }
  return total;
}

template <typename PointFn>
double ttdFraction(std::span<const PoseSnapshot> est,
                   std::span<const PoseSnapshot> ref,
                   const std::vector<int>& events, PointFn point,
                   const char* what) {
  if (events.size() < 2) {
    throw DataError(std::string("need at least two step events for ") + what);
  }
  const double ttd_ref = travelledXy(ref, events, point);
  if (ttd_ref == 0.0) {
    throw DataError(std::string("reference travelled distance is zero for ") +
                    what);
  }
  return std::abs(travelledXy(est, events, point) - ttd_ref) / ttd_ref;
}

struct SeriesPair {
  const std::vector<double>* est_l;
  const std::vector<double>* ref_l;
  const std::vector<double>* est_r;
  const std::vector<double>* ref_r;
};

double range(std::span<const double> v) {
  if (v.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo;
}

JointAngleStat angleStat(const SeriesPair& p, bool remove_bias) {
  JointAngleStat stat;
  const size_t n = p.est_l->size() + p.est_r->size();
  if (n == 0) return stat;

  double sq = 0.0, sq_unb = 0.0;
  for (auto [est, ref] : {std::pair{p.est_l, p.ref_l}, {p.est_r, p.ref_r}}) {
    double mean_err = 0.0;
    for (size_t k = 0; k < est->size(); ++k) {
      mean_err += (*est)[k] - (*ref)[k];
    }
    if (!est->empty()) mean_err /= static_cast<double>(est->size());
    for (size_t k = 0; k < est->size(); ++k) {
      const double e = (*est)[k] - (*ref)[k];
      sq += e * e;
      sq_unb += (e - mean_err) * (e - mean_err);
    }
  }
  stat.rmse_biased = std::sqrt(sq / static_cast<double>(n));
  stat.rmse_unbiased =
      remove_bias ? std::sqrt(sq_unb / static_cast<double>(n))
                  : stat.rmse_biased;

  std::vector<double> est_all(*p.est_l), ref_all(*p.ref_l);
  est_all.insert(est_all.end(), p.est_r->begin(), p.est_r->end());
  ref_all.insert(ref_all.end(), p.ref_r->begin(), p.ref_r->end());
  if (est_all.size() >= 2 && range(est_all) > kFlatSeriesRange &&
      range(ref_all) > kFlatSeriesRange) {
    stat.cc = correlationCoefficient(est_all, ref_all);
  }
  return stat;
}

}  // namespace

std::array<int, 3> parseEulerOrder(const std::string& order) {
  if (order.size() != 3) {
    throw DataError("euler order must name three axes, got \"" + order +
                    "\"");
  }
  std::array<int, 3> axes{};
  std::array<bool, 3> seen{};
  for (int i = 0; i < 3; ++i) {
    const char c = order[static_cast<size_t>(i)];
    int axis;
    switch (c) {
      case 'X': case 'x': axis = 0; break;
      case 'Y': case 'y': axis = 1; break;
      case 'Z': case 'z': axis = 2; break;
      default:
        throw DataError("euler order axis must be X, Y, or Z, got \"" +
                        order + "\"");
    }
    if (seen[static_cast<size_t>(axis)]) {
      throw DataError("euler order repeats an axis: \"" + order + "\"");
    }
    seen[static_cast<size_t>(axis)] = true;
    axes[static_cast<size_t>(i)] = axis;
  }
  return axes;
}

Vec3 intrinsicEulerAngles(const Mat3& r, const std::array<int, 3>& axes) {
  const int i = axes[0], j = axes[1], k = axes[2];
  // Even permutations of (X, Y, Z) keep the cyclic sign, odd ones flip it.
  const double eps = (j == (i + 1) % 3) ? 1.0 : -1.0;
  const double middle = std::clamp(eps * r(i, k), -1.0, 1.0);
  Vec3 angles;
  angles[0] = std::atan2(-eps * r(j, k), r(k, k));
  angles[1] = std::asin(middle);
  angles[2] = std::atan2(-eps * r(i, j), r(i, i));
  return angles;
}

double positionRmse(const TrialComparison& cmp) {
  requireAligned(cmp);
  std::vector<double> per_frame;
  per_frame.reserve(cmp.estimated.size());
  for (size_t k = 0; k < cmp.estimated.size(); ++k) {
    const PoseSnapshot& est = cmp.estimated[k];
    const PoseSnapshot& ref = cmp.reference[k];
    const Vec3 shift = ref.mid_pelvis - est.mid_pelvis;
    double sum = 0.0;
    for (Side s : kSides) {
      sum += (est.hip(s) + shift - ref.hip(s)).norm();
      sum += (est.knee(s) + shift - ref.knee(s)).norm();
      sum += (est.ankle(s) + shift - ref.ankle(s)).norm();
    }
    per_frame.push_back(sum / 6.0);
  }
  return rmsOverFrames(per_frame);
}

double orientationRmse(const TrialComparison& cmp, bool remove_bias) {
  requireAligned(cmp);
  const size_t n = cmp.estimated.size();
  if (n == 0) return 0.0;

  const std::vector<Quat> off_l = thighOffsets(cmp, Side::kLeft);
  const std::vector<Quat> off_r = thighOffsets(cmp, Side::kRight);

  auto rms = [&](const Quat& mean_l, const Quat& mean_r) {
    std::vector<double> per_frame(n);
    const Quat inv_l = quatInverse(mean_l);
    const Quat inv_r = quatInverse(mean_r);
    for (size_t k = 0; k < n; ++k) {
      per_frame[k] = 0.5 * (quatAngle(quatMultiply(inv_l, off_l[k])) +
                            quatAngle(quatMultiply(inv_r, off_r[k])));
    }
    return rmsOverFrames(per_frame);
  };

  const double biased = rms(Quat::Identity(), Quat::Identity());
  if (!remove_bias) return biased;
  const double unbiased = rms(chordalMean(off_l), chordalMean(off_r));
  // The chordal mean is only an approximation of the error-minimizing
  // offset; never let removing it make things worse.
  return std::min(unbiased, biased);
}

JointAngleSeries jointAngleSeries(std::span<const PoseSnapshot> trial,
                                  const std::array<int, 3>& euler_order) {
  JointAngleSeries out;
  const size_t n = trial.size();
  for (auto* v : {&out.knee_left, &out.knee_right, &out.hip_sagittal_left,
                  &out.hip_sagittal_right, &out.hip_frontal_left,
                  &out.hip_frontal_right, &out.hip_transverse_left,
                  &out.hip_transverse_right}) {
    v->reserve(n);
  }

  for (const PoseSnapshot& pose : trial) {
    const Mat3 pelvis_r = quatToRotation(pose.ori.pelvis);
    for (Side s : kSides) {
      const Vec3 tau = pose.hip(s) - pose.knee(s);
      if (tau.norm() < 1e-9) {
        throw GeometryError("degenerate thigh segment in trial");
      }
      const double knee =
          kneeAngle(tau.normalized(), quatToRotation(pose.shank(s)));

      const Mat3 rel = pelvis_r.transpose() * quatToRotation(pose.thigh(s));
      const Vec3 seq = intrinsicEulerAngles(rel, euler_order);
      double by_axis[3] = {0.0, 0.0, 0.0};
      for (int i = 0; i < 3; ++i) by_axis[euler_order[i]] = seq[i];

      if (s == Side::kLeft) {
        out.knee_left.push_back(knee);
        out.hip_frontal_left.push_back(by_axis[0]);
        out.hip_sagittal_left.push_back(by_axis[1]);
        out.hip_transverse_left.push_back(by_axis[2]);
      } else {
        out.knee_right.push_back(knee);
        out.hip_frontal_right.push_back(by_axis[0]);
        out.hip_sagittal_right.push_back(by_axis[1]);
        out.hip_transverse_right.push_back(by_axis[2]);
      }
    }
  }
  return out;
}

double correlationCoefficient(std::span<const double> a,
                              std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DataError("correlation series length mismatch");
  }
  if (a.size() < 2) {
    throw DataError("correlation needs at least two samples");
  }
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(),
                       [&](double x) { return x == v.front(); });
  };
  if (constant(a) || constant(b)) {
    throw DataError("correlation undefined for a constant series");
  }

  const double n = static_cast<double>(a.size());
  double sa = 0.0, sb = 0.0, sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    sa += a[k];
    sb += b[k];
    sab += a[k] * b[k];
    saa += a[k] * a[k];
    sbb += b[k] * b[k];
  }
  const double den = std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
  if (!(den > 0.0)) {
    throw DataError("correlation undefined for a constant series");
  }
  return std::clamp((n * sab - sa * sb) / den, -1.0, 1.0);
}

TtdDeviation ttdDeviation(std::span<const PoseSnapshot> estimated,
                          std::span<const PoseSnapshot> reference,
                          const StepEvents& events) {
  if (estimated.size() != reference.size()) {
    throw DataError("trial comparison length mismatch for TTD");
  }
  const std::vector<int> left = eventStarts(events.left, reference.size());
  const std::vector<int> right = eventStarts(events.right, reference.size());

  TtdDeviation dev;
  dev.pelvis = ttdFraction(
      estimated, reference, left,
      [](const PoseSnapshot& p) { return p.mid_pelvis; }, "pelvis");
  dev.left_ankle = ttdFraction(
      estimated, reference, left,
      [](const PoseSnapshot& p) { return p.ankle_l; }, "left ankle");
  dev.right_ankle = ttdFraction(
      estimated, reference, right,
      [](const PoseSnapshot& p) { return p.ankle_r; }, "right ankle");
  return dev;
}

MetricReport evaluateTrial(const TrialComparison& cmp,
                           const StepEvents& events,
                           const std::array<int, 3>& euler_order,
                           bool remove_bias) {
  requireAligned(cmp);
  MetricReport report;
  report.e_pos = positionRmse(cmp);
  report.e_ori_biased = orientationRmse(cmp, false);
  report.e_ori_unbiased =
      remove_bias ? orientationRmse(cmp, true) : report.e_ori_biased;

  const JointAngleSeries est = jointAngleSeries(cmp.estimated, euler_order);
  const JointAngleSeries ref = jointAngleSeries(cmp.reference, euler_order);
  report.knee_sagittal =
      angleStat({&est.knee_left, &ref.knee_left, &est.knee_right,
                 &ref.knee_right},
                remove_bias);
  report.hip_sagittal =
      angleStat({&est.hip_sagittal_left, &ref.hip_sagittal_left,
                 &est.hip_sagittal_right, &ref.hip_sagittal_right},
                remove_bias);
  report.hip_frontal =
      angleStat({&est.hip_frontal_left, &ref.hip_frontal_left,
                 &est.hip_frontal_right, &ref.hip_frontal_right},
                remove_bias);
  report.hip_transverse =
      angleStat({&est.hip_transverse_left, &ref.hip_transverse_left,
                 &est.hip_transverse_right, &ref.hip_transverse_right},
                remove_bias);

  if (events.left.size() >= 2 && events.right.size() >= 2) {
    report.ttd = ttdDeviation(cmp.estimated, cmp.reference, events);
  }
  return report;
}

}  // namespace ckfgait
