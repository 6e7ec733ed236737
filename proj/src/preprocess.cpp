#include "ckfgait/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "ckfgait/errors.hpp"

namespace ckfgait {

bool StepEvents::inContact(Side s, int index) const {
  for (const StepInterval& iv : side(s)) {
    if (index >= iv.begin && index <= iv.end) {
      return true;
    }
  }
  return false;
}

Quat segmentOrientation(const Quat& sensor_q, const Quat& seg_to_sensor) {
  return quatMultiply(sensor_q, quatInverse(seg_to_sensor));
}

Quat calibrateOffset(const Quat& reference_body_q, const Quat& sensor_q) {
  return quatMultiply(quatInverse(reference_body_q), sensor_q);
}

Vec3 worldInertialAccel(const Quat& sensor_q, const Vec3& raw_accel,
                        const Vec3& gravity) {
  return rotateVector(sensor_q, raw_accel) - gravity;
}

std::vector<StepInterval> detectSteps(std::span<const Vec3> accel_world,
                                      double sample_rate_hz, double window_s,
                                      double variance_threshold) {
  const int n = static_cast<int>(accel_world.size());
  const int window =
      std::max(2, static_cast<int>(std::lround(window_s * sample_rate_hz)));
  std::vector<StepInterval> out;
  if (n < window) {
    return out;
  }

  // Prefix sums of x and x^2 per axis for O(1) windowed variance.
  std::vector<Vec3> sum(n + 1, Vec3::Zero());
  std::vector<Vec3> sumsq(n + 1, Vec3::Zero());
  for (int i = 0; i < n; ++i) {
    sum[i + 1] = sum[i] + accel_world[i];
    sumsq[i + 1] = sumsq[i] + accel_world[i].cwiseProduct(accel_world[i]);
  }

  const int half = window / 2;
  bool prev = false;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n, i - half + window);
    const double m = static_cast<double>(hi - lo);
    const Vec3 mean = (sum[hi] - sum[lo]) / m;
    const Vec3 var =
        (sumsq[hi] - sumsq[lo]) / m - mean.cwiseProduct(mean);
    const bool contact = var.sum() < variance_threshold;
    if (contact && !prev) {
      out.push_back({i, i});
    } else if (contact) {
      out.back().end = i;
    }
    prev = contact;
  }
  return out;
}

double yawOffsetSearch(std::span<const Vec3> ref_accel,
                       std::span<const Vec3> imu_accel, double grid_step_rad) {
  if (ref_accel.empty() || imu_accel.size() != ref_accel.size()) {
    throw DataError("yaw search needs two non-empty series of equal length");
  }
  if (!(grid_step_rad > 0.0)) {
    throw DataError("yaw search grid step must be positive");
  }
  const int steps = static_cast<int>(std::floor(2.0 * M_PI / grid_step_rad));
  double best_yaw = -M_PI;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int k = 0; k < steps; ++k) {
    const double yaw = -M_PI + k * grid_step_rad;
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    double cost = 0.0;
    for (size_t i = 0; i < ref_accel.size(); ++i) {
      const Vec3& a = imu_accel[i];
      const double rx = c * a.x() - s * a.y();
      const double ry = s * a.x() + c * a.y();
      const double dx = ref_accel[i].x() - rx;
      const double dy = ref_accel[i].y() - ry;
      cost += dx * dx + dy * dy;
    }
    if (cost < best_cost) {
      best_cost = cost;
      best_yaw = yaw;
    }
  }
  return best_yaw;
}

void applyStepEvents(std::vector<ImuFrame>& frames, const StepEvents& events) {
  for (auto& f : frames) {
    f.contact = {};
  }
  for (Side s : {Side::kLeft, Side::kRight}) {
    for (const StepInterval& iv : events.side(s)) {
      const int lo = std::max(0, iv.begin);
      const int hi = std::min(static_cast<int>(frames.size()) - 1, iv.end);
      for (int i = lo; i <= hi; ++i) {
        frames[static_cast<size_t>(i)].contact.set(s, true);
      }
    }
  }
}

StepEvents eventsFromFlags(const std::vector<ImuFrame>& frames) {
  StepEvents ev;
  for (Side s : {Side::kLeft, Side::kRight}) {
    bool prev = false;
    for (int i = 0; i < static_cast<int>(frames.size()); ++i) {
      const bool c = frames[static_cast<size_t>(i)].contact.get(s);
      if (c && !prev) {
        ev.side(s).push_back({i, i});
      } else if (c) {
        ev.side(s).back().end = i;
      }
      prev = c;
    }
  }
  return ev;
}

}  // namespace ckfgait
