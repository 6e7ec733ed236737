#include "ckfgait/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ckfgait/errors.hpp"

namespace ckfgait {

namespace {

// Exponents of the sin^p velocity/lift profiles. High powers keep the foot
// almost still for the first and last fifth of the swing so that windowed
// variance step detection lines up with the true stance boundaries.
constexpr int kSwingPow = 8;
constexpr int kLiftPow = 8;

// integral of sin^n over [0, x], by the standard power reduction.
double sinPowIntegral(int n, double x) {
  double i_even = x;                 // n = 0
  double i_odd = 1.0 - std::cos(x);  // n = 1
  if (n == 0) return i_even;
  if (n == 1) return i_odd;
  const double s = std::sin(x);
  const double c = std::cos(x);
  double result = 0.0;
  for (int k = 2; k <= n; ++k) {
    double& prev = (k % 2 == 0) ? i_even : i_odd;
    result = (-c * std::pow(s, k - 1) + (k - 1) * prev) / k;
    prev = result;
  }
  return result;
}

struct Motion1D {
  double pos = 0.0;
  double vel = 0.0;
  double acc = 0.0;
};

// Normalized horizontal swing shape: 0 -> 1 with velocity proportional to
// sin^p(pi u). Returns value and time-scaled derivatives w.r.t. u.
Motion1D swingShape(double u) {
  static const double norm = sinPowIntegral(kSwingPow, M_PI);
  Motion1D m;
  const double s = std::sin(M_PI * u);
  const double c = std::cos(M_PI * u);
  m.pos = sinPowIntegral(kSwingPow, M_PI * u) / norm;
  m.vel = M_PI * std::pow(s, kSwingPow) / norm;
  m.acc = M_PI * M_PI * kSwingPow * std::pow(s, kSwingPow - 1) * c / norm;
  return m;
}

// Foot lift bump: 0 -> 1 -> 0 with value sin^q(pi u).
Motion1D liftShape(double u) {
  Motion1D m;
  const double s = std::sin(M_PI * u);
  const double c = std::cos(M_PI * u);
  m.pos = std::pow(s, kLiftPow);
  m.vel = M_PI * kLiftPow * std::pow(s, kLiftPow - 1) * c;
  m.acc = M_PI * M_PI * kLiftPow *
          ((kLiftPow - 1) * std::pow(s, kLiftPow - 2) * c * c -
           std::pow(s, kLiftPow));
  return m;
}

// Smooth 0 -> 1 blend with zero end-point velocity and acceleration.
double smoothBlend(double u) {
  return u - std::sin(2.0 * M_PI * u) / (2.0 * M_PI);
}

using Vec2 = Eigen::Vector2d;

// Piecewise-linear ground path with cumulative arc length, used only to pick
// foot placements and headings; motion between placements is interpolated
// analytically.
struct GroundPath {
  std::vector<Vec2> pts;
  std::vector<double> arc;   // cumulative, arc[0] = 0
  bool closed = false;
  double loop_len = 0.0;

  struct Sample {
    Vec2 point;
    double heading;
  };

  Sample at(double s) const {
    s = std::clamp(s, 0.0, arc.back());
    const auto it = std::upper_bound(arc.begin(), arc.end(), s);
    const size_t i =
        std::min(pts.size() - 2,
                 static_cast<size_t>(std::max<std::ptrdiff_t>(
                     0, std::distance(arc.begin(), it) - 1)));
    const Vec2 d = pts[i + 1] - pts[i];
    const double len = std::max(d.norm(), 1e-12);
    const double f = (s - arc[i]) / len;
    return {pts[i] + f * d, std::atan2(d.y(), d.x())};
  }
};

GroundPath buildPath(PathType type, double needed_arc) {
  GroundPath path;
  switch (type) {
    case PathType::kStraight: {
      path.pts = {Vec2(0, 0), Vec2(std::max(needed_arc, 1.0) + 1.0, 0)};
      break;
    }
    case PathType::kZigzag: {
      const double seg = 3.0;
      const double angle = 20.0 * M_PI / 180.0;
      Vec2 p(0, 0);
      path.pts.push_back(p);
      double built = 0.0;
      int k = 0;
      while (built < needed_arc + seg) {
        const double h = (k % 2 == 0) ? angle : -angle;
        p += seg * Vec2(std::cos(h), std::sin(h));
        path.pts.push_back(p);
        built += seg;
        ++k;
      }
      break;
    }
    case PathType::kFigureEight: {
      const double a = 3.0;
      const int n = 2000;
      for (int i = 0; i <= n; ++i) {
        const double th = 2.0 * M_PI * i / n;
        path.pts.emplace_back(a * std::sin(th),
                              a * std::sin(th) * std::cos(th));
      }
      path.closed = true;
      break;
    }
  }
  path.arc.resize(path.pts.size());
  path.arc[0] = 0.0;
  for (size_t i = 1; i < path.pts.size(); ++i) {
    path.arc[i] = path.arc[i - 1] + (path.pts[i] - path.pts[i - 1]).norm();
  }
  path.loop_len = path.arc.back();
  if (path.closed) {
    // tile the loop enough times to cover the requested arc
    const int laps =
        std::max(1, static_cast<int>(std::ceil(needed_arc / path.loop_len)));
    const size_t base = path.pts.size();
    for (int lap = 1; lap < laps + 1; ++lap) {
      for (size_t i = 1; i < base; ++i) {
        path.pts.push_back(path.pts[i]);
        path.arc.push_back(lap * path.loop_len + path.arc[i]);
      }
    }
    path.closed = false;
  }
  return path;
}

struct Swing {
  double t0 = 0.0;
  double dur = 0.0;
  Vec2 from = Vec2::Zero();
  Vec2 to = Vec2::Zero();
};

struct FootState {
  Vec3 pos = Vec3::Zero();
  Vec3 vel = Vec3::Zero();
  Vec3 acc = Vec3::Zero();
  bool in_swing = false;
};

FootState evalFoot(const std::vector<Swing>& swings, const Vec2& start,
                   double floor_z, double lift, double t) {
  FootState f;
  Vec2 hold = start;
  for (const Swing& sw : swings) {
    if (t < sw.t0) {
      break;
    }
    if (t < sw.t0 + sw.dur) {
      const double u = (t - sw.t0) / sw.dur;
      const Motion1D h = swingShape(u);
      const Motion1D z = liftShape(u);
      const Vec2 delta = sw.to - sw.from;
      f.pos.head<2>() = sw.from + h.pos * delta;
      f.vel.head<2>() = (h.vel / sw.dur) * delta;
      f.acc.head<2>() = (h.acc / (sw.dur * sw.dur)) * delta;
      f.pos.z() = floor_z + lift * z.pos;
      f.vel.z() = lift * z.vel / sw.dur;
      f.acc.z() = lift * z.acc / (sw.dur * sw.dur);
      f.in_swing = true;
      return f;
    }
    hold = sw.to;
  }
  f.pos.head<2>() = hold;
  f.pos.z() = floor_z;
  return f;
}

struct LegPose {
  Vec3 knee;
  Mat3 shank_r;
  Mat3 thigh_r;
};

// Exact two-link inverse kinematics: knee on the hip/ankle circle, bent
// toward the heading. The shank y-axis is the hinge normal, so the hinge and
// thigh-length constraints hold to round-off.
LegPose solveLeg(const Vec3& hip, const Vec3& ankle, double d_thigh,
                 double d_shank, double heading) {
  const Vec3 w = hip - ankle;
  const double l = w.norm();
  if (l > (d_thigh + d_shank) * (1.0 + 1e-9)) {
    throw GeometryError(
        "infeasible gait geometry: hip-to-ankle distance exceeds leg length "
        "(stride too long or pelvis too high)");
  }
  if (l < std::abs(d_thigh - d_shank) + 1e-6) {
    throw GeometryError("infeasible gait geometry: hip too close to ankle");
  }
  const Vec3 u = w / l;
  const Vec3 fwd(std::cos(heading), std::sin(heading), 0.0);
  Vec3 side = fwd - fwd.dot(u) * u;
  const double side_norm = side.norm();
  if (side_norm < 1e-9) {
    throw GeometryError("degenerate leg plane: heading parallel to leg axis");
  }
  side /= side_norm;

  const double cos_phi =
      std::clamp((d_shank * d_shank + l * l - d_thigh * d_thigh) /
                     (2.0 * d_shank * l),
                 -1.0, 1.0);
  const double sin_phi = std::sqrt(std::max(0.0, 1.0 - cos_phi * cos_phi));

  LegPose leg;
  leg.knee = ankle + d_shank * (cos_phi * u + sin_phi * side);
  const Vec3 shank_z = (leg.knee - ankle) / d_shank;
  const Vec3 tau = hip - leg.knee;
  const Vec3 tau_hat = tau / tau.norm();

  Vec3 hinge = tau_hat.cross(shank_z);
  const double hinge_norm = hinge.norm();
  if (hinge_norm > 1e-6) {
    hinge /= hinge_norm;
  } else {
    // straight leg: use the heading-left direction, orthogonalized
    const Vec3 left(-std::sin(heading), std::cos(heading), 0.0);
    hinge = (left - left.dot(shank_z) * shank_z).normalized();
  }
  leg.shank_r.col(0) = hinge.cross(shank_z);
  leg.shank_r.col(1) = hinge;
  leg.shank_r.col(2) = shank_z;
  leg.thigh_r.col(0) = hinge.cross(tau_hat);
  leg.thigh_r.col(1) = hinge;
  leg.thigh_r.col(2) = tau_hat;
  return leg;
}

}  // namespace

void GaitParams::validate() const {
  body.validate();
  if (!(cadence >= 0.0) || !(stride_length >= 0.0)) {
    throw DataError("gait: cadence and stride length must be non-negative");
  }
  if (!(stance_fraction > 0.0 && stance_fraction < 1.0)) {
    throw DataError("gait: stance_fraction must lie in (0, 1)");
  }
  if (!(peak_knee_flexion > 0.0 && peak_knee_flexion < M_PI)) {
    throw DataError("gait: peak_knee_flexion must lie in (0, pi)");
  }
  if (!(duration > 0.0) || !(sample_rate_hz > 0.0)) {
    throw DataError("gait: duration and sample rate must be positive");
  }
  if (!(lead_in >= 0.0) || !(lead_out >= 0.0)) {
    throw DataError("gait: lead times must be non-negative");
  }
  const double min_leg = std::min(body.thigh_left + body.shank_left,
                                  body.thigh_right + body.shank_right);
  if (body.standing_pelvis_z - body.floor_z > min_leg + 1e-12) {
    throw GeometryError(
        "infeasible gait geometry: pelvis height exceeds leg length");
  }
}

GroundTruthTrial generateGait(const GaitParams& params) {
  params.validate();
  const BodyDimensions& body = params.body;
  const double fs = params.sample_rate_hz;
  const int n_frames = std::max(1, static_cast<int>(std::lround(
                                       params.duration * fs)));
  const double half_w = 0.5 * body.pelvis_width;

  const bool walking = params.cadence > 0.0 && params.stride_length > 0.0;
  const double t_step = walking ? 1.0 / params.cadence : 0.0;
  const double t_stride = 2.0 * t_step;
  const double t_swing = (1.0 - params.stance_fraction) * t_stride;

  int n_steps = 0;
  if (walking) {
    const double budget = params.duration - params.lead_in - params.lead_out;
    if (budget > t_swing) {
      n_steps = 1 + static_cast<int>(
                        std::floor((budget - t_swing) / t_step));
    }
  }

  const GroundPath path = buildPath(
      params.path, 0.5 * params.stride_length * (n_steps + 2));

  // Placement arcs: step j moves the swinging foot to arc j * stride/2,
  // alternating right (odd j) and left (even j). Both feet start at arc 0.
  std::vector<Swing> swings_l, swings_r;
  std::vector<double> headings;  // heading after step j, unwrapped
  std::vector<double> blend_t0;  // yaw blend window starts
  headings.push_back(path.at(0.0).heading);
  double arc_l = 0.0, arc_r = 0.0;
  for (int j = 1; j <= n_steps; ++j) {
    const bool right = (j % 2 == 1);
    const double arc_to = 0.5 * params.stride_length * j;
    const double side_sign = right ? -1.0 : 1.0;
    const GroundPath::Sample from_s = path.at(right ? arc_r : arc_l);
    const GroundPath::Sample to_s = path.at(arc_to);
    const Vec2 lateral_from(-std::sin(from_s.heading),
                            std::cos(from_s.heading));
    const Vec2 lateral_to(-std::sin(to_s.heading), std::cos(to_s.heading));
    Swing sw;
    sw.t0 = params.lead_in + (j - 1) * t_step;
    sw.dur = t_swing;
    sw.from = from_s.point + side_sign * half_w * lateral_from;
    sw.to = to_s.point + side_sign * half_w * lateral_to;
    (right ? swings_r : swings_l).push_back(sw);
    (right ? arc_r : arc_l) = arc_to;

    double h = to_s.heading;
    while (h - headings.back() > M_PI) h -= 2.0 * M_PI;
    while (h - headings.back() < -M_PI) h += 2.0 * M_PI;
    headings.push_back(h);
    blend_t0.push_back(sw.t0);
  }
  const double blend_dur = walking ? std::min(t_swing, t_step) : 1.0;

  const GroundPath::Sample start = path.at(0.0);
  const Vec2 start_left(-std::sin(start.heading), std::cos(start.heading));
  const Vec2 start_l = start.point + half_w * start_left;
  const Vec2 start_r = start.point - half_w * start_left;

  const double lift_target =
      (body.standing_pelvis_z - body.floor_z) -
      std::sqrt(body.thigh_left * body.thigh_left +
                body.shank_left * body.shank_left +
                2.0 * body.thigh_left * body.shank_left *
                    std::cos(params.peak_knee_flexion));
  const double lift = std::clamp(
      lift_target, 0.02, 0.6 * (body.standing_pelvis_z - body.floor_z));

  GroundTruthTrial trial;
  trial.poses.resize(static_cast<size_t>(n_frames));
  trial.frames.resize(static_cast<size_t>(n_frames));

  Vec2 prev_mp = Vec2::Zero(), prev_al = Vec2::Zero(), prev_ar = Vec2::Zero();
  for (int k = 0; k < n_frames; ++k) {
    const double t = k / fs;

    const FootState fl = evalFoot(swings_l, start_l, body.floor_z, lift, t);
    const FootState fr = evalFoot(swings_r, start_r, body.floor_z, lift, t);

    // Pelvis rides the ankle midpoint in the horizontal plane at constant
    // height, so its trajectory inherits the feet's smoothness.
    Vec3 mp(0.5 * (fl.pos.x() + fr.pos.x()), 0.5 * (fl.pos.y() + fr.pos.y()),
            body.standing_pelvis_z);
    const Vec3 mp_acc = 0.5 * (fl.acc + fr.acc).cwiseProduct(Vec3(1, 1, 0));

    double yaw = headings[0];
    for (size_t j = 0; j < blend_t0.size(); ++j) {
      if (t <= blend_t0[j]) {
        break;
      }
      const double u =
          std::clamp((t - blend_t0[j]) / blend_dur, 0.0, 1.0);
      yaw = headings[j] + (headings[j + 1] - headings[j]) * smoothBlend(u);
    }
    const Quat pelvis_q = yawQuat(yaw);
    const Vec3 pelvis_y(-std::sin(yaw), std::cos(yaw), 0.0);

    const Vec3 hip_l = mp + half_w * pelvis_y;
    const Vec3 hip_r = mp - half_w * pelvis_y;
    const LegPose leg_l =
        solveLeg(hip_l, fl.pos, body.thigh_left, body.shank_left, yaw);
    const LegPose leg_r =
        solveLeg(hip_r, fr.pos, body.thigh_right, body.shank_right, yaw);

    PoseSnapshot& pose = trial.poses[static_cast<size_t>(k)];
    pose.t = t;
    pose.mid_pelvis = mp;
    pose.hip_l = hip_l;
    pose.hip_r = hip_r;
    pose.knee_l = leg_l.knee;
    pose.knee_r = leg_r.knee;
    pose.ankle_l = fl.pos;
    pose.ankle_r = fr.pos;
    pose.ori.pelvis = pelvis_q;
    pose.ori.lshank = rotationToQuat(leg_l.shank_r);
    pose.ori.rshank = rotationToQuat(leg_r.shank_r);
    pose.ori.lthigh = rotationToQuat(leg_l.thigh_r);
    pose.ori.rthigh = rotationToQuat(leg_r.thigh_r);

    ImuFrame& frame = trial.frames[static_cast<size_t>(k)];
    frame.t = t;
    frame.accel_mp = mp_acc;
    frame.accel_la = fl.acc;
    frame.accel_ra = fr.acc;
    frame.q_pelvis = pose.ori.pelvis;
    frame.q_lshank = pose.ori.lshank;
    frame.q_rshank = pose.ori.rshank;
    frame.contact.left = !fl.in_swing;
    frame.contact.right = !fr.in_swing;

    if (k > 0) {
      trial.ttd_xy.pelvis += (mp.head<2>() - prev_mp).norm();
      trial.ttd_xy.ankle_l += (fl.pos.head<2>() - prev_al).norm();
      trial.ttd_xy.ankle_r += (fr.pos.head<2>() - prev_ar).norm();
    }
    prev_mp = mp.head<2>();
    prev_al = fl.pos.head<2>();
    prev_ar = fr.pos.head<2>();
  }

  trial.events = eventsFromFlags(trial.frames);
  return trial;
}

std::vector<ImuFrame> corrupt(const std::vector<ImuFrame>& frames,
                              double accel_noise_sd, double ori_noise_sd,
                              uint64_t seed) {
  if (accel_noise_sd < 0.0 || ori_noise_sd < 0.0) {
    throw DataError("noise standard deviations must be non-negative");
  }
  if (accel_noise_sd == 0.0 && ori_noise_sd == 0.0) {
    return frames;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw3 = [&]() {
    return Vec3(gauss(rng), gauss(rng), gauss(rng));
  };

  // Orientation error is modelled as one offset rotation per sensor, the
  // way a mounting or heading calibration error presents itself, rather
  // than as sample-rate white noise. The rotation angle is N(0, sd) about
  // a uniformly random axis.
  auto drawRotation = [&]() {
    Vec3 axis = draw3();
    while (axis.norm() < 1e-9) axis = draw3();
    axis.normalize();
    return quatExp(ori_noise_sd * gauss(rng) * axis);
  };
  const Quat off_pelvis = drawRotation();
  const Quat off_lshank = drawRotation();
  const Quat off_rshank = drawRotation();

  std::vector<ImuFrame> out = frames;
  for (ImuFrame& f : out) {
    f.accel_mp += accel_noise_sd * draw3();
    f.accel_la += accel_noise_sd * draw3();
    f.accel_ra += accel_noise_sd * draw3();
    f.q_pelvis = quatMultiply(off_pelvis, f.q_pelvis);
    f.q_lshank = quatMultiply(off_lshank, f.q_lshank);
    f.q_rshank = quatMultiply(off_rshank, f.q_rshank);
  }
  return out;
}

}  // namespace ckfgait
