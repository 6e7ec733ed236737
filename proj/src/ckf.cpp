#include "ckfgait/ckf.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "ckfgait/errors.hpp"

namespace ckfgait {

namespace {

constexpr double kFeasEps = 1e-9;
// Interior nudge applied when the knee crosses an anatomical extreme, so
// the projected angle lands strictly inside [0, pi] rather than on the
// boundary itself. Kept below the cap allowance so a hyperextended knee may
// be raised to the nudge point even when the cap sits at zero.
constexpr double kRomMargin = 0.05 * M_PI / 180.0;

double kneeAngleOrNan(const Vec3& thigh_dir, const Mat3& shank_r) {
  const double dz = -thigh_dir.dot(shank_r.col(2));
  const double dx = -thigh_dir.dot(shank_r.col(0));
  if (std::abs(dz) < 1e-12 && std::abs(dx) < 1e-12) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double alpha = std::atan2(dz, dx) + M_PI / 2.0;
  if (alpha >= 1.5 * M_PI) {
    alpha -= 2.0 * M_PI;
  }
  return alpha;
}

double kneeCap(double knee_max) {
  return std::min(M_PI, std::max(0.0, knee_max));
}

void symmetrize(StateMat& p) {
  p = 0.5 * (p + p.transpose()).eval();
}

struct SideConstraint {
  Vec3 tau = Vec3::Zero();
  double tau_norm = 0.0;
  Vec3 offset = Vec3::Zero();  // constant part of tau for fixed orientations
  Mat3 shank_r = Mat3::Identity();
  double knee = 0.0;
};

SideConstraint sideGeometry(const StateVec& x, const SegmentOrientations& oris,
                            const BodyDimensions& dims, Side side) {
  SideConstraint g;
  const Quat& shank_q =
      side == Side::kLeft ? oris.lshank : oris.rshank;
  g.shank_r = quatToRotation(shank_q);
  const double sign = side == Side::kLeft ? 1.0 : -1.0;
  const Vec3 pelvis_y = quatToRotation(oris.pelvis).col(1);
  g.offset = sign * 0.5 * dims.pelvis_width * pelvis_y -
             dims.shank(side) * g.shank_r.col(2);
  g.tau = x.segment<3>(kMpPos) - x.segment<3>(anklePosIndex(side)) + g.offset;
  g.tau_norm = g.tau.norm();
  if (g.tau_norm < 1e-6) {
    throw GeometryError(std::string("degenerate thigh vector on the ") +
                        sideName(side) + " side");
  }
  g.knee = kneeAngleOrNan(g.tau / g.tau_norm, g.shank_r);
  return g;
}

void addRow(Eigen::MatrixXd& d_mat, Eigen::VectorXd& d_vec,
            std::vector<ConstraintLabel>& labels, int row, const Vec3& grad,
            Side side, double rhs, ConstraintLabel label) {
  d_mat.row(row).setZero();
  d_mat.block<1, 3>(row, kMpPos) = grad.transpose();
  d_mat.block<1, 3>(row, anklePosIndex(side)) = -grad.transpose();
  d_vec(row) = rhs;
  labels.push_back(label);
}

// Target angle for an out-of-range knee. A cap hit pins the knee exactly at
// the cap so the projection cannot drag it back into the interior; the
// anatomical extremes get nudged inward by a small margin instead. When the
// cap itself sits below the margin the margin wins, which stays within the
// cap allowance because kRomMargin is smaller than it.
double romTargetAngle(double knee, double cap) {
  const double target = std::clamp(knee, 0.0, cap);
  return std::clamp(target, kRomMargin,
                    std::max(kRomMargin, std::min(cap, M_PI - kRomMargin)));
}

// Gradient direction of the knee range-of-motion row: the thigh vector must
// be perpendicular to this axis for the knee angle to equal the target.
Vec3 romPsi(const Mat3& shank_r, double target) {
  return shank_r.col(2) * std::cos(target - M_PI / 2.0) -
         shank_r.col(0) * std::sin(target - M_PI / 2.0);
}

}  // namespace

void NoiseConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw DataError("noise config: dt must be positive");
  }
  if ((sigma2_acc.array() <= 0.0).any() || (sigma2_mp.array() <= 0.0).any() ||
      (sigma2_ls.array() <= 0.0).any() || (sigma2_rs.array() <= 0.0).any() ||
      (sigma2_lim.array() <= 0.0).any()) {
    throw DataError("noise config: all variances must be positive");
  }
  if (!(sckf_threshold > 1.0)) {
    throw DataError("noise config: sckf_threshold must exceed 1");
  }
  if (max_sckf_iterations < 1) {
    throw DataError("noise config: max_sckf_iterations must be at least 1");
  }
}

SystemMatrices buildSystemMatrices(const NoiseConfig& cfg) {
  SystemMatrices sys;
  const double dt = cfg.dt;
  using Mat9 = Eigen::Matrix<double, 9, 9>;
  sys.F.block<9, 9>(0, 9) = dt * Mat9::Identity();
  sys.G.block<9, 9>(0, 0) = 0.5 * dt * dt * Mat9::Identity();
  sys.G.block<9, 9>(9, 0) = dt * Mat9::Identity();
  sys.Q = sys.G * cfg.sigma2_acc.asDiagonal() * sys.G.transpose();
  return sys;
}

FilterState initialize(const StateVec& x0, double p0_scale) {
  if (!(p0_scale > 0.0)) {
    throw DataError("initial covariance scale must be positive");
  }
  FilterState s;
  s.x = x0;
  s.P = p0_scale * StateMat::Identity();
  return s;
}

FilterState predict(const FilterState& state, const Vec9& u,
                    const SystemMatrices& sys) {
  FilterState out;
  out.x = sys.F * state.x + sys.G * u;
  out.P = sys.F * state.P * sys.F.transpose() + sys.Q;
  symmetrize(out.P);
  return out;
}

MeasurementModel buildMeasurement(const ContactFlags& contact,
                                  const BodyDimensions& dims,
                                  const NoiseConfig& cfg) {
  const int rows = 3 + (contact.left ? 4 : 0) + (contact.right ? 4 : 0);
  MeasurementModel meas;
  meas.H = Eigen::MatrixXd::Zero(rows, kStateDim);
  meas.y = Eigen::VectorXd::Zero(rows);
  meas.sigma2 = Eigen::VectorXd::Zero(rows);

  // Pelvis rows: x/y toward the ankle midpoint, z toward standing height.
  meas.H(0, 0) = 1.0;
  meas.H(0, 3) = -0.5;
  meas.H(0, 6) = -0.5;
  meas.H(1, 1) = 1.0;
  meas.H(1, 4) = -0.5;
  meas.H(1, 7) = -0.5;
  meas.H(2, 2) = 1.0;
  meas.y(2) = dims.standing_pelvis_z;
  meas.sigma2.head<3>() = cfg.sigma2_mp;

  int row = 3;
  for (Side s : {Side::kLeft, Side::kRight}) {
    if (!contact.get(s)) {
      continue;
    }
    // Zero-velocity rows plus the flat-floor ankle height row.
    const int vi = ankleVelIndex(s);
    meas.H(row, vi) = 1.0;
    meas.H(row + 1, vi + 1) = 1.0;
    meas.H(row + 2, vi + 2) = 1.0;
    meas.H(row + 3, anklePosIndex(s) + 2) = 1.0;
    meas.y(row + 3) = dims.floor_z;
    meas.sigma2.segment<4>(row) =
        s == Side::kLeft ? cfg.sigma2_ls : cfg.sigma2_rs;
    row += 4;
  }
  return meas;
}

FilterState measurementUpdate(const FilterState& state,
                              const MeasurementModel& meas) {
  Eigen::MatrixXd s_mat = meas.H * state.P * meas.H.transpose();
  s_mat.diagonal() += meas.sigma2;
  const auto ldlt = s_mat.ldlt();
  if (ldlt.info() != Eigen::Success) {
    throw NumericalError("innovation covariance factorization failed");
  }
  const Eigen::VectorXd innovation = meas.y - meas.H * state.x;
  FilterState out = state;
  out.x += state.P * meas.H.transpose() * ldlt.solve(innovation);
  if (!out.x.allFinite()) {
    throw NumericalError("non-finite state after measurement update");
  }
  return out;
}

FilterState covarianceLimit(const FilterState& state,
                            const MeasurementModel& meas,
                            const NoiseConfig& cfg) {
  const int m = static_cast<int>(meas.H.rows());
  Eigen::MatrixXd h_aug = Eigen::MatrixXd::Zero(m + 9, kStateDim);
  h_aug.topRows(m) = meas.H;
  h_aug.block<9, 9>(m, 0).setIdentity();

  Eigen::VectorXd r_aug(m + 9);
  r_aug.head(m) = meas.sigma2;
  r_aug.tail<9>() = cfg.sigma2_lim;

  Eigen::MatrixXd s_mat = h_aug * state.P * h_aug.transpose();
  s_mat.diagonal() += r_aug;
  const auto ldlt = s_mat.ldlt();
  if (ldlt.info() != Eigen::Success) {
    throw NumericalError("limiter covariance factorization failed");
  }
  const Eigen::MatrixXd gain =
      ldlt.solve(h_aug * state.P).transpose();  // P H^T S^-1, P symmetric

  FilterState out = state;
  out.P = (StateMat::Identity() - gain * h_aug) * state.P;
  symmetrize(out.P);
  if (!out.P.allFinite()) {
    throw NumericalError("non-finite covariance after limiter update");
  }
  return out;
}

ConstraintSystem buildConstraints(const StateVec& x,
                                  const SegmentOrientations& oris,
                                  const BodyDimensions& dims,
                                  const KneeMax& knee_max) {
  ConstraintSystem sys;
  Eigen::MatrixXd d_mat(6, kStateDim);
  Eigen::VectorXd d_vec(6);
  sys.labels.reserve(6);

  int row = 0;
  for (Side s : {Side::kLeft, Side::kRight}) {
    const SideConstraint g = sideGeometry(x, oris, dims, s);
    const Vec3 tau_hat = g.tau / g.tau_norm;
    const bool left = s == Side::kLeft;

    // Thigh length, linearized about the current estimate.
    const double c_len = g.tau_norm - dims.thigh(s);
    double rhs = -c_len;
    rhs += tau_hat.dot(x.segment<3>(kMpPos) - x.segment<3>(anklePosIndex(s)));
    addRow(d_mat, d_vec, sys.labels, row++, tau_hat, s, rhs,
           left ? ConstraintLabel::kThighLenL : ConstraintLabel::kThighLenR);

    // Hinge knee: thigh vector perpendicular to the shank y-axis. Linear in
    // the state, so the right-hand side is just the constant offset part.
    const Vec3 hinge_axis = g.shank_r.col(1);
    addRow(d_mat, d_vec, sys.labels, row++, hinge_axis, s,
           -g.offset.dot(hinge_axis),
           left ? ConstraintLabel::kHingeL : ConstraintLabel::kHingeR);

    // Knee range of motion, active only when the current angle is outside
    // [0, cap].
    const double cap = kneeCap(knee_max.get(s));
    if (!std::isnan(g.knee) && (g.knee < 0.0 || g.knee > cap)) {
      const Vec3 psi = romPsi(g.shank_r, romTargetAngle(g.knee, cap));
      addRow(d_mat, d_vec, sys.labels, row++, psi, s, -g.offset.dot(psi),
             left ? ConstraintLabel::kKneeRomL : ConstraintLabel::kKneeRomR);
    }
  }

  sys.D = d_mat.topRows(row);
  sys.d = d_vec.head(row);
  return sys;
}

ConstraintResiduals constraintResiduals(const StateVec& x,
                                        const SegmentOrientations& oris,
                                        const BodyDimensions& dims,
                                        const KneeMax& knee_max) {
  ConstraintResiduals res;
  for (Side s : {Side::kLeft, Side::kRight}) {
    const SideConstraint g = sideGeometry(x, oris, dims, s);
    const Vec3 tau_hat = g.tau / g.tau_norm;
    const double len = g.tau_norm - dims.thigh(s);
    const double hinge = tau_hat.dot(g.shank_r.col(1));
    const double cap = kneeCap(knee_max.get(s));
    double rom = 0.0;
    if (!std::isnan(g.knee)) {
      rom = std::max({0.0, -g.knee, g.knee - cap});
    }
    if (s == Side::kLeft) {
      res.thigh_len_l = len;
      res.hinge_l = hinge;
      res.knee_l = g.knee;
      res.rom_violation_l = rom;
    } else {
      res.thigh_len_r = len;
      res.hinge_r = hinge;
      res.knee_r = g.knee;
      res.rom_violation_r = rom;
    }
  }
  return res;
}

SckfResult sckfProject(const FilterState& state,
                       const SegmentOrientations& oris,
                       const BodyDimensions& dims, const KneeMax& knee_max,
                       const NoiseConfig& cfg) {
  SckfResult out;
  out.state = state;
  StateVec x = state.x;

  // The constraints live entirely in position space, so the projection is
  // weighted by the position block alone. Keeping the position-velocity
  // cross terms in the weighting would leak every geometric correction into
  // the velocity states, which no later update can observe or undo.
  StateMat p_w = state.P;
  p_w.block<kStateDim, 9>(0, 9).setZero();
  p_w.block<9, kStateDim>(9, 0).setZero();

  // Sticky range-of-motion rows: once the knee hits a bound during the
  // projection it stays pinned at that target for the remaining iterations,
  // otherwise the active set can oscillate and stall above the cap.
  bool rom_active[2] = {false, false};
  double rom_target[2] = {0.0, 0.0};

  for (int iter = 1; iter <= cfg.max_sckf_iterations; ++iter) {
    out.iterations = iter;
    const ConstraintResiduals res = constraintResiduals(x, oris, dims,
                                                        knee_max);
    // The knee is acceptable when it sits inside the allowed range (widened
    // to the interior nudge when the cap is degenerate) and strictly inside
    // the anatomical interval, so a projected angle can never come to rest
    // on the wrong side of zero or pi.
    const auto romOk = [](double knee, double cap) {
      if (std::isnan(knee)) {
        return true;
      }
      const double hi = std::max(cap, kRomMargin);
      return knee >= kFeasEps &&
             knee <= std::min(hi + kFeasEps, M_PI - kFeasEps);
    };
    const bool feasible =
        std::abs(res.thigh_len_l) < kFeasEps &&
        std::abs(res.thigh_len_r) < kFeasEps &&
        std::abs(res.hinge_l) < kFeasEps && std::abs(res.hinge_r) < kFeasEps &&
        romOk(res.knee_l, kneeCap(knee_max.left)) &&
        romOk(res.knee_r, kneeCap(knee_max.right));
    if (feasible) {
      out.converged = true;
      break;
    }

    Eigen::MatrixXd d_mat(6, kStateDim);
    Eigen::VectorXd d_vec(6);
    std::vector<ConstraintLabel> labels;
    labels.reserve(6);
    int row = 0;
    for (Side s : {Side::kLeft, Side::kRight}) {
      const SideConstraint g = sideGeometry(x, oris, dims, s);
      const Vec3 tau_hat = g.tau / g.tau_norm;
      const bool left = s == Side::kLeft;
      const int si = left ? 0 : 1;

      double rhs = dims.thigh(s) - g.tau_norm;
      rhs += tau_hat.dot(x.segment<3>(kMpPos) - x.segment<3>(anklePosIndex(s)));
      addRow(d_mat, d_vec, labels, row++, tau_hat, s, rhs,
             left ? ConstraintLabel::kThighLenL : ConstraintLabel::kThighLenR);

      const Vec3 hinge_axis = g.shank_r.col(1);
      addRow(d_mat, d_vec, labels, row++, hinge_axis, s,
             -g.offset.dot(hinge_axis),
             left ? ConstraintLabel::kHingeL : ConstraintLabel::kHingeR);

      const double cap = kneeCap(knee_max.get(s));
      if (!rom_active[si] && !std::isnan(g.knee) &&
          (g.knee < kFeasEps || g.knee > cap ||
           g.knee > M_PI - kFeasEps)) {
        rom_active[si] = true;
        rom_target[si] = romTargetAngle(g.knee, cap);
      }
      if (rom_active[si] && !std::isnan(g.knee)) {
        const Vec3 psi = romPsi(g.shank_r, rom_target[si]);
        addRow(d_mat, d_vec, labels, row++, psi, s, -g.offset.dot(psi),
               left ? ConstraintLabel::kKneeRomL : ConstraintLabel::kKneeRomR);
      }
    }

    const Eigen::MatrixXd d_act = d_mat.topRows(row);
    const Eigen::VectorXd rhs_act = d_vec.head(row);

    // Soft enforcement: every row starts with pseudo-measurement noise a
    // factor sckf_threshold below its own variance and the noise decays
    // exponentially with the iteration, so enforcement hardens until the
    // relinearized rows are met exactly.
    const double soften = std::exp(1.0 - iter) / cfg.sckf_threshold;
    Eigen::MatrixXd s_mat = d_act * p_w * d_act.transpose();
    s_mat.diagonal() += (s_mat.diagonal() * soften).cwiseMax(1e-15);
    const auto ldlt = s_mat.ldlt();
    if (ldlt.info() != Eigen::Success) {
      break;  // keep the best iterate, flagged as not converged
    }
    const Eigen::MatrixXd gain = ldlt.solve(d_act * p_w).transpose();
    const StateVec x_next = x + gain * (rhs_act - d_act * x);
    if (!x_next.allFinite()) {
      break;
    }
    x = x_next;
  }

  out.state.x = x;  // covariance carried over from the limiter untouched
  return out;
}

Filter::Filter(const BodyDimensions& dims, const NoiseConfig& noise)
    : dims_(dims), noise_(noise) {
  dims_.validate();
  noise_.validate();
}

void Filter::initializeState(const StateVec& x0, double p0_scale) {
  state_ = initialize(x0, p0_scale);
  has_time_ = false;
}

StepResult Filter::step(const ImuFrame& frame,
                        const SegmentOrientations& oris) {
  NoiseConfig cfg = noise_;
  if (has_time_) {
    const double dt = frame.t - last_t_;
    if (!(dt > 0.0) || !std::isfinite(dt)) {
      throw DataError("non-increasing timestamp in IMU stream");
    }
    cfg.dt = dt;
  }
  const SystemMatrices sys = buildSystemMatrices(cfg);

  Vec9 u;
  u << frame.accel_mp, frame.accel_la, frame.accel_ra;

  FilterState st = predict(state_, u, sys);
  const MeasurementModel meas = buildMeasurement(frame.contact, dims_, cfg);
  st = measurementUpdate(st, meas);
  st = covarianceLimit(st, meas, cfg);

  // Range-of-motion cap for the projection: the knee may not extend past the
  // post-update angle (nor past a fully bent leg).
  KneeMax knee_max;
  for (Side s : {Side::kLeft, Side::kRight}) {
    const SideConstraint g = sideGeometry(st.x, oris, dims_, s);
    double cap = M_PI;
    if (!std::isnan(g.knee)) {
      cap = kneeCap(g.knee);
    }
    (s == Side::kLeft ? knee_max.left : knee_max.right) = cap;
  }

  const SckfResult proj = sckfProject(st, oris, dims_, knee_max, cfg);

  StepResult result;
  result.state = proj.state;
  result.sckf_iterations = proj.iterations;
  result.sckf_converged = proj.converged;
  result.residuals = constraintResiduals(proj.state.x, oris, dims_, knee_max);
  result.pose = assemblePose(proj.state.x, oris, dims_, frame.t);

  state_ = proj.state;
  last_t_ = frame.t;
  has_time_ = true;
  return result;
}

}  // namespace ckfgait
