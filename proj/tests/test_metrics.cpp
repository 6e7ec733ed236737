#include <random>

#include "doctest.h"

#include "ckfgait/errors.hpp"
#include "ckfgait/metrics.hpp"
#include "ckfgait/synth.hpp"
#include "test_util.hpp"

using namespace ckfgait;

namespace {

constexpr double kDeg = M_PI / 180.0;

std::vector<PoseSnapshot> randomPoses(std::mt19937_64& rng, size_t n) {
  std::vector<PoseSnapshot> poses(n);
  double t = 0.0;
  for (PoseSnapshot& p : poses) {
    p.t = t;
    t += 0.01;
    p.mid_pelvis = testutil::randomVec3(rng, 2.0);
    p.hip_l = testutil::randomVec3(rng, 2.0);
    p.hip_r = testutil::randomVec3(rng, 2.0);
    p.knee_l = testutil::randomVec3(rng, 2.0);
    p.knee_r = testutil::randomVec3(rng, 2.0);
    p.ankle_l = testutil::randomVec3(rng, 2.0);
    p.ankle_r = testutil::randomVec3(rng, 2.0);
    p.ori.pelvis = testutil::randomUnitQuat(rng);
    p.ori.lshank = testutil::randomUnitQuat(rng);
    p.ori.rshank = testutil::randomUnitQuat(rng);
    p.ori.lthigh = testutil::randomUnitQuat(rng);
    p.ori.rthigh = testutil::randomUnitQuat(rng);
  }
  return poses;
}

// Naive double-loop position error: root-anchor, average the six joint
// errors per frame, RMS over frames.
double naivePositionRmse(const std::vector<PoseSnapshot>& est,
                         const std::vector<PoseSnapshot>& ref) {
  double acc = 0.0;
  for (size_t k = 0; k < est.size(); ++k) {
    const Vec3 shift = ref[k].mid_pelvis - est[k].mid_pelvis;
    double frame = 0.0;
    frame += (est[k].hip_l + shift - ref[k].hip_l).norm();
    frame += (est[k].hip_r + shift - ref[k].hip_r).norm();
    frame += (est[k].knee_l + shift - ref[k].knee_l).norm();
    frame += (est[k].knee_r + shift - ref[k].knee_r).norm();
    frame += (est[k].ankle_l + shift - ref[k].ankle_l).norm();
    frame += (est[k].ankle_r + shift - ref[k].ankle_r).norm();
    frame /= 6.0;
    acc += frame * frame;
  }
  return std::sqrt(acc / est.size());
}

double naiveCorrelation(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double num = 0.0, da = 0.0, db = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("positionRmse") {
  std::mt19937_64 rng(101);
  const auto ref = randomPoses(rng, 120);

  SUBCASE("identical trials give zero") {
    CHECK(positionRmse(TrialComparison{ref, ref}) == 0.0);
  }

  SUBCASE("rigid translation of the estimate is invisible") {
    auto shifted = ref;
    const Vec3 offset(3.2, -1.5, 0.7);
    for (PoseSnapshot& p : shifted) {
      p.mid_pelvis += offset;
      p.hip_l += offset;
      p.hip_r += offset;
      p.knee_l += offset;
      p.knee_r += offset;
      p.ankle_l += offset;
      p.ankle_r += offset;
    }
    CHECK(positionRmse(TrialComparison{shifted, ref}) < 1e-12);
  }

  SUBCASE("matches the naive implementation") {
    for (int i = 0; i < 20; ++i) {
      const auto est = randomPoses(rng, 120);
      const double got = positionRmse(TrialComparison{est, ref});
      CHECK(std::abs(got - naivePositionRmse(est, ref)) < 1e-12);
    }
  }
}

TEST_CASE("orientationRmse") {
  std::mt19937_64 rng(103);
  const auto ref = randomPoses(rng, 100);

  SUBCASE("identical orientations give zero") {
    CHECK(orientationRmse(TrialComparison{ref, ref}, false) == 0.0);
    CHECK(orientationRmse(TrialComparison{ref, ref}, true) == 0.0);
  }

  SUBCASE("a constant 10 degree offset is removed by bias removal") {
    auto est = ref;
    const Quat off = quatExp(Vec3(0.3, 0.8, -0.5).normalized() * 10.0 * kDeg);
    for (PoseSnapshot& p : est) {
      p.ori.lthigh = quatMultiply(off, p.ori.lthigh);
      p.ori.rthigh = quatMultiply(off, p.ori.rthigh);
    }
    const double biased = orientationRmse(TrialComparison{est, ref}, false);
    const double unbiased = orientationRmse(TrialComparison{est, ref}, true);
    CHECK(biased == doctest::Approx(10.0 * kDeg).epsilon(1e-6));
    CHECK(unbiased < 1e-6);
  }

  SUBCASE("bias removal never hurts") {
    for (int i = 0; i < 20; ++i) {
      const auto est = randomPoses(rng, 100);
      const double biased = orientationRmse(TrialComparison{est, ref}, false);
      const double unbiased = orientationRmse(TrialComparison{est, ref}, true);
      CHECK(unbiased <= biased + 1e-9);
    }
  }
}

TEST_CASE("jointAngleSeries") {
  SUBCASE("standing N-pose reads zero everywhere") {
    std::vector<PoseSnapshot> straight(10);
    for (size_t k = 0; k < straight.size(); ++k) {
      PoseSnapshot& p = straight[k];
      p.t = 0.01 * k;
      p.mid_pelvis = Vec3(0, 0, 0.91);
      p.hip_l = Vec3(0, 0.115, 0.91);
      p.hip_r = Vec3(0, -0.115, 0.91);
      p.knee_l = Vec3(0, 0.115, 0.5);
      p.knee_r = Vec3(0, -0.115, 0.5);
      p.ankle_l = Vec3(0, 0.115, 0.08);
      p.ankle_r = Vec3(0, -0.115, 0.08);
    }
    const JointAngleSeries ja = jointAngleSeries(straight);
    for (double v : ja.knee_left) CHECK(std::abs(v) < 1e-6);
    for (double v : ja.knee_right) CHECK(std::abs(v) < 1e-6);
    for (double v : ja.hip_sagittal_left) CHECK(std::abs(v) < 1e-6);
    for (double v : ja.hip_frontal_right) CHECK(std::abs(v) < 1e-6);
    for (double v : ja.hip_transverse_left) CHECK(std::abs(v) < 1e-6);
  }

  SUBCASE("a scripted 45 degree sagittal peak is recovered") {
    std::vector<PoseSnapshot> poses(200);
    double peak = 0.0;
    for (size_t k = 0; k < poses.size(); ++k) {
      PoseSnapshot& p = poses[k];
      p.t = 0.01 * k;
      const double angle =
          45.0 * kDeg * 0.5 *
          (1.0 - std::cos(2.0 * M_PI * k / (poses.size() - 1.0)));
      peak = std::max(peak, angle);
      const Quat thigh = quatExp(Vec3(0, angle, 0));
      p.ori.lthigh = thigh;
      p.ori.rthigh = thigh;
      p.hip_l = Vec3(0, 0.115, 0.91);
      p.hip_r = Vec3(0, -0.115, 0.91);
      p.knee_l = p.hip_l - rotateVector(thigh, Vec3(0, 0, 0.41));
      p.knee_r = p.hip_r - rotateVector(thigh, Vec3(0, 0, 0.41));
      p.ankle_l = p.knee_l - Vec3(0, 0, 0.42);
      p.ankle_r = p.knee_r - Vec3(0, 0, 0.42);
    }
    const JointAngleSeries ja = jointAngleSeries(poses);
    const double got =
        *std::max_element(ja.hip_sagittal_left.begin(),
                          ja.hip_sagittal_left.end());
    CHECK(std::abs(got - peak) < 0.1 * kDeg);
  }
}

TEST_CASE("correlationCoefficient") {
  std::mt19937_64 rng(107);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SUBCASE("identical series give one") {
    std::vector<double> a(50);
    for (double& v : a) v = gauss(rng);
    CHECK(correlationCoefficient(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("negated zero-mean series give minus one") {
    std::vector<double> a(50);
    for (double& v : a) v = gauss(rng);
    double mean = 0.0;
    for (double v : a) mean += v;
    mean /= a.size();
    for (double& v : a) v -= mean;
    std::vector<double> b(a.size());
    for (size_t i = 0; i < a.size(); ++i) b[i] = -a[i];
    CHECK(correlationCoefficient(a, b) ==
          doctest::Approx(-1.0).epsilon(1e-12));
  }

  SUBCASE("matches the naive two-pass implementation") {
    for (int i = 0; i < 50; ++i) {
      std::vector<double> a(80), b(80);
      for (double& v : a) v = gauss(rng);
      for (double& v : b) v = gauss(rng);
      CHECK(std::abs(correlationCoefficient(a, b) - naiveCorrelation(a, b)) <
            1e-12);
    }
  }

  SUBCASE("invariant under positive affine transforms") {
    std::vector<double> a(60), b(60);
    for (double& v : a) v = gauss(rng);
    for (double& v : b) v = gauss(rng);
    std::vector<double> a2(a.size());
    for (size_t i = 0; i < a.size(); ++i) a2[i] = 3.7 * a[i] - 11.0;
    CHECK(correlationCoefficient(a2, b) ==
          doctest::Approx(correlationCoefficient(a, b)).epsilon(1e-9));
  }

  SUBCASE("rejects degenerate inputs") {
    std::vector<double> constant(30, 2.0);
    std::vector<double> varying(30);
    for (double& v : varying) v = gauss(rng);
    CHECK_THROWS_AS(correlationCoefficient(constant, varying), DataError);
    std::vector<double> one_sample{1.0};
    CHECK_THROWS_AS(correlationCoefficient(one_sample, one_sample), DataError);
    std::vector<double> short_b(10, 0.0);
    CHECK_THROWS_AS(correlationCoefficient(varying, short_b), DataError);
  }
}

TEST_CASE("ttdDeviation") {
  GaitParams params;
  params.duration = 20.0;
  const GroundTruthTrial trial = generateGait(params);

  SUBCASE("identical trials give zero everywhere") {
    const TtdDeviation d =
        ttdDeviation(trial.poses, trial.poses, trial.events);
    CHECK(d.pelvis == 0.0);
    CHECK(d.left_ankle == 0.0);
    CHECK(d.right_ankle == 0.0);
  }

  SUBCASE("matches hand-summed segment distances") {
    std::mt19937_64 rng(109);
    auto est = trial.poses;
    for (PoseSnapshot& p : est) {
      p.mid_pelvis += testutil::randomVec3(rng, 0.02);
      p.ankle_l += testutil::randomVec3(rng, 0.02);
      p.ankle_r += testutil::randomVec3(rng, 0.02);
    }
    const TtdDeviation d = ttdDeviation(est, trial.poses, trial.events);

    std::vector<int> left_starts, right_starts;
    for (const StepInterval& iv : trial.events.left) {
      left_starts.push_back(iv.begin);
    }
    for (const StepInterval& iv : trial.events.right) {
      right_starts.push_back(iv.begin);
    }

    auto handTtd = [&](const std::vector<PoseSnapshot>& poses,
                       const std::vector<int>& starts, int which) {
      double total = 0.0;
      for (size_t i = 1; i < starts.size(); ++i) {
        const PoseSnapshot& a = poses[starts[i - 1]];
        const PoseSnapshot& b = poses[starts[i]];
        const Vec3 pa = which == 0 ? a.mid_pelvis
                                   : (which == 1 ? a.ankle_l : a.ankle_r);
        const Vec3 pb = which == 0 ? b.mid_pelvis
                                   : (which == 1 ? b.ankle_l : b.ankle_r);
        total += (pb - pa).head<2>().norm();
      }
      return total;
    };

    const double ref_p = handTtd(trial.poses, left_starts, 0);
    const double est_p = handTtd(est, left_starts, 0);
    CHECK(std::abs(d.pelvis - std::abs(est_p - ref_p) / ref_p) < 1e-9);

    const double ref_l = handTtd(trial.poses, left_starts, 1);
    const double est_l = handTtd(est, left_starts, 1);
    CHECK(std::abs(d.left_ankle - std::abs(est_l - ref_l) / ref_l) < 1e-9);

    const double ref_r = handTtd(trial.poses, right_starts, 2);
    const double est_r = handTtd(est, right_starts, 2);
    CHECK(std::abs(d.right_ankle - std::abs(est_r - ref_r) / ref_r) < 1e-9);
  }

  SUBCASE("rejects events outside the trial or too few of them") {
    StepEvents bad = trial.events;
    bad.left.back().begin = static_cast<int>(trial.poses.size()) + 5;
    CHECK_THROWS_AS(ttdDeviation(trial.poses, trial.poses, bad), DataError);

    StepEvents sparse;
    sparse.left.push_back({0, 10});
    sparse.right = trial.events.right;
    CHECK_THROWS_AS(ttdDeviation(trial.poses, trial.poses, sparse), DataError);
  }
}

TEST_CASE("evaluateTrial assembles the full report") {
  GaitParams params;
  params.duration = 15.0;
  const GroundTruthTrial trial = generateGait(params);

  const MetricReport report =
      evaluateTrial(TrialComparison{trial.poses, trial.poses}, trial.events);
  CHECK(report.e_pos == 0.0);
  CHECK(report.e_ori_biased == 0.0);
  CHECK(report.e_ori_unbiased == 0.0);
  REQUIRE(report.knee_sagittal.cc.has_value());
  CHECK(*report.knee_sagittal.cc == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.knee_sagittal.rmse_biased == 0.0);
  REQUIRE(report.ttd.has_value());
  CHECK(report.ttd->pelvis == 0.0);

  // Without enough events per side the TTD block is absent.
  const MetricReport no_events =
      evaluateTrial(TrialComparison{trial.poses, trial.poses}, StepEvents{});
  CHECK_FALSE(no_events.ttd.has_value());
}

TEST_CASE("parseEulerOrder") {
  const std::array<int, 3> zxy = parseEulerOrder("ZXY");
  CHECK(zxy == kDefaultEulerOrder);
  const std::array<int, 3> xyz = parseEulerOrder("XYZ");
  CHECK(xyz == std::array<int, 3>{0, 1, 2});
  CHECK_THROWS_AS(parseEulerOrder("ZZY"), DataError);
  CHECK_THROWS_AS(parseEulerOrder("AB"), DataError);
}

TEST_CASE("intrinsicEulerAngles inverts the composed rotation") {
  std::mt19937_64 rng(113);
  std::uniform_real_distribution<double> ang(-1.2, 1.2);
  const std::array<int, 3> order = kDefaultEulerOrder;
  auto axisRot = [](int axis, double a) {
    Vec3 w = Vec3::Zero();
    w(axis) = a;
    return so3Exp(w);
  };
  for (int i = 0; i < 100; ++i) {
    const double a0 = ang(rng), a1 = ang(rng), a2 = ang(rng);
    const Mat3 r = axisRot(order[0], a0) * axisRot(order[1], a1) *
                   axisRot(order[2], a2);
    const Vec3 seq = intrinsicEulerAngles(r, order);
    CHECK(seq(0) == doctest::Approx(a0).epsilon(1e-9));
    CHECK(seq(1) == doctest::Approx(a1).epsilon(1e-9));
    CHECK(seq(2) == doctest::Approx(a2).epsilon(1e-9));
  }
}
