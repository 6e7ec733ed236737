#include <random>

#include "doctest.h"

#include "ckfgait/so3.hpp"
#include "test_util.hpp"

using namespace ckfgait;

namespace {

Mat3 rodrigues(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-300) {
    return Mat3::Identity();
  }
  const Vec3 u = axis_angle / angle;
  Mat3 k;
  k << 0, -u.z(), u.y(), u.z(), 0, -u.x(), -u.y(), u.x(), 0;
  return Mat3::Identity() + std::sin(angle) * k +
         (1.0 - std::cos(angle)) * k * k;
}

}  // namespace

TEST_CASE("quatMultiply composes rotations") {
  const Quat qz90 = quatExp(Vec3(0, 0, M_PI / 2));
  const Quat q180 = quatMultiply(qz90, qz90);
  const Mat3 expected = quatToRotation(qz90) * quatToRotation(qz90);
  CHECK((quatToRotation(q180) - expected).norm() < 1e-12);
  CHECK(rotationAngle(quatToRotation(q180)) == doctest::Approx(M_PI));

  const Quat id = Quat::Identity();
  CHECK(quatMultiply(id, id).coeffs().isApprox(id.coeffs(), 1e-15));
}

TEST_CASE("quatMultiply with the inverse gives identity") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const Quat q = testutil::randomUnitQuat(rng);
    const Quat r = quatMultiply(q, quatInverse(q));
    CHECK(rotationAngle(quatToRotation(r)) < 1e-12);
    CHECK(isUnitQuat(r));
  }
}

TEST_CASE("quatMultiply is associative") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Quat a = testutil::randomUnitQuat(rng);
    const Quat b = testutil::randomUnitQuat(rng);
    const Quat c = testutil::randomUnitQuat(rng);
    const Mat3 lhs = quatToRotation(quatMultiply(quatMultiply(a, b), c));
    const Mat3 rhs = quatToRotation(quatMultiply(a, quatMultiply(b, c)));
    CHECK((lhs - rhs).norm() < 1e-9);
  }
}

TEST_CASE("quatToRotation on reference inputs") {
  CHECK((quatToRotation(Quat::Identity()) - Mat3::Identity()).norm() == 0.0);

  const Mat3 rz90 = quatToRotation(quatExp(Vec3(0, 0, M_PI / 2)));
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((rz90 - expected).norm() < 1e-12);
  CHECK((rz90.col(0) - Vec3(0, 1, 0)).norm() < 1e-12);
  CHECK((rz90.col(1) - Vec3(-1, 0, 0)).norm() < 1e-12);
  CHECK((rz90.col(2) - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("rotation matrix and quaternion round-trip") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    const Quat q = testutil::randomUnitQuat(rng);
    const Mat3 r = quatToRotation(q);
    CHECK(isRotation(r));
    const Quat back = rotationToQuat(r);
    CHECK((quatToRotation(back) - r).norm() < 1e-12);
  }
}

TEST_CASE("rotateVector matches the matrix product") {
  CHECK((rotateVector(Quat::Identity(), Vec3(1, 2, 3)) - Vec3(1, 2, 3))
            .norm() == 0.0);
  CHECK((rotateVector(quatExp(Vec3(0, 0, M_PI / 2)), Vec3(1, 0, 0)) -
         Vec3(0, 1, 0))
            .norm() < 1e-12);

  std::mt19937_64 rng(17);
  for (int i = 0; i < 100; ++i) {
    const Quat q = testutil::randomUnitQuat(rng);
    const Vec3 v = testutil::randomVec3(rng, 3.0);
    CHECK((rotateVector(q, v) - quatToRotation(q) * v).norm() < 1e-9);
  }
}

TEST_CASE("so3Exp matches the Rodrigues formula") {
  CHECK((so3Exp(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);

  std::mt19937_64 rng(19);
  for (int i = 0; i < 100; ++i) {
    const Vec3 w = testutil::randomVec3(rng, 1.2);
    CHECK((so3Exp(w) - rodrigues(w)).norm() < 1e-12);
  }
}

TEST_CASE("so3Log inverts the exponential") {
  CHECK(so3Log(Mat3::Identity()).norm() == 0.0);

  const Vec3 w30(M_PI / 6, 0, 0);
  CHECK((so3Log(rodrigues(w30)) - w30).norm() < 1e-12);

  std::mt19937_64 rng(23);
  for (int i = 0; i < 200; ++i) {
    std::uniform_real_distribution<double> angle(1e-4, M_PI - 1e-4);
    Vec3 axis = testutil::randomVec3(rng);
    while (axis.norm() < 1e-9) axis = testutil::randomVec3(rng);
    const Vec3 w = axis.normalized() * angle(rng);
    const Mat3 r = so3Exp(w);
    CHECK((so3Log(r) - w).norm() < 1e-7);
    CHECK(so3Log(r).norm() == doctest::Approx(rotationAngle(r)).epsilon(1e-7));
  }
}

TEST_CASE("yawQuat rotates about z only") {
  const double yaw = 0.7;
  const Mat3 r = quatToRotation(yawQuat(yaw));
  CHECK((r * Vec3(0, 0, 1) - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK((r * Vec3(1, 0, 0) - Vec3(std::cos(yaw), std::sin(yaw), 0)).norm() <
        1e-12);
}

TEST_CASE("unit quaternion and rotation predicates") {
  CHECK(isUnitQuat(Quat::Identity()));
  CHECK_FALSE(isUnitQuat(Quat(2.0, 0, 0, 0)));
  CHECK(isRotation(Mat3::Identity()));
  Mat3 sheared = Mat3::Identity();
  sheared(0, 1) = 0.5;
  CHECK_FALSE(isRotation(sheared));
}

TEST_CASE("quatNormalized restores unit norm") {
  Quat q(2.0, 0.0, 0.0, 0.0);
  CHECK(isUnitQuat(quatNormalized(q)));
}
