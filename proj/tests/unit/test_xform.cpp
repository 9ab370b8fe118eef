#include <gtest/gtest.h>

#include <limits>

#include "insideout/error.hpp"
#include "insideout/xform.hpp"
#include "testgen.hpp"

using namespace insideout;
using testgen::Gen;
using testgen::matrix_of;

namespace {

Quat rz(double deg) { return rotation_about(Vec3::UnitZ(), deg_to_rad(deg)); }
Quat rx(double deg) { return rotation_about(Vec3::UnitX(), deg_to_rad(deg)); }
Quat ry(double deg) { return rotation_about(Vec3::UnitY(), deg_to_rad(deg)); }

void expect_pose_near(const RigidTransform& a, const RigidTransform& b, double tol) {
  const auto d = pose_delta(a, b);
  EXPECT_LE(d.translation_mm, tol);
  EXPECT_LE(d.rotation_rad, tol);
}

}  // namespace

TEST(Compose, IdentityIsNeutral) {
  Gen g(1);
  const auto t = g.pose();
  expect_pose_near(compose(RigidTransform::identity(), t), t, 1e-12);
  expect_pose_near(compose(t, RigidTransform::identity()), t, 1e-12);
}

TEST(Compose, WithInverseGivesIdentity) {
  Gen g(2);
  for (int i = 0; i < 100; ++i) {
    const auto t = g.pose();
    expect_pose_near(compose(t, invert(t)), RigidTransform::identity(), 1e-9);
  }
}

TEST(Compose, QuarterTurnThenShift) {
  const RigidTransform a(rz(90.0), Vec3(1, 0, 0));
  const RigidTransform b(Quat::Identity(), Vec3(0, 1, 0));
  const auto c = compose(a, b);
  const Eigen::Matrix4d oracle = matrix_of(a) * matrix_of(b);
  EXPECT_NEAR((matrix_of(c) - oracle).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_NEAR(c.translation().norm(), 0.0, 1e-12);
  EXPECT_NEAR(geodesic_angle(c.rotation(), rz(90.0)), 0.0, 1e-12);
}

TEST(Compose, MatchesMatrixProductOnRandomPoses) {
  Gen g(3);
  for (int i = 0; i < 1000; ++i) {
    const auto a = g.pose(), b = g.pose();
    const Eigen::Matrix4d oracle = matrix_of(a) * matrix_of(b);
    EXPECT_LE((matrix_of(compose(a, b)) - oracle).cwiseAbs().maxCoeff(), 1e-9);
    const Vec3 p = g.vec3(500.0);
    const Eigen::Vector4d ph(p.x(), p.y(), p.z(), 1.0);
    EXPECT_LE((compose(a, b).apply(p) - (oracle * ph).head<3>()).norm(), 1e-9);
  }
}

TEST(Compose, Associative) {
  Gen g(4);
  for (int i = 0; i < 1000; ++i) {
    const auto a = g.pose(), b = g.pose(), c = g.pose();
    expect_pose_near(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9);
  }
}

TEST(Compose, NormPreservedOverLongChains) {
  Gen g(5);
  RigidTransform acc;
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    acc = compose(acc, RigidTransform(g.quat(), g.vec3(1.0)));
    worst = std::max(worst, std::abs(acc.rotation().norm() - 1.0));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(RigidTransform, ConstructorsNormalize) {
  const RigidTransform t(Quat(2.0, 0.0, 0.0, 0.0), Vec3(1, 2, 3));
  EXPECT_NEAR(t.rotation().norm(), 1.0, 1e-15);
  Mat3 r = rz(30.0).toRotationMatrix();
  r *= 1.0 + 1e-7;
  EXPECT_NEAR(RigidTransform(r, Vec3::Zero()).rotation().norm(), 1.0, 1e-12);
}

TEST(RigidTransform, ZeroQuaternionRejected) {
  try {
    RigidTransform t(Quat(0.0, 0.0, 0.0, 0.0), Vec3::Zero());
    FAIL() << "accepted a zero quaternion";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(Invert, Identity) { expect_pose_near(invert(RigidTransform::identity()), RigidTransform::identity(), 0.0); }

TEST(Invert, PureTranslation) {
  const auto inv = invert(RigidTransform::from_translation(Vec3(1, 2, 3)));
  EXPECT_EQ(inv.translation(), Vec3(-1, -2, -3));
  EXPECT_NEAR(geodesic_angle(inv.rotation(), Quat::Identity()), 0.0, 1e-15);
}

TEST(Invert, DoubleInversion) {
  Gen g(6);
  for (int i = 0; i < 1000; ++i) {
    const auto t = g.pose(1.0);
    expect_pose_near(invert(invert(t)), t, 1e-12);
  }
}

TEST(Invert, DoubleInversionRoomScale) {
  // Rounding grows with the translation magnitude; stay within a few ulps of it.
  Gen g(16);
  for (int i = 0; i < 1000; ++i) {
    const auto t = g.pose(3000.0);
    const auto d = pose_delta(invert(invert(t)), t);
    EXPECT_LE(d.translation_mm, 16.0 * std::numeric_limits<double>::epsilon() * t.translation().norm());
    EXPECT_LE(d.rotation_rad, 1e-12);
  }
}

TEST(Invert, MatchesMatrixInverse) {
  Gen g(7);
  for (int i = 0; i < 200; ++i) {
    const auto t = g.pose();
    EXPECT_LE((matrix_of(invert(t)) - matrix_of(t).inverse()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(GeodesicAngle, SameRotationIsZero) {
  Gen g(8);
  const Quat q = g.quat();
  EXPECT_NEAR(geodesic_angle(q, q), 0.0, 1e-12);
  Quat neg(-q.w(), -q.x(), -q.y(), -q.z());
  EXPECT_NEAR(geodesic_angle(q, neg), 0.0, 1e-12);
}

TEST(GeodesicAngle, QuarterTurn) { EXPECT_NEAR(geodesic_angle(Quat::Identity(), rz(90.0)), kPi / 2, 1e-12); }

TEST(GeodesicAngle, MatrixLogOracle) {
  const Quat a = rx(10.0);
  const Quat b = rx(10.0) * ry(5.0);
  const double oracle = testgen::matrix_angle(a.toRotationMatrix().transpose() * b.toRotationMatrix());
  EXPECT_NEAR(oracle, deg_to_rad(5.0), 1e-12);
  EXPECT_NEAR(geodesic_angle(a, b), deg_to_rad(5.0), 1e-12);
}

TEST(GeodesicAngle, SymmetricAndTriangle) {
  Gen g(9);
  for (int i = 0; i < 1000; ++i) {
    const Quat a = g.quat(), b = g.quat(), c = g.quat();
    EXPECT_NEAR(geodesic_angle(a, b), geodesic_angle(b, a), 1e-12);
    EXPECT_LE(geodesic_angle(a, c), geodesic_angle(a, b) + geodesic_angle(b, c) + 1e-9);
    const double ab = geodesic_angle(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, kPi + 1e-12);
  }
}

TEST(GeodesicAngle, NearPiStaysAccurate) {
  const double oracle = kPi - 1e-7;
  EXPECT_NEAR(geodesic_angle(Quat::Identity(), rotation_about(Vec3(1, 1, 0), oracle)), oracle, 1e-12);
}

TEST(ToAxisAngle, IdentityConvention) {
  const auto aa = to_axis_angle(Quat::Identity());
  EXPECT_EQ(aa.axis, Vec3::UnitX());
  EXPECT_EQ(aa.angle, 0.0);
}

TEST(ToAxisAngle, QuarterTurnAboutZ) {
  const auto aa = to_axis_angle(rz(90.0));
  EXPECT_NEAR((aa.axis - Vec3::UnitZ()).norm(), 0.0, 1e-12);
  EXPECT_NEAR(aa.angle, kPi / 2, 1e-12);
}

TEST(ToAxisAngle, HalfAngleIdentity) {
  const double h = deg_to_rad(15.0);
  const auto aa = to_axis_angle(Quat(std::cos(h), std::sin(h), 0.0, 0.0));
  EXPECT_NEAR((aa.axis - Vec3::UnitX()).norm(), 0.0, 1e-12);
  EXPECT_NEAR(aa.angle, deg_to_rad(30.0), 1e-12);
}

TEST(ToAxisAngle, RoundTripsUpToSign) {
  Gen g(10);
  for (int i = 0; i < 1000; ++i) {
    const Quat q = g.quat();
    const auto aa = to_axis_angle(q);
    EXPECT_GE(aa.angle, 0.0);
    EXPECT_LE(aa.angle, kPi);
    EXPECT_NEAR(aa.axis.norm(), 1.0, 1e-9);
    EXPECT_NEAR(geodesic_angle(rotation_about(aa.axis, aa.angle), q), 0.0, 1e-9);
  }
}

TEST(ToAxisAngle, NegatedQuaternionSameAxis) {
  const Quat q = rotation_about(Vec3(1, 2, 3), 0.7);
  const Quat n(-q.w(), -q.x(), -q.y(), -q.z());
  const auto a = to_axis_angle(q), b = to_axis_angle(n);
  EXPECT_NEAR((a.axis - b.axis).norm(), 0.0, 1e-12);
  EXPECT_NEAR(a.angle, b.angle, 1e-12);
}

TEST(RotationVector, RoundTrip) {
  Gen g(11);
  for (int i = 0; i < 500; ++i) {
    const Vec3 v = g.unit3() * g.uniform(0.0, 3.0);
    EXPECT_LE((rotation_to_vector(rotation_from_vector(v)) - v).norm(), 1e-9);
  }
  EXPECT_NEAR(geodesic_angle(rotation_from_vector(Vec3::Zero()), Quat::Identity()), 0.0, 0.0);
}

TEST(Interpolate, Endpoints) {
  Gen g(12);
  const auto a = g.pose(), b = g.pose();
  expect_pose_near(interpolate(a, b, 0.0), a, 0.0);
  expect_pose_near(interpolate(a, b, 1.0), b, 0.0);
}

TEST(Interpolate, SingleAxisSlerp) {
  const RigidTransform b(rz(90.0), Vec3(2, 0, 0));
  const auto m = interpolate(RigidTransform::identity(), b, 0.5);
  EXPECT_NEAR(geodesic_angle(m.rotation(), rz(45.0)), 0.0, 1e-12);
  EXPECT_NEAR((m.translation() - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
}

TEST(Interpolate, AntipodalQuaternions) {
  const Quat q = rotation_about(Vec3(0.3, -0.2, 0.9), 1.1);
  const Quat n(-q.w(), -q.x(), -q.y(), -q.z());
  const auto m = interpolate(RigidTransform(q, Vec3::Zero()), RigidTransform(n, Vec3::Zero()), 0.5);
  EXPECT_NEAR(geodesic_angle(m.rotation(), q), 0.0, 1e-12);
}

TEST(Interpolate, ShortestArc) {
  Gen g(13);
  for (int i = 0; i < 500; ++i) {
    const auto a = g.pose(), b = g.pose();
    const double alpha = g.uniform();
    const auto m = interpolate(a, b, alpha);
    const double total = geodesic_angle(a.rotation(), b.rotation());
    EXPECT_NEAR(geodesic_angle(a.rotation(), m.rotation()), alpha * total, 1e-9);
    EXPECT_NEAR(geodesic_angle(m.rotation(), b.rotation()), (1.0 - alpha) * total, 1e-9);
  }
}

TEST(Interpolate, LeftInvariant) {
  Gen g(14);
  for (int i = 0; i < 500; ++i) {
    const auto a = g.pose(), b = g.pose(), h = g.pose();
    const double alpha = g.uniform();
    const auto lhs = interpolate(compose(h, a), compose(h, b), alpha);
    const auto rhs = compose(h, interpolate(a, b, alpha));
    EXPECT_LE(geodesic_angle(lhs.rotation(), rhs.rotation()), 1e-9);
  }
}

TEST(Interpolate, AlphaOutsideUnitIntervalRejected) {
  try {
    interpolate(RigidTransform::identity(), RigidTransform::identity(), 1.5);
    FAIL() << "accepted alpha outside [0, 1]";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(Matrix, RoundTrip) {
  Gen g(15);
  for (int i = 0; i < 100; ++i) {
    const auto t = g.pose();
    expect_pose_near(RigidTransform::from_matrix(t.matrix()), t, 1e-9);
    EXPECT_LE((t.matrix() - matrix_of(t)).cwiseAbs().maxCoeff(), 1e-12);
  }
}
