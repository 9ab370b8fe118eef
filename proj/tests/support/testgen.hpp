#pragma once

// Seeded generators for property tests. splitmix64 keeps every sample
// reproducible from the test seed alone.

#include <cmath>
#include <cstdint>

#include "insideout/xform.hpp"

namespace testgen {

using insideout::kPi;
using insideout::Quat;
using insideout::RigidTransform;
using insideout::Vec2;
using insideout::Vec3;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * uniform());
  }

  Vec3 vec3(double scale) { return Vec3(uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale)); }
  Vec3 normal3(double sigma) { return sigma * Vec3(normal(), normal(), normal()); }

  Vec3 unit3() {
    Vec3 v;
    do {
      v = vec3(1.0);
    } while (v.norm() < 1e-3 || v.norm() > 1.0);
    return v.normalized();
  }

  // Uniform on SO(3) (Shoemake).
  Quat quat() {
    const double u1 = uniform(), u2 = 2.0 * kPi * uniform(), u3 = 2.0 * kPi * uniform();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    return Quat(a * std::sin(u2), a * std::cos(u2), b * std::sin(u3), b * std::cos(u3));
  }

  RigidTransform pose(double translation_scale = 1000.0) { return RigidTransform(quat(), vec3(translation_scale)); }

 private:
  std::uint64_t state_;
};

// 4x4 homogeneous matrix from a quaternion written out element by element,
// independent of the library's conversions.
inline Eigen::Matrix4d matrix_of(const Quat& q, const Vec3& t) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Eigen::Matrix4d m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y), t.x(),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x), t.y(),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y), t.z(),
       0, 0, 0, 1;
  return m;
}

inline Eigen::Matrix4d matrix_of(const RigidTransform& p) { return matrix_of(p.rotation(), p.translation()); }

// Rotation angle from a rotation matrix via the trace.
inline double matrix_angle(const Eigen::Matrix3d& r) {
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  return std::acos(c);
}

}  // namespace testgen
