#include "curvetomo/geometry.hpp"

namespace curvetomo {

std::vector<Vec> tangent_basis(const Vec& v) {
  const int n = static_cast<int>(v.size());
  if (n == 2) return {vec2(-v[1], v[0])};
  // Gram-Schmidt against the coordinate axis least aligned with v.
  int axis = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(v[i]) < std::abs(v[axis])) axis = i;
  Vec e1 = Vec::Zero(3);
  e1[axis] = 1.0;
  e1 -= e1.dot(v) * v;
  e1.normalize();
  Vec e2 = vec3(v[1] * e1[2] - v[2] * e1[1], v[2] * e1[0] - v[0] * e1[2],
                v[0] * e1[1] - v[1] * e1[0]);
  return {e1, e2};
}

Vec rotate_towards(const Vec& v, const Vec& e, double eps) {
  const double len = e.norm();
  if (len == 0.0 || eps == 0.0) return v;
  const double a = eps * len;
  return std::cos(a) * v + std::sin(a) * (e / len);
}

double smooth_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / s);
  const double b = std::exp(-1.0 / (1.0 - s));
  return a / (a + b);
}

double c2_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

double smooth_bump(const Vec& x, const Vec& center, double radius) {
  const double q = (x - center).squaredNorm() / (radius * radius);
  if (q >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - q));
}

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

}  // namespace curvetomo
