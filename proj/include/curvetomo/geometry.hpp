#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace curvetomo {

// Points, velocities and covectors live in R^2 or R^3; the max-size template
// keeps them on the stack.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CURVETOMO_DECLARE_ERROR(Name)   \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

CURVETOMO_DECLARE_ERROR(StepTooLarge);
CURVETOMO_DECLARE_ERROR(DomainExit);
CURVETOMO_DECLARE_ERROR(ChartSingular);
CURVETOMO_DECLARE_ERROR(TransversalityViolation);
CURVETOMO_DECLARE_ERROR(EmptyFamily);
CURVETOMO_DECLARE_ERROR(InterpolationOutOfDomain);
CURVETOMO_DECLARE_ERROR(IndexMismatch);
CURVETOMO_DECLARE_ERROR(NewtonDivergence);
CURVETOMO_DECLARE_ERROR(ZeroCovector);
CURVETOMO_DECLARE_ERROR(FrequencyAliasing);
CURVETOMO_DECLARE_ERROR(LanczosBreakdown);
CURVETOMO_DECLARE_ERROR(FamilyRebuildFailure);
CURVETOMO_DECLARE_ERROR(ParameterOutOfRange);
CURVETOMO_DECLARE_ERROR(ConfigError);
CURVETOMO_DECLARE_ERROR(IoError);
CURVETOMO_DECLARE_ERROR(NoConvergence);

#undef CURVETOMO_DECLARE_ERROR

/// Axis-aligned box in chart coordinates.
struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vec& x, double slack = 0.0) const {
    for (int i = 0; i < dim(); ++i)
      if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    return true;
  }
  /// Negative inside, zero on the boundary, positive outside.
  double signed_distance(const Vec& x) const {
    double d = -INFINITY;
    for (int i = 0; i < dim(); ++i) d = std::max({d, lo[i] - x[i], x[i] - hi[i]});
    return d;
  }
  Vec center() const { return 0.5 * (lo + hi); }
  double volume() const { return (hi - lo).prod(); }
};

inline Box make_box(int dim, double lo, double hi) {
  return Box{Vec::Constant(dim, lo), Vec::Constant(dim, hi)};
}

/// Signed distance-like function: negative inside the region.
using Region = std::function<double(const Vec&)>;

inline Region box_region(const Box& box) {
  return [box](const Vec& x) { return box.signed_distance(x); };
}

inline Region ball_region(const Vec& center, double radius) {
  return [center, radius](const Vec& x) { return (x - center).norm() - radius; };
}

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

/// Orthonormal basis of the complement of the unit vector v (n-1 vectors).
std::vector<Vec> tangent_basis(const Vec& v);

/// Moves the unit vector v along the great circle towards the tangent vector e
/// by the angle eps*|e|.
Vec rotate_towards(const Vec& v, const Vec& e, double eps);

/// C-infinity transition: 0 for s <= 0, 1 for s >= 1.
double smooth_step(double s);

/// Quintic C^2 transition: 0 for s <= 0, 1 for s >= 1.
double c2_step(double s);

/// C-infinity bump exp(1 - 1/(1 - q)) for q = |x - c|^2 / radius^2 < 1, zero outside.
double smooth_bump(const Vec& x, const Vec& center, double radius);

/// Signed angle of a planar vector.
inline double angle_of(const Vec& v) { return std::atan2(v[1], v[0]); }

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

}  // namespace curvetomo
