#pragma once

#include <optional>
#include <string>
#include <vector>

#include "curvetomo/geometry.hpp"

namespace curvetomo {

/// Second-order curve dynamics: curves solve x'' = G(x, x').
///
/// `speed` is the speed function lambda(x, v) of the family for a unit
/// direction v: the curve through x in direction v has velocity lambda * v
/// there. The exponential map normalizes its direction argument and uses this
/// speed, so it is 0-homogeneous in the direction.
struct Generator {
  std::string name;
  int dim = 2;
  Box box;  // chart box of M1 where G is defined and finite
  std::function<Vec(const Vec& x, const Vec& xi)> accel;
  std::function<double(const Vec& x, const Vec& v)> speed;
  double speed_min = 1.0;
  double speed_max = 1.0;
  bool has_reference_solution = false;

  Vec operator()(const Vec& x, const Vec& xi) const { return accel(x, xi); }
  double lambda(const Vec& x, const Vec& v) const { return speed(x, v); }
};

struct PhaseState {
  Vec x;
  Vec xi;
};

/// One classical RK4 step of the first-order system (x, xi)' = (xi, G(x, xi)).
PhaseState rk4_step(const Generator& gen, const PhaseState& s, double h);

/// Integrates for time t using `steps` equal RK4 steps (t may be negative).
PhaseState advance(const Generator& gen, PhaseState s, double t, int steps);

/// Equal-step count for covering |t| with steps no longer than h.
int steps_for(double t, double h);

/// A sampled integral curve. Samples are stored flat with stride `dim`.
struct Curve {
  int dim = 2;
  std::vector<double> t;
  std::vector<double> pos;
  std::vector<double> vel;
  Vec base_point;        // position at t = 0
  Vec initial_velocity;  // velocity at t = 0
  double step = 0.0;
  bool exited = false;   // integration was clipped at the region boundary

  std::size_t size() const { return t.size(); }
  Vec position(std::size_t i) const { return Eigen::Map<const Vec>(&pos[i * dim], dim); }
  Vec velocity(std::size_t i) const { return Eigen::Map<const Vec>(&vel[i * dim], dim); }
  /// Index of the sample at t = 0.
  std::size_t base_index() const;
  void push_back(double time, const PhaseState& s);
};

struct TimeSpan {
  double lo = 0.0;  // <= 0
  double hi = 1.0;  // >= 0
};

struct IntegrationOptions {
  double tol_ode = 1e-3;
  bool check_residual = true;
  /// Clip region (negative inside). Defaults to the generator box.
  Region clip;
};

/// Samples the solution of x'' = G(x, x'), x(0) = x0, x'(0) = xi0 on a uniform
/// grid of step h over the span. Integration stops at the first exterior node
/// when the curve leaves the clip region; the exit is bisected to within h^2
/// and `exited` is set.
Curve integrate_curve(const Generator& gen, const Vec& x0, const Vec& xi0, TimeSpan span,
                      double h, const IntegrationOptions& opts = {});

/// Largest interior residual |x'' - G(x, x')| with central second differences.
double ode_residual(const Generator& gen, const Curve& curve);

/// States of the curve through (x0, xi0) at the given sorted times (which need
/// not contain 0). Throws StepTooLarge if the curve leaves the generator box.
std::vector<PhaseState> integrate_on_times(const Generator& gen, const Vec& x0, const Vec& xi0,
                                           const std::vector<double>& times);

struct ExpOptions {
  double h = 1e-3;
};

/// exp_x(t, xi): position at time t on the curve through x with direction xi.
Vec exponential_map(const Generator& gen, const Vec& x, double t, const Vec& xi,
                    const ExpOptions& opts = {});

/// Same, returning the full phase state.
PhaseState exponential_state(const Generator& gen, const Vec& x, double t, const Vec& xi,
                             const ExpOptions& opts = {});

/// Coordinate change x' = phi(x). Derivatives default to central differences.
struct ChartMap {
  int dim = 2;
  std::function<Vec(const Vec&)> forward;
  std::function<Vec(const Vec&)> inverse;
  std::function<Mat(const Vec&)> jacobian;                   // d x'^i / d x^k, optional
  std::function<std::vector<Mat>(const Vec&)> second_derivative;  // [i](j,k) = d^2 x'^i / dx^j dx^k
  Box image_box;  // validity box in x' coordinates
  double fd_step = 1e-5;
  double tol_chart = 1e-8;

  Mat jacobian_at(const Vec& x) const;
  std::vector<Mat> second_derivative_at(const Vec& x) const;
};

ChartMap identity_chart(const Box& box);

/// Generator in the new chart: G'(x', xi') = D phi G(x, xi) + D^2 phi [xi, xi]
/// with x = phi^{-1}(x'), xi = (D phi)^{-1} xi'. Curves of G' are chart images
/// of curves of G.
Generator transform_generator(const Generator& gen, const ChartMap& chart);

/// Maps a phase state through the chart.
PhaseState push_forward(const ChartMap& chart, const PhaseState& s);

/// Comparison of a curve under G and a perturbed generator with identical
/// initial data against (delta/k)(e^{kt} - 1).
struct GronwallCheck {
  double delta = 0.0;      // sup |G - G~| on the sampled phase region
  double lipschitz = 0.0;  // empirical Lipschitz constant of (xi, G)
  double horizon = 0.0;
  double bound = 0.0;                 // at the horizon
  double measured_phase = 0.0;        // sup_t |(x, xi) - (x~, xi~)|
  double measured_position = 0.0;     // sup_t |x - x~|
  double worst_ratio = 0.0;           // max_t measured(t) / bound(t)
  std::vector<double> times;
  std::vector<double> deviation;      // phase deviation per time
  std::vector<double> bound_trace;
};

GronwallCheck gronwall_check(const Generator& base, const Generator& perturbed, const Vec& x0,
                             const Vec& xi0, double horizon, double h,
                             double tube_radius = 0.25, unsigned seed = 7);

}  // namespace curvetomo
