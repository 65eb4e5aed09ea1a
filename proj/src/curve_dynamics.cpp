#include "curvetomo/curve_dynamics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <random>

namespace curvetomo {

PhaseState rk4_step(const Generator& gen, const PhaseState& s, double h) {
  const Vec k1x = s.xi;
  const Vec k1v = gen(s.x, s.xi);
  const Vec x2 = s.x + 0.5 * h * k1x;
  const Vec v2 = s.xi + 0.5 * h * k1v;
  const Vec k2v = gen(x2, v2);
  const Vec x3 = s.x + 0.5 * h * v2;
  const Vec v3 = s.xi + 0.5 * h * k2v;
  const Vec k3v = gen(x3, v3);
  const Vec x4 = s.x + h * v3;
  const Vec v4 = s.xi + h * k3v;
  const Vec k4v = gen(x4, v4);
  PhaseState out;
  out.x = s.x + (h / 6.0) * (k1x + 2.0 * v2 + 2.0 * v3 + v4);
  out.xi = s.xi + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  return out;
}

PhaseState advance(const Generator& gen, PhaseState s, double t, int steps) {
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) s = rk4_step(gen, s, h);
  return s;
}

int steps_for(double t, double h) {
  return std::max(1, static_cast<int>(std::ceil(std::abs(t) / h - 1e-9)));
}

std::size_t Curve::base_index() const {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] == 0.0) return i;
  return 0;
}

void Curve::push_back(double time, const PhaseState& s) {
  t.push_back(time);
  for (int k = 0; k < dim; ++k) {
    pos.push_back(s.x[k]);
    vel.push_back(s.xi[k]);
  }
}

namespace {

struct Sample {
  double t;
  PhaseState s;
};

// Integrates from t = 0 towards t_end (either sign) and returns the samples
// excluding the initial one.
std::vector<Sample> integrate_one_side(const Generator& gen, const PhaseState& start,
                                       double t_end, double h, const Region& clip,
                                       bool& exited) {
  std::vector<Sample> out;
  const double dir = t_end < 0 ? -1.0 : 1.0;
  const double total = std::abs(t_end);
  bool inside = clip(start.x) <= 1e-12;
  auto exit_measure = [&](const Vec& x) {
    const double b = gen.box.signed_distance(x);
    return inside ? std::max(clip(x), b) : b;
  };
  PhaseState s = start;
  double t = 0.0;
  while (t < total - 1e-12 * h) {
    const double step = std::min(h, total - t);
    PhaseState next = rk4_step(gen, s, dir * step);
    if (exit_measure(next.x) > 0.0) {
      double lo = 0.0, hi = step;
      while (hi - lo > h * h) {
        const double mid = 0.5 * (lo + hi);
        if (exit_measure(rk4_step(gen, s, dir * mid).x) > 0.0)
          hi = mid;
        else
          lo = mid;
      }
      out.push_back({dir * (t + hi), rk4_step(gen, s, dir * hi)});
      exited = true;
      return out;
    }
    if (!inside && clip(next.x) <= 0.0) inside = true;
    t += step;
    s = next;
    out.push_back({dir * t, s});
  }
  return out;
}

}  // namespace

Curve integrate_curve(const Generator& gen, const Vec& x0, const Vec& xi0, TimeSpan span,
                      double h, const IntegrationOptions& opts) {
  if (!(h > 0.0)) throw std::invalid_argument("integrate_curve: step must be positive");
  if (span.lo > 0.0 || span.hi < 0.0)
    throw std::invalid_argument("integrate_curve: span must contain t = 0");
  if (!gen.box.contains(x0, 1e-9)) throw DomainExit("integrate_curve: start outside the M1 box");

  const Region clip = opts.clip ? opts.clip : box_region(gen.box);
  const PhaseState start{x0, xi0};
  Curve curve;
  curve.dim = gen.dim;
  curve.base_point = x0;
  curve.initial_velocity = xi0;
  curve.step = h;

  bool exited = false;
  if (span.lo < 0.0) {
    auto back = integrate_one_side(gen, start, span.lo, h, clip, exited);
    for (auto it = back.rbegin(); it != back.rend(); ++it) curve.push_back(it->t, it->s);
  }
  curve.push_back(0.0, start);
  if (span.hi > 0.0) {
    auto fwd = integrate_one_side(gen, start, span.hi, h, clip, exited);
    for (const auto& smp : fwd) curve.push_back(smp.t, smp.s);
  }
  curve.exited = exited;
  if (curve.size() < 3) {
    // K >= 2 samples beyond the start; fall back to a finer step for very short spans.
    if (h > 1e-9 && (span.hi - span.lo) > 0.0 && !exited)
      return integrate_curve(gen, x0, xi0, span, h / 4.0, opts);
  }
  if (opts.check_residual) {
    const double r = ode_residual(gen, curve);
    if (r > opts.tol_ode)
      throw StepTooLarge("integrate_curve: discrete ODE residual " + std::to_string(r) +
                         " exceeds tol_ode " + std::to_string(opts.tol_ode));
  }
  return curve;
}

double ode_residual(const Generator& gen, const Curve& curve) {
  double worst = 0.0;
  const int n = curve.dim;
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    const double h1 = curve.t[i] - curve.t[i - 1];
    const double h2 = curve.t[i + 1] - curve.t[i];
    if (std::abs(h1 - h2) > 1e-9 * std::max(h1, h2)) continue;
    const Vec xm = curve.position(i - 1), x = curve.position(i), xp = curve.position(i + 1);
    const Vec acc = (xp - 2.0 * x + xm) / (h1 * h1);
    const double roundoff =
        16.0 * std::numeric_limits<double>::epsilon() * (1.0 + x.cwiseAbs().maxCoeff()) / (h1 * h1);
    const double r = (acc - gen(x, curve.velocity(i))).norm() - roundoff;
    worst = std::max(worst, r);
    (void)n;
  }
  return std::max(worst, 0.0);
}

std::vector<PhaseState> integrate_on_times(const Generator& gen, const Vec& x0, const Vec& xi0,
                                           const std::vector<double>& times) {
  std::vector<PhaseState> out(times.size());
  const PhaseState start{x0, xi0};
  auto check = [&](const PhaseState& s) {
    if (!gen.box.contains(s.x, 1e-9))
      throw StepTooLarge("integrate_on_times: neighbour curve left the M1 box");
  };
  // Non-negative times, ascending.
  PhaseState s = start;
  double prev = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0) continue;
    if (times[i] != prev) s = rk4_step(gen, s, times[i] - prev);
    check(s);
    out[i] = s;
    prev = times[i];
  }
  // Negative times, descending.
  s = start;
  prev = 0.0;
  for (std::size_t k = times.size(); k-- > 0;) {
    if (times[k] >= 0.0) continue;
    s = rk4_step(gen, s, times[k] - prev);
    check(s);
    out[k] = s;
    prev = times[k];
  }
  return out;
}

PhaseState exponential_state(const Generator& gen, const Vec& x, double t, const Vec& xi,
                             const ExpOptions& opts) {
  const double len = xi.norm();
  if (!(len > 0.0)) throw std::invalid_argument("exponential_map: zero direction");
  const Vec v = xi / len;
  PhaseState s{x, gen.lambda(x, v) * v};
  if (t == 0.0) return s;
  const int steps = steps_for(t, opts.h);
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    s = rk4_step(gen, s, h);
    if (!gen.box.contains(s.x, 1e-9))
      throw DomainExit("exponential_map: curve left the M1 box before time t");
  }
  return s;
}

Vec exponential_map(const Generator& gen, const Vec& x, double t, const Vec& xi,
                    const ExpOptions& opts) {
  return exponential_state(gen, x, t, xi, opts).x;
}

Mat ChartMap::jacobian_at(const Vec& x) const {
  if (jacobian) return jacobian(x);
  Mat d(dim, dim);
  for (int k = 0; k < dim; ++k) {
    Vec xp = x, xm = x;
    xp[k] += fd_step;
    xm[k] -= fd_step;
    d.col(k) = (forward(xp) - forward(xm)) / (2.0 * fd_step);
  }
  return d;
}

std::vector<Mat> ChartMap::second_derivative_at(const Vec& x) const {
  if (second_derivative) return second_derivative(x);
  std::vector<Mat> out(dim, Mat::Zero(dim, dim));
  if (jacobian) {
    for (int k = 0; k < dim; ++k) {
      Vec xp = x, xm = x;
      xp[k] += fd_step;
      xm[k] -= fd_step;
      const Mat dj = (jacobian(xp) - jacobian(xm)) / (2.0 * fd_step);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) out[i](j, k) = dj(i, j);
    }
    for (auto& m : out) m = 0.5 * (m + m.transpose()).eval();
    return out;
  }
  const double s = 1e-4;
  for (int j = 0; j < dim; ++j) {
    for (int k = j; k < dim; ++k) {
      Vec pp = x, pm = x, mp = x, mm = x;
      pp[j] += s; pp[k] += s;
      pm[j] += s; pm[k] -= s;
      mp[j] -= s; mp[k] += s;
      mm[j] -= s; mm[k] -= s;
      const Vec d = (forward(pp) - forward(pm) - forward(mp) + forward(mm)) / (4.0 * s * s);
      for (int i = 0; i < dim; ++i) out[i](j, k) = out[i](k, j) = d[i];
    }
  }
  return out;
}

ChartMap identity_chart(const Box& box) {
  ChartMap c;
  c.dim = box.dim();
  c.forward = [](const Vec& x) { return x; };
  c.inverse = [](const Vec& x) { return x; };
  const int n = c.dim;
  c.jacobian = [n](const Vec&) { return Mat::Identity(n, n); };
  c.second_derivative = [n](const Vec&) { return std::vector<Mat>(n, Mat::Zero(n, n)); };
  c.image_box = box;
  return c;
}

Generator transform_generator(const Generator& gen, const ChartMap& chart) {
  Generator out;
  out.name = gen.name + "@chart";
  out.dim = gen.dim;
  out.box = chart.image_box;
  out.has_reference_solution = false;
  out.accel = [gen, chart](const Vec& xp, const Vec& xip) -> Vec {
    const Vec x = chart.inverse(xp);
    const Mat d = chart.jacobian_at(x);
    if (std::abs(d.determinant()) < chart.tol_chart)
      throw ChartSingular("transform_generator: chart Jacobian is singular");
    const Vec xi = d.partialPivLu().solve(xip);
    Vec a = d * gen(x, xi);
    const auto h = chart.second_derivative_at(x);
    for (int i = 0; i < gen.dim; ++i) a[i] += xi.dot(h[i] * xi);
    return a;
  };
  out.speed = [gen, chart](const Vec& xp, const Vec& vp) -> double {
    const Vec x = chart.inverse(xp);
    const Mat d = chart.jacobian_at(x);
    Vec v = d.partialPivLu().solve(vp);
    v.normalize();
    return (d * (gen.lambda(x, v) * v)).norm();
  };
  // Jacobian check and speed bounds on a lattice of the image box, restricted
  // to points whose preimage lies in the original box.
  double lo = INFINITY, hi = 0.0;
  const int m = 9;
  const Box& b = chart.image_box;
  const int m3 = gen.dim == 3 ? m : 1;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m3; ++k) {
        Vec xp = b.lo;
        xp[0] = b.lo[0] + (b.hi[0] - b.lo[0]) * i / (m - 1);
        xp[1] = b.lo[1] + (b.hi[1] - b.lo[1]) * j / (m - 1);
        if (gen.dim == 3) xp[2] = b.lo[2] + (b.hi[2] - b.lo[2]) * k / (m - 1);
        const Vec x = chart.inverse(xp);
        if (!x.allFinite() || !gen.box.contains(x)) continue;
        if (std::abs(chart.jacobian_at(x).determinant()) < chart.tol_chart)
          throw ChartSingular("transform_generator: chart Jacobian is singular");
        for (int a = 0; a < 8; ++a) {
          Vec v = Vec::Zero(gen.dim);
          v[0] = std::cos(2 * kPi * a / 8);
          v[1] = std::sin(2 * kPi * a / 8);
          const double s = out.speed(xp, v);
          if (std::isfinite(s)) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
          }
        }
      }
  out.speed_min = std::isfinite(lo) ? lo : gen.speed_min;
  out.speed_max = hi > 0 ? hi : gen.speed_max;
  return out;
}

PhaseState push_forward(const ChartMap& chart, const PhaseState& s) {
  return {chart.forward(s.x), chart.jacobian_at(s.x) * s.xi};
}

GronwallCheck gronwall_check(const Generator& base, const Generator& perturbed, const Vec& x0,
                             const Vec& xi0, double horizon, double h, double tube_radius,
                             unsigned seed) {
  GronwallCheck out;
  out.horizon = horizon;
  const int steps = steps_for(horizon, h);
  std::vector<double> times(steps + 1);
  for (int i = 0; i <= steps; ++i) times[i] = horizon * i / steps;
  const auto a = integrate_on_times(base, x0, xi0, times);
  const auto b = integrate_on_times(perturbed, x0, xi0, times);

  const int n = base.dim;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  auto random_ball = [&]() {
    Vec u(n);
    do {
      for (int k = 0; k < n; ++k) u[k] = unif(rng);
    } while (u.squaredNorm() > 1.0);
    return u;
  };
  auto phase_jacobian = [&](const Vec& x, const Vec& xi) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    const double e = 1e-6;
    for (int k = 0; k < n; ++k) {
      d(k, n + k) = 1.0;
      Vec xp = x, xm = x, vp = xi, vm = xi;
      xp[k] += e;
      xm[k] -= e;
      vp[k] += e;
      vm[k] -= e;
      const Vec gx = (base(xp, xi) - base(xm, xi)) / (2 * e);
      const Vec gv = (base(x, vp) - base(x, vm)) / (2 * e);
      for (int i = 0; i < n; ++i) {
        d(n + i, k) = gx[i];
        d(n + i, n + k) = gv[i];
      }
    }
    return d;
  };

  const int anchors = std::min<int>(64, static_cast<int>(times.size()));
  for (int ai = 0; ai < anchors; ++ai) {
    const auto& s = a[(times.size() - 1) * ai / std::max(1, anchors - 1)];
    for (int r = 0; r < 16; ++r) {
      const Vec x = s.x + tube_radius * random_ball();
      const Vec xi = s.xi + tube_radius * random_ball();
      if (!base.box.contains(x)) continue;
      out.delta = std::max(out.delta, (base(x, xi) - perturbed(x, xi)).norm());
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(phase_jacobian(x, xi));
      out.lipschitz = std::max(out.lipschitz, svd.singularValues()[0]);
    }
    // The trajectories themselves are always part of the sampled region.
    out.delta = std::max(out.delta, (base(s.x, s.xi) - perturbed(s.x, s.xi)).norm());
  }

  out.times = times;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double dx = (a[i].x - b[i].x).norm();
    const double dv = (a[i].xi - b[i].xi).norm();
    const double dev = std::sqrt(dx * dx + dv * dv);
    const double bound = out.delta / out.lipschitz * std::expm1(out.lipschitz * times[i]);
    out.deviation.push_back(dev);
    out.bound_trace.push_back(bound);
    out.measured_phase = std::max(out.measured_phase, dev);
    out.measured_position = std::max(out.measured_position, dx);
    if (times[i] > 0 && bound > 0) out.worst_ratio = std::max(out.worst_ratio, dev / bound);
  }
  out.bound = out.bound_trace.back();
  return out;
}

}  // namespace curvetomo
