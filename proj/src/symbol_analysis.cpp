#include "curvetomo/symbol_analysis.hpp"

#include <algorithm>
#include <exception>
#include <optional>
#include <sstream>

#include <Eigen/Dense>

namespace curvetomo {

namespace {

// Gnomonic chart of the sphere centred at c: coordinates of a unit vector u.
Vec chart_coords(const Vec& c, const std::vector<Vec>& basis, const Vec& u) {
  Vec a(basis.size());
  const double d = u.dot(c);
  for (std::size_t k = 0; k < basis.size(); ++k) a[k] = u.dot(basis[k]) / d;
  return a;
}

Vec chart_point(const Vec& c, const std::vector<Vec>& basis, const Vec& a) {
  Vec u = c;
  for (std::size_t k = 0; k < basis.size(); ++k) u += a[k] * basis[k];
  return u.normalized();
}

Vec perp2(const Vec& v) { return vec2(-v[1], v[0]); }

}  // namespace

PolarKernel::PolarKernel(const CurveFamily& fam, const Weight& w, double eps_diag, double h)
    : fam_(&fam), w_(w), eps_(eps_diag), h_(h) {
  if (!(eps_diag > 0.0)) throw std::invalid_argument("PolarKernel: eps_diag must be positive");
}

double PolarKernel::lambda(const Vec& x, const Vec& v) const { return fam_->gen.lambda(x, v); }

PhaseState PolarKernel::exp(const Vec& x, double t, const Vec& v) const {
  const Vec dir = v.normalized();
  PhaseState s{x, lambda(x, dir) * dir};
  if (t == 0.0) return s;
  // Step count fixed per kernel so the map is smooth in t.
  const int steps = std::max(16, steps_for(eps_, h_));
  return advance(fam_->gen, s, t, steps);
}

Vec PolarKernel::m(const Vec& x, double t, const Vec& v) const {
  if (t == 0.0) return lambda(x, v.normalized()) * v.normalized();
  return (exp(x, t, v).x - x) / t;
}

PolarPoint PolarKernel::polar(const Vec& x, double t, const Vec& v) const {
  const Vec mm = m(x, t, v);
  const double n = mm.norm();
  return {t * n, mm / n};
}

double PolarKernel::jacobian(const Vec& x, double t, const Vec& v) const {
  const int n = static_cast<int>(x.size());
  const Vec v0 = v.normalized();
  const auto ev = tangent_basis(v0);
  const PolarPoint p0 = polar(x, t, v0);
  const auto ew = tangent_basis(p0.omega);
  Mat jac(n, n);
  auto column = [&](int col, double dt, const Vec& da) {
    const Vec vp = chart_point(v0, ev, da), vm = chart_point(v0, ev, -da);
    const PolarPoint pp = polar(x, t + dt, vp), pm = polar(x, t - dt, vm);
    jac(0, col) = (pp.r - pm.r) / (2.0 * fd_);
    const Vec ap = chart_coords(p0.omega, ew, pp.omega), am = chart_coords(p0.omega, ew, pm.omega);
    for (int k = 0; k < n - 1; ++k) jac(k + 1, col) = (ap[k] - am[k]) / (2.0 * fd_);
  };
  column(0, fd_, Vec::Zero(n - 1));
  for (int k = 0; k < n - 1; ++k) {
    Vec da = Vec::Zero(n - 1);
    da[k] = fd_;
    column(k + 1, 0.0, da);
  }
  return jac.determinant();
}

PolarTime PolarKernel::inverse(const Vec& x, double r, const Vec& omega) const {
  const Vec w0 = omega.normalized();
  if (r == 0.0) return {0.0, w0};
  const int n = static_cast<int>(x.size());
  const auto ew = tangent_basis(w0);

  // Unknowns: t and the chart coordinates of v around omega.
  auto residual = [&](const Vec& q, double target) {
    const PolarPoint p = polar(x, q[0], chart_point(w0, ew, q.tail(n - 1)));
    Vec f(n);
    f[0] = p.r - target;
    f.tail(n - 1) = chart_coords(w0, ew, p.omega);
    return f;
  };
  auto newton = [&](Vec q, double target) -> std::optional<Vec> {
    for (int it = 0; it <= 20; ++it) {
      const Vec f = residual(q, target);
      if (f.norm() <= 1e-10) return q;
      if (it == 20) break;
      Mat jac(n, n);
      for (int k = 0; k < n; ++k) {
        Vec dq = Vec::Zero(n);
        dq[k] = 1e-7;
        jac.col(k) = (residual(q + dq, target) - residual(q - dq, target)) / 2e-7;
      }
      q -= jac.partialPivLu().solve(f);
      if (!q.allFinite()) break;
    }
    return std::nullopt;
  };
  auto result = [&](const Vec& q) { return PolarTime{q[0], chart_point(w0, ew, q.tail(n - 1))}; };

  Vec seed = Vec::Zero(n);
  seed[0] = r / lambda(x, w0);
  if (auto q = newton(seed, r)) return result(*q);
  // Fallback: solve at a halved radius, then extrapolate back up by doubling.
  for (int depth = 1; depth <= 6; ++depth) {
    double cur = r / std::pow(2.0, depth);
    Vec q = Vec::Zero(n);
    q[0] = cur / lambda(x, w0);
    auto sol = newton(q, cur);
    while (sol && cur != r) {
      const double next = std::abs(2.0 * cur) >= std::abs(r) ? r : 2.0 * cur;
      Vec guess = *sol;
      guess[0] *= next / cur;
      guess.tail(n - 1) *= next / cur;
      sol = newton(guess, next);
      cur = next;
    }
    if (sol) return result(*sol);
  }
  throw NewtonDivergence("polar kernel: (r, omega) -> (t, v) inversion failed");
}

double PolarKernel::alpha_sharp(const Vec& x, const Vec& v) const {
  const auto a = trace_to_anchor(*fam_, x, v.normalized(), fam_->res.h);
  return a ? fam_->manifold.alpha_at(a->point) : 0.0;
}

double PolarKernel::j_flat(const Vec& x, const Vec& v) const {
  const int n = static_cast<int>(x.size());
  const Vec v0 = v.normalized();
  const double ht = fam_->res.h;
  const auto base = trace_to_anchor(*fam_, x, v0, ht);
  if (!base) return 0.0;
  const auto ez = tangent_basis(base->point.normal);
  const auto et = tangent_basis(base->point.theta);
  const auto ev = tangent_basis(v0);
  const int m = 2 * n - 1;
  Mat jac(m, m);
  const double d = 1e-5;
  auto coords = [&](const Anchor& a) {
    Vec c(m);
    for (int k = 0; k < n - 1; ++k) {
      c[k] = a.point.z.dot(ez[k]);
      c[n - 1 + k] = a.point.theta.dot(et[k]);
    }
    c[m - 1] = a.t;
    return c;
  };
  auto column = [&](int col, const Vec& xp, const Vec& vp, const Vec& xm, const Vec& vm) {
    const auto ap = trace_to_anchor(*fam_, xp, vp, ht);
    const auto am = trace_to_anchor(*fam_, xm, vm, ht);
    if (!ap || !am || ap->point.patch != am->point.patch)
      throw DomainExit("j_flat: neighbouring curves leave the family");
    jac.col(col) = (coords(*ap) - coords(*am)) / (2.0 * d);
  };
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e[i] = d;
    column(i, x + e, v0, x - e, v0);
  }
  for (int k = 0; k < n - 1; ++k)
    column(n + k, x, (v0 + d * ev[k]).normalized(), x, (v0 - d * ev[k]).normalized());
  return fam_->manifold.sigma_at(base->point) * std::abs(jac.determinant());
}

Complex PolarKernel::b(const Vec& x, double t, const Vec& v) const {
  const Vec v0 = v.normalized();
  const double a = alpha_sharp(x, v0);
  if (a == 0.0) return 0.0;
  const double jf = j_flat(x, v0);
  const Vec xi0 = lambda(x, v0) * v0;
  if (w_.is_unit()) return a * a * jf;
  const PhaseState s = exp(x, t, v0);
  return a * a * std::conj(w_(x, xi0)) * w_(s.x, s.xi) * jf;
}

Complex PolarKernel::b0(const Vec& x, const Vec& v) const { return b(x, 0.0, v); }

Complex PolarKernel::b1(const Vec& x, double t, const Vec& v) const {
  if (t == 0.0) return (b(x, fd_, v) - b(x, -fd_, v)) / (2.0 * fd_);
  return (b(x, t, v) - b0(x, v)) / t;
}

double PolarKernel::j0(const Vec& x, const Vec& v) const { return 1.0 / lambda(x, v.normalized()); }

double PolarKernel::j1(const Vec& x, double t, const Vec& v) const {
  if (t == 0.0)
    return (1.0 / jacobian(x, fd_, v) - 1.0 / jacobian(x, -fd_, v)) / (2.0 * fd_);
  return (1.0 / jacobian(x, t, v) - j0(x, v)) / t;
}

double PolarKernel::chi(double t) const {
  return 1.0 - c2_step((std::abs(t) - 0.5 * eps_) / (0.5 * eps_));
}

Complex PolarKernel::amplitude(const Vec& x, double r, const Vec& omega) const {
  if (r == 0.0) return b0(x, omega) * j0(x, omega);
  const PolarTime tv = inverse(x, r, omega);
  const double c = chi(tv.t);
  if (c == 0.0) return 0.0;
  return c * b(x, tv.t, tv.v) / jacobian(x, tv.t, tv.v);
}

Amplitude PolarKernel::as_amplitude() const {
  return [this](const Vec& x, double r, const Vec& omega) { return amplitude(x, r, omega); };
}

double default_eps_diag(const CurveFamily& fam, std::size_t sample) {
  double tmin = INFINITY;
  const std::size_t n = fam.active.size();
  if (n == 0) throw EmptyFamily("default_eps_diag: no active curves");
  const std::size_t stride = std::max<std::size_t>(1, n / std::max<std::size_t>(1, sample));
  Curve scratch;
  for (std::size_t i = 0; i < n; i += stride) {
    const Curve& c = fam.curve(fam.active[i], scratch);
    tmin = std::min(tmin, conjugate_points(fam.gen, c).first_positive);
  }
  return std::min(0.25, 0.1 * tmin);
}

namespace {

void check_covector(const Vec& xi) {
  if (!(xi.norm() > 0.0)) throw ZeroCovector("symbol: zero covector");
}

// Unit vectors of the great circle orthogonal to xi_hat.
std::vector<Vec> great_circle(int dim, const Vec& xih, int nodes) {
  if (dim == 2) return {perp2(xih), Vec(-perp2(xih))};
  const auto e = tangent_basis(xih);
  std::vector<Vec> out;
  for (int k = 0; k < nodes; ++k) {
    const double s = 2.0 * kPi * k / nodes;
    out.push_back(std::cos(s) * e[0] + std::sin(s) * e[1]);
  }
  return out;
}

double circle_weight(int dim, int nodes) { return dim == 2 ? 1.0 : 2.0 * kPi / nodes; }

}  // namespace

Complex principal_symbol(const Amplitude& a, int dim, const Vec& x, const Vec& xi,
                         int circle_nodes) {
  check_covector(xi);
  const double len = xi.norm();
  const Vec xih = xi / len;
  Complex acc = 0.0;
  for (const Vec& w : great_circle(dim, xih, circle_nodes)) acc += a(x, 0.0, w);
  return 2.0 * kPi / len * circle_weight(dim, circle_nodes) * acc;
}

Complex principal_symbol(const PolarKernel& pk, const Vec& x, const Vec& xi) {
  return principal_symbol(pk.as_amplitude(), pk.family().gen.dim, x, xi);
}

Complex symbol_k1(const Amplitude& a, int dim, const Vec& x, const Vec& xi, double step,
                  double dr, int circle_nodes) {
  check_covector(xi);
  const double len = xi.norm();
  const Vec xih = xi / len;
  auto dr_a = [&](const Vec& w) { return (a(x, dr, w) - a(x, -dr, w)) / (2.0 * dr); };
  Complex acc = 0.0;
  for (const Vec& w : great_circle(dim, xih, circle_nodes)) {
    const Vec wp = rotate_towards(w, xih, step), wm = rotate_towards(w, xih, -step);
    acc += (dr_a(wp) - dr_a(wm)) / (2.0 * step);
  }
  const Complex i(0.0, 1.0);
  return -2.0 * kPi * i / (len * len) * circle_weight(dim, circle_nodes) * acc;
}

Complex symbol_k1(const PolarKernel& pk, const Vec& x, const Vec& xi) {
  return symbol_k1(pk.as_amplitude(), pk.family().gen.dim, x, xi, pk.family().direction_spacing());
}

SymbolGrid ellipticity_scan(const PolarKernel& pk, const std::vector<Vec>& points,
                            const std::vector<Vec>& covectors) {
  SymbolGrid g;
  g.dim = pk.family().gen.dim;
  const std::size_t np = points.size(), nc = covectors.size();
  g.x.resize(np * nc);
  g.xi.resize(np * nc);
  g.a0.resize(np * nc);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (long q = 0; q < static_cast<long>(np * nc); ++q) {
    try {
      const Vec& x = points[q / nc];
      const Vec xi = covectors[q % nc].normalized();
      g.x[q] = x;
      g.xi[q] = xi;
      g.a0[q] = principal_symbol(pk, x, xi);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (std::size_t q = 0; q < g.a0.size(); ++q) {
    if (std::abs(g.a0[q]) < g.margin) {
      g.margin = std::abs(g.a0[q]);
      g.argmin = q;
    }
  }
  return g;
}

std::string symbol_csv(const SymbolGrid& g) {
  std::ostringstream os;
  os.precision(17);
  const int n = g.dim;
  for (int i = 0; i < n; ++i) os << "x" << i + 1 << ",";
  for (int i = 0; i < n; ++i) os << "xi" << i + 1 << ",";
  os << "re_a0,im_a0\n";
  for (std::size_t q = 0; q < g.a0.size(); ++q) {
    for (int i = 0; i < n; ++i) os << g.x[q][i] << ",";
    for (int i = 0; i < n; ++i) os << g.xi[q][i] << ",";
    os << g.a0[q].real() << "," << g.a0[q].imag() << "\n";
  }
  return os.str();
}

nlohmann::json symbol_summary(const SymbolGrid& g) {
  nlohmann::json j;
  j["samples"] = g.a0.size();
  j["margin"] = g.margin;
  if (!g.a0.empty()) {
    j["argmin_x"] = std::vector<double>(g.x[g.argmin].data(), g.x[g.argmin].data() + g.dim);
    j["argmin_xi"] = std::vector<double>(g.xi[g.argmin].data(), g.xi[g.argmin].data() + g.dim);
    double lo = INFINITY, hi = 0.0;
    for (const auto& a : g.a0) {
      lo = std::min(lo, std::abs(a));
      hi = std::max(hi, std::abs(a));
    }
    j["min_abs_a0"] = lo;
    j["max_abs_a0"] = hi;
  }
  return j;
}

std::vector<ProbeRow> oscillatory_probe(const CurveFamily& fam, const Weight& w, const Grid& grid,
                                        const Region& support, const Vec& x0, const Vec& xi,
                                        const std::vector<double>& freqs,
                                        const Amplitude& amplitude, double window_radius) {
  check_covector(xi);
  const Vec xih = xi.normalized();
  const double limit = kPi / grid.spacing.maxCoeff();
  for (double f : freqs)
    if (f > limit) throw FrequencyAliasing("oscillatory_probe: frequency above pi / dx");
  // Probe point snapped to the nearest node.
  std::size_t j0 = 0;
  for (std::size_t j = 0; j < grid.size(); ++j)
    if ((grid.point(j) - x0).norm() < (grid.point(j0) - x0).norm()) j0 = j;
  const Vec xn = grid.point(j0);
  std::vector<ProbeRow> rows;
  for (double lam : freqs) {
    const ScalarField f = ScalarField::sample(grid, support, [&](const Vec& x) {
      return smooth_bump(x, xn, window_radius) * std::exp(Complex(0.0, lam * x.dot(xih)));
    });
    const ScalarField nf = normal(fam, w, f);
    ProbeRow row;
    row.frequency = lam;
    row.measured = f.values[j0] == Complex(0.0) ? Complex(0.0) : nf.values[j0] / f.values[j0];
    row.predicted = principal_symbol(amplitude, grid.dim, xn, lam * xih);
    row.ratio_error = row.predicted == Complex(0.0)
                          ? std::abs(row.measured)
                          : std::abs(row.measured / row.predicted - 1.0);
    rows.push_back(row);
  }
  return rows;
}

std::string probe_csv(const std::vector<ProbeRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "frequency,re_measured,im_measured,re_predicted,im_predicted,ratio_error\n";
  for (const auto& r : rows)
    os << r.frequency << "," << r.measured.real() << "," << r.measured.imag() << ","
       << r.predicted.real() << "," << r.predicted.imag() << "," << r.ratio_error << "\n";
  return os.str();
}

Complex near_diagonal_apply(const Amplitude& a, const ScalarField& f, const Vec& x, double radius,
                            int radial_nodes, int angular_nodes) {
  const int dim = f.grid.dim;
  const double dr = 2.0 * radius / radial_nodes;
  std::vector<std::pair<Vec, double>> dirs;
  if (dim == 2) {
    for (int k = 0; k < angular_nodes; ++k) {
      const double s = 2.0 * kPi * (k + 0.3) / angular_nodes;
      dirs.emplace_back(vec2(std::cos(s), std::sin(s)), 2.0 * kPi / angular_nodes);
    }
  } else {
    const int nt = std::max(2, angular_nodes / 2);
    for (int i = 0; i < nt; ++i) {
      const double th = kPi * (i + 0.5) / nt;
      for (int k = 0; k < angular_nodes; ++k) {
        const double ph = 2.0 * kPi * (k + 0.3) / angular_nodes;
        dirs.emplace_back(vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)),
                          std::sin(th) * (kPi / nt) * (2.0 * kPi / angular_nodes));
      }
    }
  }
  Complex acc = 0.0;
  for (const auto& [w, wt] : dirs)
    for (int i = 0; i < radial_nodes; ++i) {
      const double r = -radius + (i + 0.5) * dr;
      const Complex av = a(x, r, w);
      if (av == Complex(0.0)) continue;
      acc += wt * dr * av * f.interpolate(x + r * w);
    }
  return acc;
}

Amplitude odd_part(const Amplitude& a) {
  return [a](const Vec& x, double r, const Vec& w) {
    return 0.5 * (a(x, r, w) - a(x, -r, Vec(-w)));
  };
}

Amplitude even_part(const Amplitude& a) {
  return [a](const Vec& x, double r, const Vec& w) {
    return 0.5 * (a(x, r, w) + a(x, -r, Vec(-w)));
  };
}

}  // namespace curvetomo
