#include "curvetomo/family_geometry.hpp"

#include <algorithm>
#include <exception>
#include <sstream>

namespace curvetomo {

HPoint Patch::make(const Params& u, const Params& b, int index) const {
  HPoint p;
  p.patch = index;
  p.u = u;
  p.b = b;
  p.z = point(u);
  p.normal = normal(u);
  p.theta = direction_at(u, b);
  return p;
}

Patch circle_patch(const Vec& center, double radius) {
  Patch p;
  p.kind = "circle";
  p.dim = 2;
  p.surface = {{0.0, 2.0 * kPi, true}};
  p.direction = {{-0.5 * kPi, 0.5 * kPi, false}};
  p.point = [center, radius](const Params& u) {
    return Vec(center + radius * vec2(std::cos(u[0]), std::sin(u[0])));
  };
  p.normal = [](const Params& u) { return vec2(-std::cos(u[0]), -std::sin(u[0])); };
  p.direction_at = [](const Params& u, const Params& b) {
    const double a = u[0] + kPi + b[0];
    return vec2(std::cos(a), std::sin(a));
  };
  p.area_element = [radius](const Params&) { return radius; };
  p.angle_element = [](const Params&, const Params&) { return 1.0; };
  p.level = [center, radius](const Vec& x) { return (x - center).norm() - radius; };
  p.locate_surface = [center](const Vec& z) {
    double a = angle_of(z - center);
    if (a < 0) a += 2.0 * kPi;
    return Params{a, 0.0};
  };
  p.locate_direction = [](const Params& u, const Vec& theta) {
    return Params{wrap_angle(angle_of(theta) - u[0] - kPi), 0.0};
  };
  return p;
}

namespace {

Vec sphere_dir(double th, double ph) {
  return vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
}
Vec sphere_eth(double th, double ph) {
  return vec3(std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th));
}
Vec sphere_eph(double ph) { return vec3(-std::sin(ph), std::cos(ph), 0.0); }

}  // namespace

Patch sphere_patch(const Vec& center, double radius) {
  Patch p;
  p.kind = "sphere";
  p.dim = 3;
  p.surface = {{0.0, kPi, false}, {0.0, 2.0 * kPi, true}};
  p.direction = {{0.0, 0.5 * kPi, false}, {0.0, 2.0 * kPi, true}};
  p.point = [center, radius](const Params& u) {
    return Vec(center + radius * sphere_dir(u[0], u[1]));
  };
  p.normal = [](const Params& u) { return Vec(-sphere_dir(u[0], u[1])); };
  p.direction_at = [](const Params& u, const Params& b) {
    const Vec nu = -sphere_dir(u[0], u[1]);
    const Vec t = std::cos(b[1]) * sphere_eth(u[0], u[1]) + std::sin(b[1]) * sphere_eph(u[1]);
    return Vec(std::cos(b[0]) * nu + std::sin(b[0]) * t);
  };
  p.area_element = [radius](const Params& u) { return radius * radius * std::sin(u[0]); };
  p.angle_element = [](const Params&, const Params& b) { return std::sin(b[0]); };
  p.level = [center, radius](const Vec& x) { return (x - center).norm() - radius; };
  p.locate_surface = [center](const Vec& z) {
    const Vec d = (z - center).normalized();
    double ph = std::atan2(d[1], d[0]);
    if (ph < 0) ph += 2.0 * kPi;
    return Params{std::acos(std::clamp(d[2], -1.0, 1.0)), ph};
  };
  p.locate_direction = [](const Params& u, const Vec& theta) {
    const Vec nu = -sphere_dir(u[0], u[1]);
    const double beta = std::acos(std::clamp(theta.dot(nu), -1.0, 1.0));
    double psi = std::atan2(theta.dot(sphere_eph(u[1])), theta.dot(sphere_eth(u[0], u[1])));
    if (psi < 0) psi += 2.0 * kPi;
    return Params{beta, psi};
  };
  return p;
}

double axis_spacing(const ParamAxis& axis, int n) { return (axis.hi - axis.lo) / n; }

std::vector<double> axis_nodes(const ParamAxis& axis, int n) {
  std::vector<double> out(n);
  const double d = axis_spacing(axis, n);
  for (int i = 0; i < n; ++i) out[i] = axis.lo + (axis.periodic ? i : i + 0.5) * d;
  return out;
}

namespace {

int count_for(const std::vector<int>& counts, std::size_t axis) {
  if (counts.empty()) throw std::invalid_argument("family resolution: empty count list");
  const int n = counts[std::min(axis, counts.size() - 1)];
  if (n < 1) throw std::invalid_argument("family resolution: counts must be positive");
  return n;
}

}  // namespace

const Curve& CurveFamily::curve(std::size_t c, Curve& scratch) const {
  if (c < curves.size() && curves[c].size() > 0) return curves[c];
  scratch = integrate(c);
  return scratch;
}

Curve CurveFamily::integrate_from(const HPoint& p) const {
  const double mu = manifold.mu_at(gen, p);
  const bool explicit_end = static_cast<bool>(manifold.l_plus);
  const double end = explicit_end ? manifold.l_plus(p) : manifold.l_max;
  IntegrationOptions opts;
  opts.tol_ode = res.tol_ode;
  opts.clip = manifold.region;
  Curve c = integrate_curve(gen, p.z, mu * p.theta, {0.0, end}, res.h, opts);
  if (explicit_end && c.exited && c.t.back() < end - res.h)
    throw DomainExit("family curve left M1 before its end time");
  return c;
}

Curve CurveFamily::integrate(std::size_t c) const { return integrate_from(nodes.at(c)); }

double CurveFamily::direction_spacing() const {
  double d = INFINITY;
  for (const auto& p : manifold.patches)
    for (std::size_t a = 0; a < p.direction.size(); ++a)
      d = std::min(d, axis_spacing(p.direction[a], count_for(res.direction, a)));
  return d;
}

double CurveFamily::surface_spacing() const {
  double d = INFINITY;
  for (const auto& p : manifold.patches)
    for (std::size_t a = 0; a < p.surface.size(); ++a)
      d = std::min(d, axis_spacing(p.surface[a], count_for(res.surface, a)));
  return d;
}

namespace {

void integrate_active(CurveFamily& fam) {
  if (!fam.res.cache) return;
  fam.curves.resize(fam.nodes.size());
  std::exception_ptr failure;
  const long n = static_cast<long>(fam.active.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < n; ++i) {
    try {
      const std::size_t c = fam.active[i];
      fam.curves[c] = fam.integrate(c);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

CurveFamily build_family(const Generator& gen, const InitialManifold& im,
                         const FamilyResolution& res) {
  if (im.patches.empty()) throw std::invalid_argument("build_family: no patches");
  CurveFamily fam;
  fam.gen = gen;
  fam.manifold = im;
  fam.res = res;

  for (std::size_t pi = 0; pi < im.patches.size(); ++pi) {
    const Patch& patch = im.patches[pi];
    const int k = patch.dim - 1;
    std::vector<std::vector<double>> su(k), sb(k);
    double du = 1.0, db = 1.0;
    for (int a = 0; a < k; ++a) {
      const int nu = count_for(res.surface, a), nb = count_for(res.direction, a);
      su[a] = axis_nodes(patch.surface[a], nu);
      sb[a] = axis_nodes(patch.direction[a], nb);
      du *= axis_spacing(patch.surface[a], nu);
      db *= axis_spacing(patch.direction[a], nb);
    }
    const std::size_t n_u0 = su[0].size(), n_u1 = k > 1 ? su[1].size() : 1;
    const std::size_t n_b0 = sb[0].size(), n_b1 = k > 1 ? sb[1].size() : 1;
    for (std::size_t i0 = 0; i0 < n_u0; ++i0)
      for (std::size_t i1 = 0; i1 < n_u1; ++i1)
        for (std::size_t j0 = 0; j0 < n_b0; ++j0)
          for (std::size_t j1 = 0; j1 < n_b1; ++j1) {
            Params u{su[0][i0], k > 1 ? su[1][i1] : 0.0};
            Params b{sb[0][j0], k > 1 ? sb[1][j1] : 0.0};
            HPoint p = patch.make(u, b, static_cast<int>(pi));
            const double a = im.alpha_at(p);
            if (a < 0.0) throw std::invalid_argument("build_family: negative cutoff");
            if (a > 0.0 && std::abs(p.theta.dot(p.normal)) < im.trans_min)
              throw TransversalityViolation("build_family: direction tangent to the initial surface");
            fam.nodes.push_back(p);
            fam.alpha.push_back(a);
            fam.weight.push_back(im.sigma_at(p) * patch.area_element(u) *
                                 patch.angle_element(u, b) * du * db);
            fam.speed.push_back(im.mu_at(gen, p));
            if (a > 0.0) fam.active.push_back(fam.nodes.size() - 1);
          }
  }

  integrate_active(fam);
  return fam;
}

CurveFamily build_family_nodes(const Generator& gen, const InitialManifold& im,
                               const std::vector<HPoint>& nodes, const FamilyResolution& res) {
  CurveFamily fam;
  fam.gen = gen;
  fam.manifold = im;
  fam.res = res;
  for (const HPoint& p : nodes) {
    const Patch& patch = im.patches.at(p.patch);
    const double a = im.alpha_at(p);
    if (a < 0.0) throw std::invalid_argument("build_family: negative cutoff");
    if (a > 0.0 && std::abs(p.theta.dot(p.normal)) < im.trans_min)
      throw TransversalityViolation("build_family: direction tangent to the initial surface");
    fam.nodes.push_back(p);
    fam.alpha.push_back(a);
    fam.weight.push_back(im.sigma_at(p) * patch.area_element(p.u) * patch.angle_element(p.u, p.b));
    fam.speed.push_back(im.mu_at(gen, p));
    if (a > 0.0) fam.active.push_back(fam.nodes.size() - 1);
  }
  integrate_active(fam);
  return fam;
}

std::optional<Anchor> trace_to_anchor(const CurveFamily& fam, const Vec& x, const Vec& v,
                                      double h) {
  if (h <= 0.0) h = fam.res.h;
  const Generator& gen = fam.gen;
  const auto& patches = fam.manifold.patches;
  const Vec dir = v.normalized();
  PhaseState s{x, gen.lambda(x, dir) * dir};

  bool inside_any = false;
  for (const auto& p : patches) inside_any = inside_any || p.level(x) <= 0.0;
  if (!inside_any) return std::nullopt;

  double t = 0.0;
  const int max_steps = static_cast<int>(std::ceil(fam.manifold.l_max / h));
  for (int step = 0; step < max_steps; ++step) {
    const PhaseState next = rk4_step(gen, s, -h);
    int best = -1;
    double best_tau = INFINITY;
    for (std::size_t pi = 0; pi < patches.size(); ++pi) {
      const auto& lv = patches[pi].level;
      if (!(lv(s.x) <= 0.0 && lv(next.x) > 0.0)) continue;
      double lo = 0.0, hi = h;
      for (int it = 0; it < 60 && hi - lo > 1e-14; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (lv(rk4_step(gen, s, -mid).x) > 0.0)
          hi = mid;
        else
          lo = mid;
      }
      const double tau = 0.5 * (lo + hi);
      if (tau < best_tau) {
        best_tau = tau;
        best = static_cast<int>(pi);
      }
    }
    if (best >= 0) {
      const PhaseState at = rk4_step(gen, s, -best_tau);
      const Patch& patch = patches[best];
      const Params u = patch.locate_surface(at.x);
      const Vec theta = at.xi.normalized();
      const Params b = patch.locate_direction(u, theta);
      Anchor a;
      a.point = patch.make(u, b, best);
      a.t = t + best_tau;
      return a;
    }
    if (!gen.box.contains(next.x, 1e-9)) return std::nullopt;
    s = next;
    t += h;
  }
  return std::nullopt;
}

std::vector<std::vector<Vec>> jacobi_fields(const Generator& gen, const Curve& curve,
                                            Variation kind, double h_var, double scale) {
  const Vec x0 = curve.base_point;
  const Vec xi0 = curve.initial_velocity;
  const double len = xi0.norm();
  if (!(len > 0.0)) throw std::invalid_argument("jacobi_fields: zero initial velocity");
  const Vec dir = xi0 / len;
  const double ratio = len / gen.lambda(x0, dir);
  std::vector<std::vector<Vec>> out;
  for (const Vec& e : tangent_basis(dir)) {
    std::vector<PhaseState> plus, minus;
    if (kind == Variation::Direction) {
      const Vec vp = rotate_towards(dir, e, h_var * scale);
      const Vec vm = rotate_towards(dir, e, -h_var * scale);
      plus = integrate_on_times(gen, x0, ratio * gen.lambda(x0, vp) * vp, curve.t);
      minus = integrate_on_times(gen, x0, ratio * gen.lambda(x0, vm) * vm, curve.t);
    } else {
      plus = integrate_on_times(gen, x0 + h_var * scale * e, xi0, curve.t);
      minus = integrate_on_times(gen, x0 - h_var * scale * e, xi0, curve.t);
    }
    std::vector<Vec> field(curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i)
      field[i] = (plus[i].x - minus[i].x) / (2.0 * h_var);
    out.push_back(std::move(field));
  }
  return out;
}

ConjugateReport conjugate_points(const Generator& gen, const Curve& curve,
                                 const ConjugateOptions& opts) {
  ConjugateReport rep;
  rep.t = curve.t;
  const auto fields = jacobi_fields(gen, curve, Variation::Direction, opts.h_var);
  const int n = curve.dim;
  rep.det.resize(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    Mat m(n, n);
    m.col(0) = curve.velocity(i);
    for (int k = 1; k < n; ++k) m.col(k) = fields[k - 1][i];
    rep.det[i] = m.determinant();
  }

  const std::size_t base = curve.base_index();
  // Walk outwards from the base point on each side.
  auto scan = [&](int step) {
    double running = 0.0;
    std::vector<std::size_t> run;
    auto close_run = [&]() {
      if (run.empty()) return;
      std::size_t arg = run.front();
      for (std::size_t i : run)
        if (std::abs(rep.det[i]) < std::abs(rep.det[arg])) arg = i;
      double t = curve.t[arg];
      if (arg > 0 && arg + 1 < curve.size()) {
        const double ym = std::abs(rep.det[arg - 1]), y0 = std::abs(rep.det[arg]),
                     yp = std::abs(rep.det[arg + 1]);
        const double denom = ym - 2.0 * y0 + yp;
        const double hh = curve.t[arg + 1] - curve.t[arg];
        if (denom > 0.0) t += std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5) * hh;
      }
      rep.times.push_back(t);
      run.clear();
    };
    long i = static_cast<long>(base);
    bool sign_in_run = false;
    while (true) {
      const long j = i + step;
      if (j < 0 || j >= static_cast<long>(curve.size())) break;
      const double a = rep.det[i], b = rep.det[j];
      if (i != static_cast<long>(base) && a * b < 0.0) {
        // Sign change: one conjugate time by linear interpolation.
        const double s = a / (a - b);
        rep.times.push_back(curve.t[i] + s * (curve.t[j] - curve.t[i]));
        sign_in_run = true;
      }
      running = std::max(running, std::abs(a));
      const bool flagged = running > 0.0 && std::abs(b) < opts.tol_conj * running;
      if (flagged) {
        run.push_back(static_cast<std::size_t>(j));
      } else {
        if (!sign_in_run) close_run();
        run.clear();
        sign_in_run = false;
      }
      i = j;
    }
    if (!sign_in_run) close_run();
  };
  scan(+1);
  scan(-1);
  std::sort(rep.times.begin(), rep.times.end());
  for (double t : rep.times)
    if (t > 0.0) {
      rep.first_positive = t;
      break;
    }
  return rep;
}

std::vector<Vec> lattice_points(const Box& box, int n, const Region& inside) {
  std::vector<Vec> out;
  const int d = box.dim();
  const int n3 = d == 3 ? n : 1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n3; ++k) {
        Vec x(d);
        const int idx[3] = {i, j, k};
        for (int a = 0; a < d; ++a)
          x[a] = box.lo[a] + (idx[a] + 0.5) * (box.hi[a] - box.lo[a]) / n;
        if (!inside || inside(x) < 0.0) out.push_back(x);
      }
  return out;
}

std::vector<Vec> conormal_directions(int dim, int n) {
  std::vector<Vec> out;
  if (dim == 2) {
    for (int k = 0; k < n; ++k) {
      const double a = (k + 0.5) * 2.0 * kPi / n;
      out.push_back(vec2(std::cos(a), std::sin(a)));
    }
    return out;
  }
  // Fibonacci points on the sphere.
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n; ++k) {
    const double z = 1.0 - (k + 0.5) * 2.0 / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    out.push_back(vec3(r * std::cos(golden * k), r * std::sin(golden * k), z));
  }
  return out;
}

CoverageReport regularity_check(const CurveFamily& fam, const std::vector<Vec>& points,
                                const std::vector<Vec>& conormals,
                                const CoverageOptions& opts) {
  if (fam.active_count() == 0) throw EmptyFamily("regularity_check: no active curves");
  CoverageReport rep;
  rep.dist_tol = opts.dist_tol > 0 ? opts.dist_tol : 2.0 * fam.res.h * fam.gen.speed_max;
  rep.angle_tol = opts.angle_tol > 0 ? opts.angle_tol : 1.5 * fam.direction_spacing();
  const int n = fam.gen.dim;
  for (const Vec& x : points)
    for (const Vec& z : conormals) {
      rep.x.push_back(x);
      rep.zeta.push_back(z.normalized());
    }
  rep.found.assign(rep.x.size(), 0);

  const long total = static_cast<long>(rep.x.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (long q = 0; q < total; ++q) {
    const Vec& x = rep.x[q];
    const Vec& zeta = rep.zeta[q];
    std::vector<Vec> candidates;
    if (n == 2) {
      candidates = {vec2(-zeta[1], zeta[0]), vec2(zeta[1], -zeta[0])};
    } else {
      const auto basis = tangent_basis(zeta);
      for (int k = 0; k < opts.directions; ++k) {
        const double a = 2.0 * kPi * k / opts.directions;
        candidates.push_back(std::cos(a) * basis[0] + std::sin(a) * basis[1]);
      }
    }
    for (const Vec& v : candidates) {
      try {
        const auto anchor = trace_to_anchor(fam, x, v);
        if (!anchor || !(fam.manifold.alpha_at(anchor->point) > 0.0)) continue;
        const HPoint& p = anchor->point;
        // Refined curve from the anchor must pass through x along v.
        const PhaseState at = advance(fam.gen, {p.z, fam.manifold.mu_at(fam.gen, p) * p.theta},
                                      anchor->t, steps_for(anchor->t, fam.res.h));
        if ((at.x - x).norm() > rep.dist_tol) continue;
        const double cosang = std::clamp(at.xi.normalized().dot(v), -1.0, 1.0);
        if (std::acos(cosang) > rep.angle_tol) continue;
        const Curve c = fam.integrate_from(p);
        if (!conjugate_points(fam.gen, c, opts.conj).empty()) continue;
        rep.found[q] = 1;
        break;
      } catch (const Error&) {
        continue;
      }
    }
  }
  std::size_t hits = 0;
  for (char f : rep.found) hits += f ? 1 : 0;
  rep.fraction = rep.found.empty() ? 0.0 : static_cast<double>(hits) / rep.found.size();
  return rep;
}

std::string coverage_csv(const CoverageReport& r) {
  std::ostringstream os;
  os.precision(17);
  const int n = r.x.empty() ? 2 : static_cast<int>(r.x[0].size());
  for (int a = 0; a < n; ++a) os << "x" << a + 1 << ",";
  for (int a = 0; a < n; ++a) os << "zeta" << a + 1 << ",";
  os << "found\n";
  for (std::size_t i = 0; i < r.found.size(); ++i) {
    for (int a = 0; a < n; ++a) os << r.x[i][a] << ",";
    for (int a = 0; a < n; ++a) os << r.zeta[i][a] << ",";
    os << (r.found[i] ? 1 : 0) << "\n";
  }
  return os.str();
}

nlohmann::json coverage_summary(const CoverageReport& r) {
  std::size_t hits = 0;
  for (char f : r.found) hits += f ? 1 : 0;
  return {{"tested", r.found.size()},
          {"found", hits},
          {"coverage", r.fraction},
          {"dist_tol", r.dist_tol},
          {"angle_tol", r.angle_tol}};
}

std::string conjugate_csv(const std::vector<ConjugateReport>& reports,
                          const std::vector<std::size_t>& ids) {
  std::ostringstream os;
  os.precision(17);
  os << "curve,count,first_conjugate_time,times\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    os << (i < ids.size() ? ids[i] : i) << "," << r.times.size() << ",";
    if (std::isfinite(r.first_positive))
      os << r.first_positive;
    else
      os << "inf";
    os << ",";
    for (std::size_t k = 0; k < r.times.size(); ++k) os << (k ? ";" : "") << r.times[k];
    os << "\n";
  }
  return os.str();
}

nlohmann::json conjugate_summary(const std::vector<ConjugateReport>& reports) {
  std::size_t with = 0;
  double lo = INFINITY, hi = 0.0, sum = 0.0;
  for (const auto& r : reports) {
    if (!std::isfinite(r.first_positive)) continue;
    ++with;
    lo = std::min(lo, r.first_positive);
    hi = std::max(hi, r.first_positive);
    sum += r.first_positive;
  }
  nlohmann::json j = {{"curves", reports.size()}, {"with_conjugate_points", with}};
  if (with > 0) {
    j["first_conjugate_time_min"] = lo;
    j["first_conjugate_time_max"] = hi;
    j["first_conjugate_time_mean"] = sum / with;
  } else {
    j["first_conjugate_time_min"] = nullptr;
  }
  return j;
}

}  // namespace curvetomo
