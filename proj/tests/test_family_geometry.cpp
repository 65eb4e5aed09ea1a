#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "curvetomo/family_geometry.hpp"
#include "curvetomo/scenario_library.hpp"
#include "curvetomo/transform_ops.hpp"

using namespace curvetomo;

namespace {

FamilyResolution res(int nu, int nb, double h) {
  FamilyResolution r;
  r.surface = {nu};
  r.direction = {nb};
  r.h = h;
  return r;
}

std::size_t nearest(const Curve& c, double t) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (std::abs(c.t[i] - t) < std::abs(c.t[best] - t)) best = i;
  return best;
}

// Direction of a sphere geodesic through the antipodal pair.
Curve meridian(const Generator& g, double h, double length) {
  const Vec a = vec2(1.0, 0.0);
  const Vec v = vec2(-1.0, 0.0);
  IntegrationOptions opts;
  opts.clip = ball_region(Vec::Zero(2), std::tan(0.5 * 110.0 * kPi / 180.0));
  return integrate_curve(g, a, g.lambda(a, v) * v, {0.0, length}, h, opts);
}

}  // namespace

TEST_CASE("line family chords") {
  const Scenario s = scenario_lines_disk();
  const CurveFamily fam = build_family(s.gen, s.manifold, res(32, 32, 1e-2));
  const HPoint p = s.manifold.patches[0].make({kPi, 0.0}, {0.0, 0.0});
  CHECK((p.z - vec2(-1.5, 0)).norm() < 1e-12);
  CHECK((p.theta - vec2(1, 0)).norm() < 1e-12);
  const Curve c = fam.integrate_from(p);
  const std::size_t i = nearest(c, 1.5);
  CHECK(std::abs(c.t[i] - 1.5) < 1e-9);
  CHECK(c.position(i).norm() < 1e-12);
  CHECK(c.exited);
  CHECK(std::abs(c.t.back() - 3.0) < 1e-4);
}

TEST_CASE("zero cutoff builds an empty family") {
  Scenario s = scenario_lines_disk();
  s.manifold.alpha = [](const HPoint&) { return 0.0; };
  const CurveFamily fam = build_family(s.gen, s.manifold, res(16, 16, 1e-2));
  CHECK(fam.size() == 256);
  CHECK(fam.active_count() == 0);
  const Grid g = s.grid(33);
  const Sinogram sino = forward(fam, s.weight, s.phantom("disk", g));
  for (const auto& v : sino.values) CHECK(v == Complex(0.0));
  CHECK_THROWS_AS(regularity_check(fam, {vec2(0, 0)}, {vec2(1, 0)}), EmptyFamily);
}

TEST_CASE("active curves end outside M") {
  const Scenario s = scenario_lines_disk();
  const CurveFamily fam = build_family(s.gen, s.manifold, res(64, 64, 1e-2));
  REQUIRE(fam.active_count() > 0);
  for (std::size_t c : fam.active) {
    const Curve& cv = fam.curves[c];
    CHECK(cv.position(0).norm() > 1.0);
    CHECK(cv.position(cv.size() - 1).norm() > 1.0);
  }
}

TEST_CASE("transversality is enforced") {
  Scenario s = scenario_lines_disk();
  s.manifold.alpha = [](const HPoint&) { return 1.0; };
  s.manifold.trans_min = 0.1;
  CHECK_THROWS_AS(build_family(s.gen, s.manifold, res(8, 64, 1e-2)), TransversalityViolation);
}

TEST_CASE("Jacobi fields of lines") {
  const Scenario s = scenario_lines_disk();
  const Curve c = integrate_curve(s.gen, vec2(-1.2, 0.1), vec2(1, 0), {0, 2}, 1e-2);
  const auto j = jacobi_fields(s.gen, c);
  REQUIRE(j.size() == 1);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(j[0][i].norm() - c.t[i]) < 1e-8);
  const auto jb = jacobi_fields(s.gen, c, Variation::BasePoint);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK((jb[0][i] - jb[0][0]).norm() < 1e-9);
  const auto j1 = jacobi_fields(s.gen, c, Variation::Direction, 1e-5, 1.0);
  const auto j2 = jacobi_fields(s.gen, c, Variation::Direction, 1e-5, 2.0);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK((j2[0][i] - 2.0 * j1[0][i]).norm() < 1e-8);
  const ConjugateReport r = conjugate_points(s.gen, c);
  CHECK(r.empty());
  CHECK(r.det.size() == c.size());
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(std::abs(std::abs(r.det[i]) - c.t[i]) < 1e-8);
}

TEST_CASE("Jacobi fields on the sphere follow sin t") {
  const Generator g = sphere_generator(make_box(2, -1.5, 1.5));
  const Curve c = meridian(g, 1e-3, 3.2);
  const auto j = jacobi_fields(g, c);
  // Metric norm of the field divided by sin t.
  double lo = INFINITY, hi = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double t = c.t[i];
    if (t < 0.1 || t > 3.0) continue;
    const double metric = 2.0 * j[0][i].norm() / (1.0 + c.position(i).squaredNorm());
    lo = std::min(lo, metric / std::sin(t));
    hi = std::max(hi, metric / std::sin(t));
  }
  CHECK(hi / lo < 1.02);
  const auto half = jacobi_fields(g, c, Variation::Direction, 5e-5);
  const std::size_t k = nearest(c, 1.0);
  CHECK((half[0][k] - j[0][k]).norm() < 1e-6);
}

TEST_CASE("conjugate points on the sphere") {
  const Generator g = sphere_generator(make_box(2, -1.5, 1.5));
  for (double h : {1e-3, 2e-3}) {
    const Curve c = meridian(g, h, 3.4);
    const ConjugateReport r = conjugate_points(g, c);
    CHECK(std::abs(r.first_positive - kPi) < 0.01);
  }
}

TEST_CASE("small perturbation of lines keeps no conjugate points") {
  const Scenario s = scenario_lines_disk();
  Generator p = s.gen;
  p.accel = [](const Vec& x, const Vec&) {
    return Vec(1e-3 * smooth_bump(x, vec2(0.3, 0.2), 0.8) * vec2(1.0, -0.5));
  };
  const Curve c0 = integrate_curve(s.gen, vec2(-1.4, 0.0), vec2(1, 0.1), {0, 3}, 1e-2);
  const Curve c1 = integrate_curve(p, vec2(-1.4, 0.0), vec2(1, 0.1), {0, 3}, 1e-2);
  const ConjugateReport r0 = conjugate_points(s.gen, c0);
  const ConjugateReport r1 = conjugate_points(p, c1);
  CHECK(r1.empty());
  for (std::size_t i = 1; i < c0.size(); ++i)
    CHECK(std::abs(r1.det[i]) >= 0.5 * std::abs(r0.det[i]));
}

TEST_CASE("conjugacy determinant vanishes to order n-1 at t = 0") {
  auto exponent = [](const Generator& g, const Vec& x, const Vec& xi) {
    const Curve c = integrate_curve(g, x, xi, {0, 0.2}, 1e-3);
    const ConjugateReport r = conjugate_points(g, c);
    const std::size_t a = nearest(c, 0.01), b = nearest(c, 0.1);
    return std::log(std::abs(r.det[b]) / std::abs(r.det[a])) / std::log(c.t[b] / c.t[a]);
  };
  const Generator sph = sphere_generator(make_box(2, -1.5, 1.5));
  CHECK(std::abs(exponent(sph, vec2(0.2, 0.3), vec2(0.5, 0.4)) - 1.0) < 0.1);
  const Scenario s3 = scenario_lines_box3d();
  CHECK(std::abs(exponent(s3.gen, vec3(0.1, 0, 0), vec3(0.3, 0.8, 0.1).normalized()) - 2.0) < 0.1);
}

TEST_CASE("regularity of the full line family") {
  const Scenario s = scenario_lines_disk();
  const CurveFamily fam = build_family(s.gen, s.manifold, res(32, 32, 2e-2));
  const auto pts = lattice_points(make_box(2, -1, 1), 16, s.support);
  const auto dirs = conormal_directions(2, 16);
  const CoverageReport r = regularity_check(fam, pts, dirs);
  CHECK(r.fraction == 1.0);
  CHECK(r.tested() == pts.size() * dirs.size());
}

TEST_CASE("limited angle coverage fails exactly in the excluded band") {
  const Scenario s = make_scenario("lines_disk_limited");
  const CurveFamily fam = build_family(s.gen, s.manifold, res(32, 32, 2e-2));
  const auto pts = lattice_points(make_box(2, -1, 1), 8, s.support);
  const auto dirs = conormal_directions(2, 32);
  const CoverageReport r = regularity_check(fam, pts, dirs);
  CHECK(r.fraction < 1.0);
  CHECK(r.fraction > 0.0);
  for (std::size_t q = 0; q < r.tested(); ++q) {
    double psi = angle_of(vec2(-r.zeta[q][1], r.zeta[q][0]));
    if (psi < 0) psi += kPi;  // line directions modulo pi
    const bool in_band = psi > 0.0 && psi < kPi / 3.0;
    CHECK(static_cast<bool>(r.found[q]) == in_band);
  }
  // Enlarging the support never lowers coverage.
  const Scenario wide = make_scenario("lines_disk_limited", {{"angle_hi", 90.0}});
  const CurveFamily fw = build_family(wide.gen, wide.manifold, res(32, 32, 2e-2));
  const CoverageReport rw = regularity_check(fw, pts, dirs);
  CHECK(rw.fraction >= r.fraction);
  for (std::size_t q = 0; q < r.tested(); ++q)
    if (r.found[q]) CHECK(rw.found[q]);
}

TEST_CASE("antipodal sphere family is not regular") {
  const Scenario s = scenario_antipodal_sphere();
  const CurveFamily fam = build_family(s.gen, s.manifold, res(24, 24, 2e-2));
  const auto pts = lattice_points(make_box(2, -1.2, 1.2), 8, s.support);
  REQUIRE(!pts.empty());
  const CoverageReport r = regularity_check(fam, pts, conormal_directions(2, 8));
  CHECK(r.fraction < 1.0);
  // Every candidate geodesic is longer than pi.
  for (std::size_t c : fam.active) CHECK(fam.curves[c].t.back() > kPi);
}

TEST_CASE("trace to anchor recovers family parameters") {
  const Scenario s = scenario_antipodal_sphere();
  const CurveFamily fam = build_family(s.gen, s.manifold, res(16, 16, 1e-2));
  const HPoint p = s.manifold.patches[0].make({0.7, 0.0}, {0.3, 0.0});
  const double t = 1.1;
  const PhaseState at = advance(s.gen, {p.z, s.gen.lambda(p.z, p.theta) * p.theta}, t, 1100);
  const auto a = trace_to_anchor(fam, at.x, at.xi, 1e-3);
  REQUIRE(a.has_value());
  CHECK(std::abs(a->point.u[0] - 0.7) < 1e-8);
  CHECK(std::abs(a->point.b[0] - 0.3) < 1e-8);
  CHECK(std::abs(a->t - t) < 1e-8);
}

TEST_CASE("report serialization") {
  CoverageReport r;
  r.x = {vec2(0, 0)};
  r.zeta = {vec2(1, 0)};
  r.found = {1};
  r.fraction = 1.0;
  CHECK(coverage_csv(r) == "x1,x2,zeta1,zeta2,found\n0,0,1,0,1\n");
  CHECK(coverage_summary(r)["coverage"] == 1.0);
  ConjugateReport c;
  c.times = {3.14};
  c.first_positive = 3.14;
  CHECK(conjugate_summary({c})["with_conjugate_points"] == 1);
}
