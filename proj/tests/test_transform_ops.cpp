#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "curvetomo/scenario_library.hpp"
#include "curvetomo/transform_ops.hpp"

using namespace curvetomo;

namespace {

FamilyResolution res(int nu, int nb, double h, bool cache = true) {
  FamilyResolution r;
  r.surface = {nu};
  r.direction = {nb};
  r.h = h;
  r.cache = cache;
  return r;
}

ScalarField random_field(const Grid& g, const Region& support, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  ScalarField f(g, support);
  for (auto& v : f.values) v = Complex(n(rng), n(rng));
  f.apply_mask();
  return f;
}

Sinogram random_sinogram(const CurveFamily& fam, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Sinogram s = zero_sinogram(fam);
  for (auto& v : s.values) v = Complex(n(rng), n(rng));
  return s;
}

// Family node whose curve passes through x with direction v.
HPoint node_through(const Scenario& s, const Vec& x, const Vec& v) {
  const CurveFamily probe = build_family(s.gen, s.manifold, res(4, 4, 1e-3, false));
  const auto a = trace_to_anchor(probe, x, v, 1e-3);
  REQUIRE(a.has_value());
  return a->point;
}

double chord(double s, double r) { return s * s < r * r ? 2.0 * std::sqrt(r * r - s * s) : 0.0; }

}  // namespace

TEST_CASE("chord lengths of the disk indicator") {
  const Scenario s = scenario_lines_disk();
  const Grid g = s.grid(128);
  const ScalarField f = s.phantom("disk", g);
  const Patch& patch = s.manifold.patches[0];
  std::vector<HPoint> nodes;
  std::vector<double> offsets;
  for (int k = 0; k < 20; ++k) {
    const double off = -0.4 + 0.8 * k / 19.0;
    offsets.push_back(off);
    // Line from (-1.5, 0) at angle beta passes at signed distance 1.5 sin(beta) from 0.
    nodes.push_back(patch.make({kPi, 0.0}, {std::asin(off / 1.5), 0.0}));
  }
  const CurveFamily fam = build_family_nodes(s.gen, s.manifold, nodes, res(1, 1, 5e-3));
  const Sinogram sino = forward(fam, s.weight, f);
  const double tol = std::min(2.0 * g.min_spacing(), 0.03);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double err = std::abs(sino.values[k] - chord(offsets[k], 0.5));
    worst = std::max(worst, err);
    CHECK(err <= tol);
  }
  MESSAGE("worst chord error " << worst << " tolerance " << tol);
  CHECK(std::abs(sino.values[nodes.size() / 2].real() - 1.0) < tol);
}

TEST_CASE("weight and cutoff scaling") {
  const Scenario s = scenario_lines_disk();
  const CurveFamily fam = build_family(s.gen, s.manifold, res(32, 32, 1e-2));
  const Grid g = s.grid(48);
  const ScalarField f = s.phantom("smooth", g);
  const Sinogram a = forward(fam, Weight::unit(), f);
  const Sinogram b = forward(fam, Weight::constant(2.0), f);
  for (std::size_t c = 0; c < a.size(); ++c) CHECK(std::abs(b.values[c] - 2.0 * a.values[c]) < 1e-14);
  const Sinogram z = forward(fam, Weight::unit(), s.phantom("zero", g));
  for (const auto& v : z.values) CHECK(v == Complex(0.0));
}

TEST_CASE("adjoint pairing") {
  const Scenario s = scenario_lines_disk();
  const CurveFamily fam = build_family(s.gen, s.manifold, res(64, 64, 1e-2));
  const Grid g = s.grid(64);
  std::mt19937_64 rng(42);
  Weight w;
  w.eval = [](const Vec& x, const Vec& v) { return Complex(1.0 + 0.3 * x[0], 0.2 * v[1]); };
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ScalarField f = random_field(g, s.support, rng);
    const Sinogram sn = random_sinogram(fam, rng);
    const Weight& wt = trial % 2 ? w : s.weight;
    const Complex lhs = inner(forward(fam, wt, f), sn);
    const ScalarField back = adjoint(fam, wt, sn, f);
    const Complex rhs = inner(f, back);
    const double rel = std::abs(lhs - rhs) / (l2_norm(f) * norm(sn));
    worst = std::max(worst, rel);
  }
  MESSAGE("worst relative pairing defect " << worst);
  CHECK(worst <= 1e-10);
}

TEST_CASE("adjoint of zero and of one") {
  const Scenario s = scenario_lines_disk();
  const Grid g = s.grid(64);
  const ScalarField like(g, s.support);
  {
    const CurveFamily fam = build_family(s.gen, s.manifold, res(16, 16, 1e-2));
    const ScalarField z = adjoint(fam, s.weight, zero_sinogram(fam), like);
    for (const auto& v : z.values) CHECK(v == Complex(0.0));
    Sinogram bad;
    bad.values.assign(3, 1.0);
    bad.weight.assign(3, 1.0);
    CHECK_THROWS_AS(adjoint(fam, s.weight, bad, like), IndexMismatch);
  }
  // s = 1 backprojects to the angular integral of J = sigma / cos(beta).
  const CurveFamily fam = build_family(s.gen, s.manifold, res(512, 512, 1e-2, false));
  Sinogram one = zero_sinogram(fam);
  for (auto& v : one.values) v = 1.0;
  const ScalarField back = adjoint(fam, s.weight, one, like);
  const double rm1 = 1.5;
  for (const Vec& x : {vec2(0, 0), vec2(0.3, 0.1), vec2(-0.5, 0.2), vec2(0.1, -0.6), vec2(0.45, 0.45)}) {
    double oracle = 0.0;
    const int m = 4096;
    for (int k = 0; k < m; ++k) {
      const double a = 2.0 * kPi * (k + 0.5) / m;
      const double p = x[0] * std::sin(a) - x[1] * std::cos(a);
      const double beta = std::asin(p / rm1);
      oracle += beta_cutoff(beta, 0.8, 1.3) / std::cos(beta) * 2.0 * kPi / m;
    }
    // Nearest grid node to x.
    std::size_t best = 0;
    for (std::size_t j = 0; j < g.size(); ++j)
      if ((g.point(j) - x).norm() < (g.point(best) - x).norm()) best = j;
    const Vec xn = g.point(best);
    double at_node = 0.0;
    for (int k = 0; k < m; ++k) {
      const double a = 2.0 * kPi * (k + 0.5) / m;
      const double beta = std::asin((xn[0] * std::sin(a) - xn[1] * std::cos(a)) / rm1);
      at_node += 1.0 / std::cos(beta) * 2.0 * kPi / m;
    }
    const double rel = std::abs(back.values[best].real() - at_node) / at_node;
    MESSAGE("x=" << x.transpose() << " backprojection " << back.values[best].real() << " oracle " << at_node);
    CHECK(rel < 0.01);
    CHECK(std::abs(oracle - at_node) / oracle < 0.05);
  }
}

TEST_CASE("normal operator is symmetric and nonnegative") {
  const Scenario s = scenario_lines_disk();
  const CurveFamily fam = build_family(s.gen, s.manifold, res(32, 32, 2e-2));
  const Grid g = s.grid(32);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const ScalarField f = random_field(g, s.support, rng);
    const ScalarField nf = normal(fam, s.weight, f);
    const Complex q = inner(nf, f);
    CHECK(q.real() >= 0.0);
    CHECK(std::abs(q.imag()) <= 1e-10 * std::abs(q));
    if (trial < 10) {
      const ScalarField h = random_field(g, s.support, rng);
      const Complex a = inner(nf, h);
      const Complex b = inner(f, normal(fam, s.weight, h));
      CHECK(std::abs(a - b) <= 1e-10 * l2_norm(nf) * l2_norm(h) + 1e-12);
      // The fused form agrees with adjoint(forward(f)).
      ScalarField two = adjoint(fam, s.weight, forward(fam, s.weight, f), f);
      axpy(-1.0, nf, two);
      CHECK(l2_norm(two) <= 1e-12 * l2_norm(nf));
    }
  }
}

TEST_CASE("adjoint is deterministic") {
  const Scenario s = scenario_lines_disk();
  const CurveFamily fam = build_family(s.gen, s.manifold, res(32, 32, 2e-2));
  const Grid g = s.grid(32);
  std::mt19937_64 rng(9);
  const Sinogram sn = random_sinogram(fam, rng);
  const ScalarField like(g, s.support);
  const ScalarField a = adjoint(fam, s.weight, sn, like);
  const ScalarField b = adjoint(fam, s.weight, sn, like);
  CHECK(a.values == b.values);
}

TEST_CASE("curves that miss the support give zero") {
  const Scenario s = scenario_lines_disk();
  std::vector<HPoint> nodes;
  for (double x1 : {-0.9, -0.6, -0.3})
    nodes.push_back(node_through(s, vec2(x1, 0.0), vec2(0, 1)));
  const CurveFamily fam = build_family_nodes(s.gen, s.manifold, nodes, res(1, 1, 1e-2));
  const Grid g = s.grid(64);
  const ScalarField f = ScalarField::sample(g, s.support, [](const Vec& x) {
    return Complex(smooth_bump(x, vec2(0.45, 0.0), 0.3));
  });
  const Sinogram sn = forward(fam, s.weight, f);
  for (const auto& v : sn.values) CHECK(v == Complex(0.0));
}

TEST_CASE("refinement in the curve step is second order") {
  const Scenario s = scenario_magnetic();
  const Grid g = s.grid(64);
  const ScalarField f = s.phantom("smooth", g);
  std::vector<Sinogram> out;
  for (double h : {4e-2, 2e-2, 1e-2})
    out.push_back(forward(build_family(s.gen, s.manifold, res(16, 16, h)), s.weight, f));
  double d1 = 0, d2 = 0;
  for (std::size_t c = 0; c < out[0].size(); ++c) {
    d1 = std::max(d1, std::abs(out[0].values[c] - out[1].values[c]));
    d2 = std::max(d2, std::abs(out[1].values[c] - out[2].values[c]));
  }
  MESSAGE("successive differences " << d1 << " " << d2);
  CHECK(d1 / d2 > 3.0);
}

TEST_CASE("magnetic arc through the centre") {
  const Scenario s = scenario_magnetic();
  const double c = s.params.at("curvature"), rho = 1.0 / c, a = 0.5;
  const HPoint p = node_through(s, vec2(0, 0), vec2(1, 0));
  const CurveFamily fam = build_family_nodes(s.gen, s.manifold, {p}, res(1, 1, 2e-3));
  const Grid g = s.grid(256);
  const Complex v = forward(fam, s.weight, s.phantom("disk", g)).values[0];
  // Circle of radius rho through the disk centre meets the disk boundary on a
  // chord of length 2a sqrt(1 - (a / 2 rho)^2).
  const double chord_len = 2.0 * a * std::sqrt(1.0 - std::pow(a / (2.0 * rho), 2));
  const double arc = 2.0 * rho * std::asin(chord_len / (2.0 * rho));
  MESSAGE("arc " << arc << " measured " << v.real());
  CHECK(std::abs(v.real() - arc) / arc < 0.02);
  // The family curve is the circle of radius 1/c turning left.
  const Curve cv = fam.integrate(0);
  const Vec centre = p.z + rho * vec2(-p.theta[1], p.theta[0]);
  for (std::size_t i = 0; i < cv.size(); ++i) CHECK(std::abs((cv.position(i) - centre).norm() - rho) < 1e-9);
  // c = 0 gives straight lines.
  const Scenario flat = scenario_magnetic({{"curvature", 0.0}});
  const Scenario lines = scenario_lines_disk();
  const Curve c0 = build_family_nodes(flat.gen, flat.manifold, {p}, res(1, 1, 1e-2)).integrate(0);
  const Curve c1 = build_family_nodes(lines.gen, lines.manifold, {p}, res(1, 1, 1e-2)).integrate(0);
  REQUIRE(c0.size() == c1.size());
  for (std::size_t i = 0; i < c0.size(); ++i) CHECK((c0.position(i) - c1.position(i)).norm() < 1e-14);
  CHECK_THROWS_AS(scenario_magnetic({{"curvature", 3.0}}), ParameterOutOfRange);
}

TEST_CASE("odd antipodal pair is nearly invisible") {
  const Scenario s = scenario_antipodal_sphere();
  auto floor = [&](int n, double h) {
    const Grid g = s.grid(n);
    const ScalarField f = s.phantom("odd_pair", g);
    const CurveFamily fam = build_family(s.gen, s.manifold, res(64, 64, h));
    return norm(forward(fam, s.weight, f)) / l2_norm(f);
  };
  const double coarse = floor(128, 2e-2), fine = floor(256, 1e-2);
  MESSAGE("odd-pair floor " << coarse << " -> " << fine);
  CHECK(fine <= 1e-3);
  CHECK(fine <= 0.5 * coarse);
  // The even pair is seen.
  const Grid g = s.grid(64);
  const CurveFamily fam = build_family(s.gen, s.manifold, res(32, 32, 2e-2));
  const ScalarField e = s.phantom("even_pair", g);
  CHECK(norm(forward(fam, s.weight, e)) > 0.5 * l2_norm(e));
}

TEST_CASE("h1 norm") {
  const Grid g = Grid::over_box(make_box(2, 0.0, 1.0), 128);
  ScalarField z(g);
  CHECK(h1_norm(z) == 0.0);
  ScalarField c(g);
  for (auto& v : c.values) v = 3.0;
  CHECK(std::abs(h1_norm(c) - 3.0) < 1e-12);
  const Grid g2 = Grid::over_box(make_box(2, -1.0, 1.0), 33);
  ScalarField c2(g2);
  for (auto& v : c2.values) v = 2.5;
  CHECK(std::abs(h1_norm(c2) - 2.5 * 2.0) < 1e-12);
  ScalarField sn(g);
  for (std::size_t i = 0; i < sn.size(); ++i) sn.values[i] = std::sin(kPi * g.point(i)[0]);
  const double exact = std::sqrt(0.5 + 0.5 * kPi * kPi);
  CHECK(std::abs(h1_norm(sn) * h1_norm(sn) - exact * exact) / (exact * exact) < 0.01);
}

TEST_CASE("field and sinogram serialization") {
  const Scenario s = scenario_lines_disk();
  const Grid g = s.grid(17);
  std::mt19937_64 rng(1);
  const ScalarField f = random_field(g, s.support, rng);
  const std::string path =
      (std::filesystem::temp_directory_path() / "curvetomo_field_test.bin").string();
  write_field_binary(f, path);
  const ScalarField r = read_field_binary(path);
  std::filesystem::remove(path);
  CHECK(r.grid.same_as(g));
  CHECK(r.values == f.values);
  CHECK(r.mask == f.mask);
  CHECK_THROWS_AS(read_field_binary(path), IoError);

  const std::string csv = field_csv(f);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(g.size()) + 1);

  const CurveFamily fam = build_family(s.gen, s.manifold, res(8, 8, 2e-2));
  const std::string sc = sinogram_csv(fam, forward(fam, s.weight, s.phantom("disk", g)));
  CHECK(std::count(sc.begin(), sc.end(), '\n') == static_cast<long>(fam.active_count()) + 1);
}

TEST_CASE("interpolation domain") {
  const Grid g = Grid::over_box(make_box(2, -1.0, 1.0), 11);
  ScalarField f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f.values[i] = g.point(i)[0] + 2.0 * g.point(i)[1];
  CHECK(std::abs(f.interpolate(vec2(0.33, -0.41)) - Complex(0.33 - 0.82)) < 1e-13);
  CHECK_NOTHROW(f.interpolate(vec2(1.05, 0.0)));
  CHECK_THROWS_AS(f.interpolate(vec2(1.2, 0.0)), InterpolationOutOfDomain);
}
