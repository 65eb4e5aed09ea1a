#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include <Eigen/Eigenvalues>

#include "curvetomo/inversion.hpp"

using namespace curvetomo;

namespace {

FamilyResolution res(int nu, int nb, double h) {
  FamilyResolution r;
  r.surface = {nu};
  r.direction = {nb};
  r.h = h;
  return r;
}

double rel_error(const ScalarField& f, const ScalarField& ref) {
  ScalarField d = f;
  axpy(-1.0, ref, d);
  return l2_norm_masked(d) / l2_norm_masked(ref);
}

}  // namespace

TEST_CASE("random smooth fields") {
  const Scenario s = scenario_lines_disk();
  const Grid g = s.grid(40);
  const ScalarField a = random_smooth_field(g, s.support, 7);
  const ScalarField b = random_smooth_field(g, s.support, 7);
  const ScalarField c = random_smooth_field(g, s.support, 8);
  CHECK(l2_norm_masked(a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.values == b.values);
  CHECK(rel_error(a, c) > 0.1);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a.mask[i]) CHECK(a.values[i] == Complex(0.0));
  CHECK_FALSE(a.is_complex());

  // A single mode reproduces the constant field.
  const ScalarField one = random_smooth_field(g, s.support, 3, 1);
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < one.size(); ++i)
    if (one.mask[i]) {
      lo = std::min(lo, one.values[i].real());
      hi = std::max(hi, one.values[i].real());
    }
  CHECK(hi - lo < 1e-12);
}

TEST_CASE("solve_normal basics") {
  const Scenario s = scenario_lines_disk();
  const Grid g = s.grid(32);
  const CurveFamily fam = build_family(s.gen, s.manifold, res(32, 32, 2e-2));

  SUBCASE("zero data") {
    const SolveResult r = solve_normal(fam, s.weight, ScalarField(g, s.support));
    CHECK(r.iterations == 0);
    CHECK(r.converged);
    CHECK(l2_norm(r.f) == 0.0);
  }
  SUBCASE("residuals never increase") {
    const ScalarField f = s.phantom("smooth", g);
    const SolveResult r = solve_normal(fam, s.weight, normal(fam, s.weight, f), {1e-10, 120});
    REQUIRE(r.residuals.size() > 10);
    for (std::size_t i = 1; i < r.residuals.size(); ++i)
      CHECK(r.residuals[i] <= r.residuals[i - 1] * (1.0 + 1e-12));
  }
  SUBCASE("consistent data reaches the tolerance") {
    const ScalarField f = s.phantom("smooth", g);
    const SolveResult r = solve_normal(fam, s.weight, normal(fam, s.weight, f), {1e-6, 500});
    CHECK(r.converged);
    CHECK(r.residuals.back() <= 1e-6);
  }
  SUBCASE("failure carries the history") {
    const ScalarField f = s.phantom("smooth", g);
    SolveOptions o;
    o.max_iter = 3;
    o.throw_on_failure = true;
    try {
      solve_normal(fam, s.weight, normal(fam, s.weight, f), o);
      FAIL("expected NoConvergence");
    } catch (const NoConvergence& e) {
      CHECK(std::string(e.what()).find("history") != std::string::npos);
    }
    o.throw_on_failure = false;
    const SolveResult r = solve_normal(fam, s.weight, normal(fam, s.weight, f), o);
    CHECK_FALSE(r.converged);
    CHECK(r.residuals.size() == 4);
  }
}

TEST_CASE("stability ratio") {
  const Scenario s = scenario_lines_disk();
  const Grid g = s.grid(32);
  const CurveFamily fam = build_family(s.gen, s.manifold, res(64, 64, 2e-2));
  ScalarField f = random_smooth_field(g, s.support, 2);
  const double r1 = stability_ratio(fam, s.weight, f);
  scale(f, 2.0);
  CHECK(stability_ratio(fam, s.weight, f) == doctest::Approx(r1).epsilon(1e-12));
  scale(f, Complex(0.0, 1.0));
  CHECK(stability_ratio(fam, s.weight, f) == doctest::Approx(r1).epsilon(1e-12));

  const StabilityReport rep = stability_probe(fam, s.weight, g, s.support, 5, 11);
  CHECK(rep.ratios.size() == 5);
  CHECK(rep.min_ratio > 0.0);
  CHECK(rep.min_ratio <= rep.max_ratio);
  REQUIRE(rep.candidate_names.size() == 1);
  CHECK(rep.candidate_names[0] == "highest_mode");
  CHECK_THROWS_AS(stability_probe(fam, s.weight, g, s.support, 0, 1), std::invalid_argument);
}

TEST_CASE("stability ratios stay below the operator bound") {
  const Scenario s = scenario_lines_disk();
  const Grid g = s.grid(24);
  const CurveFamily fam = build_family(s.gen, s.manifold, res(48, 48, 2e-2));
  LanczosOptions lo;
  lo.modes = 0;
  const InjectivityReport top = injectivity_witness(fam, s.weight, g, s.support, lo);
  // ||N f||_H1 <= ||N||_L2 sqrt(1 + sum_a 4 / dx_a^2) ||f||_L2 for the difference gradient.
  double grad = 1.0;
  for (int a = 0; a < g.dim; ++a) grad += 4.0 / (g.spacing[a] * g.spacing[a]);
  const double bound = top.largest * (1.0 + 1e-6) * std::sqrt(grad);
  const StabilityReport rep = stability_probe(fam, s.weight, g, s.support, 1000, 3);
  MESSAGE("max ratio " << rep.max_ratio << " over 1000 trials, bound " << bound);
  CHECK(rep.ratios.size() == 1000);
  CHECK(rep.max_ratio <= bound);
  CHECK(rep.min_ratio == *std::min_element(rep.ratios.begin(), rep.ratios.end()));
  for (double r : rep.ratios) CHECK(r >= 0.0);
}

TEST_CASE("perturbation distances grow with delta and are deterministic") {
  const Scenario s = scenario_lines_disk();
  PerturbationSetup ps;
  ps.grid_nodes = 24;
  ps.res = res(24, 24, 2e-2);
  ps.probes = 2;
  const std::vector<double> deltas{0.0, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  for (Channel c : all_channels()) {
    CAPTURE(channel_name(c));
    const PerturbationReport r = perturbation_experiment(s, c, deltas, ps);
    for (std::size_t i = 1; i < deltas.size(); ++i) CHECK(r.distances[i] >= r.distances[i - 1]);
    const PerturbationReport again = perturbation_experiment(s, c, deltas, ps);
    CHECK(again.distances == r.distances);
    CHECK(again.slope == r.slope);
  }
  const CurveFamily fam = build_family(s.gen, s.manifold, res(24, 24, 2e-2));
  const StabilityReport a = stability_probe(fam, s.weight, s.grid(24), s.support, 10, 5);
  const StabilityReport b = stability_probe(fam, s.weight, s.grid(24), s.support, 10, 5);
  CHECK(a.ratios == b.ratios);
  CHECK(a.candidate_ratios == b.candidate_ratios);
}

TEST_CASE("antipodal odd pair is a near-kernel candidate") {
  const Scenario s = scenario_antipodal_sphere();
  const Grid g = s.grid(256);
  const CurveFamily fam = build_family(s.gen, s.manifold, res(256, 256, 1e-2));
  const StabilityReport rep = stability_probe(fam, s.weight, g, s.support, 5, 1,
                                              {{"odd_pair", s.phantom("odd_pair", g)}});
  REQUIRE(rep.candidate_names.back() == "odd_pair");
  MESSAGE("odd pair ratio " << rep.candidate_ratios.back() << ", max " << rep.max_ratio);
  CHECK(rep.candidate_ratios.back() < 1e-3 * rep.max_ratio);
}

TEST_CASE("C2 norm estimate") {
  const std::vector<Vec> samples{vec2(0.5, 0.0), vec2(-0.25, 1.0)};
  CHECK(c2_norm_estimate([](const Vec& x) { return x[0] * x[0]; }, samples, 1e-3) ==
        doctest::Approx(2.0).epsilon(1e-6));
  CHECK(c2_norm_estimate([](const Vec& x) { return 3.0 * x[0] * x[1]; }, samples, 1e-3) ==
        doctest::Approx(3.0).epsilon(1e-6));
  CHECK(c2_norm_estimate([](const Vec& x) { return 0.0 * x[0] + 5.0; }, samples, 1e-3) == 5.0);
}

TEST_CASE("perturbed scenarios") {
  const Scenario s = scenario_lines_disk();
  for (Channel c : all_channels()) CHECK(channel_from_name(channel_name(c)) == c);
  CHECK_THROWS_AS(channel_from_name("kappa"), ConfigError);

  // The weight bump has C2 norm delta.
  const double delta = 3e-2;
  const Scenario p = perturbed_scenario(s, Channel::W, delta);
  const Vec xi = vec2(0.0, 1.0);
  std::vector<Vec> samples;
  for (int i = 0; i <= 40; ++i)
    for (int j = 0; j <= 40; ++j) samples.push_back(vec2(-0.3 + i * 0.025, -0.4 + j * 0.025));
  const double norm = c2_norm_estimate(
      [&](const Vec& x) { return (p.weight(x, xi) - s.weight(x, xi)).real(); }, samples, 1e-3);
  CHECK(norm == doctest::Approx(delta).epsilon(1e-2));

  // Unperturbed pieces are untouched.
  const HPoint h = s.manifold.patches[0].make({0.3, 0.0}, {0.1, 0.0});
  const Scenario q = perturbed_scenario(s, Channel::Sigma, delta);
  CHECK(q.manifold.alpha_at(h) == s.manifold.alpha_at(h));
  CHECK(q.manifold.sigma_at(h) != s.manifold.sigma_at(h));
}

TEST_CASE("perturbation experiment") {
  const Scenario s = scenario_lines_disk();
  PerturbationSetup ps;
  ps.grid_nodes = 32;
  ps.res = res(32, 32, 2e-2);
  ps.probes = 2;

  for (Channel c : all_channels()) {
    const PerturbationReport r = perturbation_experiment(s, c, {0.0}, ps);
    CHECK(r.distances[0] == 0.0);
  }
  const std::vector<double> deltas{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  const PerturbationReport w = perturbation_experiment(s, Channel::W, deltas, ps);
  CHECK(w.correlation >= 0.9);
  CHECK(w.slope > 0.0);
  // N is quadratic in w, so d / delta is nearly constant.
  for (std::size_t i = 0; i < deltas.size(); ++i)
    CHECK(w.distances[i] / deltas[i] == doctest::Approx(w.slope).epsilon(0.05));

  CHECK_THROWS_AS(perturbation_experiment(s, Channel::Alpha, {-100.0}, ps), FamilyRebuildFailure);

  const nlohmann::json j = perturbation_summary(w);
  CHECK(j["channel"] == "w");
  CHECK(j["distances"].size() == deltas.size());
  const std::string csv = perturbation_csv({w});
  CHECK(csv.rfind("channel,delta,distance\n", 0) == 0);
}

TEST_CASE("Lanczos against a dense eigensolver") {
  const Scenario s = scenario_lines_disk();
  const Grid g = s.grid(12);
  const CurveFamily fam = build_family(s.gen, s.manifold, res(24, 24, 2e-2));

  // Dense symmetrized operator from the matrix-free normal operator.
  const ScalarField probe(g, s.support);
  const auto q = g.weights();
  std::vector<std::size_t> dofs;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (probe.mask[i]) dofs.push_back(i);
  const auto m = static_cast<Eigen::Index>(dofs.size());
  Eigen::MatrixXcd dense(m, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    ScalarField e = probe.zeros_like();
    e.values[dofs[c]] = 1.0 / std::sqrt(q[dofs[c]]);
    const ScalarField ne = normal(fam, s.weight, e);
    for (Eigen::Index r = 0; r < m; ++r) dense(r, c) = ne.values[dofs[r]] * std::sqrt(q[dofs[r]]);
  }
  CHECK((dense - dense.adjoint()).norm() <= 1e-10 * dense.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense);
  const double lo = es.eigenvalues()[0], hi = es.eigenvalues()[m - 1];

  for (std::size_t limit : {std::size_t{0}, std::size_t{100000}}) {
    LanczosOptions o;
    o.modes = 0;
    o.dense_limit = limit;
    const InjectivityReport r = injectivity_witness(fam, s.weight, g, s.support, o);
    CHECK(r.dofs == dofs.size());
    CHECK(r.smallest == doctest::Approx(lo).epsilon(1e-6).scale(hi));
    CHECK(r.largest == doctest::Approx(hi).epsilon(1e-8));
    for (std::size_t i = 1; i < r.ritz.size(); ++i) CHECK(r.ritz[i] >= r.ritz[i - 1]);
  }

  LanczosOptions shifted;
  shifted.shift = 1.0;
  const InjectivityReport sr = injectivity_witness(fam, s.weight, g, s.support, shifted);
  CHECK(sr.smallest >= 1.0);
}

TEST_CASE("Lanczos candidate is the smallest Ritz vector") {
  const Scenario s = scenario_lines_disk();
  const Grid g = s.grid(24);
  const CurveFamily fam = build_family(s.gen, s.manifold, res(32, 32, 2e-2));
  LanczosOptions o;
  o.modes = 8;
  const InjectivityReport r = injectivity_witness(fam, s.weight, g, s.support, o);
  CHECK(r.dofs <= 64);
  // Rayleigh quotient of the candidate equals the smallest Ritz value.
  const ScalarField& f = r.candidate;
  const double rq = inner(f, normal(fam, s.weight, f)).real() / inner(f, f).real();
  CHECK(rq == doctest::Approx(r.smallest).epsilon(1e-8).scale(r.largest));
  CHECK(correlation(f, f) == doctest::Approx(1.0));
  ScalarField twice = f;
  scale(twice, Complex(0.0, 2.0));
  CHECK(correlation(f, twice) == doctest::Approx(1.0));
}

TEST_CASE("serialization helpers") {
  SolveResult r;
  r.residuals = {1.0, 0.5, 0.25};
  CHECK(residual_csv(r) == "iteration,relative_residual\n0,1\n1,0.5\n2,0.25\n");
  StabilityReport st;
  st.seeds = {4};
  st.ratios = {2.5};
  st.min_ratio = st.max_ratio = 2.5;
  CHECK(stability_csv(st) == "seed,ratio\n4,2.5\n");
  CHECK(stability_summary(st)["min_ratio"] == 2.5);
}
