#include "curvetomo/inversion.hpp"

#include <algorithm>
#include <exception>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/SparseCore>

namespace curvetomo {

namespace {

// Products of the lowest cosine modes of the grid box, per axis.
struct CosineModes {
  const Grid* grid;
  std::array<int, 3> modes{1, 1, 1};
  std::array<std::vector<double>, 3> table;

  CosineModes(const Grid& g, int max_modes) : grid(&g) {
    for (int d = 0; d < g.dim; ++d) {
      modes[d] = std::clamp(max_modes, 1, g.n[d]);
      const double len = g.spacing[d] * (g.n[d] - 1);
      table[d].resize(static_cast<std::size_t>(modes[d]) * g.n[d]);
      for (int k = 0; k < modes[d]; ++k)
        for (int i = 0; i < g.n[d]; ++i)
          table[d][static_cast<std::size_t>(k) * g.n[d] + i] =
              std::cos(kPi * k * (i * g.spacing[d]) / len);
    }
  }
  std::size_t count() const { return static_cast<std::size_t>(modes[0]) * modes[1] * modes[2]; }
  double at(int d, int k, int i) const {
    return d < grid->dim ? table[d][static_cast<std::size_t>(k) * grid->n[d] + i] : 1.0;
  }
  /// All mode values at node idx, in the order k0 fastest.
  void eval(std::size_t idx, std::vector<double>& out) const {
    const auto mi = grid->multi_index(idx);
    out.resize(count());
    std::size_t q = 0;
    for (int k2 = 0; k2 < modes[2]; ++k2)
      for (int k1 = 0; k1 < modes[1]; ++k1)
        for (int k0 = 0; k0 < modes[0]; ++k0, ++q)
          out[q] = at(2, k2, mi[2]) * at(1, k1, mi[1]) * at(0, k0, mi[0]);
  }
};

}  // namespace

ScalarField random_smooth_field(const Grid& grid, const Region& support, std::uint64_t seed,
                                int max_modes) {
  const CosineModes cm(grid, max_modes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> coef(cm.count());
  for (auto& c : coef) c = nd(rng);

  ScalarField f(grid, support);
  std::vector<double> phi;
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    if (!f.mask[idx]) continue;
    cm.eval(idx, phi);
    double v = 0.0;
    for (std::size_t q = 0; q < phi.size(); ++q) v += coef[q] * phi[q];
    f.values[idx] = v;
  }
  const double n = l2_norm_masked(f);
  if (n > 0.0) scale(f, 1.0 / n);
  return f;
}

namespace {

ScalarField apply_masked(const CurveFamily& fam, const Weight& w, const ScalarField& f) {
  ScalarField out = normal(fam, w, f);
  out.mask = f.mask;
  out.apply_mask();
  return out;
}

}  // namespace

SolveResult solve_normal(const CurveFamily& fam, const Weight& w, const ScalarField& g,
                         const SolveOptions& opts) {
  SolveResult res;
  ScalarField b = g;
  b.apply_mask();
  res.f = b.zeros_like();
  const double gnorm = l2_norm(b);
  res.residuals.push_back(1.0);
  if (gnorm == 0.0) {
    res.converged = true;
    return res;
  }
  ScalarField r = b;
  ScalarField p = r;
  ScalarField ar = apply_masked(fam, w, r);
  ScalarField ap = ar;
  Complex rho = inner(r, ar);
  for (int it = 0; it < opts.max_iter; ++it) {
    const double denom = inner(ap, ap).real();
    if (!(denom > 0.0)) break;
    const Complex a = rho / denom;
    axpy(a, p, res.f);
    axpy(-a, ap, r);
    res.iterations = it + 1;
    const double rel = l2_norm(r) / gnorm;
    res.residuals.push_back(rel);
    if (rel <= opts.tol) {
      res.converged = true;
      break;
    }
    ar = apply_masked(fam, w, r);
    const Complex rho_new = inner(r, ar);
    const Complex beta = rho_new / rho;
    rho = rho_new;
    scale(p, beta);
    axpy(1.0, r, p);
    scale(ap, beta);
    axpy(1.0, ar, ap);
  }
  if (!res.converged && opts.throw_on_failure) {
    std::ostringstream os;
    os << "solve_normal: relative residual " << res.residuals.back() << " after "
       << res.iterations << " iterations; history:";
    for (double v : res.residuals) os << " " << v;
    throw NoConvergence(os.str());
  }
  return res;
}

double stability_ratio(const CurveFamily& fam, const Weight& w, const ScalarField& f) {
  const double n = l2_norm_masked(f);
  if (n == 0.0) return 0.0;
  return h1_norm(normal(fam, w, f)) / n;
}

StabilityReport stability_probe(const CurveFamily& fam, const Weight& w, const Grid& grid,
                                const Region& support, int trials, std::uint64_t seed,
                                const std::vector<std::pair<std::string, ScalarField>>& extra) {
  if (trials < 1) throw std::invalid_argument("stability_probe: trials must be at least 1");
  StabilityReport rep;
  for (int k = 0; k < trials; ++k) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(k);
    rep.seeds.push_back(s);
    rep.ratios.push_back(stability_ratio(fam, w, random_smooth_field(grid, support, s)));
  }
  rep.min_ratio = *std::min_element(rep.ratios.begin(), rep.ratios.end());
  rep.max_ratio = *std::max_element(rep.ratios.begin(), rep.ratios.end());

  ScalarField checker(grid, support);
  for (std::size_t i = 0; i < checker.size(); ++i) {
    const auto m = grid.multi_index(i);
    checker.values[i] = (m[0] + m[1] + m[2]) % 2 ? -1.0 : 1.0;
  }
  checker.apply_mask();
  rep.candidate_names.push_back("highest_mode");
  rep.candidate_ratios.push_back(stability_ratio(fam, w, checker));
  for (const auto& [name, f] : extra) {
    rep.candidate_names.push_back(name);
    rep.candidate_ratios.push_back(stability_ratio(fam, w, f));
  }
  return rep;
}

std::string channel_name(Channel c) {
  switch (c) {
    case Channel::G: return "G";
    case Channel::Mu: return "mu";
    case Channel::Sigma: return "sigma";
    case Channel::W: return "w";
    case Channel::Alpha: return "alpha";
  }
  return "?";
}

Channel channel_from_name(const std::string& name) {
  for (Channel c : all_channels())
    if (channel_name(c) == name) return c;
  throw ConfigError("unknown perturbation channel '" + name + "'");
}

std::vector<Channel> all_channels() {
  return {Channel::G, Channel::Mu, Channel::Sigma, Channel::W, Channel::Alpha};
}

double c2_norm_estimate(const std::function<double(const Vec&)>& f, const std::vector<Vec>& samples,
                        double step) {
  double best = 0.0;
  for (const Vec& x : samples) {
    const int n = static_cast<int>(x.size());
    const double f0 = f(x);
    best = std::max(best, std::abs(f0));
    for (int i = 0; i < n; ++i) {
      Vec ei = Vec::Zero(n);
      ei[i] = step;
      const double fp = f(x + ei), fm = f(x - ei);
      best = std::max(best, std::abs(fp - fm) / (2.0 * step));
      best = std::max(best, std::abs(fp - 2.0 * f0 + fm) / (step * step));
      for (int j = i + 1; j < n; ++j) {
        Vec ej = Vec::Zero(n);
        ej[j] = step;
        const double mixed = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) /
                             (4.0 * step * step);
        best = std::max(best, std::abs(mixed));
      }
    }
  }
  return best;
}

namespace {

Vec padded(int dim, double a, double b) {
  Vec v = Vec::Zero(dim);
  v[0] = a;
  if (dim > 1) v[1] = b;
  return v;
}

// Spatial bump and its C^2 norm over the field box.
struct SpaceBump {
  Vec center;
  double radius = 0.5;
  double norm = 1.0;
  double operator()(const Vec& x) const { return smooth_bump(x, center, radius) / norm; }
};

SpaceBump space_bump(const Scenario& s) {
  SpaceBump b;
  const int dim = s.gen.dim;
  b.center = padded(dim, 0.2, 0.1);
  std::vector<Vec> samples;
  const int n = dim == 2 ? 41 : 17;
  const Grid g = Grid::over_box(Box{(b.center.array() - b.radius).matrix(), (b.center.array() + b.radius).matrix()}, n);
  for (std::size_t i = 0; i < g.size(); ++i) samples.push_back(g.point(i));
  const SpaceBump raw{b.center, b.radius, 1.0};
  b.norm = c2_norm_estimate(raw, samples, 1e-3);
  return b;
}

// Bump on the initial manifold in the patch parameters (u, b) of patch 0:
// centred at u = 1 on the first surface axis, flat-topped near b = 0.
struct ManifoldBump {
  int k = 1;  // parameters per block
  double norm = 1.0;
  double raw(const Vec& p) const {
    const double du = wrap_angle(p[0] - 1.0);
    double v = smooth_bump(vec2(du, 0.0), vec2(0.0, 0.0), 1.0);
    v *= 1.0 - c2_step((std::abs(p[k]) - 0.3) / 0.3);
    return v;
  }
  double operator()(const HPoint& h) const {
    Vec p(2 * k);
    for (int i = 0; i < k; ++i) {
      p[i] = h.u[i];
      p[k + i] = h.b[i];
    }
    return raw(p) / norm;
  }
};

ManifoldBump manifold_bump(const Scenario& s) {
  ManifoldBump b;
  b.k = s.gen.dim - 1;
  std::vector<Vec> samples;
  const int n = b.k == 1 ? 61 : 9;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Vec p = Vec::Zero(2 * b.k);
      p[0] = 2.0 * i / (n - 1.0);
      p[b.k] = -0.6 + 1.2 * j / (n - 1.0);
      samples.push_back(p);
    }
  b.norm = c2_norm_estimate([&b](const Vec& p) { return b.raw(p); }, samples, 1e-3);
  return b;
}

}  // namespace

Scenario perturbed_scenario(const Scenario& base, Channel channel, double delta) {
  Scenario s = base;
  const SpaceBump sb = space_bump(base);
  const ManifoldBump mb = manifold_bump(base);
  const InitialManifold im = base.manifold;
  const Generator g0 = base.gen;
  switch (channel) {
    case Channel::G: {
      const Vec e = padded(base.gen.dim, 0.6, 0.8);
      s.gen.accel = [g0, sb, e, delta](const Vec& x, const Vec& xi) {
        return Vec(g0.accel(x, xi) + delta * sb(x) * xi.squaredNorm() * e);
      };
      break;
    }
    case Channel::Mu:
      s.manifold.mu = [im, g0, mb, delta](const HPoint& h) { return im.mu_at(g0, h) + delta * mb(h); };
      break;
    case Channel::Sigma:
      s.manifold.sigma = [im, mb, delta](const HPoint& h) { return im.sigma_at(h) + delta * mb(h); };
      break;
    case Channel::Alpha:
      s.manifold.alpha = [im, mb, delta](const HPoint& h) { return im.alpha_at(h) + delta * mb(h); };
      break;
    case Channel::W: {
      const Weight w0 = base.weight;
      Weight w;
      w.eval = [w0, sb, delta](const Vec& x, const Vec& xi) { return w0(x, xi) + delta * sb(x); };
      w.w_min = w0.w_min - delta;
      w.w_max = w0.w_max + delta;
      s.weight = w;
      break;
    }
  }
  return s;
}

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

}  // namespace

PerturbationReport perturbation_experiment(const Scenario& base, Channel channel,
                                           const std::vector<double>& deltas,
                                           const PerturbationSetup& setup) {
  PerturbationReport rep;
  rep.channel = channel;
  rep.deltas = deltas;
  rep.c2_norm = channel == Channel::G || channel == Channel::W ? space_bump(base).norm
                                                               : manifold_bump(base).norm;
  const Grid grid = base.grid(setup.grid_nodes);
  std::vector<ScalarField> probes;
  for (int k = 0; k < setup.probes; ++k)
    probes.push_back(random_smooth_field(grid, base.support, setup.seed + k));
  const CurveFamily fam0 = build_family(base.gen, base.manifold, setup.res);
  std::vector<ScalarField> n0;
  for (const auto& f : probes) n0.push_back(normal(fam0, base.weight, f));

  for (double delta : deltas) {
    const Scenario s = perturbed_scenario(base, channel, delta);
    CurveFamily fam;
    try {
      fam = build_family(s.gen, s.manifold, setup.res);
    } catch (const std::exception& e) {
      throw FamilyRebuildFailure(std::string("perturbation ") + channel_name(channel) +
                                 ": family rebuild failed: " + e.what());
    }
    double d = 0.0;
    for (std::size_t k = 0; k < probes.size(); ++k) {
      ScalarField diff = normal(fam, s.weight, probes[k]);
      axpy(-1.0, n0[k], diff);
      d = std::max(d, h1_norm(diff) / l2_norm_masked(probes[k]));
    }
    rep.distances.push_back(d);
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    sxy += deltas[i] * rep.distances[i];
    sxx += deltas[i] * deltas[i];
  }
  rep.slope = sxx > 0 ? sxy / sxx : 0.0;
  rep.correlation = pearson(rep.deltas, rep.distances);
  if (deltas.size() >= 2) {
    const double n = static_cast<double>(deltas.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      mx += deltas[i] / n;
      my += rep.distances[i] / n;
    }
    double cxy = 0, cxx = 0;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      cxy += (deltas[i] - mx) * (rep.distances[i] - my);
      cxx += (deltas[i] - mx) * (deltas[i] - mx);
    }
    rep.affine_slope = cxx > 0 ? cxy / cxx : 0.0;
    rep.intercept = my - rep.affine_slope * mx;
  }
  return rep;
}

namespace {

using SpMat = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
using CVec = Eigen::VectorXcd;

struct MaskedOperator {
  const CurveFamily* fam;
  const Weight* w;
  Grid grid;
  std::vector<std::uint8_t> mask;
  std::vector<std::size_t> dofs;   // masked node indices
  std::vector<double> sqrt_q;      // sqrt of grid weights at the dofs
  bool dense = false;
  SpMat a;                          // forward matrix (active curves x dofs)
  std::vector<double> curve_weight; // dSigma weights of the active curves
  double shift = 0.0;
  Eigen::MatrixXd basis;            // orthonormal columns in the weighted node space; empty = nodal

  std::size_t dimension() const {
    return basis.size() ? static_cast<std::size_t>(basis.cols()) : dofs.size();
  }

  ScalarField to_field(const CVec& c) const {
    const CVec y = basis.size() ? CVec(basis.cast<Complex>() * c) : c;
    ScalarField f(grid);
    f.mask = mask;
    for (std::size_t k = 0; k < dofs.size(); ++k) f.values[dofs[k]] = y[k] / sqrt_q[k];
    return f;
  }

  CVec apply(const CVec& c) const {
    if (!basis.size()) return apply_nodal(c);
    const CVec y = basis.cast<Complex>() * c;
    return basis.transpose().cast<Complex>() * apply_nodal(y);
  }

  CVec apply_nodal(const CVec& y) const {
    CVec out(dofs.size());
    if (dense) {
      CVec f(dofs.size());
      for (std::size_t k = 0; k < dofs.size(); ++k) f[k] = y[k] / sqrt_q[k];
      CVec s = a * f;
      for (Eigen::Index c = 0; c < s.size(); ++c) s[c] *= curve_weight[c];
      const CVec u = a.adjoint() * s;
      for (std::size_t k = 0; k < dofs.size(); ++k) out[k] = u[k] / sqrt_q[k];
    } else {
      const ScalarField nf = normal(*fam, *w, to_field(y));
      for (std::size_t k = 0; k < dofs.size(); ++k) out[k] = nf.values[dofs[k]] * sqrt_q[k];
    }
    return out + shift * y;
  }
};

double time_weight(const Curve& c, std::size_t k) {
  const std::size_t n = c.size();
  if (n < 2) return 0.0;
  if (k == 0) return 0.5 * (c.t[1] - c.t[0]);
  if (k == n - 1) return 0.5 * (c.t[n - 1] - c.t[n - 2]);
  return 0.5 * (c.t[k + 1] - c.t[k - 1]);
}

void assemble(MaskedOperator& op) {
  std::vector<long> dof_of(op.grid.size(), -1);
  for (std::size_t k = 0; k < op.dofs.size(); ++k) dof_of[op.dofs[k]] = static_cast<long>(k);
  const CurveFamily& fam = *op.fam;
  std::vector<Eigen::Triplet<Complex>> trip;
  Curve scratch;
  for (std::size_t i = 0; i < fam.active.size(); ++i) {
    const std::size_t c = fam.active[i];
    const Curve& cv = fam.curve(c, scratch);
    for (std::size_t k = 0; k < cv.size(); ++k) {
      const Vec x = cv.position(k);
      const Stencil st = stencil_at(op.grid, x);
      Complex coeff = fam.alpha[c] * time_weight(cv, k);
      if (!op.w->is_unit()) coeff *= (*op.w)(x, cv.velocity(k));
      for (int q = 0; q < st.count; ++q) {
        const long d = dof_of[st.idx[q]];
        if (d >= 0 && st.w[q] != 0.0) trip.emplace_back(static_cast<int>(i), static_cast<int>(d), coeff * st.w[q]);
      }
    }
    op.curve_weight.push_back(fam.weight[c]);
  }
  op.a.resize(static_cast<Eigen::Index>(fam.active.size()), static_cast<Eigen::Index>(op.dofs.size()));
  op.a.setFromTriplets(trip.begin(), trip.end());
  op.dense = true;
}

}  // namespace

InjectivityReport injectivity_witness(const CurveFamily& fam, const Weight& w, const Grid& grid,
                                      const Region& support, const LanczosOptions& opts) {
  if (fam.active.empty()) throw EmptyFamily("injectivity_witness: no active curves");
  MaskedOperator op;
  op.fam = &fam;
  op.w = &w;
  op.grid = grid;
  op.shift = opts.shift;
  const ScalarField probe(grid, support);
  op.mask = probe.mask;
  const auto q = grid.weights();
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (probe.mask[i]) {
      op.dofs.push_back(i);
      op.sqrt_q.push_back(std::sqrt(q[i]));
    }
  const std::size_t m = op.dofs.size();
  if (m == 0) throw std::invalid_argument("injectivity_witness: empty support");
  if (m <= opts.dense_limit) assemble(op);
  if (opts.modes > 0) {
    const CosineModes cm(grid, opts.modes);
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(cm.count()));
    std::vector<double> row;
    for (std::size_t k = 0; k < m; ++k) {
      cm.eval(op.dofs[k], row);
      for (std::size_t q = 0; q < row.size(); ++q) phi(k, q) = row[q] * op.sqrt_q[k];
    }
    // Orthonormal basis of the masked span; nearly dependent combinations dropped.
    Eigen::BDCSVD<Eigen::MatrixXd> svd(phi, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv[rank] > 1e-8 * sv[0]) ++rank;
    op.basis = svd.matrixU().leftCols(rank);
  }
  const std::size_t dim = op.dimension();

  const int steps = static_cast<int>(std::min<std::size_t>(dim, static_cast<std::size_t>(opts.max_steps)));
  for (int attempt = 0; attempt <= opts.restarts; ++attempt) {
    const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(attempt);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<CVec> basis;
    std::vector<double> alpha, beta;
    CVec v(dim);
    for (std::size_t k = 0; k < dim; ++k) v[k] = nd(rng);
    v.normalize();
    bool breakdown = false;
    double scale_est = 0.0;
    for (int j = 0; j < steps; ++j) {
      basis.push_back(v);
      CVec u = op.apply(v);
      const double a = v.dot(u).real();  // conjugate-linear in v
      alpha.push_back(a);
      scale_est = std::max(scale_est, std::abs(a));
      // Full reorthogonalization, twice.
      for (int pass = 0; pass < 2; ++pass)
        for (const CVec& b : basis) u -= b.dot(u) * b;
      const double bnorm = u.norm();
      if (j + 1 == steps) break;
      if (bnorm <= 1e-12 * std::max(scale_est, 1e-300)) {
        breakdown = true;
        break;
      }
      beta.push_back(bnorm);
      v = u / bnorm;
    }
    if (breakdown) continue;

    const int k = static_cast<int>(alpha.size());
    Eigen::VectorXd diag(k), sub(std::max(0, k - 1));
    for (int i = 0; i < k; ++i) diag[i] = alpha[i];
    for (int i = 0; i + 1 < k; ++i) sub[i] = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    InjectivityReport rep;
    rep.steps = k;
    rep.seed_used = seed;
    rep.dofs = dim;
    for (int i = 0; i < k; ++i) rep.ritz.push_back(es.eigenvalues()[i]);
    rep.smallest = rep.ritz.front();
    rep.largest = rep.ritz.back();
    rep.no_near_kernel = rep.smallest > opts.tol * rep.largest;
    CVec y = CVec::Zero(dim);
    for (int i = 0; i < k; ++i) y += es.eigenvectors()(i, 0) * basis[i];
    rep.candidate = op.to_field(y);
    return rep;
  }
  throw LanczosBreakdown("injectivity_witness: Lanczos broke down for every seed");
}

double correlation(const ScalarField& a, const ScalarField& b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::abs(inner(a, b)) / (na * nb);
}

nlohmann::json stability_summary(const StabilityReport& r) {
  nlohmann::json j;
  j["trials"] = r.ratios.size();
  j["min_ratio"] = r.min_ratio;
  j["max_ratio"] = r.max_ratio;
  for (std::size_t i = 0; i < r.candidate_names.size(); ++i)
    j["candidates"][r.candidate_names[i]] = r.candidate_ratios[i];
  return j;
}

std::string stability_csv(const StabilityReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "seed,ratio\n";
  for (std::size_t i = 0; i < r.ratios.size(); ++i) os << r.seeds[i] << "," << r.ratios[i] << "\n";
  return os.str();
}

nlohmann::json perturbation_summary(const PerturbationReport& r) {
  nlohmann::json j;
  j["channel"] = channel_name(r.channel);
  j["deltas"] = r.deltas;
  j["distances"] = r.distances;
  j["slope"] = r.slope;
  j["affine_slope"] = r.affine_slope;
  j["intercept"] = r.intercept;
  j["correlation"] = r.correlation;
  j["bump_c2_norm"] = r.c2_norm;
  return j;
}

std::string perturbation_csv(const std::vector<PerturbationReport>& reports) {
  std::ostringstream os;
  os.precision(17);
  os << "channel,delta,distance\n";
  for (const auto& r : reports)
    for (std::size_t i = 0; i < r.deltas.size(); ++i)
      os << channel_name(r.channel) << "," << r.deltas[i] << "," << r.distances[i] << "\n";
  return os.str();
}

std::string residual_csv(const SolveResult& r) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,relative_residual\n";
  for (std::size_t i = 0; i < r.residuals.size(); ++i) os << i << "," << r.residuals[i] << "\n";
  return os.str();
}

}  // namespace curvetomo
