#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curvetomo/scenario_library.hpp"
#include "curvetomo/transform_ops.hpp"

namespace curvetomo {

/// Random smooth field: cosine series over the grid box with the lowest
/// `modes` modes per axis (capped by the grid), masked, unit masked L2 norm.
ScalarField random_smooth_field(const Grid& grid, const Region& support, std::uint64_t seed,
                                int modes = 16);

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 500;
  bool throw_on_failure = false;  // NoConvergence instead of a flagged result
};

struct SolveResult {
  ScalarField f;
  std::vector<double> residuals;  // relative residual per iteration, starting at 1
  int iterations = 0;
  bool converged = false;
};

/// Conjugate-residual iteration for N f = g on masked fields.
SolveResult solve_normal(const CurveFamily& fam, const Weight& w, const ScalarField& g,
                         const SolveOptions& opts = {});

struct StabilityReport {
  std::vector<std::uint64_t> seeds;
  std::vector<double> ratios;  // ||N f||_H1 / ||f||_L2(M)
  double min_ratio = INFINITY;
  double max_ratio = 0.0;
  std::vector<std::string> candidate_names;
  std::vector<double> candidate_ratios;
};

double stability_ratio(const CurveFamily& fam, const Weight& w, const ScalarField& f);

/// Random-field trials plus adversarial candidates (highest grid mode and the
/// given extra fields).
StabilityReport stability_probe(const CurveFamily& fam, const Weight& w, const Grid& grid,
                                const Region& support, int trials, std::uint64_t seed,
                                const std::vector<std::pair<std::string, ScalarField>>& extra = {});

enum class Channel { G, Mu, Sigma, W, Alpha };
std::string channel_name(Channel c);
Channel channel_from_name(const std::string& name);
std::vector<Channel> all_channels();

struct PerturbationSetup {
  int grid_nodes = 48;
  FamilyResolution res;
  int probes = 3;
  std::uint64_t seed = 1;
};

struct PerturbationReport {
  Channel channel = Channel::W;
  std::vector<double> deltas;
  std::vector<double> distances;  // d(delta)
  double c2_norm = 0.0;           // C^2 norm of the unscaled bump, before normalization
  double slope = 0.0;             // least squares through the origin
  double intercept = 0.0;         // affine fit
  double affine_slope = 0.0;
  double correlation = 0.0;       // Pearson correlation of (delta, d)
};

/// Finite-difference C^2 norm of a scalar function over sample points.
double c2_norm_estimate(const std::function<double(const Vec&)>& f, const std::vector<Vec>& samples,
                        double step);

/// Perturbs one ingredient of the scenario by delta times a C^2-normalized bump
/// and measures d(delta) = max_f ||(N_delta - N) f||_H1 / ||f||_L2.
PerturbationReport perturbation_experiment(const Scenario& base, Channel channel,
                                           const std::vector<double>& deltas,
                                           const PerturbationSetup& setup);
/// The perturbed scenario itself.
Scenario perturbed_scenario(const Scenario& base, Channel channel, double delta);

struct InjectivityReport {
  std::vector<double> ritz;  // ascending
  double smallest = 0.0;
  double largest = 0.0;
  bool no_near_kernel = true;
  ScalarField candidate;     // Ritz vector of the smallest Ritz value
  int steps = 0;
  std::uint64_t seed_used = 0;
  std::size_t dofs = 0;      // dimension of the search space
};

struct LanczosOptions {
  double tol = 1e-4;
  int max_steps = 400;
  std::uint64_t seed = 1;
  double shift = 0.0;        // spectrum of N + shift I
  int restarts = 3;          // new seeds after a breakdown
  std::size_t dense_limit = 10000;
  /// Cosine modes per axis of the search subspace; 0 searches all masked nodes.
  int modes = 24;
};

/// Lanczos with full reorthogonalization on N restricted to the masked nodes,
/// or to the masked span of the lowest cosine modes.
InjectivityReport injectivity_witness(const CurveFamily& fam, const Weight& w, const Grid& grid,
                                      const Region& support, const LanczosOptions& opts = {});

/// |<a, b>| / (||a|| ||b||) in the grid inner product.
double correlation(const ScalarField& a, const ScalarField& b);

nlohmann::json stability_summary(const StabilityReport& r);
std::string stability_csv(const StabilityReport& r);
nlohmann::json perturbation_summary(const PerturbationReport& r);
std::string perturbation_csv(const std::vector<PerturbationReport>& r);
std::string residual_csv(const SolveResult& r);

}  // namespace curvetomo
