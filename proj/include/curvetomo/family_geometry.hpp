#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curvetomo/curve_dynamics.hpp"

namespace curvetomo {

using Params = std::array<double, 2>;

struct ParamAxis {
  double lo = 0.0;
  double hi = 1.0;
  bool periodic = false;
};

/// A point of the initial manifold: a base point z on a patch and a
/// transversal direction theta, with the parameters that produced them.
struct HPoint {
  int patch = 0;
  Params u{0.0, 0.0};  // surface parameters
  Params b{0.0, 0.0};  // direction parameters
  Vec z;
  Vec theta;   // unit
  Vec normal;  // unit, pointing to the side the curves enter
};

/// Parametrized hypersurface with a parametrized transversal cone.
/// In dimension n both parameter blocks have n-1 entries.
struct Patch {
  std::string kind;
  int dim = 2;
  std::vector<ParamAxis> surface;
  std::vector<ParamAxis> direction;
  std::function<Vec(const Params& u)> point;
  std::function<Vec(const Params& u)> normal;
  std::function<Vec(const Params& u, const Params& b)> direction_at;
  std::function<double(const Params& u)> area_element;
  std::function<double(const Params& u, const Params& b)> angle_element;
  /// Negative on the side the normal points to.
  std::function<double(const Vec& x)> level;
  std::function<Params(const Vec& z)> locate_surface;
  std::function<Params(const Params& u, const Vec& theta)> locate_direction;

  HPoint make(const Params& u, const Params& b, int index = 0) const;
};

/// Circle of the given radius; u = polar angle, b = angle from the inward normal.
Patch circle_patch(const Vec& center, double radius);

/// Sphere of the given radius; u = (colatitude, azimuth), b = (tilt from the
/// inward normal, azimuth of the tilt).
Patch sphere_patch(const Vec& center, double radius);

struct InitialManifold {
  std::vector<Patch> patches;
  std::function<double(const HPoint&)> alpha;   // cutoff, default 1
  std::function<double(const HPoint&)> mu;      // default lambda(z, theta)
  std::function<double(const HPoint&)> sigma;   // default 1
  std::function<double(const HPoint&)> l_plus;  // default: exit time from `region`
  Region region;                                // M1, negative inside
  double l_max = 20.0;
  double trans_min = 1e-3;

  double alpha_at(const HPoint& p) const { return alpha ? alpha(p) : 1.0; }
  double sigma_at(const HPoint& p) const { return sigma ? sigma(p) : 1.0; }
  double mu_at(const Generator& g, const HPoint& p) const {
    return mu ? mu(p) : g.lambda(p.z, p.theta);
  }
};

struct FamilyResolution {
  std::vector<int> surface{64};    // nodes per surface axis
  std::vector<int> direction{64};  // nodes per direction axis
  double h = 1e-2;                 // curve step
  bool cache = true;               // keep integrated curves in memory
  double tol_ode = 1e-3;
};

/// Node positions and trapezoid weights of a parameter axis: periodic axes use
/// uniform nodes, others midpoint nodes.
std::vector<double> axis_nodes(const ParamAxis& axis, int n);
double axis_spacing(const ParamAxis& axis, int n);

class CurveFamily {
 public:
  Generator gen;
  InitialManifold manifold;
  FamilyResolution res;

  std::vector<HPoint> nodes;
  std::vector<double> alpha;   // cutoff per node
  std::vector<double> weight;  // dSigma quadrature weight per node (includes sigma)
  std::vector<double> speed;   // mu per node
  std::vector<std::size_t> active;
  std::vector<Curve> curves;   // filled for active nodes when caching

  std::size_t size() const { return nodes.size(); }
  std::size_t active_count() const { return active.size(); }
  /// Cached curve, or a freshly integrated one stored in `scratch`.
  const Curve& curve(std::size_t c, Curve& scratch) const;
  Curve integrate(std::size_t c) const;
  /// Family curve from an arbitrary point of the initial manifold.
  Curve integrate_from(const HPoint& p) const;
  /// Node spacing of the direction grid (smallest over axes and patches).
  double direction_spacing() const;
  double surface_spacing() const;
};

CurveFamily build_family(const Generator& gen, const InitialManifold& im,
                         const FamilyResolution& res);

/// Family over an explicit node list; each node gets unit parameter
/// weight (sigma times the surface and angle elements only).
CurveFamily build_family_nodes(const Generator& gen, const InitialManifold& im,
                               const std::vector<HPoint>& nodes, const FamilyResolution& res);

/// Where the family curve through (x, v) starts: the crossing with the
/// initial manifold found by integrating backwards.
struct Anchor {
  HPoint point;
  double t = 0.0;  // time from the anchor to x along the curve
};

/// Traces the curve through x with velocity lambda(x, v) v backwards to the
/// first patch crossing. Returns nothing if none is reached within l_max.
std::optional<Anchor> trace_to_anchor(const CurveFamily& fam, const Vec& x, const Vec& v,
                                      double h = -1.0);

enum class Variation { Direction, BasePoint };

/// J_nu(t) = d gamma(t) / d theta_nu by central differences of neighbour
/// curves, one field per tangent direction (n-1 of them), on curve.t.
std::vector<std::vector<Vec>> jacobi_fields(const Generator& gen, const Curve& curve,
                                            Variation kind = Variation::Direction,
                                            double h_var = 1e-4, double scale = 1.0);

struct ConjugateOptions {
  double h_var = 1e-4;
  double tol_conj = 1e-3;
};

struct ConjugateReport {
  std::vector<double> t;
  std::vector<double> det;    // det[gamma', J_1, ..., J_{n-1}] per sample
  std::vector<double> times;  // conjugate times (both signs)
  double first_positive = INFINITY;
  bool empty() const { return times.empty(); }
};

ConjugateReport conjugate_points(const Generator& gen, const Curve& curve,
                                 const ConjugateOptions& opts = {});

struct CoverageOptions {
  double dist_tol = -1.0;   // default 2 grid cells of the test grid
  double angle_tol = -1.0;  // default 1.5 x direction spacing
  int directions = 16;      // candidate directions per conormal in 3D
  ConjugateOptions conj;
};

struct CoverageReport {
  std::vector<Vec> x;
  std::vector<Vec> zeta;
  std::vector<char> found;
  double fraction = 0.0;
  double dist_tol = 0.0;
  double angle_tol = 0.0;
  std::size_t tested() const { return found.size(); }
};

/// Checks each (x, zeta) for an active curve through x normal to zeta with no
/// conjugate points.
CoverageReport regularity_check(const CurveFamily& fam, const std::vector<Vec>& points,
                                const std::vector<Vec>& conormals,
                                const CoverageOptions& opts = {});

/// Uniform test grid: points inside `inside` from an n x n (x n) lattice over
/// the box, and unit conormals at angles offset by half a step.
std::vector<Vec> lattice_points(const Box& box, int n, const Region& inside);
std::vector<Vec> conormal_directions(int dim, int n);

std::string coverage_csv(const CoverageReport& r);
nlohmann::json coverage_summary(const CoverageReport& r);
std::string conjugate_csv(const std::vector<ConjugateReport>& reports,
                          const std::vector<std::size_t>& ids);
nlohmann::json conjugate_summary(const std::vector<ConjugateReport>& reports);

}  // namespace curvetomo
