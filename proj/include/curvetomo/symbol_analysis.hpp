#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "curvetomo/transform_ops.hpp"

namespace curvetomo {

/// Near-diagonal kernel amplitude A(x, r, omega) of the normal operator.
using Amplitude = std::function<Complex(const Vec& x, double r, const Vec& omega)>;

/// Polar coordinates (r, omega) of y - x = exp_x(t, v) - x, with signed r.
struct PolarPoint {
  double r = 0.0;
  Vec omega;
};

struct PolarTime {
  double t = 0.0;
  Vec v;
};

/// Polar kernel of N = I* I near the diagonal for one family and weight.
class PolarKernel {
 public:
  PolarKernel(const CurveFamily& fam, const Weight& w, double eps_diag, double h = 1e-3);

  const CurveFamily& family() const { return *fam_; }
  double eps_diag() const { return eps_; }

  double lambda(const Vec& x, const Vec& v) const;
  /// exp_x(t, v): the curve through x with velocity lambda(x, v) v, and its velocity.
  PhaseState exp(const Vec& x, double t, const Vec& v) const;
  /// m(t, v; x) = (exp_x(t, v) - x) / t, with m(0) = lambda v.
  Vec m(const Vec& x, double t, const Vec& v) const;
  PolarPoint polar(const Vec& x, double t, const Vec& v) const;
  /// det d(r, omega) / d(t, v) in a common chart of the sphere.
  double jacobian(const Vec& x, double t, const Vec& v) const;
  /// Newton inverse of `polar`; throws NewtonDivergence.
  PolarTime inverse(const Vec& x, double r, const Vec& omega) const;

  /// alpha extended along the family curve through (x, v); 0 if none.
  double alpha_sharp(const Vec& x, const Vec& v) const;
  /// d(z, theta, t) / d(x, v) against the dSigma dt measure, sigma included.
  double j_flat(const Vec& x, const Vec& v) const;

  Complex b(const Vec& x, double t, const Vec& v) const;
  Complex b0(const Vec& x, const Vec& v) const;
  Complex b1(const Vec& x, double t, const Vec& v) const;
  double j0(const Vec& x, const Vec& v) const;
  double j1(const Vec& x, double t, const Vec& v) const;
  /// C^2 cutoff in t: 1 for |t| <= eps/2, 0 for |t| >= eps.
  double chi(double t) const;
  /// A = chi(t) B / J at (t, v) = inverse(x, r, omega).
  Complex amplitude(const Vec& x, double r, const Vec& omega) const;
  Amplitude as_amplitude() const;

 private:
  const CurveFamily* fam_;
  Weight w_;
  double eps_;
  double h_;
  double fd_ = 1e-5;
};

/// 0.1 x the smallest first conjugate time over (a sample of) active curves,
/// capped at 0.25.
double default_eps_diag(const CurveFamily& fam, std::size_t sample = 64);

/// a_0(x, xi) = 2 pi int A(x, 0, omega) delta(omega . xi) d omega by exact
/// reduction to the great circle orthogonal to xi.
Complex principal_symbol(const Amplitude& a, int dim, const Vec& x, const Vec& xi,
                         int circle_nodes = 64);
Complex principal_symbol(const PolarKernel& pk, const Vec& x, const Vec& xi);

/// a_1(x, xi) = 2 pi i int d_r A(x, 0, omega) delta'(omega . xi) d omega; the
/// derivative across the great circle is a central difference of step `step`.
Complex symbol_k1(const Amplitude& a, int dim, const Vec& x, const Vec& xi, double step,
                  double dr = 1e-3, int circle_nodes = 64);
Complex symbol_k1(const PolarKernel& pk, const Vec& x, const Vec& xi);

struct SymbolGrid {
  int dim = 2;
  std::vector<Vec> x;
  std::vector<Vec> xi;          // unit covectors
  std::vector<Complex> a0;      // a_0(x, xi) at |xi| = 1, one per (x, xi) pair
  double margin = INFINITY;     // min |a_0|
  std::size_t argmin = 0;
};

SymbolGrid ellipticity_scan(const PolarKernel& pk, const std::vector<Vec>& points,
                            const std::vector<Vec>& covectors);
std::string symbol_csv(const SymbolGrid& g);
nlohmann::json symbol_summary(const SymbolGrid& g);

struct ProbeRow {
  double frequency = 0.0;
  Complex measured;   // amplitude of N f at x0 relative to f(x0)
  Complex predicted;  // a_0(x0, frequency xi)
  double ratio_error = 0.0;
};

/// Applies N to window(x) exp(i lambda x . xi) and compares the amplitude at
/// x0 with a_0. Throws FrequencyAliasing above pi / dx.
std::vector<ProbeRow> oscillatory_probe(const CurveFamily& fam, const Weight& w, const Grid& grid,
                                        const Region& support, const Vec& x0, const Vec& xi,
                                        const std::vector<double>& freqs,
                                        const Amplitude& amplitude, double window_radius);
std::string probe_csv(const std::vector<ProbeRow>& rows);

/// int int A(x, r, omega) f(x + r omega) dr d omega over |r| < radius by a
/// product midpoint rule; omega nodes are offset so the rule is not antipodally
/// symmetric.
Complex near_diagonal_apply(const Amplitude& a, const ScalarField& f, const Vec& x, double radius,
                            int radial_nodes, int angular_nodes);
/// Odd part (A(r, omega) - A(-r, -omega)) / 2 and even part.
Amplitude odd_part(const Amplitude& a);
Amplitude even_part(const Amplitude& a);

}  // namespace curvetomo
