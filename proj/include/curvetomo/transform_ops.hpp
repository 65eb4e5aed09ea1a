#pragma once

#include <string>
#include <vector>

#include "curvetomo/family_geometry.hpp"
#include "curvetomo/field.hpp"

namespace curvetomo {

struct Weight {
  std::function<Complex(const Vec& x, const Vec& xi)> eval;  // empty means w = 1
  double w_min = 1.0;
  double w_max = 1.0;

  Complex operator()(const Vec& x, const Vec& xi) const { return eval ? eval(x, xi) : 1.0; }
  bool is_unit() const { return !eval; }
  static Weight unit() { return {}; }
  static Weight constant(Complex c);
};

/// Transform values per node of the family's initial-manifold grid, with the
/// dSigma quadrature weights.
struct Sinogram {
  std::vector<Complex> values;
  std::vector<double> weight;

  std::size_t size() const { return values.size(); }
};

Sinogram zero_sinogram(const CurveFamily& fam);
Complex inner(const Sinogram& a, const Sinogram& b);
double norm(const Sinogram& s);

/// alpha * int w(gamma, gamma') f(gamma) dt per active curve (trapezoid in t,
/// multilinear in f). f is restricted to its mask first.
Sinogram forward(const CurveFamily& fam, const Weight& w, const ScalarField& f);

/// Exact transpose of `forward` with respect to the dSigma weights and the grid
/// L2 inner product. The result lives on the grid of `like` and keeps its mask.
ScalarField adjoint(const CurveFamily& fam, const Weight& w, const Sinogram& s,
                    const ScalarField& like);

/// adjoint(forward(f)), fused so that each curve is visited once.
ScalarField normal(const CurveFamily& fam, const Weight& w, const ScalarField& f);

std::string sinogram_csv(const CurveFamily& fam, const Sinogram& s);

}  // namespace curvetomo
