#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "curvetomo/geometry.hpp"

namespace curvetomo {

/// Node-centred uniform grid: node i sits at lo + i * spacing, i = 0..n-1.
struct Grid {
  int dim = 2;
  std::array<int, 3> n{1, 1, 1};
  Vec lo;
  Vec spacing;

  static Grid over_box(const Box& box, int nodes_per_axis);
  std::size_t size() const { return static_cast<std::size_t>(n[0]) * n[1] * n[2]; }
  std::size_t index(int i, int j, int k = 0) const {
    return (static_cast<std::size_t>(k) * n[1] + j) * n[0] + i;
  }
  std::array<int, 3> multi_index(std::size_t idx) const;
  Vec point(std::size_t idx) const;
  Box box() const;
  double cell_volume() const { return spacing.prod(); }
  double min_spacing() const { return spacing.minCoeff(); }
  /// Trapezoid node weights of the grid L2 inner product.
  std::vector<double> weights() const;
  bool same_as(const Grid& o) const;
};

/// Interpolation stencil: up to 8 (node, weight) pairs.
struct Stencil {
  std::array<std::size_t, 8> idx{};
  std::array<double, 8> w{};
  int count = 0;
};

/// Multilinear stencil at x. Points outside the grid box by at most half a
/// cell are clamped onto it; farther points throw InterpolationOutOfDomain.
Stencil stencil_at(const Grid& g, const Vec& x);

struct ScalarField {
  Grid grid;
  std::vector<Complex> values;
  std::vector<std::uint8_t> mask;  // 1 inside M

  ScalarField() = default;
  explicit ScalarField(const Grid& g);
  ScalarField(const Grid& g, const Region& support);

  std::size_t size() const { return values.size(); }
  void set_mask(const Region& support);
  void apply_mask();
  bool is_complex() const;
  ScalarField zeros_like() const;
  Complex interpolate(const Vec& x) const;

  template <class F>
  static ScalarField sample(const Grid& g, const Region& support, F&& f) {
    ScalarField out(g, support);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = f(g.point(i));
    return out;
  }
};

/// Grid L2 inner product, conjugate-linear in the first slot.
Complex inner(const ScalarField& a, const ScalarField& b);
double l2_norm(const ScalarField& f);
/// L2 norm restricted to the mask.
double l2_norm_masked(const ScalarField& f);
/// (|f|^2 + |grad f|^2)^(1/2) with central differences, one-sided at the boundary.
double h1_norm(const ScalarField& f);

void axpy(Complex a, const ScalarField& x, ScalarField& y);
void scale(ScalarField& f, Complex a);

std::string field_csv(const ScalarField& f);
void write_field_binary(const ScalarField& f, const std::string& path);
ScalarField read_field_binary(const std::string& path);

}  // namespace curvetomo
