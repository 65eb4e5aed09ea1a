#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curvetomo/family_geometry.hpp"
#include "curvetomo/field.hpp"
#include "curvetomo/transform_ops.hpp"

namespace curvetomo {

using ParamMap = std::map<std::string, double>;

struct ExpectedProperties {
  bool regular = true;
  double conjugate_distance = INFINITY;
  bool calibration = false;  // A(x, 0, omega) = 1 on the support
  double cap_radius = 0.0;
};

struct Scenario {
  std::string name;
  ParamMap params;  // defaults merged with overrides
  Generator gen;
  InitialManifold manifold;
  Weight weight;
  Region support;  // M, negative inside
  Box field_box;
  std::vector<std::string> phantoms;
  ExpectedProperties expected;
  std::vector<std::pair<std::string, ChartMap>> charts;  // extra charts, name -> map
  /// Antipodal pair (sphere scenario only).
  std::optional<std::pair<Vec, Vec>> pair;

  ScalarField phantom(const std::string& name, const Grid& grid) const;
  Grid grid(int nodes_per_axis) const { return Grid::over_box(field_box, nodes_per_axis); }
  const ChartMap& chart(const std::string& name) const;
};

/// Registered names (variants included).
std::vector<std::string> scenario_names();
/// Default parameters of a registered name.
ParamMap scenario_defaults(const std::string& name);
/// Builds a scenario; unknown names or parameters throw ConfigError.
Scenario make_scenario(const std::string& name, const ParamMap& overrides = {});

Scenario scenario_lines_disk(const ParamMap& overrides = {});
Scenario scenario_magnetic(const ParamMap& overrides = {});
Scenario scenario_antipodal_sphere(const ParamMap& overrides = {});
Scenario scenario_lines_box3d(const ParamMap& overrides = {});

/// Sphere-geodesic generator in a stereographic chart (pole at the origin).
Generator sphere_generator(const Box& box);
/// Stereographic chart point to the unit sphere, and back.
Vec sphere_point(const Vec& x);
Vec sphere_chart(const Vec& p);
double sphere_distance(const Vec& x, const Vec& y);
/// Chart change between the two stereographic charts, y = x / |x|^2.
ChartMap inversion_chart(const Box& image_box);

/// Smooth cutoff in the angle from the normal: 1 up to `flat`, 0 from `cut`.
double beta_cutoff(double beta, double flat, double cut);

}  // namespace curvetomo
