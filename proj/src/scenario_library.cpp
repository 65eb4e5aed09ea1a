#include "curvetomo/scenario_library.hpp"

#include <algorithm>

namespace curvetomo {

namespace {

const std::map<std::string, ParamMap>& registry() {
  static const std::map<std::string, ParamMap> reg = [] {
    std::map<std::string, ParamMap> r;
    const ParamMap disk = {
        {"radius_m", 1.0},     {"radius_m1", 1.5},   {"box_half", 2.0},
        {"field_half", 1.5},   {"beta_flat", 0.80},  {"beta_cut", 1.30},
        {"sigma", 1.0},        {"calibration", 0.0}, {"limited", 0.0},
        {"angle_lo", 0.0},     {"angle_hi", 60.0},   {"angle_ramp", 10.0},
        {"alpha_scale", 1.0},  {"weight_scale", 1.0}, {"phantom_radius", 0.5}};
    r["lines_disk"] = disk;
    ParamMap limited = disk;
    limited["limited"] = 1.0;
    r["lines_disk_limited"] = limited;
    ParamMap calib = disk;
    calib["calibration"] = 1.0;
    r["lines_disk_calibration"] = calib;
    ParamMap magnetic = disk;
    magnetic["curvature"] = 0.2;
    r["magnetic"] = magnetic;
    r["antipodal_sphere"] = {{"cap_radius", 0.21},   {"band_halfwidth", 0.08},
                             {"bump_radius", 0.19},  {"m1_colatitude", 110.0},
                             {"field_half", 1.5},    {"beta_flat", 0.80},
                             {"beta_cut", 1.30},     {"alpha_scale", 1.0},
                             {"weight_scale", 1.0}};
    r["lines_box3d"] = {{"radius_m", 1.0},    {"radius_m1", 1.5},   {"box_half", 2.0},
                        {"field_half", 1.5},  {"beta_flat", 0.80},  {"beta_cut", 1.30},
                        {"alpha_scale", 1.0}, {"weight_scale", 1.0}, {"phantom_radius", 0.5}};
    return r;
  }();
  return reg;
}

ParamMap merge(const std::string& name, const ParamMap& overrides) {
  ParamMap p = scenario_defaults(name);
  for (const auto& [k, v] : overrides) {
    if (!p.count(k)) throw ConfigError("scenario " + name + ": unknown parameter '" + k + "'");
    p[k] = v;
  }
  return p;
}

Weight scaled_weight(double c) { return c == 1.0 ? Weight::unit() : Weight::constant(c); }

double deg(double d) { return d * kPi / 180.0; }

Scenario planar_lines(const std::string& name, const ParamMap& p) {
  Scenario s;
  s.name = name;
  s.params = p;
  const double rm = p.at("radius_m"), rm1 = p.at("radius_m1");
  if (!(rm > 0 && rm1 > rm)) throw ParameterOutOfRange("need 0 < radius_m < radius_m1");

  Generator g;
  g.name = "lines";
  g.dim = 2;
  g.box = make_box(2, -p.at("box_half"), p.at("box_half"));
  g.accel = [](const Vec&, const Vec&) { return Vec(Vec::Zero(2)); };
  g.speed = [](const Vec&, const Vec&) { return 1.0; };
  g.has_reference_solution = true;
  s.gen = g;

  InitialManifold im;
  im.patches = {circle_patch(Vec::Zero(2), rm1)};
  im.region = ball_region(Vec::Zero(2), rm1);
  im.l_max = 4.0 * rm1;
  const double flat = p.at("beta_flat"), cut = p.at("beta_cut"), ascale = p.at("alpha_scale");
  const bool limited = p.at("limited") != 0.0;
  const double lo = deg(p.at("angle_lo")), hi = deg(p.at("angle_hi")), ramp = deg(p.at("angle_ramp"));
  im.alpha = [=](const HPoint& h) {
    double a = ascale * beta_cutoff(h.b[0], flat, cut);
    if (limited) {
      double psi = angle_of(h.theta);
      if (psi < 0) psi += 2.0 * kPi;
      a *= smooth_step((psi - lo) / ramp) * smooth_step((hi - psi) / ramp);
    }
    return a;
  };
  const double sig = p.at("sigma");
  if (p.at("calibration") != 0.0)
    im.sigma = [sig](const HPoint& h) { return sig * std::cos(h.b[0]); };
  else
    im.sigma = [sig](const HPoint&) { return sig; };
  im.mu = [](const HPoint&) { return 1.0; };
  s.manifold = im;

  s.weight = scaled_weight(p.at("weight_scale"));
  s.support = ball_region(Vec::Zero(2), rm);
  s.field_box = make_box(2, -p.at("field_half"), p.at("field_half"));
  s.phantoms = {"disk", "smooth", "zero"};
  s.expected.regular = !limited;
  s.expected.calibration = p.at("calibration") != 0.0 && sig == 1.0 && ascale == 1.0 &&
                           p.at("weight_scale") == 1.0;
  return s;
}

}  // namespace

double beta_cutoff(double beta, double flat, double cut) {
  return 1.0 - smooth_step((std::abs(beta) - flat) / (cut - flat));
}

std::vector<std::string> scenario_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

ParamMap scenario_defaults(const std::string& name) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw ConfigError("unknown scenario '" + name + "'");
  return it->second;
}

Scenario scenario_lines_disk(const ParamMap& overrides) {
  return planar_lines("lines_disk", merge("lines_disk", overrides));
}

Scenario scenario_magnetic(const ParamMap& overrides) {
  const ParamMap p = merge("magnetic", overrides);
  const double c = p.at("curvature");
  // Arc radius below a quarter of diam(M) risks trapped curves.
  if (c != 0.0 && 1.0 / std::abs(c) < 0.5 * p.at("radius_m"))
    throw ParameterOutOfRange("magnetic: arc radius 1/c below diam(M)/4");
  Scenario s = planar_lines("magnetic", p);
  s.gen.name = "magnetic";
  s.gen.accel = [c](const Vec&, const Vec& xi) { return vec2(-c * xi[1], c * xi[0]); };
  s.gen.has_reference_solution = true;
  return s;
}

Vec sphere_point(const Vec& x) {
  const double r2 = x.squaredNorm();
  return vec3(2 * x[0] / (1 + r2), 2 * x[1] / (1 + r2), (1 - r2) / (1 + r2));
}

Vec sphere_chart(const Vec& p) { return vec2(p[0] / (1 + p[2]), p[1] / (1 + p[2])); }

double sphere_distance(const Vec& x, const Vec& y) {
  return std::acos(std::clamp(sphere_point(x).dot(sphere_point(y)), -1.0, 1.0));
}

Generator sphere_generator(const Box& box) {
  Generator g;
  g.name = "sphere";
  g.dim = 2;
  g.box = box;
  g.accel = [](const Vec& x, const Vec& xi) {
    const double d = 1.0 + x.squaredNorm();
    return Vec((4.0 * x.dot(xi) * xi - 2.0 * xi.squaredNorm() * x) / d);
  };
  g.speed = [](const Vec& x, const Vec&) { return 0.5 * (1.0 + x.squaredNorm()); };
  g.speed_min = 0.5;
  double far = 0.0;
  for (int i = 0; i < 2; ++i) far += std::max(box.lo[i] * box.lo[i], box.hi[i] * box.hi[i]);
  g.speed_max = 0.5 * (1.0 + far);
  g.has_reference_solution = true;
  return g;
}

ChartMap inversion_chart(const Box& image_box) {
  ChartMap c;
  c.dim = 2;
  auto inv = [](const Vec& x) { return Vec(x / x.squaredNorm()); };
  c.forward = inv;
  c.inverse = inv;
  c.jacobian = [](const Vec& x) {
    const double r2 = x.squaredNorm();
    return Mat(Mat::Identity(2, 2) / r2 - 2.0 * x * x.transpose() / (r2 * r2));
  };
  c.second_derivative = [](const Vec& x) {
    const double r2 = x.squaredNorm(), r4 = r2 * r2, r6 = r4 * r2;
    std::vector<Mat> h(2, Mat::Zero(2, 2));
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          h[i](j, k) = -2.0 * ((i == j) * x[k] + (i == k) * x[j] + (j == k) * x[i]) / r4 +
                       8.0 * x[i] * x[j] * x[k] / r6;
    return h;
  };
  c.image_box = image_box;
  return c;
}

Scenario scenario_antipodal_sphere(const ParamMap& overrides) {
  const ParamMap p = merge("antipodal_sphere", overrides);
  Scenario s;
  s.name = "antipodal_sphere";
  s.params = p;
  const double half = p.at("field_half");
  const double r1 = std::tan(0.5 * deg(p.at("m1_colatitude")));
  if (!(r1 > 1.0 && r1 < half)) throw ParameterOutOfRange("antipodal_sphere: M1 cap must contain the equator and fit the field box");
  s.gen = sphere_generator(make_box(2, -half, half));

  InitialManifold im;
  im.patches = {circle_patch(Vec::Zero(2), r1)};
  im.region = ball_region(Vec::Zero(2), r1);
  im.l_max = 2.0 * kPi;
  const double flat = p.at("beta_flat"), cut = p.at("beta_cut"), ascale = p.at("alpha_scale");
  im.alpha = [=](const HPoint& h) { return ascale * beta_cutoff(h.b[0], flat, cut); };
  im.sigma = [](const HPoint&) { return 1.0; };
  const Generator g = s.gen;
  im.mu = [g](const HPoint& h) { return g.lambda(h.z, h.theta); };
  s.manifold = im;
  s.weight = scaled_weight(p.at("weight_scale"));

  const Vec a = vec2(1.0, 0.0), b = vec2(-1.0, 0.0);
  s.pair = std::make_pair(a, b);
  const double cap = p.at("cap_radius"), band = p.at("band_halfwidth");
  s.support = [a, b, cap, band](const Vec& x) {
    const double da = sphere_distance(x, a) - cap;
    const double db = sphere_distance(x, b) - cap;
    const double off = std::asin(std::min(1.0, std::abs(sphere_point(x)[1]))) - band;
    const double strip = std::max(off, x.norm() - 1.0);
    return std::min({da, db, strip});
  };
  s.field_box = make_box(2, -half, half);
  s.phantoms = {"odd_pair", "even_pair", "zero"};
  s.expected.regular = false;
  s.expected.conjugate_distance = kPi;
  s.expected.cap_radius = cap;
  s.charts.emplace_back("south", inversion_chart(make_box(2, -2.0, 2.0)));
  return s;
}

Scenario scenario_lines_box3d(const ParamMap& overrides) {
  const ParamMap p = merge("lines_box3d", overrides);
  Scenario s;
  s.name = "lines_box3d";
  s.params = p;
  const double rm = p.at("radius_m"), rm1 = p.at("radius_m1");
  Generator g;
  g.name = "lines";
  g.dim = 3;
  g.box = make_box(3, -p.at("box_half"), p.at("box_half"));
  g.accel = [](const Vec&, const Vec&) { return Vec(Vec::Zero(3)); };
  g.speed = [](const Vec&, const Vec&) { return 1.0; };
  g.has_reference_solution = true;
  s.gen = g;

  InitialManifold im;
  im.patches = {sphere_patch(Vec::Zero(3), rm1)};
  im.region = ball_region(Vec::Zero(3), rm1);
  im.l_max = 4.0 * rm1;
  const double flat = p.at("beta_flat"), cut = p.at("beta_cut"), ascale = p.at("alpha_scale");
  im.alpha = [=](const HPoint& h) { return ascale * beta_cutoff(h.b[0], flat, cut); };
  im.sigma = [](const HPoint&) { return 1.0; };
  im.mu = [](const HPoint&) { return 1.0; };
  s.manifold = im;
  s.weight = scaled_weight(p.at("weight_scale"));
  s.support = ball_region(Vec::Zero(3), rm);
  s.field_box = make_box(3, -p.at("field_half"), p.at("field_half"));
  s.phantoms = {"ball", "smooth", "zero"};
  return s;
}

Scenario make_scenario(const std::string& name, const ParamMap& overrides) {
  if (name == "lines_disk" || name == "lines_disk_limited" || name == "lines_disk_calibration")
    return planar_lines(name, merge(name, overrides));
  if (name == "magnetic") return scenario_magnetic(overrides);
  if (name == "antipodal_sphere") return scenario_antipodal_sphere(overrides);
  if (name == "lines_box3d") return scenario_lines_box3d(overrides);
  throw ConfigError("unknown scenario '" + name + "'");
}

const ChartMap& Scenario::chart(const std::string& cname) const {
  for (const auto& [k, c] : charts)
    if (k == cname) return c;
  throw ConfigError("scenario " + name + " has no chart '" + cname + "'");
}

namespace {

double bump_profile(double d, double r) {
  const double q = (d * d) / (r * r);
  return q >= 1.0 ? 0.0 : std::exp(1.0 - 1.0 / (1.0 - q));
}

}  // namespace

ScalarField Scenario::phantom(const std::string& pname, const Grid& grid) const {
  ScalarField f(grid, support);
  const int n = gen.dim;
  if (pname == "zero") {
  } else if (pname == "disk" || pname == "ball") {
    const double r = params.at("phantom_radius");
    for (std::size_t i = 0; i < f.size(); ++i)
      f.values[i] = grid.point(i).norm() <= r ? 1.0 : 0.0;
  } else if (pname == "smooth" && n == 2) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Vec x = grid.point(i);
      f.values[i] = smooth_bump(x, vec2(0.15, 0.1), 0.55) +
                    0.6 * smooth_bump(x, vec2(-0.35, -0.25), 0.3) -
                    0.5 * smooth_bump(x, vec2(0.3, -0.45), 0.25);
    }
  } else if (pname == "smooth" && n == 3) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Vec x = grid.point(i);
      f.values[i] = smooth_bump(x, vec3(0.1, 0.1, 0.0), 0.6) -
                    0.5 * smooth_bump(x, vec3(-0.3, -0.2, 0.2), 0.3);
    }
  } else if ((pname == "odd_pair" || pname == "even_pair") && pair) {
    const double r = params.at("bump_radius");
    const double sign = pname == "odd_pair" ? -1.0 : 1.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Vec x = grid.point(i);
      f.values[i] = bump_profile(sphere_distance(x, pair->first), r) +
                    sign * bump_profile(sphere_distance(x, pair->second), r);
    }
  } else {
    throw ConfigError("scenario " + name + " has no phantom '" + pname + "'");
  }
  f.apply_mask();
  return f;
}

}  // namespace curvetomo
