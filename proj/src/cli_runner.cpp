#include "curvetomo/cli_runner.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <omp.h>
#include <openssl/evp.h>

#include "curvetomo/inversion.hpp"
#include "curvetomo/symbol_analysis.hpp"

namespace curvetomo {

namespace fs = std::filesystem;

const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> names{"forward", "check-regularity", "conjugate-scan",
                                              "symbol",  "probe-symbol",     "reconstruct",
                                              "stability", "perturb",        "gronwall"};
  return names;
}

namespace {

constexpr const char* kVersion = "0.1.0";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
    throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

long long to_int(const std::string& s) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
    throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::string to_word(const std::string& s) {
  if (s.empty() || s.find_first_of(" \t[],=") != std::string::npos)
    throw ConfigError("expected a single word, got '" + s + "'");
  return s;
}

std::vector<std::string> to_list(const std::string& s) {
  if (s.size() < 2 || s.front() != '[' || s.back() != ']')
    throw ConfigError("expected a list [a, b, ...], got '" + s + "'");
  std::vector<std::string> out;
  const std::string body = trim(s.substr(1, s.size() - 2));
  if (body.empty()) return out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_word(trim(item)));
  return out;
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& w : to_list(s)) out.push_back(to_double(w));
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, double>)
      out += fmt_double(v[i]);
    else
      out += v[i];
  }
  return out + "]";
}

struct Entry {
  const char* section;
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define CT_WORD(sec, name, member)                                                       \
  Entry{sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_word(v); }, \
        [](const ExperimentConfig& c) { return c.member; }}
#define CT_INT(sec, name, member)                                                          \
  Entry{sec, name,                                                                         \
        [](ExperimentConfig& c, const std::string& v) {                                    \
          c.member = static_cast<decltype(c.member)>(to_int(v));                           \
        },                                                                                 \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define CT_DOUBLE(sec, name, member)                                                          \
  Entry{sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_double(v); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.member); }}
#define CT_BOOL(sec, name, member)                                                          \
  Entry{sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(v); }, \
        [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define CT_DOUBLES(sec, name, member)                                                           \
  Entry{sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_doubles(v); }, \
        [](const ExperimentConfig& c) { return join(c.member); }}
#define CT_WORDS(sec, name, member)                                                          \
  Entry{sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_list(v); }, \
        [](const ExperimentConfig& c) { return join(c.member); }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> e{
      CT_WORD("run", "pipeline", pipeline),
      CT_WORD("run", "scenario", scenario),
      Entry{"run", "seed",
            [](ExperimentConfig& c, const std::string& v) {
              const long long s = to_int(v);
              if (s < 0) throw ConfigError("seed must be nonnegative");
              c.seed = static_cast<std::uint64_t>(s);
            },
            [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      Entry{"run", "output",
            [](ExperimentConfig& c, const std::string& v) { c.output = v; },
            [](const ExperimentConfig& c) { return c.output; }},
      CT_INT("resolution", "grid", grid),
      CT_INT("resolution", "grid_fine", grid_fine),
      CT_INT("resolution", "surface", surface),
      CT_INT("resolution", "direction", direction),
      CT_DOUBLE("resolution", "h", h),
      CT_BOOL("resolution", "cache", cache),
      CT_DOUBLE("tolerances", "solver", tol_solver),
      CT_DOUBLE("tolerances", "lanczos", tol_lanczos),
      CT_DOUBLE("tolerances", "ode", tol_ode),
      CT_DOUBLE("tolerances", "conjugate", tol_conjugate),
      CT_DOUBLE("tolerances", "symbol", tol_symbol),
      CT_DOUBLE("tolerances", "probe", tol_probe),
      CT_DOUBLE("tolerances", "correlation", tol_correlation),
      CT_DOUBLE("tolerances", "gronwall", tol_gronwall),
      CT_WORD("pipeline", "phantom", phantom),
      CT_INT("pipeline", "max_iter", max_iter),
      CT_INT("pipeline", "trials", trials),
      CT_INT("pipeline", "probes", probes),
      CT_INT("pipeline", "points", points),
      CT_INT("pipeline", "directions", directions),
      CT_INT("pipeline", "curves", curves),
      CT_DOUBLES("pipeline", "deltas", deltas),
      CT_WORDS("pipeline", "channels", channels),
      CT_DOUBLES("pipeline", "frequencies", frequencies),
      CT_DOUBLES("pipeline", "x0", x0),
      CT_DOUBLES("pipeline", "xi", xi),
      CT_DOUBLE("pipeline", "window", window),
      CT_DOUBLE("pipeline", "horizon", horizon),
      CT_DOUBLE("pipeline", "delta", delta),
      CT_BOOL("pipeline", "lanczos", lanczos),
      CT_INT("pipeline", "lanczos_modes", lanczos_modes),
  };
  return e;
}

#undef CT_WORD
#undef CT_INT
#undef CT_DOUBLE
#undef CT_BOOL
#undef CT_DOUBLES
#undef CT_WORDS

void set_value(ExperimentConfig& c, const std::string& section, const std::string& key,
               const std::string& value) {
  if (section == "scenario") {
    c.overrides[key] = to_double(value);
    return;
  }
  for (const Entry& e : entries())
    if (section == e.section && key == e.key) {
      e.set(c, value);
      return;
    }
  throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
}

void check_overrides(const ExperimentConfig& c) {
  const ParamMap defaults = scenario_defaults(c.scenario);
  for (const auto& [k, v] : c.overrides)
    if (!defaults.count(k))
      throw ConfigError("scenario " + c.scenario + " has no parameter '" + k + "'");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line, section;
  std::map<std::string, int> seen;
  int lineno = 0;
  static const std::vector<std::string> sections{"run", "scenario", "resolution", "tolerances",
                                                 "pipeline"};
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(sections.begin(), sections.end(), section) == sections.end())
        throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const std::string full = section + "." + key;
    if (seen.count(full))
      throw ConfigError(where + "duplicate key '" + full + "' (first on line " +
                        std::to_string(seen[full]) + ")");
    seen[full] = lineno;
    try {
      set_value(c, section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  check_overrides(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const ExperimentConfig& c) {
  std::ostringstream os;
  std::string section;
  auto open = [&](const std::string& s) {
    if (s == section) return;
    if (!section.empty()) os << "\n";
    os << "[" << s << "]\n";
    section = s;
  };
  for (const Entry& e : entries()) {
    if (std::string(e.section) == "resolution" && section == "run") {
      open("scenario");
      for (const auto& [k, v] : c.overrides) os << k << " = " << fmt_double(v) << "\n";
    }
    if (std::string(e.key) == "output" && c.output.empty()) continue;
    open(e.section);
    os << e.key << " = " << e.get(c) << "\n";
  }
  return os.str();
}

void apply_setting(ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  set_value(c, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
            trim(assignment.substr(eq + 1)));
  check_overrides(c);
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> d;
  const auto& pn = pipeline_names();
  if (std::find(pn.begin(), pn.end(), c.pipeline) == pn.end())
    d.push_back("unknown pipeline '" + c.pipeline + "'");
  std::optional<Scenario> s;
  try {
    s = make_scenario(c.scenario, c.overrides);
  } catch (const std::exception& e) {
    d.push_back(std::string("scenario: ") + e.what());
  }
  const std::pair<const char*, double> tols[] = {
      {"solver", c.tol_solver},       {"lanczos", c.tol_lanczos}, {"ode", c.tol_ode},
      {"conjugate", c.tol_conjugate}, {"symbol", c.tol_symbol},   {"probe", c.tol_probe},
      {"correlation", c.tol_correlation}, {"gronwall", c.tol_gronwall}};
  for (const auto& [name, v] : tols)
    if (!(v > 0.0)) d.push_back(std::string("tolerance must be positive: tolerances.") + name);
  if (c.grid < 4) d.push_back("resolution: grid needs at least 4 nodes per axis");
  if (c.grid_fine != 0 && c.grid_fine < 4) d.push_back("resolution: grid_fine must be 0 or at least 4");
  if (c.surface < 1 || c.direction < 1) d.push_back("resolution: family node counts must be positive");
  if (!(c.h > 0.0)) d.push_back("resolution: h must be positive");
  else if (c.h > 0.1) d.push_back("resolution: h above 0.1 under-resolves the curves");
  const std::pair<const char*, int> counts[] = {{"max_iter", c.max_iter}, {"trials", c.trials},
                                                {"probes", c.probes},     {"points", c.points},
                                                {"directions", c.directions}, {"curves", c.curves}};
  for (const auto& [name, v] : counts)
    if (v < 1) d.push_back(std::string("pipeline: ") + name + " must be positive");
  if (c.lanczos_modes < 0) d.push_back("pipeline: lanczos_modes must be nonnegative");
  for (double v : c.deltas)
    if (!(v >= 0.0)) d.push_back("pipeline: deltas must be nonnegative");
  for (const auto& ch : c.channels) try {
      channel_from_name(ch);
    } catch (const ConfigError& e) {
      d.push_back(std::string("pipeline: ") + e.what());
    }
  if (!(c.window > 0.0)) d.push_back("pipeline: window must be positive");
  if (!(c.horizon > 0.0)) d.push_back("pipeline: horizon must be positive");
  if (s) {
    const int dim = s->gen.dim;
    if (static_cast<int>(c.x0.size()) != dim || static_cast<int>(c.xi.size()) != dim)
      d.push_back("pipeline: x0 and xi need " + std::to_string(dim) + " entries");
    else if (Eigen::Map<const Eigen::VectorXd>(c.xi.data(), dim).norm() == 0.0)
      d.push_back("pipeline: xi must be nonzero");
    if ((c.pipeline == "forward" || c.pipeline == "reconstruct") &&
        std::find(s->phantoms.begin(), s->phantoms.end(), c.phantom) == s->phantoms.end())
      d.push_back("pipeline: scenario " + c.scenario + " has no phantom '" + c.phantom + "'");
    if (c.grid >= 4 && c.pipeline == "probe-symbol") {
      const double nyquist = kPi / s->grid(c.grid).spacing.maxCoeff();
      for (double f : c.frequencies) {
        if (!(f > 0.0)) d.push_back("pipeline: frequencies must be positive");
        else if (f > nyquist)
          d.push_back("aliasing: frequency " + fmt_double(f) + " exceeds pi/dx = " +
                      fmt_double(nyquist));
      }
    }
    if (s->params.count("beta_cut")) {
      const double margin = std::cos(s->params.at("beta_cut"));
      if (!(margin > s->manifold.trans_min))
        d.push_back("transversality margin: cos(beta_cut) = " + fmt_double(margin) +
                    " is below " + fmt_double(s->manifold.trans_min));
    }
  }
  return d;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string resolve_output_dir(const ExperimentConfig& c, const RunOptions& opts) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (!c.output.empty()) return c.output;
  if (const char* root = std::getenv("CURVETOMO_OUT"); root && *root)
    return (fs::path(root) / c.pipeline).string();
  return (fs::path("curvetomo_out") / c.pipeline).string();
}

namespace {

struct Artifacts {
  fs::path dir;
  std::vector<std::pair<std::string, std::string>> files;  // name, content

  void put(const std::string& name, const std::string& content) { files.emplace_back(name, content); }
  void put_json(const std::string& name, const nlohmann::json& j) { put(name, j.dump(2) + "\n"); }
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  f << content;
  if (!f) throw IoError("write failed for '" + p.string() + "'");
}

FamilyResolution resolution(const ExperimentConfig& c) {
  FamilyResolution r;
  r.surface = {c.surface};
  r.direction = {c.direction};
  r.h = c.h;
  r.cache = c.cache;
  r.tol_ode = c.tol_ode;
  return r;
}

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
  return out;
}

struct Outcome {
  bool ok = true;
  std::string message;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      message = what;
    }
  }
};

Outcome pipeline_forward(const ExperimentConfig& c, const Scenario& s, Artifacts& a) {
  const CurveFamily fam = build_family(s.gen, s.manifold, resolution(c));
  const Grid g = s.grid(c.grid);
  const ScalarField f = s.phantom(c.phantom, g);
  const Sinogram sino = forward(fam, s.weight, f);
  a.put("sinogram.csv", sinogram_csv(fam, sino));
  a.put("phantom.csv", field_csv(f));
  nlohmann::json j;
  j["active_curves"] = fam.active_count();
  j["nodes"] = fam.size();
  j["phantom"] = c.phantom;
  j["phantom_l2"] = l2_norm_masked(f);
  j["sinogram_norm"] = norm(sino);
  a.put_json("summary.json", j);
  return {};
}

Outcome pipeline_regularity(const ExperimentConfig& c, const Scenario& s, Artifacts& a) {
  const CurveFamily fam = build_family(s.gen, s.manifold, resolution(c));
  const auto pts = lattice_points(s.field_box, c.points, s.support);
  const CoverageReport r = regularity_check(fam, pts, conormal_directions(s.gen.dim, c.directions));
  a.put("coverage.csv", coverage_csv(r));
  nlohmann::json j = coverage_summary(r);
  j["expected_regular"] = s.expected.regular;
  a.put_json("summary.json", j);
  Outcome o;
  if (s.expected.regular)
    o.require(r.fraction == 1.0, "coverage " + fmt_double(r.fraction) + " below 1 for a regular scenario");
  else
    o.require(r.fraction < 1.0, "full coverage for a scenario expected to be non-regular");
  return o;
}

Outcome pipeline_conjugate(const ExperimentConfig& c, const Scenario& s, Artifacts& a) {
  const CurveFamily fam = build_family(s.gen, s.manifold, resolution(c));
  if (fam.active.empty()) throw EmptyFamily("conjugate scan: no active curves");
  const std::size_t n = std::min<std::size_t>(fam.active.size(), static_cast<std::size_t>(c.curves));
  std::vector<ConjugateReport> reps;
  std::vector<std::size_t> ids;
  Curve scratch;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t id = fam.active[k * fam.active.size() / n];
    ids.push_back(id);
    reps.push_back(conjugate_points(fam.gen, fam.curve(id, scratch)));
  }
  a.put("conjugate.csv", conjugate_csv(reps, ids));
  nlohmann::json j = conjugate_summary(reps);
  const double expect = s.expected.conjugate_distance;
  j["expected_conjugate_distance"] = std::isfinite(expect) ? nlohmann::json(expect) : nlohmann::json();
  a.put_json("summary.json", j);
  Outcome o;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const double len = fam.curve(ids[k], scratch).t.back();
    const double first = reps[k].first_positive;
    if (!std::isfinite(expect))
      o.require(reps[k].empty(), "conjugate point on a curve expected to have none");
    else if (len >= expect + c.tol_conjugate)
      o.require(std::abs(first - expect) <= c.tol_conjugate,
                "first conjugate time " + fmt_double(first) + " differs from " + fmt_double(expect));
    else
      o.require(first >= expect - c.tol_conjugate,
                "conjugate time " + fmt_double(first) + " before " + fmt_double(expect));
  }
  return o;
}

PolarKernel make_kernel(const CurveFamily& fam, const Scenario& s) {
  return PolarKernel(fam, s.weight, default_eps_diag(fam));
}

Outcome pipeline_symbol(const ExperimentConfig& c, const Scenario& s, Artifacts& a) {
  const CurveFamily fam = build_family(s.gen, s.manifold, resolution(c));
  const PolarKernel pk = make_kernel(fam, s);
  const auto pts = lattice_points(s.field_box, c.points, s.support);
  const SymbolGrid sg = ellipticity_scan(pk, pts, conormal_directions(s.gen.dim, c.directions));
  a.put("symbol.csv", symbol_csv(sg));
  nlohmann::json j = symbol_summary(sg);
  Outcome o;
  if (s.expected.calibration) {
    double worst = 0.0;
    for (const Complex& v : sg.a0) worst = std::max(worst, std::abs(v - 4.0 * kPi));
    j["calibration_max_error"] = worst;
    o.require(worst <= c.tol_symbol, "calibration symbol deviates from 4 pi / |xi| by " + fmt_double(worst));
  }
  if (s.expected.regular) o.require(sg.margin > 0.0, "ellipticity margin is not positive");
  a.put_json("summary.json", j);
  return o;
}

Outcome pipeline_probe(const ExperimentConfig& c, const Scenario& s, Artifacts& a) {
  const CurveFamily fam = build_family(s.gen, s.manifold, resolution(c));
  const PolarKernel pk = make_kernel(fam, s);
  const Grid g = s.grid(c.grid);
  const auto rows = oscillatory_probe(fam, s.weight, g, s.support, to_vec(c.x0), to_vec(c.xi),
                                      c.frequencies, pk.as_amplitude(), c.window);
  a.put("probe.csv", probe_csv(rows));
  nlohmann::json j;
  for (const auto& r : rows) j["ratio_error"].push_back(r.ratio_error);
  j["frequencies"] = c.frequencies;
  a.put_json("summary.json", j);
  Outcome o;
  if (!rows.empty())
    o.require(rows.back().ratio_error <= c.tol_probe,
              "probe ratio error " + fmt_double(rows.back().ratio_error) + " above tolerance");
  return o;
}

Outcome pipeline_reconstruct(const ExperimentConfig& c, const Scenario& s, Artifacts& a) {
  const CurveFamily fam = build_family(s.gen, s.manifold, resolution(c));
  const Grid g = s.grid(c.grid);
  const ScalarField truth = s.phantom(c.phantom, g);
  SolveOptions so;
  so.tol = c.tol_solver;
  so.max_iter = c.max_iter;
  const SolveResult r = solve_normal(fam, s.weight, normal(fam, s.weight, truth), so);
  ScalarField diff = r.f;
  axpy(-1.0, truth, diff);
  const double tn = l2_norm_masked(truth);
  a.put("residuals.csv", residual_csv(r));
  a.put("reconstruction.csv", field_csv(r.f));
  nlohmann::json j;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["final_residual"] = r.residuals.back();
  j["relative_error"] = tn > 0.0 ? l2_norm_masked(diff) / tn : 0.0;
  if (c.lanczos) {
    LanczosOptions lo;
    lo.tol = c.tol_lanczos;
    lo.seed = c.seed;
    lo.modes = c.lanczos_modes;
    const InjectivityReport w = injectivity_witness(fam, s.weight, g, s.support, lo);
    j["lanczos"] = {{"smallest", w.smallest}, {"largest", w.largest}, {"steps", w.steps},
                    {"dimension", w.dofs}, {"no_near_kernel", w.no_near_kernel},
                    {"seed", w.seed_used}};
    if (!w.no_near_kernel) a.put("near_kernel_candidate.csv", field_csv(w.candidate));
  }
  a.put_json("summary.json", j);
  if (!r.converged) {
    std::ostringstream os;
    os << "no convergence after " << r.iterations << " iterations, relative residual "
       << r.residuals.back();
    throw NoConvergence(os.str());
  }
  return {};
}

Outcome pipeline_stability(const ExperimentConfig& c, const Scenario& s, Artifacts& a) {
  nlohmann::json j;
  std::vector<int> grids{c.grid};
  if (c.grid_fine > 0) grids.push_back(c.grid_fine);
  std::string csv;
  std::vector<double> mins;
  for (int n : grids) {
    FamilyResolution r = resolution(c);
    // The family resolves the grid: two curve nodes per grid node and axis.
    r.surface = {std::max(c.surface, 2 * n)};
    r.direction = {std::max(c.direction, 2 * n)};
    const CurveFamily fam = build_family(s.gen, s.manifold, r);
    const Grid g = s.grid(n);
    std::vector<std::pair<std::string, ScalarField>> extra;
    if (s.pair) extra.emplace_back("odd_pair", s.phantom("odd_pair", g));
    const StabilityReport rep = stability_probe(fam, s.weight, g, s.support, c.trials, c.seed, extra);
    nlohmann::json k = stability_summary(rep);
    k["grid"] = n;
    k["family_nodes"] = r.surface[0];
    j["grids"].push_back(k);
    mins.push_back(rep.min_ratio);
    std::istringstream rows(stability_csv(rep));
    std::string row;
    std::getline(rows, row);
    if (csv.empty()) csv = "grid," + row + "\n";
    while (std::getline(rows, row)) csv += std::to_string(n) + "," + row + "\n";
  }
  if (mins.size() == 2) j["min_ratio_change"] = std::abs(mins[1] - mins[0]) / mins[0];
  a.put("stability.csv", csv);
  a.put_json("summary.json", j);
  Outcome o;
  for (double m : mins) o.require(m > 0.0, "stability ratio is not positive");
  return o;
}

Outcome pipeline_perturb(const ExperimentConfig& c, const Scenario& s, Artifacts& a) {
  PerturbationSetup ps;
  ps.grid_nodes = c.grid;
  ps.res = resolution(c);
  ps.probes = c.probes;
  ps.seed = c.seed;
  std::vector<PerturbationReport> reps;
  nlohmann::json j = nlohmann::json::array();
  std::vector<double> positive;
  for (double d : c.deltas)
    if (d > 0.0 && std::find(positive.begin(), positive.end(), d) == positive.end()) positive.push_back(d);
  Outcome o;
  for (const auto& name : c.channels) {
    reps.push_back(perturbation_experiment(s, channel_from_name(name), c.deltas, ps));
    j.push_back(perturbation_summary(reps.back()));
    if (positive.size() >= 3)
      o.require(reps.back().correlation >= c.tol_correlation,
                "channel " + name + ": correlation " + fmt_double(reps.back().correlation));
  }
  a.put("perturbation.csv", perturbation_csv(reps));
  a.put_json("summary.json", j);
  return o;
}

Outcome pipeline_gronwall(const ExperimentConfig& c, const Scenario& s, Artifacts& a) {
  const Scenario p = perturbed_scenario(s, Channel::G, c.delta);
  const GronwallCheck r = gronwall_check(s.gen, p.gen, to_vec(c.x0), to_vec(c.xi), c.horizon, c.h,
                                         0.25, static_cast<unsigned>(c.seed));
  std::ostringstream os;
  os.precision(17);
  os << "t,deviation,bound\n";
  for (std::size_t i = 0; i < r.times.size(); ++i)
    os << r.times[i] << "," << r.deviation[i] << "," << r.bound_trace[i] << "\n";
  a.put("gronwall.csv", os.str());
  nlohmann::json j;
  j["delta"] = r.delta;
  j["lipschitz"] = r.lipschitz;
  j["horizon"] = r.horizon;
  j["bound"] = r.bound;
  j["measured_phase"] = r.measured_phase;
  j["measured_position"] = r.measured_position;
  j["worst_ratio"] = r.worst_ratio;
  a.put_json("summary.json", j);
  Outcome o;
  o.require(r.worst_ratio <= c.tol_gronwall,
            "deviation exceeds the Gronwall bound by " + fmt_double(r.worst_ratio));
  return o;
}

std::string timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

RunResult run(const ExperimentConfig& c, const RunOptions& opts) {
  RunResult res;
  const auto diags = validate(c);
  if (!diags.empty()) {
    res.status = 1;
    for (const auto& d : diags) res.message += (res.message.empty() ? "" : "; ") + d;
    return res;
  }
  if (opts.threads > 0) omp_set_num_threads(opts.threads);
  res.out_dir = resolve_output_dir(c, opts);
  std::error_code ec;
  fs::create_directories(res.out_dir, ec);
  if (ec) {
    res.status = 1;
    res.message = "cannot create output directory '" + res.out_dir + "': " + ec.message();
    return res;
  }

  const auto wall0 = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  Artifacts art;
  art.dir = res.out_dir;
  try {
    const Scenario s = make_scenario(c.scenario, c.overrides);
    Outcome o;
    if (c.pipeline == "forward") o = pipeline_forward(c, s, art);
    else if (c.pipeline == "check-regularity") o = pipeline_regularity(c, s, art);
    else if (c.pipeline == "conjugate-scan") o = pipeline_conjugate(c, s, art);
    else if (c.pipeline == "symbol") o = pipeline_symbol(c, s, art);
    else if (c.pipeline == "probe-symbol") o = pipeline_probe(c, s, art);
    else if (c.pipeline == "reconstruct") o = pipeline_reconstruct(c, s, art);
    else if (c.pipeline == "stability") o = pipeline_stability(c, s, art);
    else if (c.pipeline == "perturb") o = pipeline_perturb(c, s, art);
    else if (c.pipeline == "gronwall") o = pipeline_gronwall(c, s, art);
    res.status = o.ok ? 0 : 2;
    res.message = o.message;
  } catch (const ConfigError& e) {
    res.status = 1;
    res.message = e.what();
  } catch (const std::exception& e) {
    res.status = 2;
    res.message = e.what();
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json manifest;
  manifest["pipeline"] = c.pipeline;
  manifest["scenario"] = c.scenario;
  manifest["seed"] = c.seed;
  manifest["status"] = res.status;
  manifest["message"] = res.message;
  manifest["config"] = emit_config(c);
  manifest["versions"] = {{"curvetomo", kVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)}};
  manifest["outputs"] = nlohmann::json::array();
  try {
    std::sort(art.files.begin(), art.files.end());
    for (const auto& [name, content] : art.files) {
      write_file(art.dir / name, content);
      manifest["outputs"].push_back(
          {{"file", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
      res.files.push_back(name);
    }
    nlohmann::json info;
    info["started"] = timestamp(wall0);
    info["finished"] = timestamp(std::chrono::system_clock::now());
    info["elapsed_seconds"] = elapsed;
    info["threads"] = omp_get_max_threads();
    write_file(art.dir / "run_info.json", info.dump(2) + "\n");
    res.files.push_back("run_info.json");
    write_file(art.dir / "manifest.json", manifest.dump(2) + "\n");
    res.files.push_back("manifest.json");
  } catch (const IoError& e) {
    res.status = 1;
    res.message = e.what();
  }
  return res;
}

}  // namespace curvetomo
