#include "curvetomo/field.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace curvetomo {

Grid Grid::over_box(const Box& box, int nodes_per_axis) {
  if (nodes_per_axis < 2) throw std::invalid_argument("Grid: need at least 2 nodes per axis");
  Grid g;
  g.dim = box.dim();
  g.lo = box.lo;
  g.spacing = (box.hi - box.lo) / (nodes_per_axis - 1);
  for (int a = 0; a < 3; ++a) g.n[a] = a < g.dim ? nodes_per_axis : 1;
  return g;
}

std::array<int, 3> Grid::multi_index(std::size_t idx) const {
  std::array<int, 3> m{};
  m[0] = static_cast<int>(idx % n[0]);
  idx /= n[0];
  m[1] = static_cast<int>(idx % n[1]);
  m[2] = static_cast<int>(idx / n[1]);
  return m;
}

Vec Grid::point(std::size_t idx) const {
  const auto m = multi_index(idx);
  Vec x(dim);
  for (int a = 0; a < dim; ++a) x[a] = lo[a] + m[a] * spacing[a];
  return x;
}

Box Grid::box() const {
  Box b{lo, lo};
  for (int a = 0; a < dim; ++a) b.hi[a] = lo[a] + (n[a] - 1) * spacing[a];
  return b;
}

std::vector<double> Grid::weights() const {
  std::vector<double> w(size());
  const double vol = cell_volume();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto m = multi_index(i);
    double c = vol;
    for (int a = 0; a < dim; ++a)
      if (m[a] == 0 || m[a] == n[a] - 1) c *= 0.5;
    w[i] = c;
  }
  return w;
}

bool Grid::same_as(const Grid& o) const {
  return dim == o.dim && n == o.n && (lo - o.lo).norm() < 1e-12 &&
         (spacing - o.spacing).norm() < 1e-12;
}

Stencil stencil_at(const Grid& g, const Vec& x) {
  int base[3] = {0, 0, 0};
  double frac[3] = {0, 0, 0};
  for (int a = 0; a < g.dim; ++a) {
    double s = (x[a] - g.lo[a]) / g.spacing[a];
    const double top = g.n[a] - 1;
    if (s < 0.0 || s > top) {
      if (s < -0.5 || s > top + 0.5)
        throw InterpolationOutOfDomain("interpolation point outside the field grid");
      s = std::clamp(s, 0.0, top);
    }
    int i = static_cast<int>(std::floor(s));
    if (i >= g.n[a] - 1) i = g.n[a] - 2;
    base[a] = i;
    frac[a] = s - i;
  }
  Stencil st;
  const int corners = 1 << g.dim;
  for (int c = 0; c < corners; ++c) {
    int m[3] = {0, 0, 0};
    double w = 1.0;
    for (int a = 0; a < g.dim; ++a) {
      const int bit = (c >> a) & 1;
      m[a] = base[a] + bit;
      w *= bit ? frac[a] : 1.0 - frac[a];
    }
    st.idx[st.count] = g.index(m[0], m[1], m[2]);
    st.w[st.count] = w;
    ++st.count;
  }
  return st;
}

ScalarField::ScalarField(const Grid& g) : grid(g), values(g.size()), mask(g.size(), 1) {}

ScalarField::ScalarField(const Grid& g, const Region& support) : ScalarField(g) {
  set_mask(support);
}

void ScalarField::set_mask(const Region& support) {
  mask.assign(grid.size(), 1);
  if (!support) return;
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = support(grid.point(i)) < 0.0 ? 1 : 0;
}

void ScalarField::apply_mask() {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!mask[i]) values[i] = 0.0;
}

bool ScalarField::is_complex() const {
  for (const auto& v : values)
    if (v.imag() != 0.0) return true;
  return false;
}

ScalarField ScalarField::zeros_like() const {
  ScalarField out = *this;
  std::fill(out.values.begin(), out.values.end(), Complex(0.0));
  return out;
}

Complex ScalarField::interpolate(const Vec& x) const {
  const Stencil st = stencil_at(grid, x);
  Complex acc = 0.0;
  for (int k = 0; k < st.count; ++k) acc += st.w[k] * values[st.idx[k]];
  return acc;
}

Complex inner(const ScalarField& a, const ScalarField& b) {
  if (!a.grid.same_as(b.grid)) throw IndexMismatch("inner: fields on different grids");
  const auto w = a.grid.weights();
  Complex acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += w[i] * std::conj(a.values[i]) * b.values[i];
  return acc;
}

double l2_norm(const ScalarField& f) { return std::sqrt(std::max(0.0, inner(f, f).real())); }

double l2_norm_masked(const ScalarField& f) {
  const auto w = f.grid.weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f.mask[i]) acc += w[i] * std::norm(f.values[i]);
  return std::sqrt(acc);
}

double h1_norm(const ScalarField& f) {
  const Grid& g = f.grid;
  const auto w = g.weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto m = g.multi_index(i);
    double grad2 = 0.0;
    for (int a = 0; a < g.dim; ++a) {
      if (g.n[a] < 2) continue;
      auto at = [&](int shift) {
        auto mm = m;
        mm[a] += shift;
        return f.values[g.index(mm[0], mm[1], mm[2])];
      };
      Complex d;
      if (m[a] == 0)
        d = (at(1) - at(0)) / g.spacing[a];
      else if (m[a] == g.n[a] - 1)
        d = (at(0) - at(-1)) / g.spacing[a];
      else
        d = (at(1) - at(-1)) / (2.0 * g.spacing[a]);
      grad2 += std::norm(d);
    }
    acc += w[i] * (std::norm(f.values[i]) + grad2);
  }
  return std::sqrt(acc);
}

void axpy(Complex a, const ScalarField& x, ScalarField& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y.values[i] += a * x.values[i];
}

void scale(ScalarField& f, Complex a) {
  for (auto& v : f.values) v *= a;
}

std::string field_csv(const ScalarField& f) {
  std::ostringstream os;
  os.precision(17);
  const bool cplx = f.is_complex();
  for (int a = 0; a < f.grid.dim; ++a) os << "x" << a + 1 << ",";
  os << "value" << (cplx ? ",value_im" : "") << "\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Vec x = f.grid.point(i);
    for (int a = 0; a < f.grid.dim; ++a) os << x[a] << ",";
    os << f.values[i].real();
    if (cplx) os << "," << f.values[i].imag();
    os << "\n";
  }
  return os.str();
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary field I/O assumes little-endian");

constexpr char kMagic[4] = {'C', 'T', 'F', 'D'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("binary field: truncated header");
  return v;
}

}  // namespace

void write_field_binary(const ScalarField& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  const bool cplx = f.is_complex();
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid.dim));
  for (int a = 0; a < 3; ++a) put<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid.n[a]));
  for (int a = 0; a < 3; ++a) put<double>(os, a < f.grid.dim ? f.grid.lo[a] : 0.0);
  for (int a = 0; a < 3; ++a) put<double>(os, a < f.grid.dim ? f.grid.spacing[a] : 0.0);
  put<std::uint8_t>(os, cplx ? 1 : 0);
  const std::uint64_t header = 4 + 4 * 5 + 8 * 6 + 1 + 8;
  const std::uint64_t mask_offset = header + f.size() * 8 * (cplx ? 2 : 1);
  put<std::uint64_t>(os, mask_offset);
  for (const auto& v : f.values) {
    put<double>(os, v.real());
    if (cplx) put<double>(os, v.imag());
  }
  os.write(reinterpret_cast<const char*>(f.mask.data()), static_cast<std::streamsize>(f.mask.size()));
  if (!os) throw IoError("write failed: " + path);
}

ScalarField read_field_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("binary field: bad magic");
  if (get<std::uint32_t>(is) != kVersion) throw IoError("binary field: unsupported version");
  Grid g;
  g.dim = static_cast<int>(get<std::uint32_t>(is));
  if (g.dim != 2 && g.dim != 3) throw IoError("binary field: bad dimension");
  for (int a = 0; a < 3; ++a) g.n[a] = static_cast<int>(get<std::uint32_t>(is));
  g.lo = Vec::Zero(g.dim);
  g.spacing = Vec::Zero(g.dim);
  for (int a = 0; a < 3; ++a) {
    const double v = get<double>(is);
    if (a < g.dim) g.lo[a] = v;
  }
  for (int a = 0; a < 3; ++a) {
    const double v = get<double>(is);
    if (a < g.dim) g.spacing[a] = v;
  }
  const bool cplx = get<std::uint8_t>(is) != 0;
  const auto mask_offset = get<std::uint64_t>(is);
  ScalarField f(g);
  for (auto& v : f.values) {
    const double re = get<double>(is);
    const double im = cplx ? get<double>(is) : 0.0;
    v = Complex(re, im);
  }
  is.seekg(static_cast<std::streamoff>(mask_offset));
  is.read(reinterpret_cast<char*>(f.mask.data()), static_cast<std::streamsize>(f.mask.size()));
  if (!is) throw IoError("binary field: truncated mask");
  return f;
}

}  // namespace curvetomo
