#include "curvetomo/transform_ops.hpp"

#include <exception>
#include <sstream>

namespace curvetomo {

Weight Weight::constant(Complex c) {
  Weight w;
  w.eval = [c](const Vec&, const Vec&) { return c; };
  w.w_min = w.w_max = std::abs(c);
  return w;
}

Sinogram zero_sinogram(const CurveFamily& fam) {
  Sinogram s;
  s.values.assign(fam.size(), 0.0);
  s.weight = fam.weight;
  return s;
}

Complex inner(const Sinogram& a, const Sinogram& b) {
  if (a.size() != b.size()) throw IndexMismatch("sinogram sizes differ");
  Complex acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.weight[i] * std::conj(a.values[i]) * b.values[i];
  return acc;
}

double norm(const Sinogram& s) { return std::sqrt(std::max(0.0, inner(s, s).real())); }

namespace {

constexpr int kChunks = 16;

double time_weight(const Curve& c, std::size_t k) {
  const std::size_t n = c.size();
  if (n < 2) return 0.0;
  if (k == 0) return 0.5 * (c.t[1] - c.t[0]);
  if (k == n - 1) return 0.5 * (c.t[n - 1] - c.t[n - 2]);
  return 0.5 * (c.t[k + 1] - c.t[k - 1]);
}

struct Support {
  Box box;
  bool empty = true;
};

// Bounding box of the nonzero masked values, grown by one cell.
Support support_of(const ScalarField& f) {
  Support s;
  const Grid& g = f.grid;
  s.box = Box{Vec::Constant(g.dim, INFINITY), Vec::Constant(g.dim, -INFINITY)};
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f.mask[i] || f.values[i] == Complex(0.0)) continue;
    s.empty = false;
    const Vec x = g.point(i);
    s.box.lo = s.box.lo.cwiseMin(x);
    s.box.hi = s.box.hi.cwiseMax(x);
  }
  if (!s.empty) {
    s.box.lo -= g.spacing;
    s.box.hi += g.spacing;
  }
  return s;
}

Complex integrate_along(const Curve& c, const Weight& w, const ScalarField& masked,
                        const Support& sup) {
  Complex acc = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const Vec x = c.position(k);
    if (!sup.box.contains(x)) continue;
    const Stencil st = stencil_at(masked.grid, x);
    Complex v = 0.0;
    for (int q = 0; q < st.count; ++q) v += st.w[q] * masked.values[st.idx[q]];
    if (v == Complex(0.0)) continue;
    acc += time_weight(c, k) * (w.is_unit() ? v : w(x, c.velocity(k)) * v);
  }
  return acc;
}

void scatter_along(const Curve& c, const Weight& w, Complex coeff, const Grid& g,
                   std::vector<Complex>& buf) {
  for (std::size_t k = 0; k < c.size(); ++k) {
    const Vec x = c.position(k);
    const Stencil st = stencil_at(g, x);
    Complex a = coeff * time_weight(c, k);
    if (!w.is_unit()) a *= std::conj(w(x, c.velocity(k)));
    for (int q = 0; q < st.count; ++q) buf[st.idx[q]] += st.w[q] * a;
  }
}

ScalarField masked_copy(const ScalarField& f) {
  ScalarField m = f;
  m.apply_mask();
  return m;
}

// Runs body(chunk, begin, end) over the active-curve list in fixed chunks and
// rethrows the first failure.
template <class Body>
void for_chunks(std::size_t n, Body&& body) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (int ch = 0; ch < kChunks; ++ch) {
    const std::size_t b = n * ch / kChunks, e = n * (ch + 1) / kChunks;
    try {
      body(ch, b, e);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

ScalarField merge_chunks(const std::vector<std::vector<Complex>>& bufs, const ScalarField& like) {
  ScalarField out = like.zeros_like();
  const auto cw = like.grid.weights();
  for (const auto& b : bufs)
    for (std::size_t j = 0; j < b.size(); ++j) out.values[j] += b[j];
  for (std::size_t j = 0; j < out.size(); ++j) out.values[j] /= cw[j];
  return out;
}

}  // namespace

Sinogram forward(const CurveFamily& fam, const Weight& w, const ScalarField& f) {
  Sinogram s = zero_sinogram(fam);
  const ScalarField m = masked_copy(f);
  const Support sup = support_of(m);
  if (sup.empty) return s;
  for_chunks(fam.active.size(), [&](int, std::size_t b, std::size_t e) {
    Curve scratch;
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t c = fam.active[i];
      const Curve& cv = fam.curve(c, scratch);
      s.values[c] = fam.alpha[c] * integrate_along(cv, w, m, sup);
    }
  });
  return s;
}

ScalarField adjoint(const CurveFamily& fam, const Weight& w, const Sinogram& s,
                    const ScalarField& like) {
  if (s.size() != fam.size()) throw IndexMismatch("adjoint: sinogram does not match the family");
  std::vector<std::vector<Complex>> bufs(kChunks);
  for_chunks(fam.active.size(), [&](int ch, std::size_t b, std::size_t e) {
    auto& buf = bufs[ch];
    buf.assign(like.size(), 0.0);
    Curve scratch;
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t c = fam.active[i];
      if (s.values[c] == Complex(0.0)) continue;
      const Curve& cv = fam.curve(c, scratch);
      scatter_along(cv, w, fam.weight[c] * fam.alpha[c] * s.values[c], like.grid, buf);
    }
  });
  return merge_chunks(bufs, like);
}

ScalarField normal(const CurveFamily& fam, const Weight& w, const ScalarField& f) {
  const ScalarField m = masked_copy(f);
  const Support sup = support_of(m);
  if (sup.empty) return f.zeros_like();
  std::vector<std::vector<Complex>> bufs(kChunks);
  for_chunks(fam.active.size(), [&](int ch, std::size_t b, std::size_t e) {
    auto& buf = bufs[ch];
    buf.assign(f.size(), 0.0);
    Curve scratch;
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t c = fam.active[i];
      const Curve& cv = fam.curve(c, scratch);
      const Complex sc = fam.alpha[c] * integrate_along(cv, w, m, sup);
      if (sc == Complex(0.0)) continue;
      scatter_along(cv, w, fam.weight[c] * fam.alpha[c] * sc, f.grid, buf);
    }
  });
  return merge_chunks(bufs, f);
}

std::string sinogram_csv(const CurveFamily& fam, const Sinogram& s) {
  if (s.size() != fam.size()) throw IndexMismatch("sinogram does not match the family");
  std::ostringstream os;
  os.precision(17);
  bool cplx = false;
  for (const auto& v : s.values) cplx = cplx || v.imag() != 0.0;
  const int k = fam.gen.dim - 1;
  os << "patch";
  for (int a = 0; a < k; ++a) os << ",u" << a + 1;
  for (int a = 0; a < k; ++a) os << ",b" << a + 1;
  os << ",value" << (cplx ? ",value_im" : "") << "\n";
  for (std::size_t c : fam.active) {
    const HPoint& p = fam.nodes[c];
    os << p.patch;
    for (int a = 0; a < k; ++a) os << "," << p.u[a];
    for (int a = 0; a < k; ++a) os << "," << p.b[a];
    os << "," << s.values[c].real();
    if (cplx) os << "," << s.values[c].imag();
    os << "\n";
  }
  return os.str();
}

}  // namespace curvetomo
