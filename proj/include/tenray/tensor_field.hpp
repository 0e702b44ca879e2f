// tenray — symmetric m-tensor fields sampled on the disc grid.
//
// A symmetric covariant m-tensor in 2D has m+1 independent components; we
// store them keyed by p = number of chart indices equal to x, so comps[p]
// is the value on a representative index tuple with p x-indices and (m-p)
// y-indices, and the combinatorial multiplicity of that class is C(m, p).
// Rank 0..4 covers potentials (m-1) through transformed fields.
//
// The scalar type is templated: double for real data, std::complex<double>
// for oscillatory probes.  Derivatives are 4th-order central differences on
// the uniform grid; all fields of interest are compactly supported inside
// the mask margin, so no one-sided boundary stencils are needed.

#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "tenray/core.hpp"
#include "tenray/grid.hpp"
#include "tenray/metric.hpp"

namespace tenray {

template <class S>
struct SymTensorField {
  int m = 0;
  GridSpec grid;
  std::shared_ptr<const GridMask> mask;
  std::vector<std::vector<S>> comps;  // m+1 arrays of grid.size()

  static SymTensorField zeros(int m, const GridSpec& grid,
                              std::shared_ptr<const GridMask> mask) {
    if (m < 0 || m > 4) throw UsageError("SymTensorField: rank must be 0..4");
    SymTensorField f;
    f.m = m;
    f.grid = grid;
    f.mask = std::move(mask);
    f.comps.assign(m + 1, std::vector<S>(grid.size(), S{}));
    return f;
  }

  int n_comps() const { return m + 1; }
  int multiplicity(int p) const { return binomial(m, p); }

  // Full contraction with the m-fold tensor power of a chart vector v:
  // sum_p C(m,p) f_p v_x^p v_y^(m-p), with components interpolated at x.
  S pair(const Vec2& x, const Vec2& v) const {
    S acc{};
    for (int p = 0; p <= m; ++p) {
      const S c = interp_cubic(grid, comps[p], x);
      acc += c * static_cast<double>(multiplicity(p)) * vpow(v, p);
    }
    return acc;
  }

  S pair_at_node(int ix, int iy, const Vec2& v) const {
    S acc{};
    const std::size_t idx = grid.index(ix, iy);
    for (int p = 0; p <= m; ++p) {
      acc += comps[p][idx] * static_cast<double>(multiplicity(p)) * vpow(v, p);
    }
    return acc;
  }

  double vpow(const Vec2& v, int p) const {
    double r = 1.0;
    for (int i = 0; i < p; ++i) r *= v.x;
    for (int i = 0; i < m - p; ++i) r *= v.y;
    return r;
  }

  SymTensorField<Complex> to_complex() const {
    auto out = SymTensorField<Complex>::zeros(m, grid, mask);
    for (int p = 0; p <= m; ++p) {
      for (std::size_t i = 0; i < comps[p].size(); ++i) out.comps[p][i] = comps[p][i];
    }
    return out;
  }
};

using RealTensorField = SymTensorField<double>;
using ComplexTensorField = SymTensorField<Complex>;

namespace detail {

// 4th-order central partial derivative along axis (0 = x, 1 = y) at (ix,iy);
// the stencil is clamped at the box edge, where supported fields vanish.
template <class S>
S partial4(const GridSpec& g, const std::vector<S>& d, int ix, int iy, int axis) {
  const auto at = [&](int dx) -> S {
    int jx = ix, jy = iy;
    if (axis == 0) jx += dx;
    else jy += dx;
    if (jx < 0 || jx >= g.n || jy < 0 || jy >= g.n) return S{};
    return d[g.index(jx, jy)];
  };
  return (at(-2) - at(2) + (at(1) - at(-1)) * 8.0) / (12.0 * g.h());
}

// Covariant derivative (index k) of the class-p component of a rank-r
// symmetric tensor with component arrays `c`:
//   nabla_k u_P = d_k u_p - sum over tuple positions of Gamma-corrections,
// which collapses to class arithmetic because u is symmetric.
template <class S>
S covariant_partial(const MetricField& metric, const GridSpec& g,
                    const std::vector<std::vector<S>>& c, int r, int p, int ix, int iy,
                    int k) {
  S val = partial4(g, c[p], ix, iy, k);
  if (r == 0) return val;
  const Vec2 pnt = g.node(ix, iy);
  const auto G = metric.christoffel(pnt);
  const auto gam = [&](int a, int i, int j) -> double {
    const Mat2& M = G[a];
    return (i == 0) ? (j == 0 ? M.a : M.b) : (j == 0 ? M.c : M.d);
  };
  const std::size_t idx = g.index(ix, iy);
  const auto comp = [&](int q) -> S {
    if (q < 0 || q > r) return S{};
    return c[q][idx];
  };
  // p positions carry an x index: replacing it by a, add Gamma^a_{k x}.
  S corr{};
  corr += (gam(0, k, 0) * comp(p) + gam(1, k, 0) * comp(p - 1)) * static_cast<double>(p);
  // r - p positions carry a y index.
  corr += (gam(0, k, 1) * comp(p + 1) + gam(1, k, 1) * comp(p)) * static_cast<double>(r - p);
  return val - corr;
}

}  // namespace detail

// Symmetrized covariant derivative: rank m-1 potential u -> rank m field.
// (d^s u)_Q = average over the m slots of nabla_{i_l} u_{Q minus slot l}.
template <class S>
SymTensorField<S> sym_derivative(const SymTensorField<S>& u, const MetricField& metric) {
  const int m = u.m + 1;
  auto out = SymTensorField<S>::zeros(m, u.grid, u.mask);
  const GridSpec& g = u.grid;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!u.mask->inside[idx]) continue;
      for (int q = 0; q <= m; ++q) {
        S acc{};
        if (q > 0) {
          acc += detail::covariant_partial(metric, g, u.comps, u.m, q - 1, ix, iy, 0) *
                 static_cast<double>(q);
        }
        if (q < m) {
          acc += detail::covariant_partial(metric, g, u.comps, u.m, q, ix, iy, 1) *
                 static_cast<double>(m - q);
        }
        out.comps[q][idx] = acc / static_cast<double>(m);
      }
    }
  }
  return out;
}

// Metric divergence: rank m field -> rank m-1, (delta f)_P = g^{jk} nabla_k f_{P j}.
// In the conformal chart g^{jk} = e^{-2 lambda} delta^{jk}.
template <class S>
SymTensorField<S> divergence(const SymTensorField<S>& f, const MetricField& metric) {
  if (f.m == 0) throw UsageError("divergence: rank must be >= 1");
  const int r = f.m;
  auto out = SymTensorField<S>::zeros(r - 1, f.grid, f.mask);
  const GridSpec& g = f.grid;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!f.mask->inside[idx]) continue;
      const double w = std::exp(-2.0 * metric.lambda(g.node(ix, iy)));
      for (int p = 0; p <= r - 1; ++p) {
        // Append index j to the class-p tuple: j = x gives class p+1, j = y
        // gives class p; differentiate along the same axis and trace.
        const S dx = detail::covariant_partial(metric, g, f.comps, r, p + 1, ix, iy, 0);
        const S dy = detail::covariant_partial(metric, g, f.comps, r, p, ix, iy, 1);
        out.comps[p][idx] = (dx + dy) * w;
      }
    }
  }
  return out;
}

namespace detail {

template <class S>
S conj_if_complex(const S& v) {
  if constexpr (std::is_same_v<S, Complex>) return std::conj(v);
  else return v;
}

}  // namespace detail

// L2 pairing over the disc: integral of <u, v>_g dV_g with conjugation on
// the second argument.  The pointwise inner product of covariant m-tensors
// carries the weight e^{-2 m lambda}; the area element contributes
// e^{2 lambda} h^2.
template <class S>
S l2_inner(const SymTensorField<S>& u, const SymTensorField<S>& v,
           const MetricField& metric) {
  if (u.m != v.m || !(u.grid == v.grid)) throw UsageError("l2_inner: mismatched fields");
  const GridSpec& g = u.grid;
  const double h2 = g.h() * g.h();
  S acc{};
  for (int iy = 0; iy < g.n; ++iy) {
    S row{};
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!u.mask->inside[idx]) continue;
      const double w = std::exp((2.0 - 2.0 * u.m) * metric.lambda(g.node(ix, iy)));
      S node{};
      for (int p = 0; p <= u.m; ++p) {
        node += u.comps[p][idx] * detail::conj_if_complex(v.comps[p][idx]) *
                static_cast<double>(u.multiplicity(p));
      }
      row += node * w;
    }
    acc += row;
  }
  return acc * h2;
}

// Bilinear pairing (no conjugation): used by the oscillatory-integral
// experiments where the probe phases already carry the signs.
template <class S>
S pair_integral(const SymTensorField<S>& u, const SymTensorField<S>& v,
                const MetricField& metric) {
  if (u.m != v.m || !(u.grid == v.grid)) throw UsageError("pair_integral: mismatched fields");
  const GridSpec& g = u.grid;
  const double h2 = g.h() * g.h();
  S acc{};
  for (int iy = 0; iy < g.n; ++iy) {
    S row{};
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!u.mask->inside[idx]) continue;
      const double w = std::exp((2.0 - 2.0 * u.m) * metric.lambda(g.node(ix, iy)));
      S node{};
      for (int p = 0; p <= u.m; ++p) {
        node += u.comps[p][idx] * v.comps[p][idx] * static_cast<double>(u.multiplicity(p));
      }
      row += node * w;
    }
    acc += row;
  }
  return acc * h2;
}

template <class S>
double l2_norm(const SymTensorField<S>& u, const MetricField& metric) {
  double acc = 0.0;
  const GridSpec& g = u.grid;
  const double h2 = g.h() * g.h();
  for (int iy = 0; iy < g.n; ++iy) {
    double row = 0.0;
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!u.mask->inside[idx]) continue;
      const double w = std::exp((2.0 - 2.0 * u.m) * metric.lambda(g.node(ix, iy)));
      double node = 0.0;
      for (int p = 0; p <= u.m; ++p) {
        node += std::norm(Complex(u.comps[p][idx])) * u.multiplicity(p);
      }
      row += node * w;
    }
    acc += row;
  }
  return std::sqrt(acc * h2);
}

// In-place linear algebra helpers shared by the iterative solvers.
template <class S>
void axpy(SymTensorField<S>& y, const S& alpha, const SymTensorField<S>& x) {
  for (int p = 0; p <= y.m; ++p) {
    for (std::size_t i = 0; i < y.comps[p].size(); ++i) y.comps[p][i] += alpha * x.comps[p][i];
  }
}

template <class S>
void scale(SymTensorField<S>& y, const S& alpha) {
  for (int p = 0; p <= y.m; ++p) {
    for (std::size_t i = 0; i < y.comps[p].size(); ++i) y.comps[p][i] *= alpha;
  }
}

}  // namespace tenray
