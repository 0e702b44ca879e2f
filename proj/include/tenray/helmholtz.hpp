// tenray — solenoidal–potential decomposition of symmetric tensor fields.
//
// A rank-m field f splits as f = sf + du with u a rank-(m-1) potential
// vanishing on the boundary and sf divergence-free.  Discretely we solve the
// elliptic system  (-delta d) u = -delta f  with the operator assembled as
// the literal composition of the tensor_field stencils (one source of truth
// for d and delta), over degrees of freedom on the mask's inside nodes with
// u pinned to zero everywhere else (Dirichlet).  Solving the composed system
// makes the defining property delta(f - du) = 0 hold at solver tolerance at
// every degree of freedom; orthogonality of the parts then holds at stencil
// truncation order, which is well inside the decomposition's tolerance
// budget.  (The alternative normal-equations form d*d u = d*f with the exact
// discrete adjoint d* gives exact orthogonality instead, but leaves the
// divergence residual at truncation order; the composed form matches the
// property the downstream experiments actually consume.)  The exact adjoint
// scatter is still provided below as sym_derivative_adjoint for adjointness
// tests and preconditioning.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tenray/core.hpp"
#include "tenray/grid.hpp"
#include "tenray/metric.hpp"
#include "tenray/tensor_field.hpp"

namespace tenray {

struct PotentialSolveOptions {
  double tol = 1e-8;            // relative residual ||delta(f - du)|| / ||delta f||
  int max_iter = 6000;          // Krylov iteration cap
  bool diagonal_precond = false;  // Jacobi preconditioner (off by default)
};

struct PotentialSolveInfo {
  int iterations = 0;
  double rel_residual = 0.0;
};

// Exact discrete adjoint of sym_derivative under the weighted L2 pairings:
//   <d u, f>_(rank m) = <u, d* f>_(rank m-1)
// for every u supported on the mask's inside nodes.  Implemented by
// scattering the transposed stencil taps; writes landing outside the inside
// set are dropped, which is the projection back onto the degree-of-freedom
// space (and is what makes the identity above exact rather than O(h^4)).
template <class S>
SymTensorField<S> sym_derivative_adjoint(const SymTensorField<S>& f,
                                         const MetricField& metric) {
  if (f.m < 1) throw UsageError("sym_derivative_adjoint: rank must be >= 1");
  const int m = f.m;
  const int r = m - 1;
  const GridSpec& g = f.grid;
  auto out = SymTensorField<S>::zeros(r, g, f.mask);
  const auto& inside = f.mask->inside;
  const double inv12h = 1.0 / (12.0 * g.h());
  // partial4 tap weights at offsets -2..2 (centre weight is zero).
  constexpr int off[4] = {-2, -1, 1, 2};
  constexpr double wt[4] = {1.0, -8.0, 8.0, -1.0};
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!inside[idx]) continue;
      const Vec2 pnt = g.node(ix, iy);
      const double wm = std::exp((2.0 - 2.0 * m) * metric.lambda(pnt));
      const auto G = metric.christoffel(pnt);
      const auto gam = [&](int a, int i, int j) -> double {
        const Mat2& M = G[a];
        return (i == 0) ? (j == 0 ? M.a : M.b) : (j == 0 ? M.c : M.d);
      };
      // One scattered term: the derivative along axis k of class p, as read
      // by output class q with combinatorial weight `fac` = q or (m-q).
      const auto scatter = [&](int p, int k, double fac, const S& fq) {
        const S F = fq * (wm * fac / m);
        // Transposed difference taps.
        for (int t = 0; t < 4; ++t) {
          int jx = ix, jy = iy;
          if (k == 0) jx += off[t];
          else jy += off[t];
          if (jx < 0 || jx >= g.n || jy < 0 || jy >= g.n) continue;
          const std::size_t jdx = g.index(jx, jy);
          if (!inside[jdx]) continue;
          out.comps[p][jdx] += F * (wt[t] * inv12h);
        }
        // Christoffel corrections are diagonal in the node index.
        if (r > 0) {
          out.comps[p][idx] -= F * (p * gam(0, k, 0) + (r - p) * gam(1, k, 1));
          if (p - 1 >= 0) out.comps[p - 1][idx] -= F * (p * gam(1, k, 0));
          if (p + 1 <= r) out.comps[p + 1][idx] -= F * ((r - p) * gam(0, k, 1));
        }
      };
      for (int q = 0; q <= m; ++q) {
        const S fq = f.comps[q][idx] * static_cast<double>(binomial(m, q));
        if (q > 0) scatter(q - 1, 0, static_cast<double>(q), fq);
        if (q < m) scatter(q, 1, static_cast<double>(m - q), fq);
      }
    }
  }
  // Undo the rank-(m-1) pairing weights so the result is a plain field.
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!inside[idx]) continue;
      const double wr = std::exp((2.0 - 2.0 * r) * metric.lambda(g.node(ix, iy)));
      for (int p = 0; p <= r; ++p) {
        out.comps[p][idx] /= wr * binomial(r, p);
      }
    }
  }
  return out;
}

namespace detail {

template <class S>
double re_inner(const SymTensorField<S>& a, const SymTensorField<S>& b,
                const MetricField& metric) {
  if constexpr (std::is_same_v<S, Complex>) return l2_inner(a, b, metric).real();
  else return l2_inner(a, b, metric);
}

// Diagonal of the normal operator d* d, for the optional Jacobi
// preconditioner: same scatter as the adjoint but with squared tap
// coefficients, accumulated per degree of freedom.
inline std::vector<std::vector<double>> potential_diagonal(int m, const GridSpec& g,
                                                           const GridMask& mask,
                                                           const MetricField& metric) {
  const int r = m - 1;
  std::vector<std::vector<double>> diag(r + 1, std::vector<double>(g.size(), 1.0));
  const double inv12h = 1.0 / (12.0 * g.h());
  constexpr int off[4] = {-2, -1, 1, 2};
  constexpr double wt[4] = {1.0, -8.0, 8.0, -1.0};
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!mask.inside[idx]) continue;
      const Vec2 pnt = g.node(ix, iy);
      const double wm = std::exp((2.0 - 2.0 * m) * metric.lambda(pnt));
      const auto G = metric.christoffel(pnt);
      const auto gam = [&](int a, int i, int j) -> double {
        const Mat2& M = G[a];
        return (i == 0) ? (j == 0 ? M.a : M.b) : (j == 0 ? M.c : M.d);
      };
      const auto scatter_sq = [&](int p, int k, double fac, double mult) {
        const double F2 = wm * mult * sqr(fac / m);
        for (int t = 0; t < 4; ++t) {
          int jx = ix, jy = iy;
          if (k == 0) jx += off[t];
          else jy += off[t];
          if (jx < 0 || jx >= g.n || jy < 0 || jy >= g.n) continue;
          const std::size_t jdx = g.index(jx, jy);
          if (!mask.inside[jdx]) continue;
          diag[p][jdx] += F2 * sqr(wt[t] * inv12h);
        }
        if (r > 0) {
          diag[p][idx] += F2 * sqr(p * gam(0, k, 0) + (r - p) * gam(1, k, 1));
          if (p - 1 >= 0) diag[p - 1][idx] += F2 * sqr(p * gam(1, k, 0));
          if (p + 1 <= r) diag[p + 1][idx] += F2 * sqr((r - p) * gam(0, k, 1));
        }
      };
      for (int q = 0; q <= m; ++q) {
        const double mult = binomial(m, q);
        if (q > 0) scatter_sq(q - 1, 0, q, mult);
        if (q < m) scatter_sq(q, 1, m - q, mult);
      }
    }
  }
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!mask.inside[idx]) continue;
      const double wr = std::exp((2.0 - 2.0 * r) * metric.lambda(g.node(ix, iy)));
      for (int p = 0; p <= r; ++p) diag[p][idx] /= wr * binomial(r, p);
    }
  }
  return diag;
}

}  // namespace detail

// Solve (-delta d) u = -delta f for the rank-(m-1) potential u with zero
// boundary values.  The composed stencil is positive but symmetric only up
// to truncation order (its odd-even modes couple through the Christoffel
// terms), which stalls plain conjugate gradients on curved metrics, so the
// solver is stabilized bi-conjugate gradients with an optional Jacobi
// preconditioner.  The true residual is re-verified from scratch after the
// loop; failure to reach the tolerance raises NumericalError with a
// residual report.
template <class S>
SymTensorField<S> solve_potential(const SymTensorField<S>& f, const MetricField& metric,
                                  const PotentialSolveOptions& opt = {},
                                  PotentialSolveInfo* info_out = nullptr) {
  if (f.m < 1) throw UsageError("solve_potential: rank must be >= 1");
  const auto apply = [&](const SymTensorField<S>& x) {
    auto y = divergence(sym_derivative(x, metric), metric);
    scale(y, S{} - 1.0);
    return y;
  };
  auto u = SymTensorField<S>::zeros(f.m - 1, f.grid, f.mask);
  auto b = divergence(f, metric);
  scale(b, S{} - 1.0);
  const double bnorm = l2_norm(b, metric);
  PotentialSolveInfo info;
  if (bnorm == 0.0) {
    if (info_out) *info_out = info;
    return u;  // f is divergence-free as sampled
  }
  std::vector<std::vector<double>> diag;
  if (opt.diagonal_precond) {
    diag = detail::potential_diagonal(f.m, f.grid, *f.mask, metric);
  }
  const auto precondition = [&](const SymTensorField<S>& rr) {
    SymTensorField<S> z = rr;
    if (opt.diagonal_precond) {
      for (int p = 0; p <= z.m; ++p) {
        for (std::size_t i = 0; i < z.comps[p].size(); ++i) z.comps[p][i] /= diag[p][i];
      }
    }
    return z;
  };
  auto r = b;
  const auto rhat = b;  // shadow residual
  auto p = SymTensorField<S>::zeros(f.m - 1, f.grid, f.mask);
  auto v = p;
  S rho = S{} + 1.0, alpha = S{} + 1.0, omega = S{} + 1.0;
  for (int it = 1; it <= opt.max_iter; ++it) {
    info.iterations = it;
    const S rho_new = l2_inner(r, rhat, metric);
    if (std::abs(rho_new) < 1e-300) {
      throw NumericalError("solve_potential: Krylov breakdown (rho = 0) at iteration " +
                           std::to_string(it));
    }
    const S beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    axpy(p, S{} - omega, v);
    scale(p, beta);
    axpy(p, S{} + 1.0, r);
    const auto ph = precondition(p);
    v = apply(ph);
    alpha = rho / l2_inner(v, rhat, metric);
    auto s = r;
    axpy(s, S{} - alpha, v);
    if (l2_norm(s, metric) / bnorm < opt.tol) {
      axpy(u, alpha, ph);
      info.rel_residual = l2_norm(s, metric) / bnorm;
      break;
    }
    const auto sh = precondition(s);
    const auto t = apply(sh);
    const double tt = detail::re_inner(t, t, metric);
    if (tt == 0.0) {
      throw NumericalError("solve_potential: Krylov breakdown (t = 0) at iteration " +
                           std::to_string(it));
    }
    omega = l2_inner(s, t, metric) / tt;
    axpy(u, alpha, ph);
    axpy(u, omega, sh);
    r = s;
    axpy(r, S{} - omega, t);
    info.rel_residual = l2_norm(r, metric) / bnorm;
    if (info.rel_residual < opt.tol) break;
  }
  // True residual, recomputed from scratch.
  auto rt = apply(u);
  scale(rt, S{} - 1.0);
  axpy(rt, S{} + 1.0, b);
  info.rel_residual = l2_norm(rt, metric) / bnorm;
  if (info.rel_residual >= opt.tol) {
    throw NumericalError("solve_potential: iteration stalled at relative residual " +
                         std::to_string(info.rel_residual) + " after " +
                         std::to_string(info.iterations) + " iterations");
  }
  if (info_out) *info_out = info;
  return u;
}

template <class S>
struct HelmholtzSplit {
  SymTensorField<S> solenoidal;  // sf = f - du
  SymTensorField<S> potential;   // u, rank m-1, zero on the boundary
  PotentialSolveInfo info;
};

template <class S>
HelmholtzSplit<S> project_solenoidal(const SymTensorField<S>& f, const MetricField& metric,
                                     const PotentialSolveOptions& opt = {}) {
  PotentialSolveInfo info;
  auto u = solve_potential(f, metric, opt, &info);
  auto sf = f;
  const auto du = sym_derivative(u, metric);
  axpy(sf, S{} - 1.0, du);
  return {std::move(sf), std::move(u), info};
}

// Discrete H1 norm: L2 norm plus the L2 norms of the component-wise chart
// partials, all under the rank-appropriate weighted pairing.
template <class S>
double discrete_h1_norm(const SymTensorField<S>& f, const MetricField& metric) {
  const GridSpec& g = f.grid;
  double acc = sqr(l2_norm(f, metric));
  const double h2 = g.h() * g.h();
  double grad = 0.0;
  for (int iy = 0; iy < g.n; ++iy) {
    double row = 0.0;
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!f.mask->inside[idx]) continue;
      const double w = std::exp((2.0 - 2.0 * f.m) * metric.lambda(g.node(ix, iy)));
      double node = 0.0;
      for (int p = 0; p <= f.m; ++p) {
        for (int axis = 0; axis < 2; ++axis) {
          node += std::norm(Complex(detail::partial4(g, f.comps[p], ix, iy, axis))) *
                  f.multiplicity(p);
        }
      }
      row += node * w;
    }
    grad += row;
  }
  return std::sqrt(acc + grad * h2);
}

struct StabilityReport {
  double f_l2 = 0.0, f_h1 = 0.0;
  double sf_l2 = 0.0, sf_h1 = 0.0;
  double u_l2 = 0.0, u_h1 = 0.0;
  double solenoidal_ratio = 0.0;  // sf_l2 / f_l2 (0 when f = 0)
  PotentialSolveInfo info;
};

template <class S>
StabilityReport stability_report(const SymTensorField<S>& f, const MetricField& metric,
                                 const PotentialSolveOptions& opt = {}) {
  StabilityReport rep;
  rep.f_l2 = l2_norm(f, metric);
  rep.f_h1 = discrete_h1_norm(f, metric);
  if (rep.f_l2 == 0.0) return rep;
  auto split = project_solenoidal(f, metric, opt);
  rep.sf_l2 = l2_norm(split.solenoidal, metric);
  rep.sf_h1 = discrete_h1_norm(split.solenoidal, metric);
  rep.u_l2 = l2_norm(split.potential, metric);
  rep.u_h1 = discrete_h1_norm(split.potential, metric);
  rep.solenoidal_ratio = rep.sf_l2 / rep.f_l2;
  rep.info = split.info;
  return rep;
}

}  // namespace tenray
