// tenray — scalar Jacobi fields along geodesics, conjugate points, pair data.
//
// On a 2D surface a normal Jacobi field along a unit-speed geodesic is
// b(t) * (rotated tangent) with b solving  b'' + K(gamma(t)) b = 0.  This
// header integrates that scalar equation on the sample grid of a
// GeodesicPath, locates conjugate points as zeros of b, evaluates the
// parallel-transport-normalized solution f(t0, .) (value 1, slope 0 at t0),
// and packages the data of an interior conjugate pair that the symbol and
// cancellation machinery consumes.
//
// Orientation convention: the transverse direction is the +90deg rotation of
// the tangent in the conformal chart, J(t) = b(t) * rot90-of-velocity scaled
// to g-unit length.

#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "tenray/core.hpp"
#include "tenray/metric.hpp"

namespace tenray {

struct JacobiSolution {
  const GeodesicPath* path = nullptr;
  double t_init = 0.0;
  double b_init = 0.0;
  double bdot_init = 0.0;
  // Samples aligned with path->pos / path->vel (same indexing and step).
  std::vector<double> b;
  std::vector<double> bdot;
  // Values at the refined boundary endpoints.
  double b_entry = 0.0, bdot_entry = 0.0;
  double b_exit = 0.0, bdot_exit = 0.0;

  double value_at(double t) const { return hermite(t, false); }
  double deriv_at(double t) const { return hermite(t, true); }

 private:
  double hermite(double t, bool want_deriv) const;
};

// A conjugate point gamma(s) of gamma(t0) along the path, with the slope of
// the vanishing Jacobi field there.
struct ConjugatePoint {
  double s = 0.0;
  double bdot = 0.0;
};

// Data of an interior conjugate pair (x0 = gamma(t0), y0 = gamma(s0)) used
// by the transform's off-diagonal symbol: chart states at both points, the
// unit conormal at x0, the matched (signed) codirection at y0, the inflow
// cosines at the two boundary ends of the carrying geodesic, and the
// normalized transverse solutions between the pair.
struct ConjugatePairDatum {
  double t0 = 0.0, s0 = 0.0;
  Vec2 x0, y0;
  Vec2 v0, v1;        // unit tangents at t0, s0
  Vec2 xi_unit;       // unit conormal at x0: lowered, rotated tangent
  Vec2 eta;           // matched codirection at y0 for |xi|_g = 1 (signed)
  double bdot_s0 = 0.0;   // slope at the conjugate point of the b(t0)=0 field
  double rho = 0.0;       // |eta|_g = |bdot_s0|
  double cos_w0 = 1.0;    // inflow cosine at the boundary end behind x0
  double cos_w1 = 1.0;    // inflow cosine at the boundary end beyond y0
  double f_forward = 1.0;   // f(t0, s0): slope-free solution from t0 at s0
  double f_backward = 1.0;  // f(s0, t0): same quantity from the other end
  BoundaryHit end0;  // boundary hit behind x0 (path entry)
  BoundaryHit end1;  // boundary hit beyond y0 (path exit)
};

namespace detail {

// Curvature along the path at parameter t (Hermite-interpolated position for
// off-sample parameters).
inline double path_curvature(const MetricField& m, const GeodesicPath& p, double t) {
  return m.gauss_curvature(p.position_at(t));
}

struct Jac2 {
  double b, bd;
};

// One RK4 step of b'' = -K b from t over dt.
inline Jac2 jacobi_rk4(const MetricField& m, const GeodesicPath& p, double t, double dt,
                       const Jac2& s) {
  const auto f = [&](double tt, const Jac2& y) -> Jac2 {
    return {y.bd, -path_curvature(m, p, tt) * y.b};
  };
  const Jac2 k1 = f(t, s);
  const Jac2 k2 = f(t + 0.5 * dt, {s.b + 0.5 * dt * k1.b, s.bd + 0.5 * dt * k1.bd});
  const Jac2 k3 = f(t + 0.5 * dt, {s.b + 0.5 * dt * k2.b, s.bd + 0.5 * dt * k2.bd});
  const Jac2 k4 = f(t + dt, {s.b + dt * k3.b, s.bd + dt * k3.bd});
  return {s.b + dt / 6.0 * (k1.b + 2 * k2.b + 2 * k3.b + k4.b),
          s.bd + dt / 6.0 * (k1.bd + 2 * k2.bd + 2 * k3.bd + k4.bd)};
}

}  // namespace detail

// Integrate b'' + K b = 0 along the path with data (b0, bdot0) at t_init
// (which must lie in [t_entry, t_exit]; it is snapped to the sample grid
// when within roundoff of a sample).
inline JacobiSolution integrate_scalar_jacobi(const MetricField& m, const GeodesicPath& path,
                                              double b0, double bdot0, double t_init = 0.0) {
  if (path.trapped) throw NumericalError("integrate_scalar_jacobi: trapped ray");
  if (t_init < path.t_entry - 1e-12 || t_init > path.t_exit + 1e-12) {
    throw UsageError("integrate_scalar_jacobi: t_init outside the path range");
  }
  JacobiSolution sol;
  sol.path = &path;
  sol.t_init = t_init;
  sol.b_init = b0;
  sol.bdot_init = bdot0;
  const int n = path.n_samples();
  sol.b.assign(n, 0.0);
  sol.bdot.assign(n, 0.0);

  // Nearest sample at or near t_init: integrate a partial step onto the grid
  // first, then march whole steps in both directions.
  const double h = path.step;
  int ks = static_cast<int>(std::lround(t_init / h)) + path.k0;
  if (ks < 0) ks = 0;
  if (ks > n - 1) ks = n - 1;
  detail::Jac2 at_ks{b0, bdot0};
  const double t_ks = path.t_of(ks);
  if (std::abs(t_ks - t_init) > 1e-14) {
    at_ks = detail::jacobi_rk4(m, path, t_init, t_ks - t_init, at_ks);
  }
  sol.b[ks] = at_ks.b;
  sol.bdot[ks] = at_ks.bd;

  detail::Jac2 s = at_ks;
  for (int k = ks; k < n - 1; ++k) {
    s = detail::jacobi_rk4(m, path, path.t_of(k), h, s);
    sol.b[k + 1] = s.b;
    sol.bdot[k + 1] = s.bd;
  }
  {
    const detail::Jac2 ex = detail::jacobi_rk4(m, path, path.t_of(n - 1),
                                               path.t_exit - path.t_of(n - 1), s);
    sol.b_exit = ex.b;
    sol.bdot_exit = ex.bd;
  }
  s = at_ks;
  for (int k = ks; k > 0; --k) {
    s = detail::jacobi_rk4(m, path, path.t_of(k), -h, s);
    sol.b[k - 1] = s.b;
    sol.bdot[k - 1] = s.bd;
  }
  {
    const detail::Jac2 en =
        detail::jacobi_rk4(m, path, path.t_of(0), path.t_entry - path.t_of(0), s);
    sol.b_entry = en.b;
    sol.bdot_entry = en.bd;
  }
  return sol;
}

inline double JacobiSolution::hermite(double t, bool want_deriv) const {
  const GeodesicPath& p = *path;
  if (t <= p.t_entry) return want_deriv ? bdot_entry : b_entry;
  if (t >= p.t_exit) return want_deriv ? bdot_exit : b_exit;
  const int n = p.n_samples();
  int k = static_cast<int>(std::floor(t / p.step)) + p.k0;
  if (k < 0) k = 0;
  if (k > n - 2) k = n - 2;
  double t0 = p.t_of(k), t1 = p.t_of(k + 1);
  double y0 = b[k], d0 = bdot[k], y1 = b[k + 1], d1 = bdot[k + 1];
  if (t < t0) {
    t1 = t0; y1 = y0; d1 = d0;
    t0 = p.t_entry; y0 = b_entry; d0 = bdot_entry;
  } else if (t > t1) {
    t0 = t1; y0 = y1; d0 = d1;
    t1 = p.t_exit; y1 = b_exit; d1 = bdot_exit;
  }
  const double dt = t1 - t0;
  if (dt <= 0.0) return want_deriv ? d0 : y0;
  const double u = (t - t0) / dt;
  const double u2 = u * u, u3 = u2 * u;
  if (!want_deriv) {
    return y0 * (2 * u3 - 3 * u2 + 1) + d0 * dt * (u3 - 2 * u2 + u) + y1 * (-2 * u3 + 3 * u2) +
           d1 * dt * (u3 - u2);
  }
  return y0 * (6 * u2 - 6 * u) / dt + d0 * (3 * u2 - 4 * u + 1) + y1 * (-6 * u2 + 6 * u) / dt +
         d1 * (3 * u2 - 2 * u);
}

// Wronskian b1 * b2' - b1' * b2 at parameter t; constant along the path for
// two solutions of the same equation (used as an integration quality gauge).
inline double wronskian(const JacobiSolution& s1, const JacobiSolution& s2, double t) {
  return s1.value_at(t) * s2.deriv_at(t) - s1.deriv_at(t) * s2.value_at(t);
}

// Maximum Wronskian drift per unit length over the sampled range.
inline double wronskian_drift(const JacobiSolution& s1, const JacobiSolution& s2) {
  const GeodesicPath& p = *s1.path;
  const double w0 = wronskian(s1, s2, 0.0);
  double dmax = 0.0;
  for (int k = 0; k < p.n_samples(); ++k) {
    const double w = s1.b[k] * s2.bdot[k] - s1.bdot[k] * s2.b[k];
    dmax = std::max(dmax, std::abs(w - w0));
  }
  const double len = std::max(p.length(), 1e-300);
  return dmax / len;
}

// Zeros of the Jacobi field with b(t0) = 0, b'(t0) = 1 on both sides of t0,
// ordered by parameter.  Roots are refined by bisection on the cubic Hermite
// interpolant of (b, b'), giving O(step^4) locations.
inline std::vector<ConjugatePoint> find_conjugate_points(const MetricField& m,
                                                         const GeodesicPath& path,
                                                         double t0 = 0.0) {
  const JacobiSolution sol = integrate_scalar_jacobi(m, path, 0.0, 1.0, t0);
  std::vector<ConjugatePoint> out;
  const int n = path.n_samples();
  const double h = path.step;
  const int k_init = static_cast<int>(std::lround(t0 / h)) + path.k0;
  for (int k = 0; k + 1 < n; ++k) {
    // Skip the cell that contains the trivial zero at t0 itself.
    if (k == k_init || k + 1 == k_init) {
      if (std::abs(sol.b[k]) < 1e-13 || std::abs(sol.b[k + 1]) < 1e-13) continue;
    }
    const double b0 = sol.b[k], b1 = sol.b[k + 1];
    if (b0 == 0.0 && std::abs(path.t_of(k) - t0) < 1e-12) continue;
    if (b0 * b1 > 0.0) continue;
    if (b0 == 0.0 && b1 == 0.0) continue;
    double lo = path.t_of(k), hi = path.t_of(k + 1);
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double bm = sol.value_at(mid);
      if ((bm <= 0.0) == (b0 <= 0.0)) lo = mid;
      else hi = mid;
      if (hi - lo < 1e-14 * std::max(1.0, std::abs(lo))) break;
    }
    const double s = 0.5 * (lo + hi);
    if (std::abs(s - t0) < 10.0 * h) continue;  // guard against the seed zero
    out.push_back({s, sol.deriv_at(s)});
  }
  return out;
}

// First conjugate point strictly after t0, if any.
inline std::optional<ConjugatePoint> first_conjugate_after(const MetricField& m,
                                                           const GeodesicPath& path,
                                                           double t0) {
  for (const auto& cp : find_conjugate_points(m, path, t0)) {
    if (cp.s > t0) return cp;
  }
  return std::nullopt;
}

// Normalized transverse comparison solution: u'' + K u = 0 along the path
// with u(t0) = 1, u'(t0) = 0, evaluated at s0.  On constant curvature this
// is cos(sqrt(kappa0) (s0 - t0)).
inline double f_factor(const MetricField& m, const GeodesicPath& path, double t0, double s0) {
  const JacobiSolution u = integrate_scalar_jacobi(m, path, 1.0, 0.0, t0);
  return u.value_at(s0);
}

// Assemble the conjugate-pair data for x0 = gamma(t0), y0 = gamma(s0).
// s0 should be (close to) a conjugate parameter of t0; the slope of the
// vanishing field is evaluated there regardless.
inline ConjugatePairDatum build_conjugate_datum(const MetricField& m, const GeodesicPath& path,
                                                double t0, double s0) {
  if (path.trapped) throw NumericalError("build_conjugate_datum: trapped ray");
  ConjugatePairDatum d;
  d.t0 = t0;
  d.s0 = s0;
  Vec2 xv, vv;
  path.state_at(t0, xv, vv);
  d.x0 = xv;
  d.v0 = vv;
  path.state_at(s0, xv, vv);
  d.y0 = xv;
  d.v1 = vv;

  // Unit conormal at x0: lower the rotated unit tangent.
  const Vec2 perp0 = rot90(d.v0);
  d.xi_unit = m.lower(d.x0, perp0);
  {
    const double nn = m.norm_cov(d.x0, d.xi_unit);
    d.xi_unit = d.xi_unit / nn;
  }

  const JacobiSolution bz = integrate_scalar_jacobi(m, path, 0.0, 1.0, t0);
  d.bdot_s0 = bz.deriv_at(s0);
  d.rho = std::abs(d.bdot_s0);

  // Matched codirection at y0: the slope times the lowered rotated tangent.
  // The sign of bdot is part of the data (it is negative at a first
  // conjugate point).
  const Vec2 perp1 = rot90(d.v1);
  Vec2 eta_unit = m.lower(d.y0, perp1);
  eta_unit = eta_unit / m.norm_cov(d.y0, eta_unit);
  d.eta = eta_unit * d.bdot_s0;

  d.end0 = path.entry;
  d.end1 = path.exit;
  d.cos_w0 = path.entry.cos_w;
  d.cos_w1 = path.exit.cos_w;
  d.f_forward = f_factor(m, path, t0, s0);
  d.f_backward = f_factor(m, path, s0, t0);
  return d;
}

// For a chord with an interior conjugate pair, find t0 such that the pair
// (t0, s0(t0)) sits symmetrically about the chord midpoint.  Returns nullopt
// when no interior conjugate pair exists on the chord.
inline std::optional<ConjugatePairDatum> find_symmetric_pair(const MetricField& m,
                                                             const GeodesicPath& path) {
  const double mid = 0.5 * (path.t_entry + path.t_exit);
  const auto offset = [&](double t0) -> std::optional<double> {
    const auto cp = first_conjugate_after(m, path, t0);
    if (!cp || cp->s >= path.t_exit - 1e-9) return std::nullopt;
    return (t0 - mid) + (cp->s - mid);
  };
  // Bracket: at t0 = entry the offset should be negative-to-any; walk right
  // until it turns positive or the pair escapes.
  double lo = path.t_entry + 1e-6;
  auto flo = offset(lo);
  if (!flo) return std::nullopt;
  if (*flo > 0.0) {
    // Pair already beyond symmetric: no interior bracket on this side.
    const auto cp = first_conjugate_after(m, path, lo);
    return build_conjugate_datum(m, path, lo, cp->s);
  }
  double hi = lo;
  std::optional<double> fhi;
  const int steps = 64;
  for (int i = 1; i <= steps; ++i) {
    const double t = path.t_entry + (mid - path.t_entry) * i / steps;
    const auto f = offset(t);
    if (!f) break;
    hi = t;
    fhi = f;
    if (*f > 0.0) break;
  }
  if (!fhi || *fhi <= 0.0) return std::nullopt;
  for (int it = 0; it < 60; ++it) {
    const double t = 0.5 * (lo + hi);
    const auto f = offset(t);
    if (!f) break;
    if (*f <= 0.0) lo = t;
    else hi = t;
    if (hi - lo < 1e-11) break;
  }
  const double t0 = 0.5 * (lo + hi);
  const auto cp = first_conjugate_after(m, path, t0);
  if (!cp) return std::nullopt;
  return build_conjugate_datum(m, path, t0, cp->s);
}

}  // namespace tenray
