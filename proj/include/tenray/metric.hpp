// tenray — conformal disc geometries: metric families, geodesics, boundary.
//
// All metrics are conformal to the flat chart, g = e^{2 lambda(x)} delta, on
// the disc |x| <= R.  Three analytic families are supported:
//
//   euclidean           lambda = 0
//   constant_curvature  lambda = ln 2 - ln(1 + kappa0 |x|^2)   (curvature kappa0)
//   gaussian_bump       lambda = A exp(-|x - c|^2 / (2 s^2))
//
// lambda and its first derivatives are evaluated in closed form, so geodesic
// shooting never differentiates a sampled field.  Geodesics are integrated
// with classical RK4 at a fixed step plus a bisection refinement of the
// boundary crossing; on the euclidean family rays are straight lines and are
// handled in closed form.

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tenray/core.hpp"

namespace tenray {

enum class MetricFamily { euclidean, constant_curvature, gaussian_bump };

inline const char* family_name(MetricFamily f) {
  switch (f) {
    case MetricFamily::euclidean: return "euclidean";
    case MetricFamily::constant_curvature: return "constant_curvature";
    case MetricFamily::gaussian_bump: return "gaussian_bump";
  }
  return "?";
}

// Boundary frame at arclength z: position, g-unit inward normal and
// counter-clockwise g-unit tangent (chart components).
struct BoundaryFrame {
  Vec2 point;
  Vec2 nu_in;
  Vec2 tan_ccw;
  double z = 0.0;
  double beta = 0.0;  // chart polar angle of the boundary point
};

// Boundary crossing record of a geodesic, in inflow parameterization: z is
// the g-arclength coordinate of the point, w in (-pi/2, pi/2) the signed
// angle from the inward normal of the ray direction *into* the disc at that
// point (for an exit point, of the reversed ray).
struct BoundaryHit {
  double z = 0.0;
  double w = 0.0;
  double cos_w = 1.0;  // <direction-in, nu_in>_g = cos(w)
  Vec2 point;
};

// A maximal (or capped) unit-speed geodesic through its anchor state at t=0.
// Uniform samples pos[k], vel[k] at t = (k - k0) * step stay inside the
// closed disc; entry/exit carry the refined boundary states.  If `trapped`
// is set the integration hit the length cap before leaving the disc and the
// corresponding entry/exit data is invalid.
struct GeodesicPath {
  double step = 0.0;
  int k0 = 0;  // index of the t=0 sample
  std::vector<Vec2> pos;
  std::vector<Vec2> vel;

  double t_entry = 0.0;  // <= 0
  double t_exit = 0.0;   // >= 0
  Vec2 entry_point, entry_vel;
  Vec2 exit_point, exit_vel;
  BoundaryHit entry, exit;
  bool trapped = false;

  int n_samples() const { return static_cast<int>(pos.size()); }
  double t_of(int k) const { return (k - k0) * step; }
  double t_min() const { return t_entry; }
  double t_max() const { return t_exit; }
  double length() const { return t_exit - t_entry; }

  // Cubic Hermite interpolation of the position/velocity at parameter t.
  // Positions are O(step^4) accurate, velocities O(step^3).
  void state_at(double t, Vec2& x, Vec2& v) const;
  Vec2 position_at(double t) const {
    Vec2 x, v;
    state_at(t, x, v);
    return x;
  }
  Vec2 velocity_at(double t) const {
    Vec2 x, v;
    state_at(t, x, v);
    return v;
  }
};

struct ShootOptions {
  double step = 0.0;          // 0 -> 1e-3 * R
  double max_length = 0.0;    // 0 -> 50 * R (length cap per direction)
  double boundary_tol = 0.0;  // 0 -> 1e-10 * R
  bool backward = true;       // also integrate t < 0 when starting inside
};

// ---------------------------------------------------------------------------
// MetricField
// ---------------------------------------------------------------------------

class MetricField {
 public:
  MetricFamily family = MetricFamily::euclidean;
  double R = 1.0;
  // constant_curvature parameter
  double kappa0 = 0.0;
  // gaussian_bump parameters
  double amplitude = 0.0;
  Vec2 center{0.0, 0.0};
  double width = 1.0;

  static MetricField euclidean(double R) {
    MetricField m;
    m.family = MetricFamily::euclidean;
    m.R = R;
    m.init_boundary_table();
    return m;
  }

  static MetricField constant_curvature(double kappa0, double R) {
    MetricField m;
    m.family = MetricFamily::constant_curvature;
    m.R = R;
    m.kappa0 = kappa0;
    if (kappa0 > 0.0 && kappa0 * R * R >= 1.0 + 1e-12) {
      // The chart covers the whole sphere only up to |x| -> infinity; radii
      // beyond the equator chart radius 1/sqrt(kappa0) are legal, but warn-
      // level geometry (convexity) is reported separately.  Nothing to do.
    }
    if (kappa0 < 0.0 && kappa0 * R * R <= -1.0) {
      throw UsageError("constant_curvature: need kappa0 * R^2 > -1 for a positive metric");
    }
    m.init_boundary_table();
    return m;
  }

  static MetricField gaussian_bump(double amplitude, Vec2 center, double width, double R) {
    MetricField m;
    m.family = MetricFamily::gaussian_bump;
    m.R = R;
    m.amplitude = amplitude;
    m.center = center;
    m.width = width;
    if (width <= 0.0) throw UsageError("gaussian_bump: width must be positive");
    m.init_boundary_table();
    return m;
  }

  // --- conformal factor ----------------------------------------------------

  double lambda(const Vec2& p) const {
    switch (family) {
      case MetricFamily::euclidean: return 0.0;
      case MetricFamily::constant_curvature:
        return std::log(2.0) - std::log(1.0 + kappa0 * dot(p, p));
      case MetricFamily::gaussian_bump: {
        const Vec2 d = p - center;
        return amplitude * std::exp(-dot(d, d) / (2.0 * width * width));
      }
    }
    return 0.0;
  }

  Vec2 grad_lambda(const Vec2& p) const {
    switch (family) {
      case MetricFamily::euclidean: return {0.0, 0.0};
      case MetricFamily::constant_curvature: {
        const double u = 1.0 + kappa0 * dot(p, p);
        return p * (-2.0 * kappa0 / u);
      }
      case MetricFamily::gaussian_bump: {
        const Vec2 d = p - center;
        const double s2 = width * width;
        return d * (-lambda(p) / s2);
      }
    }
    return {0.0, 0.0};
  }

  double laplace_lambda(const Vec2& p) const {
    switch (family) {
      case MetricFamily::euclidean: return 0.0;
      case MetricFamily::constant_curvature: {
        const double u = 1.0 + kappa0 * dot(p, p);
        return -4.0 * kappa0 / (u * u);
      }
      case MetricFamily::gaussian_bump: {
        const Vec2 d = p - center;
        const double s2 = width * width;
        return lambda(p) * (dot(d, d) / (s2 * s2) - 2.0 / s2);
      }
    }
    return 0.0;
  }

  double conf(const Vec2& p) const { return std::exp(lambda(p)); }
  double conf2(const Vec2& p) const { return std::exp(2.0 * lambda(p)); }

  // --- curvature and connection -------------------------------------------

  // Gauss curvature of e^{2 lambda} delta:  K = -e^{-2 lambda} Delta lambda.
  double gauss_curvature(const Vec2& p) const {
    return -std::exp(-2.0 * lambda(p)) * laplace_lambda(p);
  }

  // Christoffel symbols Gamma^k_{ij} of the conformal metric,
  //   Gamma^k_{ij} = d_i lambda delta_{kj} + d_j lambda delta_{ki}
  //                  - d_k lambda delta_{ij},
  // returned as two 2x2 matrices (Gamma^0, Gamma^1) indexed [i][j].
  std::array<Mat2, 2> christoffel(const Vec2& p) const {
    const Vec2 dl = grad_lambda(p);
    std::array<Mat2, 2> G;
    // k = 0
    G[0].a = dl.x;   // i=0,j=0: d0 l + d0 l - d0 l
    G[0].b = dl.y;   // i=0,j=1: d1 l
    G[0].c = dl.y;   // i=1,j=0
    G[0].d = -dl.x;  // i=1,j=1: -d0 l
    // k = 1
    G[1].a = -dl.y;
    G[1].b = dl.x;
    G[1].c = dl.x;
    G[1].d = dl.y;
    return G;
  }

  // --- pointwise algebra ---------------------------------------------------

  double inner_vec(const Vec2& p, const Vec2& a, const Vec2& b) const {
    return conf2(p) * dot(a, b);
  }
  double norm_vec(const Vec2& p, const Vec2& a) const { return conf(p) * norm(a); }
  double inner_cov(const Vec2& p, const Vec2& xi, const Vec2& eta) const {
    return dot(xi, eta) / conf2(p);
  }
  double norm_cov(const Vec2& p, const Vec2& xi) const { return norm(xi) / conf(p); }
  Vec2 raise(const Vec2& p, const Vec2& xi) const { return xi / conf2(p); }
  Vec2 lower(const Vec2& p, const Vec2& v) const { return v * conf2(p); }

  // Hodge-style perp: the unique covector with <xi_perp, xi>_g = 0,
  // |xi_perp|_g = |xi|_g whose raised vector is the +90deg rotation of the
  // raised xi.  In a conformal chart this is the component rotation.
  Vec2 hodge_perp(const Vec2& /*p*/, const Vec2& xi) const { return rot90(xi); }

  bool inside(const Vec2& p, double tol = 0.0) const { return norm(p) <= R + tol; }

  // --- boundary parameterization ------------------------------------------

  double boundary_length() const { return boundary_len_; }

  double z_of_beta(double beta) const;
  double beta_of_z(double z) const;

  BoundaryFrame boundary_frame(double z) const {
    const double beta = beta_of_z(z);
    BoundaryFrame f;
    f.z = wrap_periodic(z, boundary_len_);
    f.beta = beta;
    const Vec2 u{std::cos(beta), std::sin(beta)};
    f.point = u * R;
    const double s = std::exp(-lambda(f.point));
    f.nu_in = -u * s;
    f.tan_ccw = rot90(u) * s;
    return f;
  }

  // Inward g-unit direction at boundary arclength z, angle w from the inward
  // normal (w > 0 towards the counter-clockwise tangent).
  Vec2 direction_from_angle(const BoundaryFrame& f, double w) const {
    return f.nu_in * std::cos(w) + f.tan_ccw * std::sin(w);
  }

  // Signed inflow angle of a g-unit direction d at the boundary frame f.
  double angle_of_direction(const BoundaryFrame& f, const Vec2& d) const {
    const double c = inner_vec(f.point, d, f.nu_in);
    const double s = inner_vec(f.point, d, f.tan_ccw);
    return std::atan2(s, c);
  }

  // Geodesic curvature of the boundary circle at polar angle beta (positive
  // means convex).  For a circle of chart radius R in e^{2 lambda} delta:
  //   k_g = e^{-lambda} (1/R + d_r lambda).
  double boundary_curvature(double beta) const {
    const Vec2 u{std::cos(beta), std::sin(beta)};
    const Vec2 p = u * R;
    return std::exp(-lambda(p)) * (1.0 / R + dot(grad_lambda(p), u));
  }

  // Minimum boundary geodesic curvature over a dense angular sweep; positive
  // iff the boundary is strictly convex.
  double min_boundary_curvature(int n_samples = 4096) const {
    double kmin = boundary_curvature(0.0);
    for (int i = 1; i < n_samples; ++i) {
      kmin = std::min(kmin, boundary_curvature(kTwoPi * i / n_samples));
    }
    return kmin;
  }

  std::string describe() const;

 private:
  void init_boundary_table();

  // Cumulative boundary arclength over chart angle, dense uniform table.
  std::vector<double> bz_;  // z at beta_i = 2 pi i / (n-1), bz_[0] = 0
  double boundary_len_ = 0.0;
};

// ---------------------------------------------------------------------------
// Geodesic integration
// ---------------------------------------------------------------------------

namespace detail {

struct OdeState {
  Vec2 x, v;
};

// Unit-speed geodesic equation of the conformal metric:
//   x' = v,   v'^k = -2 (grad l . v) v^k + |v|^2_delta (grad l)^k.
inline OdeState geodesic_rhs(const MetricField& m, const OdeState& s) {
  const Vec2 dl = m.grad_lambda(s.x);
  const double lv = dot(dl, s.v);
  const double vv = dot(s.v, s.v);
  return {s.v, s.v * (-2.0 * lv) + dl * vv};
}

inline OdeState rk4_step(const MetricField& m, const OdeState& s, double h) {
  const OdeState k1 = geodesic_rhs(m, s);
  const OdeState s2{s.x + k1.x * (0.5 * h), s.v + k1.v * (0.5 * h)};
  const OdeState k2 = geodesic_rhs(m, s2);
  const OdeState s3{s.x + k2.x * (0.5 * h), s.v + k2.v * (0.5 * h)};
  const OdeState k3 = geodesic_rhs(m, s3);
  const OdeState s4{s.x + k3.x * h, s.v + k3.v * h};
  const OdeState k4 = geodesic_rhs(m, s4);
  return {s.x + (k1.x + (k2.x + k3.x) * 2.0 + k4.x) * (h / 6.0),
          s.v + (k1.v + (k2.v + k3.v) * 2.0 + k4.v) * (h / 6.0)};
}

}  // namespace detail

// Advance a unit-speed geodesic from (x, v) by parameter t (may be negative)
// ignoring the boundary.  Used by exponential-map charts.
inline void geodesic_advance(const MetricField& m, Vec2& x, Vec2& v, double t,
                             double step = 0.0) {
  if (m.family == MetricFamily::euclidean) {
    x += v * t;
    return;
  }
  if (step <= 0.0) step = 1e-3 * m.R;
  detail::OdeState s{x, v};
  const double h = (t >= 0.0) ? step : -step;
  int nfull = static_cast<int>(std::floor(std::abs(t) / step));
  for (int i = 0; i < nfull; ++i) s = detail::rk4_step(m, s, h);
  const double rem = t - nfull * h;
  if (std::abs(rem) > 1e-15) s = detail::rk4_step(m, s, rem);
  x = s.x;
  v = s.v;
}

// Shoot the maximal geodesic through (x, v).  |v|_g is normalized to 1.
// The anchor state becomes t = 0; when x is interior and opts.backward is
// set, the ray is integrated in both directions to the boundary.
GeodesicPath shoot_geodesic(const MetricField& m, Vec2 x, Vec2 v,
                            const ShootOptions& opts = {});

// Lightweight boundary crossing: no samples are stored, only the refined
// crossing state.  Closed form on the euclidean family.
struct ChordEnd {
  bool escaped = false;
  double t = 0.0;
  Vec2 x, v;
};

inline ChordEnd trace_to_boundary(const MetricField& m, const Vec2& x0, const Vec2& v0,
                                  double step = 0.0, double cap = 0.0, double tol = 0.0) {
  if (step <= 0.0) step = 1e-3 * m.R;
  if (cap <= 0.0) cap = 50.0 * m.R;
  if (tol <= 0.0) tol = 1e-10 * m.R;
  ChordEnd out;
  if (m.family == MetricFamily::euclidean) {
    const double b = dot(x0, v0) / dot(v0, v0);
    const double c = (dot(x0, x0) - m.R * m.R) / dot(v0, v0);
    double disc = b * b - c;
    if (disc < 0.0) disc = 0.0;
    out.t = -b + std::sqrt(disc);
    out.escaped = out.t <= cap;
    Vec2 xb = x0 + v0 * out.t;
    const double r = norm(xb);
    if (r > 0.0) xb = xb * (m.R / r);
    out.x = xb;
    out.v = v0;
    return out;
  }
  const double R2 = m.R * m.R;
  detail::OdeState s{x0, v0};
  double t = 0.0;
  while (t < cap) {
    const detail::OdeState next = detail::rk4_step(m, s, step);
    if (dot(next.x, next.x) > R2) {
      double lo = 0.0, hi = step;
      detail::OdeState cross = next;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const detail::OdeState trial = detail::rk4_step(m, s, mid);
        if (dot(trial.x, trial.x) > R2) {
          hi = mid;
          cross = trial;
        } else {
          lo = mid;
        }
        if (hi - lo < tol) break;
      }
      const double r = norm(cross.x);
      if (r > 0.0) cross.x = cross.x * (m.R / r);
      out.escaped = true;
      out.t = t + hi;
      out.x = cross.x;
      out.v = cross.v;
      return out;
    }
    s = next;
    t += step;
  }
  out.escaped = false;
  out.t = t;
  out.x = s.x;
  out.v = s.v;
  return out;
}

// Inflow coordinates (z, w) of a ray that crosses the boundary at state
// (q, dir_in) with dir_in pointing into the disc.
inline BoundaryHit inflow_coords(const MetricField& m, const Vec2& q, const Vec2& dir_in) {
  BoundaryHit h;
  h.z = m.z_of_beta(std::atan2(q.y, q.x));
  h.point = q;
  BoundaryFrame f;
  f.point = q;
  const Vec2 u = q / norm(q);
  const double s = std::exp(-m.lambda(q));
  f.nu_in = -u * s;
  f.tan_ccw = rot90(u) * s;
  h.w = m.angle_of_direction(f, dir_in);
  h.cos_w = std::cos(h.w);
  return h;
}

// Convenience: shoot inward from boundary arclength z with inflow angle w.
inline GeodesicPath shoot_from_boundary(const MetricField& m, double z, double w,
                                        const ShootOptions& opts_in = {}) {
  const BoundaryFrame f = m.boundary_frame(z);
  if (std::abs(w) >= kPi / 2.0) throw UsageError("shoot_from_boundary: |w| must be < pi/2");
  ShootOptions opts = opts_in;
  opts.backward = false;
  GeodesicPath p = shoot_geodesic(m, f.point, m.direction_from_angle(f, w), opts);
  // Entry data is exact by construction; overwrite the refined values to
  // avoid a wrap-around mismatch from the crossing detector.
  p.entry.z = f.z;
  p.entry.w = w;
  p.entry.cos_w = std::cos(w);
  p.entry.point = f.point;
  return p;
}

// ---------------------------------------------------------------------------
// Geodesic normal coordinates
// ---------------------------------------------------------------------------

// Exponential-map normal chart centered at x0 with the conformal orthonormal
// frame e_i = e^{-lambda(x0)} d_i.  to_normal inverts the exponential map by
// Newton iteration (exact identity map on the euclidean family).
class NormalChart {
 public:
  NormalChart(const MetricField& m, Vec2 x0, double step = 0.0)
      : m_(&m), x0_(x0), step_(step > 0.0 ? step : 1e-3 * m.R) {
    scale_ = std::exp(m.lambda(x0));
  }

  const Vec2& center() const { return x0_; }

  Vec2 from_normal(const Vec2& u) const {
    if (m_->family == MetricFamily::euclidean) return x0_ + u;
    const double r = norm(u);
    if (r < 1e-15) return x0_;
    Vec2 x = x0_;
    Vec2 v = (u / r) / scale_;  // g-unit chart vector along u
    geodesic_advance(*m_, x, v, r, step_);
    return x;
  }

  // Solve from_normal(u) = p by Newton iteration with finite-difference
  // Jacobians of the exponential map.  `guess` (if finite) seeds the solve;
  // warm starts from a neighbouring node cut the iteration count to 1-2.
  Vec2 to_normal(const Vec2& p, Vec2 guess = {std::nan(""), 0.0},
                 double tol = 0.0) const {
    if (m_->family == MetricFamily::euclidean) return p - x0_;
    if (tol <= 0.0) tol = 1e-12 * m_->R;
    Vec2 u = std::isfinite(guess.x) ? guess : (p - x0_) * scale_;
    for (int it = 0; it < 40; ++it) {
      const Vec2 q = from_normal(u);
      const Vec2 r = p - q;
      if (norm(r) < tol) return u;
      const Mat2 J = exp_jacobian(u);
      const Vec2 du = J.inverse().apply(r);
      // Damped step for robustness far from the solution.
      double alpha = 1.0;
      Vec2 u_new = u + du * alpha;
      for (int back = 0; back < 5 && norm(p - from_normal(u_new)) > norm(r); ++back) {
        alpha *= 0.5;
        u_new = u + du * alpha;
      }
      u = u_new;
    }
    throw NumericalError("NormalChart::to_normal: Newton iteration did not converge");
  }

  // Jacobian d(from_normal)/du by central differences.
  Mat2 exp_jacobian(const Vec2& u, double fd = 0.0) const {
    if (m_->family == MetricFamily::euclidean) return {1.0, 0.0, 0.0, 1.0};
    if (fd <= 0.0) fd = 1e-6 * m_->R;
    const Vec2 qx1 = from_normal({u.x + fd, u.y});
    const Vec2 qx0 = from_normal({u.x - fd, u.y});
    const Vec2 qy1 = from_normal({u.x, u.y + fd});
    const Vec2 qy0 = from_normal({u.x, u.y - fd});
    return {(qx1.x - qx0.x) / (2 * fd), (qy1.x - qy0.x) / (2 * fd),
            (qx1.y - qx0.y) / (2 * fd), (qy1.y - qy0.y) / (2 * fd)};
  }

  // Jacobian d(to_normal)/dp at p: inverse of the exponential-map Jacobian
  // at u = to_normal(p).
  Mat2 chart_jacobian(const Vec2& p, Vec2 guess = {std::nan(""), 0.0}) const {
    if (m_->family == MetricFamily::euclidean) return {1.0, 0.0, 0.0, 1.0};
    const Vec2 u = to_normal(p, guess);
    return exp_jacobian(u).inverse();
  }

 private:
  const MetricField* m_;
  Vec2 x0_;
  double scale_ = 1.0;
  double step_;
};

// ---------------------------------------------------------------------------
// Implementation
// ---------------------------------------------------------------------------

inline void GeodesicPath::state_at(double t, Vec2& x, Vec2& v) const {
  if (trapped) throw NumericalError("GeodesicPath::state_at on a trapped ray");
  if (t <= t_entry) {
    x = entry_point;
    v = entry_vel;
    return;
  }
  if (t >= t_exit) {
    x = exit_point;
    v = exit_vel;
    return;
  }
  const int n = n_samples();
  // Bracket t by two uniform samples, or a uniform sample and an endpoint.
  const double tf = t / step + k0;
  int k = static_cast<int>(std::floor(tf));
  if (k < 0) k = 0;
  if (k > n - 2) k = n - 2;
  double t0 = t_of(k), t1 = t_of(k + 1);
  Vec2 x0 = pos[k], v0 = vel[k], x1 = pos[k + 1], v1 = vel[k + 1];
  if (t < t0) {  // partial entry cell
    t1 = t0;
    x1 = x0;
    v1 = v0;
    t0 = t_entry;
    x0 = entry_point;
    v0 = entry_vel;
  } else if (t > t1) {  // partial exit cell
    t0 = t1;
    x0 = x1;
    v0 = v1;
    t1 = t_exit;
    x1 = exit_point;
    v1 = exit_vel;
  }
  const double dt = t1 - t0;
  if (dt <= 0.0) {
    x = x0;
    v = v0;
    return;
  }
  const double u = (t - t0) / dt;
  const double u2 = u * u, u3 = u2 * u;
  const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
  const double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
  x = x0 * h00 + v0 * (h10 * dt) + x1 * h01 + v1 * (h11 * dt);
  const double g00 = (6 * u2 - 6 * u) / dt, g10 = 3 * u2 - 4 * u + 1;
  const double g01 = (-6 * u2 + 6 * u) / dt, g11 = 3 * u2 - 2 * u;
  v = x0 * g00 + v0 * g10 + x1 * g01 + v1 * g11;
}

inline void MetricField::init_boundary_table() {
  // Composite-trapezoid cumulative arclength z(beta) on a dense uniform
  // angular table; the speed |d_beta gamma|_g = e^{lambda} R is smooth.
  const int n = 1 << 15;
  bz_.assign(n + 1, 0.0);
  const double db = kTwoPi / n;
  double prev = conf(Vec2{R, 0.0}) * R;
  for (int i = 1; i <= n; ++i) {
    const double beta = db * i;
    const double cur = conf(Vec2{R * std::cos(beta), R * std::sin(beta)}) * R;
    bz_[i] = bz_[i - 1] + 0.5 * (prev + cur) * db;
    prev = cur;
  }
  boundary_len_ = bz_[n];
}

inline double MetricField::z_of_beta(double beta) const {
  const int n = static_cast<int>(bz_.size()) - 1;
  const double b = wrap_periodic(beta, kTwoPi);
  const double f = b / kTwoPi * n;
  const int i = std::min(static_cast<int>(f), n - 1);
  const double u = f - i;
  return bz_[i] * (1.0 - u) + bz_[i + 1] * u;
}

inline double MetricField::beta_of_z(double z) const {
  const int n = static_cast<int>(bz_.size()) - 1;
  const double zz = wrap_periodic(z, boundary_len_);
  // Monotone table: binary search then linear inversion in the cell.
  const auto it = std::upper_bound(bz_.begin(), bz_.end(), zz);
  int i = static_cast<int>(it - bz_.begin()) - 1;
  if (i < 0) i = 0;
  if (i > n - 1) i = n - 1;
  const double z0 = bz_[i], z1 = bz_[i + 1];
  const double u = (z1 > z0) ? (zz - z0) / (z1 - z0) : 0.0;
  return (i + u) * kTwoPi / n;
}

inline std::string MetricField::describe() const {
  std::string s = family_name(family);
  s += " (R=" + std::to_string(R);
  if (family == MetricFamily::constant_curvature) s += ", kappa0=" + std::to_string(kappa0);
  if (family == MetricFamily::gaussian_bump) {
    s += ", A=" + std::to_string(amplitude) + ", center=(" + std::to_string(center.x) + "," +
         std::to_string(center.y) + "), width=" + std::to_string(width);
  }
  s += ")";
  return s;
}

namespace detail {

// Integrate from an inside state until the ray leaves the disc; returns the
// uniform inside samples (excluding the start state) and the refined
// boundary state.  `h` may be negative for backward integration.
struct HalfRay {
  std::vector<OdeState> samples;  // states at |h|, 2|h|, ... from the start
  OdeState boundary;              // refined crossing state
  double t_boundary = 0.0;        // signed time of the crossing
  bool trapped = false;
};

inline HalfRay integrate_to_boundary(const MetricField& m, const OdeState& start, double h,
                                     double max_length, double tol) {
  HalfRay out;
  OdeState s = start;
  double t = 0.0;
  const double R2 = m.R * m.R;
  while (true) {
    const OdeState next = rk4_step(m, s, h);
    const double tn = t + h;
    if (dot(next.x, next.x) > R2) {
      // Bisect the step size from the last inside state.
      double lo = 0.0, hi = std::abs(h);
      OdeState cross = next;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const OdeState trial = rk4_step(m, s, std::copysign(mid, h));
        if (dot(trial.x, trial.x) > R2) {
          hi = mid;
          cross = trial;
        } else {
          lo = mid;
        }
        if (hi - lo < tol) break;
      }
      // Snap the crossing point onto the circle exactly.
      const double r = norm(cross.x);
      if (r > 0.0) cross.x = cross.x * (m.R / r);
      out.boundary = cross;
      out.t_boundary = t + std::copysign(hi, h);
      return out;
    }
    s = next;
    t = tn;
    out.samples.push_back(s);
    if (std::abs(t) >= max_length) {
      out.trapped = true;
      out.boundary = s;
      out.t_boundary = t;
      return out;
    }
  }
}

// Closed-form half ray for the euclidean family: straight chord to the
// circle |x| = R.
inline HalfRay euclidean_half(const MetricField& m, const OdeState& start, double h,
                              double max_length) {
  HalfRay out;
  const double sgn = (h >= 0.0) ? 1.0 : -1.0;
  const Vec2 d = start.v * sgn;  // unit direction of travel
  const double b = dot(start.x, d);
  const double c = dot(start.x, start.x) - m.R * m.R;
  double disc = b * b - c;
  if (disc < 0.0) disc = 0.0;
  const double tb = -b + std::sqrt(disc);  // first crossing along d, >= 0
  if (tb > max_length) {
    out.trapped = true;  // cannot happen for finite R, kept for symmetry
    out.t_boundary = sgn * max_length;
    out.boundary = {start.x + d * max_length, start.v};
    return out;
  }
  const int nfull = static_cast<int>(std::floor(tb / std::abs(h)));
  out.samples.reserve(nfull);
  for (int k = 1; k <= nfull; ++k) {
    const double t = k * std::abs(h);
    out.samples.push_back({start.x + d * t, start.v});
  }
  Vec2 xb = start.x + d * tb;
  const double r = norm(xb);
  if (r > 0.0) xb = xb * (m.R / r);
  out.boundary = {xb, start.v};
  out.t_boundary = sgn * tb;
  return out;
}

}  // namespace detail

inline GeodesicPath shoot_geodesic(const MetricField& m, Vec2 x, Vec2 v,
                                   const ShootOptions& opts) {
  const double step = (opts.step > 0.0) ? opts.step : 1e-3 * m.R;
  const double cap = (opts.max_length > 0.0) ? opts.max_length : 50.0 * m.R;
  const double tol = (opts.boundary_tol > 0.0) ? opts.boundary_tol : 1e-10 * m.R;

  const double nv = m.norm_vec(x, v);
  if (nv <= 0.0) throw UsageError("shoot_geodesic: zero direction");
  v = v / nv;
  if (norm(x) > m.R * (1.0 + 1e-12)) {
    throw UsageError("shoot_geodesic: start point outside the disc");
  }

  const detail::OdeState start{x, v};
  const bool start_on_boundary = norm(x) >= m.R * (1.0 - 1e-12);
  const bool go_backward = opts.backward && !start_on_boundary;

  detail::HalfRay fwd, bwd;
  if (m.family == MetricFamily::euclidean) {
    fwd = detail::euclidean_half(m, start, step, cap);
    if (go_backward) bwd = detail::euclidean_half(m, start, -step, cap);
  } else {
    fwd = detail::integrate_to_boundary(m, start, step, cap, tol);
    if (go_backward) bwd = detail::integrate_to_boundary(m, start, -step, cap, tol);
  }

  GeodesicPath p;
  p.step = step;
  p.trapped = fwd.trapped || bwd.trapped;

  const int nb = static_cast<int>(bwd.samples.size());
  const int nf = static_cast<int>(fwd.samples.size());
  p.k0 = nb;
  p.pos.resize(nb + 1 + nf);
  p.vel.resize(nb + 1 + nf);
  for (int i = 0; i < nb; ++i) {
    p.pos[nb - 1 - i] = bwd.samples[i].x;
    p.vel[nb - 1 - i] = bwd.samples[i].v;
  }
  p.pos[nb] = start.x;
  p.vel[nb] = start.v;
  for (int i = 0; i < nf; ++i) {
    p.pos[nb + 1 + i] = fwd.samples[i].x;
    p.vel[nb + 1 + i] = fwd.samples[i].v;
  }

  p.t_exit = fwd.t_boundary;
  p.exit_point = fwd.boundary.x;
  p.exit_vel = fwd.boundary.v;
  if (go_backward) {
    p.t_entry = bwd.t_boundary;
    p.entry_point = bwd.boundary.x;
    p.entry_vel = bwd.boundary.v;
  } else {
    p.t_entry = 0.0;
    p.entry_point = start.x;
    p.entry_vel = start.v;
  }

  if (!p.trapped) {
    // Inflow coordinates at both ends.  At the entry the ray moves inward
    // along +entry_vel, at the exit the reversed ray moves inward along
    // -exit_vel.
    p.exit = inflow_coords(m, p.exit_point, -p.exit_vel);
    p.entry = inflow_coords(m, p.entry_point, p.entry_vel);
  }
  return p;
}

}  // namespace tenray
