// tenray — closed-form principal symbols of the normal operator.
//
// At an interior point x0 with covector xi, the leading part of the normal
// operator is carried by the geodesic through x0 transverse to xi: shooting
// it both ways to the boundary yields two exit records, and the symbol is a
// rank-one tensor monomial in the unit transverse direction scaled by the sum
// of the two inverse exit cosines and by 1/|xi|_g.  When a conjugate pair
// (x0, y0) is present, the two-point variant carries one transverse monomial
// per endpoint, and each boundary term is additionally divided by the scalar
// Jacobi factor of the pair, which can be negative.
//
// Two output conventions are supported: the scalar-normalized one (what the
// oscillatory-probe harness measures) and the half-density one, which is the
// scalar-normalized value times 2*pi*i.

#pragma once

#include <cmath>
#include <complex>
#include <iomanip>
#include <ostream>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "tenray/core.hpp"
#include "tenray/jacobi.hpp"
#include "tenray/metric.hpp"

namespace tenray {

enum class SymbolConvention { scalar_normalized, half_density };

// One boundary leg of a symbol: the hit record of the transverse geodesic
// and the leg's scalar contribution.
struct SymbolLeg {
  BoundaryHit hit;
  double cos_angle = 1.0;  // inflow cosine at the hit (always positive)
  double f = 1.0;          // scalar Jacobi factor (1 for the one-point symbol)
  double term = 1.0;       // 1 / (cos_angle * f)
};

struct SymbolOptions {
  SymbolConvention convention = SymbolConvention::scalar_normalized;
  // Warn (via SymbolTensor::near_tangency) when an inverse exit cosine
  // exceeds this cap, i.e. the transverse ray leaves almost tangentially.
  double tangency_cap = 1.0 / std::cos(1.45);
  ShootOptions shoot;
};

// A rank-2m symbol value at one phase-space point (or conjugate point pair).
// Components are stored densely by chart-index multiplicity: entry(p, q) is
// the coefficient whose first index block contains p chart-1 indices and
// whose second block contains q of them.  Every entry factors as
// prefactor * a^(block 1) * b^(block 2) with unit vectors a, b, so the
// (m+1) x (m+1) entry matrix has rank one.
struct SymbolTensor {
  int m = 0;
  SymbolConvention convention = SymbolConvention::scalar_normalized;
  bool conjugate = false;  // two-point symbol?
  Vec2 x0, xi;             // base point and covector (chart components)
  Vec2 y0, eta;            // second base; mirrors (x0, xi) for the one-point symbol
  double xi_norm = 1.0;    // |xi|_g at x0
  Vec2 a, b;               // g-unit transverse vectors at x0 and y0
  SymbolLeg leg0, leg1;    // leg0: forward along a; leg1: backward
  Complex prefactor{};     // scalar multiplying the monomials in a and b
  bool near_tangency = false;
  std::vector<Complex> entries;  // (m+1)^2, entries[p * (m+1) + q]

  int dim() const { return m + 1; }
  Complex entry(int p, int q) const {
    if (p < 0 || p > m || q < 0 || q > m) throw UsageError("SymbolTensor::entry: index out of range");
    return entries[static_cast<std::size_t>(p) * dim() + q];
  }
};

namespace detail {

// Monomial table a_x^p a_y^(m-p) for p = 0..m.
inline std::vector<double> direction_monomials(const Vec2& a, int m) {
  std::vector<double> t(static_cast<std::size_t>(m) + 1);
  for (int p = 0; p <= m; ++p)
    t[static_cast<std::size_t>(p)] = std::pow(a.x, p) * std::pow(a.y, m - p);
  return t;
}

inline void fill_entries(SymbolTensor& s) {
  const auto ta = direction_monomials(s.a, s.m);
  const auto tb = direction_monomials(s.b, s.m);
  s.entries.assign(static_cast<std::size_t>(s.dim()) * s.dim(), Complex{});
  for (int p = 0; p <= s.m; ++p)
    for (int q = 0; q <= s.m; ++q)
      s.entries[static_cast<std::size_t>(p) * s.dim() + q] =
          s.prefactor * (ta[static_cast<std::size_t>(p)] * tb[static_cast<std::size_t>(q)]);
}

inline Complex convention_scale(SymbolConvention c) {
  // Half-density values are the scalar-normalized ones times 2*pi*i.
  return c == SymbolConvention::half_density ? Complex(0.0, kTwoPi) : Complex(1.0, 0.0);
}

// The g-unit vector transverse to the covector xi at p: raise the +90deg
// rotation of xi and normalize.  (Rotation and raising commute in a
// conformal chart, so the order is immaterial.)
inline Vec2 unit_transverse(const MetricField& metric, const Vec2& p, const Vec2& xi) {
  const Vec2 v = metric.raise(p, rot90(xi));
  const double nv = metric.norm_vec(p, v);
  if (nv == 0.0) throw UsageError("symbol: zero covector");
  return v / nv;
}

}  // namespace detail

// One-point (diagonal) principal symbol at an interior point.  Shoots the
// transverse geodesic both ways; throws NumericalError if it is trapped.
inline SymbolTensor psido_symbol(const MetricField& metric, const Vec2& x0, const Vec2& xi, int m,
                                 const SymbolOptions& opts = {}) {
  if (m < 0) throw UsageError("psido_symbol: negative rank");
  if (!(norm(x0) < metric.R)) throw UsageError("psido_symbol: base point must be interior");
  if (norm(xi) == 0.0) throw UsageError("psido_symbol: zero covector");

  SymbolTensor s;
  s.m = m;
  s.convention = opts.convention;
  s.conjugate = false;
  s.x0 = x0;
  s.xi = xi;
  s.y0 = x0;
  s.eta = xi;
  s.xi_norm = metric.norm_cov(x0, xi);
  s.a = detail::unit_transverse(metric, x0, xi);
  s.b = s.a;

  const GeodesicPath path = shoot_geodesic(metric, x0, s.a, opts.shoot);
  if (path.trapped) throw NumericalError("psido_symbol: transverse geodesic is trapped");
  s.leg0.hit = path.exit;
  s.leg0.cos_angle = path.exit.cos_w;
  s.leg0.term = 1.0 / s.leg0.cos_angle;
  s.leg1.hit = path.entry;
  s.leg1.cos_angle = path.entry.cos_w;
  s.leg1.term = 1.0 / s.leg1.cos_angle;
  s.near_tangency =
      s.leg0.term > opts.tangency_cap || s.leg1.term > opts.tangency_cap;

  s.prefactor =
      detail::convention_scale(opts.convention) * (kTwoPi * (s.leg0.term + s.leg1.term) / s.xi_norm);
  detail::fill_entries(s);
  return s;
}

// Two-point principal symbol at a conjugate pair.  The transverse geodesic
// is the connecting one recorded in the datum; each leg divides by the
// scalar Jacobi factor anchored at x0 (its value is orientation-invariant,
// so both legs share it).  xi_scale sets |xi|_g; eta scales along with it.
inline SymbolTensor fio_symbol(const MetricField& metric, const ConjugatePairDatum& datum, int m,
                               double xi_scale = 1.0, const SymbolOptions& opts = {}) {
  if (m < 0) throw UsageError("fio_symbol: negative rank");
  if (!(xi_scale > 0.0)) throw UsageError("fio_symbol: xi_scale must be positive");
  const double f = datum.f_forward;
  if (std::abs(f) < 1e-10)
    throw NumericalError("fio_symbol: degenerate pair, scalar Jacobi factor vanishes at the datum");

  SymbolTensor s;
  s.m = m;
  s.convention = opts.convention;
  s.conjugate = true;
  s.x0 = datum.x0;
  s.xi = datum.xi_unit * xi_scale;
  s.y0 = datum.y0;
  s.eta = datum.eta * xi_scale;
  s.xi_norm = xi_scale;
  s.a = detail::unit_transverse(metric, datum.x0, datum.xi_unit);
  s.b = detail::unit_transverse(metric, datum.y0, datum.eta);

  s.leg0.hit = datum.end0;
  s.leg0.cos_angle = datum.cos_w0;
  s.leg0.f = f;
  s.leg0.term = 1.0 / (s.leg0.cos_angle * f);
  s.leg1.hit = datum.end1;
  s.leg1.cos_angle = datum.cos_w1;
  s.leg1.f = f;
  s.leg1.term = 1.0 / (s.leg1.cos_angle * f);
  s.near_tangency = 1.0 / s.leg0.cos_angle > opts.tangency_cap ||
                    1.0 / s.leg1.cos_angle > opts.tangency_cap;

  s.prefactor =
      detail::convention_scale(opts.convention) * (kTwoPi * (s.leg0.term + s.leg1.term) / s.xi_norm);
  detail::fill_entries(s);
  return s;
}

// ---------------------------------------------------------------------------
// Ellipticity certificate.
// ---------------------------------------------------------------------------

// Rank report for the stacked constraint system on symmetric m-tensors at
// (x0, xi): m transverse-trace rows (the contraction with the raised xi on
// one index vanishes) plus one row from the symbol itself.  Full rank m+1
// means only the zero tensor satisfies all constraints.
struct EllipticityReport {
  int m = 0;
  int rank = 0;
  double min_singular_value = 0.0;
  bool elliptic = false;
};

inline EllipticityReport ellipticity_certificate(const SymbolTensor& sym, const MetricField& metric) {
  const int m = sym.m;
  const int dim = m + 1;
  EllipticityReport rep;
  rep.m = m;

  Eigen::MatrixXd rows(dim, dim);
  rows.setZero();

  // Trace rows: contracting one index with the raised covector kills the
  // tensor.  Components are indexed by their count of chart-1 indices, so
  // fixing r of them among the free m-1 slots gives the row
  // xi^1 * e_{r+1} + xi^2 * e_r.
  const Vec2 xi_up = metric.raise(sym.x0, sym.xi);
  for (int r = 0; r < m; ++r) {
    rows(r, r + 1) += xi_up.x;
    rows(r, r) += xi_up.y;
  }

  // Symbol row: the symbol contracts the second index block with the tensor,
  // so sym f = 0 reduces to one linear condition with binomial weights.
  const auto tb = detail::direction_monomials(sym.b, m);
  const double strength = std::abs(sym.prefactor);
  for (int q = 0; q <= m; ++q)
    rows(m, q) = strength * binomial(m, q) * tb[static_cast<std::size_t>(q)];

  // Normalize rows so the singular values report geometry, not scale.  A
  // vanishing row is a genuine rank deficiency and is left as zeros.
  for (int r = 0; r < dim; ++r) {
    const double n = rows.row(r).norm();
    if (n > 1e-300) rows.row(r) /= n;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows);
  const auto& sv = svd.singularValues();
  const double tol = 1e-10 * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  rep.rank = rank;
  rep.min_singular_value = sv(sv.size() - 1);
  rep.elliptic = rank == dim;
  return rep;
}

// ---------------------------------------------------------------------------
// CSV export.
// ---------------------------------------------------------------------------

// Sweep the one-point symbol over base points and covector angles and write
// one CSV row per (point, angle) with the two leg terms and the scalar
// coefficient.  Points whose transverse ray traps are skipped.
inline void write_symbol_sweep_csv(std::ostream& os, const MetricField& metric, int m,
                                   const std::vector<Vec2>& points, int n_angles,
                                   const SymbolOptions& opts = {}) {
  if (n_angles <= 0) throw UsageError("write_symbol_sweep_csv: need a positive angle count");
  os << "x,y,angle,cos0,cos1,term0,term1,coef_re,coef_im,near_tangency\n";
  os << std::setprecision(17);
  for (const Vec2& p : points) {
    for (int ia = 0; ia < n_angles; ++ia) {
      const double ang = kPi * ia / n_angles;  // covector direction mod pi
      const Vec2 xi{std::cos(ang), std::sin(ang)};
      SymbolTensor s;
      try {
        s = psido_symbol(metric, p, xi, m, opts);
      } catch (const NumericalError&) {
        continue;
      }
      os << p.x << ',' << p.y << ',' << ang << ',' << s.leg0.cos_angle << ',' << s.leg1.cos_angle
         << ',' << s.leg0.term << ',' << s.leg1.term << ',' << s.prefactor.real() << ','
         << s.prefactor.imag() << ',' << (s.near_tangency ? 1 : 0) << '\n';
    }
  }
}

}  // namespace tenray
