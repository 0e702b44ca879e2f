// tenray — oscillatory-probe measurements of the normal operator's leading
// behaviour.
//
// The closed-form symbols in symbols.hpp predict how the normal operator acts
// on high-frequency inputs.  This module measures the same numbers from the
// transform itself: it pairs two windowed oscillatory probes through the
// boundary-fan double integral
//
//     P(lambda) = \iint (I f_lambda)(z, w) (I g_lambda)(z, w) dz dw,
//
// evaluated by streaming rays on the fly (no sinogram grid), and divides out
// the model Gaussian pairing so the limit of P is the symbol entry itself.
// The phases are calibrated so that the pairing has nondegenerate stationary
// configurations exactly where the geometry says it should:
//
//   * f_lambda rides a window at x0 with phase -lambda S_x, g_lambda a window
//     at y0 (== x0 for the one-point check) with phase +lambda S_y, where
//     S_p(x) = <x - p, xi> + (1/2) (x - p)^T Q (x - p) and
//     Q_kl = xi_j Gamma^j_kl(p).  The quadratic term makes the chart phase
//     agree with the geodesically natural one to third order in the offset,
//     so finite-difference Hessians of the pairing phase at its critical
//     configurations are exact at leading order.
//   * g_lambda additionally carries a focusing chirp
//     -(c/2) e^{2 lam(y0)} |x - y0|^2 in its phase; c > 0 makes the
//     stationary configurations isolated and nondegenerate.  Measured
//     coefficients are stable in c (checked over {5, 10, 20}).
//
// Both boundary patches (one per orientation of the carrying geodesic) are
// summed; each contributes one stationary configuration.  numerical_hessian
// evaluates the same pairing phase along exact rays and differentiates it to
// verify nondegeneracy (det < 0, signature +2) directly.
//
// Conventions.  The pairing uses the plain boundary measure dz dw and plain
// (unconjugated) products, and the probes carry bare component monomials, so
// a measured coefficient converges to SymbolTensor::entry(p, q) in the
// scalar-normalized convention, with p, q the chart-index classes of the two
// probe polarizations.  Windows are chart-radius plateaus; their radii are
// fitted to the geometry (distance to the boundary, to the first caustic of
// the fan, and to the partner window) unless overridden.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "tenray/core.hpp"
#include "tenray/grid.hpp"
#include "tenray/jacobi.hpp"
#include "tenray/metric.hpp"
#include "tenray/symbols.hpp"
#include "tenray/tensor_field.hpp"

namespace tenray {

// ---------------------------------------------------------------------------
// Grid-sampled probes
// ---------------------------------------------------------------------------

// A windowed plane-wave probe: a plateau window at `center` times
// exp(i lambda <x - center, xi>) placed in a single tensor component.
// `index` lists the m chart indices (values 1 or 2) of that component; the
// number of 1s selects the storage class.  The covector `xi` is used as
// given (callers pass g-unit covectors when they want unit frequency).
struct OscillatoryProbe {
  Vec2 center;
  Vec2 xi{1.0, 0.0};
  double lambda = 0.0;
  int m = 0;
  std::vector<int> index;        // m entries in {1, 2}
  double window_plateau = 0.10;  // window == 1 inside this chart radius
  double window_support = 0.18;  // window == 0 outside this chart radius
};

namespace detail {

// Chart-index class of an index tuple: the number of indices equal to 1.
inline int index_class(const std::vector<int>& index, int m, const char* who) {
  if (static_cast<int>(index.size()) != m)
    throw UsageError(std::string(who) + ": index tuple must have exactly m entries");
  int p = 0;
  for (int i : index) {
    if (i != 1 && i != 2) throw UsageError(std::string(who) + ": index entries must be 1 or 2");
    if (i == 1) ++p;
  }
  return p;
}

}  // namespace detail

// Sample the probe on a grid.  The window must resolve the frequency
// (lambda * h <= 0.5) and fit inside the disc with a stencil margin; the
// probe occupies the single component named by its index tuple.
inline ComplexTensorField make_probe(const OscillatoryProbe& probe, const GridSpec& grid,
                                     std::shared_ptr<const GridMask> mask = nullptr) {
  if (probe.m < 0 || probe.m > 4) throw UsageError("make_probe: rank must be in [0, 4]");
  if (!(probe.lambda >= 0.0)) throw UsageError("make_probe: negative frequency");
  if (!(probe.window_plateau > 0.0) || !(probe.window_support > probe.window_plateau))
    throw UsageError("make_probe: window radii must satisfy 0 < plateau < support");
  if (probe.lambda * grid.h() > 0.5)
    throw UsageError("make_probe: frequency unresolvable on this grid (lambda * h > 0.5)");
  if (norm(probe.center) + probe.window_support > grid.R - 2.0 * grid.h())
    throw UsageError("make_probe: window support reaches the grid boundary");
  const int pcls = detail::index_class(probe.index, probe.m, "make_probe");

  if (!mask) mask = std::make_shared<GridMask>(GridMask::make(grid, grid.R, 2));
  ComplexTensorField out = ComplexTensorField::zeros(probe.m, grid, mask);
  auto& comp = out.comps[static_cast<std::size_t>(pcls)];
  for (int iy = 0; iy < grid.n; ++iy) {
    for (int ix = 0; ix < grid.n; ++ix) {
      const Vec2 u = grid.node(ix, iy) - probe.center;
      const double r = norm(u);
      if (r >= probe.window_support) continue;
      const double w = plateau_window(r, probe.window_plateau, probe.window_support);
      const double ph = probe.lambda * dot(u, probe.xi);
      comp[grid.index(ix, iy)] = Complex{w * std::cos(ph), w * std::sin(ph)};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Streaming pairing harness
// ---------------------------------------------------------------------------

namespace detail {

// Second-order chart correction that makes the linear phase <u, xi>
// geodesically flat to O(|u|^3): Q_kl = xi_j Gamma^j_kl at p.
inline Mat2 phase_curvature_correction(const MetricField& metric, const Vec2& p, const Vec2& xi) {
  const auto G = metric.christoffel(p);
  return Mat2{xi.x * G[0].a + xi.y * G[1].a, xi.x * G[0].b + xi.y * G[1].b,
              xi.x * G[0].c + xi.y * G[1].c, xi.x * G[0].d + xi.y * G[1].d};
}

// One leg of the streaming pairing: a plateau window at `center` with phase
// sgn * lambda * (<u, xi> + u^T quad u / 2) and a bare velocity monomial
// v_1^pcls v_2^(m-pcls).
struct StreamProbe {
  Vec2 center;
  Vec2 xih;
  Mat2 quad{0, 0, 0, 0};
  double r0 = 0.10;
  double r1 = 0.18;
  double sgn = -1.0;
  int pcls = 0;
  int m = 0;
};

inline Complex stream_probe_val(const StreamProbe& pr, double lambda, const Vec2& x,
                                const Vec2& v) {
  const Vec2 u = x - pr.center;
  const double r = norm(u);
  if (r >= pr.r1) return Complex{0.0, 0.0};
  const double w = plateau_window(r, pr.r0, pr.r1);
  const double S = dot(u, pr.xih) + 0.5 * dot(u, pr.quad.apply(u));
  double mono = 1.0;
  for (int i = 0; i < pr.pcls; ++i) mono *= v.x;
  for (int i = 0; i < pr.m - pr.pcls; ++i) mono *= v.y;
  const double ph = pr.sgn * lambda * S;
  return Complex{w * mono * std::cos(ph), w * mono * std::sin(ph)};
}

// A windowed patch of the boundary fan around (z0, w0), sampled on a midpoint
// grid of nz x nw cells covering [-dz2, dz2] x [-dw2, dw2] offsets.
struct FanPatch {
  double z0 = 0.0, w0 = 0.0;
  double dz1 = 0.45, dz2 = 0.80;
  double dw1 = 0.35, dw2 = 0.60;
  int nz = 384, nw = 288;
  double t_hi = 1e9;  // stop integrating rays past this time
};

// Accumulate the windowed pairing over one patch into acc[l] (one slot per
// frequency): for each fan cell, integrate both probes along the ray with a
// midpoint rule (fine steps near the windows, coarse elsewhere) and add
// If * Ig times the window and the plain cell measure dz dw.
inline void accumulate_fan_patch(const MetricField& metric, const FanPatch& pa,
                                 const StreamProbe& fp, const StreamProbe& gp,
                                 const std::vector<double>& lambdas, double dt_fine,
                                 double dt_coarse, std::vector<Complex>& acc) {
  const double hz = 2.0 * pa.dz2 / pa.nz;
  const double hw = 2.0 * pa.dw2 / pa.nw;
  const std::size_t nl = lambdas.size();
  std::vector<Complex> If(nl), Ig(nl);
  const double margin = 0.06;
  for (int iz = 0; iz < pa.nz; ++iz) {
    const double zq = pa.z0 + (iz + 0.5) * hz - pa.dz2;
    const double wz = plateau_window(std::abs(zq - pa.z0), pa.dz1, pa.dz2);
    const BoundaryFrame bf = metric.boundary_frame(zq);
    for (int iw = 0; iw < pa.nw; ++iw) {
      const double wq = pa.w0 + (iw + 0.5) * hw - pa.dw2;
      if (std::abs(wq) > kPi / 2 - 0.02) continue;  // keep clear of tangency
      const double ww = plateau_window(std::abs(wq - pa.w0), pa.dw1, pa.dw2);
      const double win = wz * ww;
      if (win <= 0.0) continue;
      for (std::size_t l = 0; l < nl; ++l) If[l] = Ig[l] = Complex{0, 0};
      OdeState s{bf.point, metric.direction_from_angle(bf, wq)};
      double t = 0.0;
      while (t < pa.t_hi) {
        const double df = norm(s.x - fp.center), dg = norm(s.x - gp.center);
        const bool near = (df < fp.r1 + margin) || (dg < gp.r1 + margin);
        const double h = near ? dt_fine : dt_coarse;
        if (near) {
          const OdeState smid = rk4_step(metric, s, 0.5 * h);
          const double mf = norm(smid.x - fp.center), mg = norm(smid.x - gp.center);
          for (std::size_t l = 0; l < nl; ++l) {
            if (mf < fp.r1) If[l] += stream_probe_val(fp, lambdas[l], smid.x, smid.v) * h;
            if (mg < gp.r1) Ig[l] += stream_probe_val(gp, lambdas[l], smid.x, smid.v) * h;
          }
        }
        s = rk4_step(metric, s, h);
        t += h;
        if (norm(s.x) > metric.R) break;
      }
      const double meas = win * hz * hw;
      for (std::size_t l = 0; l < nl; ++l) acc[l] += If[l] * Ig[l] * meas;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Symbol verification
// ---------------------------------------------------------------------------

struct SymbolCheckOptions {
  // Index tuples of the two probe polarizations (m entries each, values in
  // {1, 2}; empty means all 2s, the pure-transverse choice for xi = dx^1).
  std::vector<int> f_index, g_index;
  // Focusing-chirp coefficient on the second probe.
  double damping_c = 10.0;
  // Fan-patch resolution and ray steps.  The defaults resolve frequencies up
  // to lambda * h_z <= 0.7 and lambda * dt_fine <= 0.2 (both enforced).
  int patch_nz = 384, patch_nw = 288;
  double dt_fine = 1.0e-3;
  double dt_coarse = 0.02;
  // Probe windows: chart radii.  support == 0 fits the geometry
  // automatically; the plateau is always the given fraction of the support.
  double window_support = 0.0;
  double window_plateau_ratio = 0.55;
  // Patch windows (offsets in z and w from the patch center).
  double patch_dz_plateau = 0.45, patch_dz_support = 0.80;
  double patch_dw_plateau = 0.35, patch_dw_support = 0.60;
  // Closed-form side.
  SymbolOptions symbol;
  // Optional artifact paths (empty: no file written).
  std::string csv_path, json_path;
};

struct SymbolCheckRow {
  double lambda = 0.0;
  Complex coefficient{};  // measured
  Complex predicted{};    // symbol entry
  double abs_error = 0.0;
};

struct SymbolCheckReport {
  bool conjugate = false;
  int m = 0;
  int f_class = 0, g_class = 0;
  Complex predicted{};           // symbol entry for the chosen classes
  double reference_scale = 1.0;  // largest symbol entry magnitude
  std::vector<SymbolCheckRow> rows;
  Complex fitted{};          // ratio-2 extrapolation from the last three rows
  bool fitted_valid = false;  // last three lambdas were in ratio 2
  double final_error = 0.0;
  double final_rel_error = 0.0;
  bool errors_decreasing = true;
  SymbolTensor symbol;  // the closed-form side, for inspection
  double window_plateau = 0.0, window_support = 0.0;
  double patch_z[2] = {0.0, 0.0}, patch_w[2] = {0.0, 0.0};
};

inline void write_symbol_check_csv(const SymbolCheckReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_symbol_check_csv: cannot open " + path);
  out << "lambda,coef_re,coef_im,predicted_re,predicted_im,abs_error\n";
  char line[256];
  for (const auto& r : rep.rows) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.lambda,
                  r.coefficient.real(), r.coefficient.imag(), r.predicted.real(),
                  r.predicted.imag(), r.abs_error);
    out << line;
  }
  if (!out) throw IoError("write_symbol_check_csv: write failed for " + path);
}

inline void write_symbol_check_json(const SymbolCheckReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_symbol_check_json: cannot open " + path);
  char buf[512];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "{\n  \"conjugate\": " << (rep.conjugate ? "true" : "false") << ",\n  \"m\": " << rep.m
      << ",\n  \"f_class\": " << rep.f_class << ",\n  \"g_class\": " << rep.g_class
      << ",\n  \"predicted\": [" << num(rep.predicted.real()) << ", " << num(rep.predicted.imag())
      << "],\n  \"reference_scale\": " << num(rep.reference_scale) << ",\n  \"rows\": [";
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    out << (i ? "," : "") << "\n    {\"lambda\": " << num(r.lambda) << ", \"coefficient\": ["
        << num(r.coefficient.real()) << ", " << num(r.coefficient.imag())
        << "], \"abs_error\": " << num(r.abs_error) << "}";
  }
  out << "\n  ],\n  \"fitted\": [" << num(rep.fitted.real()) << ", " << num(rep.fitted.imag())
      << "],\n  \"fitted_valid\": " << (rep.fitted_valid ? "true" : "false")
      << ",\n  \"final_error\": " << num(rep.final_error)
      << ",\n  \"final_rel_error\": " << num(rep.final_rel_error)
      << ",\n  \"errors_decreasing\": " << (rep.errors_decreasing ? "true" : "false") << "\n}\n";
  if (!out) throw IoError("write_symbol_check_json: write failed for " + path);
}

namespace detail {

// Geometry of one pairing run: the carrying chord, two calibrated probes,
// and one fan patch per orientation.
struct PairingGeometry {
  GeodesicPath path;
  StreamProbe fp, gp;
  FanPatch patch_a, patch_b;
  double r0 = 0.0, r1 = 0.0;
};

inline void validate_patches(const MetricField& metric, const PairingGeometry& geom) {
  const double L = metric.boundary_length();
  if (4.0 * geom.patch_a.dz2 > L)
    throw UsageError("stationary_phase_check: fan patch wider than half the boundary");
  const double dz = wrap_periodic(geom.patch_a.z0 - geom.patch_b.z0, L);
  const double sep = std::min(std::abs(dz), L - std::abs(dz));
  if (sep < geom.patch_a.dz2 + geom.patch_b.dz2)
    throw UsageError("stationary_phase_check: the two fan patches overlap (chord too "
                     "tangential for this patch size)");
}

// Probe window radius fitted to the geometry: capped at 0.30 chart units and
// by the distance (converted to chart units at the window centers) to the
// nearer boundary end, to the first caustic of the entry fan, and to the
// partner window.
inline double fitted_window_radius(const MetricField& metric, const GeodesicPath& path,
                                   double t_ball_a, double t_ball_b, const Vec2& center) {
  const double el = metric.conf(center);
  const double leg_a = t_ball_a - path.t_entry;
  const double leg_b = path.t_exit - t_ball_b;
  double r1 = std::min({0.30, 0.85 * leg_a / el, 0.85 * leg_b / el});
  const double sep = t_ball_b - t_ball_a;
  if (sep > 0.0) {
    r1 = std::min(r1, 0.4 * sep / el);
    // first sign change of the entry-fan transverse solution along the chord
    const JacobiSolution j = integrate_scalar_jacobi(metric, path, 0.0, 1.0, path.t_entry);
    double t_caustic = 1e9;
    for (double t = path.t_entry + 0.05; t < path.t_exit; t += 1e-3) {
      if (j.value_at(t) <= 0.0) {
        t_caustic = t;
        break;
      }
    }
    if (t_caustic < 1e8) r1 = std::min(r1, (std::abs(t_caustic - t_ball_b) - 0.15) / el);
  }
  if (!(r1 > 0.02))
    throw NumericalError("stationary_phase_check: no admissible probe window (the chord's "
                         "boundary legs, caustic clearance, or pair separation are too small)");
  return r1;
}

// Shared pairing geometry construction.  t_ball_a <= t_ball_b are the ray
// times of the two probe centers on `path`'s clock.
inline PairingGeometry make_pairing_geometry(const MetricField& metric, const GeodesicPath& path,
                                             double t_ball_a, const Vec2& ball_a, const Vec2& xi_a,
                                             double t_ball_b, const Vec2& ball_b, const Vec2& xi_b,
                                             int m, int f_class, int g_class,
                                             const SymbolCheckOptions& opts) {
  PairingGeometry geom;
  geom.path = path;
  geom.r1 = opts.window_support > 0.0
                ? opts.window_support
                : fitted_window_radius(metric, path, t_ball_a, t_ball_b, ball_a);
  geom.r0 = opts.window_plateau_ratio * geom.r1;

  geom.fp.center = ball_a;
  geom.fp.xih = xi_a;
  geom.fp.sgn = -1.0;
  geom.fp.quad = phase_curvature_correction(metric, ball_a, xi_a);
  geom.fp.r0 = geom.r0;
  geom.fp.r1 = geom.r1;
  geom.fp.m = m;
  geom.fp.pcls = f_class;

  geom.gp.center = ball_b;
  geom.gp.xih = xi_b;
  geom.gp.sgn = +1.0;
  geom.gp.quad = phase_curvature_correction(metric, ball_b, xi_b);
  const double e2l = metric.conf2(ball_b);
  geom.gp.quad.a -= opts.damping_c * e2l;
  geom.gp.quad.d -= opts.damping_c * e2l;
  geom.gp.r0 = geom.r0;
  geom.gp.r1 = geom.r1;
  geom.gp.m = m;
  geom.gp.pcls = g_class;

  geom.patch_a.z0 = path.entry.z;
  geom.patch_a.w0 = path.entry.w;
  geom.patch_b.z0 = path.exit.z;
  geom.patch_b.w0 = path.exit.w;
  for (FanPatch* p : {&geom.patch_a, &geom.patch_b}) {
    p->dz1 = opts.patch_dz_plateau;
    p->dz2 = opts.patch_dz_support;
    p->dw1 = opts.patch_dw_plateau;
    p->dw2 = opts.patch_dw_support;
    p->nz = opts.patch_nz;
    p->nw = opts.patch_nw;
  }
  // Each patch integrates until past the last window it can see, with room
  // for the window radius (in ray time) and a safety margin.
  const double el = metric.conf(ball_a);
  geom.patch_a.t_hi = (t_ball_b - path.t_entry) + geom.r1 * el + 0.3;
  geom.patch_b.t_hi = (path.t_exit - t_ball_a) + geom.r1 * el + 0.3;
  validate_patches(metric, geom);
  return geom;
}

inline SymbolCheckReport run_symbol_check(const MetricField& metric, const PairingGeometry& geom,
                                          const SymbolTensor& symbol,
                                          const std::vector<double>& lambdas,
                                          const SymbolCheckOptions& opts) {
  if (lambdas.empty()) throw UsageError("stationary_phase_check: empty frequency list");
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] > lambdas[i - 1]))
      throw UsageError("stationary_phase_check: frequencies must be strictly increasing");
  const double h_z = 2.0 * opts.patch_dz_support / opts.patch_nz;
  const double lam_top = lambdas.back();
  if (lam_top * h_z > 0.7)
    throw UsageError("stationary_phase_check: fan patch too coarse for the top frequency "
                     "(lambda * h_z > 0.7); raise patch_nz");
  if (lam_top * opts.dt_fine > 0.2)
    throw UsageError("stationary_phase_check: ray step too coarse for the top frequency "
                     "(lambda * dt_fine > 0.2); lower dt_fine");
  if (!(opts.damping_c > 0.0)) throw UsageError("stationary_phase_check: damping_c must be > 0");

  std::vector<Complex> acc(lambdas.size());
  accumulate_fan_patch(metric, geom.patch_a, geom.fp, geom.gp, lambdas, opts.dt_fine,
                       opts.dt_coarse, acc);
  accumulate_fan_patch(metric, geom.patch_b, geom.fp, geom.gp, lambdas, opts.dt_fine,
                       opts.dt_coarse, acc);

  SymbolCheckReport rep;
  rep.conjugate = symbol.conjugate;
  rep.m = symbol.m;
  rep.f_class = geom.fp.pcls;
  rep.g_class = geom.gp.pcls;
  rep.symbol = symbol;
  rep.predicted = symbol.entry(rep.f_class, rep.g_class);
  rep.reference_scale = 0.0;
  for (int p = 0; p <= symbol.m; ++p)
    for (int q = 0; q <= symbol.m; ++q)
      rep.reference_scale = std::max(rep.reference_scale, std::abs(symbol.entry(p, q)));
  rep.window_plateau = geom.r0;
  rep.window_support = geom.r1;
  rep.patch_z[0] = geom.patch_a.z0;
  rep.patch_z[1] = geom.patch_b.z0;
  rep.patch_w[0] = geom.patch_a.w0;
  rep.patch_w[1] = geom.patch_b.w0;

  rep.rows.resize(lambdas.size());
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    // Normalize by the model Gaussian pairing: a unit-symbol stationary
    // configuration contributes -2 pi i / (c lambda^2) to the accumulator.
    const Complex coef =
        acc[l] * (opts.damping_c * lambdas[l] * lambdas[l]) / Complex{0.0, -kTwoPi};
    rep.rows[l].lambda = lambdas[l];
    rep.rows[l].coefficient = coef;
    rep.rows[l].predicted = rep.predicted;
    rep.rows[l].abs_error = std::abs(coef - rep.predicted);
  }
  rep.final_error = rep.rows.back().abs_error;
  rep.final_rel_error =
      rep.reference_scale > 0.0 ? rep.final_error / rep.reference_scale : rep.final_error;

  // Monotonicity: errors must not grow with frequency, up to a noise floor.
  const double floor = 1e-3 * rep.reference_scale;
  rep.errors_decreasing = true;
  for (std::size_t l = 1; l < rep.rows.size(); ++l) {
    if (rep.rows[l].abs_error > rep.rows[l - 1].abs_error &&
        rep.rows[l].abs_error > floor)
      rep.errors_decreasing = false;
  }

  // Ratio-2 extrapolation over the last three frequencies, assuming the
  // error expands in 1/lambda: limit = (c1 - 6 c2 + 8 c3) / 3.
  rep.fitted = rep.rows.back().coefficient;
  if (rep.rows.size() >= 3) {
    const auto& r1 = rep.rows[rep.rows.size() - 3];
    const auto& r2 = rep.rows[rep.rows.size() - 2];
    const auto& r3 = rep.rows[rep.rows.size() - 1];
    if (std::abs(r2.lambda - 2.0 * r1.lambda) < 0.01 * r1.lambda &&
        std::abs(r3.lambda - 2.0 * r2.lambda) < 0.02 * r1.lambda) {
      rep.fitted = (r1.coefficient - 6.0 * r2.coefficient + 8.0 * r3.coefficient) / 3.0;
      rep.fitted_valid = true;
    }
  }

  if (!rep.errors_decreasing) {
    std::ostringstream oss;
    oss << "stationary_phase_check: coefficient error grows with frequency\n";
    char line[256];
    for (const auto& r : rep.rows) {
      std::snprintf(line, sizeof line, "  lambda %8.2f  coef (%+.6f, %+.6f)  err %.6f\n",
                    r.lambda, r.coefficient.real(), r.coefficient.imag(), r.abs_error);
      oss << line;
    }
    throw NumericalError(oss.str());
  }

  if (!opts.csv_path.empty()) write_symbol_check_csv(rep, opts.csv_path);
  if (!opts.json_path.empty()) write_symbol_check_json(rep, opts.json_path);
  return rep;
}

}  // namespace detail

// One-point check: measure the pairing coefficient at (x0, xi) for
// frequencies `lambdas` and compare with psido_symbol.  The covector is
// normalized to unit metric length (the frequency scale is carried entirely
// by lambda).  The probes sit on the geodesic through x0 transverse to xi;
// both boundary orientations are summed.  Throws NumericalError (with the
// full table in the message) if the errors grow with frequency.
inline SymbolCheckReport stationary_phase_check(const MetricField& metric, const Vec2& x0,
                                                const Vec2& xi, int m,
                                                const std::vector<double>& lambdas,
                                                const SymbolCheckOptions& opts = {}) {
  if (m < 0 || m > 4) throw UsageError("stationary_phase_check: rank must be in [0, 4]");
  if (!(norm(x0) < metric.R)) throw UsageError("stationary_phase_check: x0 must be interior");
  const double nxi = metric.norm_cov(x0, xi);
  if (!(nxi > 0.0)) throw UsageError("stationary_phase_check: zero covector");
  const Vec2 xi_hat = xi / nxi;  // g-unit chart covector
  const int f_class =
      opts.f_index.empty() ? 0 : detail::index_class(opts.f_index, m, "stationary_phase_check");
  const int g_class =
      opts.g_index.empty() ? 0 : detail::index_class(opts.g_index, m, "stationary_phase_check");

  const Vec2 a = detail::unit_transverse(metric, x0, xi_hat);
  const GeodesicPath path = shoot_geodesic(metric, x0, a, opts.symbol.shoot);
  if (path.trapped)
    throw NumericalError("stationary_phase_check: transverse geodesic is trapped");
  const SymbolTensor symbol = psido_symbol(metric, x0, xi_hat, m, opts.symbol);

  const auto geom = detail::make_pairing_geometry(metric, path, 0.0, x0, xi_hat, 0.0, x0, xi_hat,
                                                  m, f_class, g_class, opts);
  return detail::run_symbol_check(metric, geom, symbol, lambdas, opts);
}

// Two-point check at a conjugate pair: same measurement with the first probe
// at (x0, xi) and the second at (y0, eta), compared with fio_symbol.
inline SymbolCheckReport stationary_phase_check(const MetricField& metric,
                                                const ConjugatePairDatum& pair, int m,
                                                const std::vector<double>& lambdas,
                                                const SymbolCheckOptions& opts = {}) {
  if (m < 0 || m > 4) throw UsageError("stationary_phase_check: rank must be in [0, 4]");
  const int f_class =
      opts.f_index.empty() ? 0 : detail::index_class(opts.f_index, m, "stationary_phase_check");
  const int g_class =
      opts.g_index.empty() ? 0 : detail::index_class(opts.g_index, m, "stationary_phase_check");

  // Re-shoot the carrying chord from x0 so the datum's times move to a known
  // clock: x0 at 0, y0 at s0 - t0.
  const GeodesicPath path = shoot_geodesic(metric, pair.x0, pair.v0, opts.symbol.shoot);
  if (path.trapped)
    throw NumericalError("stationary_phase_check: carrying geodesic is trapped");
  const double sep = pair.s0 - pair.t0;
  if (!(sep > 0.0)) throw UsageError("stationary_phase_check: pair times not ordered");
  const SymbolTensor symbol = fio_symbol(metric, pair, m, 1.0, opts.symbol);

  const auto geom = detail::make_pairing_geometry(metric, path, 0.0, pair.x0, pair.xi_unit, sep,
                                                  pair.y0, pair.eta, m, f_class, g_class, opts);
  return detail::run_symbol_check(metric, geom, symbol, lambdas, opts);
}

// ---------------------------------------------------------------------------
// Finite-difference Hessians of the pairing phase
// ---------------------------------------------------------------------------

enum class PhaseKind { diagonal, conjugate };

// One stationary configuration of the pairing phase, in fan coordinates:
// the ray from boundary parameter z with angle w meets the first window's
// center at ray time t and the second's at time s.
struct CriticalConfig {
  PhaseKind kind = PhaseKind::diagonal;
  double t = 0.0, s = 0.0, z = 0.0, w = 0.0;
  Vec2 x0, xi;  // first window: center and g-unit chart covector
  Vec2 y0, eta;  // second window (equal to the first for the diagonal phase)
  double damping_c = 10.0;
  double e2l = 1.0;    // conformal factor squared at y0
  double cos_w = 1.0;  // inflow cosine of the configuration's boundary ray
  double f = 1.0;      // transverse scalar factor between the legs (1 on the diagonal)
};

// The pairing phase as a function of (t, s, z, w), evaluated along exact
// rays:  Psi = S_x(gamma(t)) - S_y(gamma(s)) + (c/2) e^{2 lam(y0)}
// |gamma(s) - y0|^2 with the same second-order phases as the pairing probes.
struct TwoPointPhase {
  const MetricField* metric = nullptr;
  Vec2 x0, xi, y0, eta;
  Mat2 qx{0, 0, 0, 0}, qy{0, 0, 0, 0};
  double damping_c = 10.0;
  double e2l = 1.0;
  double ode_step = 2.5e-4;

  double operator()(double t, double s, double z, double w) const {
    const BoundaryFrame bf = metric->boundary_frame(z);
    detail::OdeState st{bf.point, metric->direction_from_angle(bf, w)};
    const double ta = std::min(t, s), tb = std::max(t, s);
    double tc = 0.0;
    // land exactly on the earlier time, then continue to the later one
    while (tc < ta - 1e-15) {
      const double h = std::min(ode_step, ta - tc);
      st = detail::rk4_step(*metric, st, h);
      tc += h;
    }
    const Vec2 xa = st.x;
    while (tc < tb - 1e-15) {
      const double h = std::min(ode_step, tb - tc);
      st = detail::rk4_step(*metric, st, h);
      tc += h;
    }
    const Vec2 xb = st.x;
    const Vec2 ux = ((t <= s) ? xa : xb) - x0;
    const Vec2 uy = ((t <= s) ? xb : xa) - y0;
    const double sx = dot(ux, xi) + 0.5 * dot(ux, qx.apply(ux));
    const double sy = dot(uy, eta) + 0.5 * dot(uy, qy.apply(uy));
    return sx - sy + 0.5 * damping_c * e2l * dot(uy, uy);
  }
};

struct HessianOptions {
  double delta = 2.0e-3;       // Hessian finite-difference step
  double grad_delta = 1.0e-4;  // gradient finite-difference step
  double grad_tol = 1.0e-6;    // criticality precondition on |grad|
  double ode_step = 2.5e-4;
};

struct HessianReport {
  Eigen::Matrix4d hessian;
  Eigen::Vector4d gradient;
  Eigen::Vector4d eigenvalues;  // ascending
  double det = 0.0;
  double grad_norm = 0.0;
  int signature = 0;          // (# positive) - (# negative) eigenvalues
  double predicted_det = 0.0;  // -(c * cos_w * f)^2 at leading order
};

// Both stationary configurations of the one-point pairing phase at (x0, xi):
// one per boundary orientation of the transverse geodesic.
inline std::vector<CriticalConfig> diagonal_configs(const MetricField& metric, const Vec2& x0,
                                                    const Vec2& xi, double damping_c = 10.0,
                                                    const ShootOptions& shoot = {}) {
  if (!(norm(x0) < metric.R)) throw UsageError("diagonal_configs: x0 must be interior");
  const double nxi = metric.norm_cov(x0, xi);
  if (!(nxi > 0.0)) throw UsageError("diagonal_configs: zero covector");
  const Vec2 xi_hat = xi / nxi;
  const Vec2 a = detail::unit_transverse(metric, x0, xi_hat);
  const GeodesicPath path = shoot_geodesic(metric, x0, a, shoot);
  if (path.trapped) throw NumericalError("diagonal_configs: transverse geodesic is trapped");

  CriticalConfig base;
  base.kind = PhaseKind::diagonal;
  base.x0 = base.y0 = x0;
  base.xi = base.eta = xi_hat;
  base.damping_c = damping_c;
  base.e2l = metric.conf2(x0);
  base.f = 1.0;

  CriticalConfig ca = base;  // ray from the entry side
  ca.t = ca.s = -path.t_entry;
  ca.z = path.entry.z;
  ca.w = path.entry.w;
  ca.cos_w = path.entry.cos_w;
  CriticalConfig cb = base;  // ray from the exit side
  cb.t = cb.s = path.t_exit;
  cb.z = path.exit.z;
  cb.w = path.exit.w;
  cb.cos_w = path.exit.cos_w;
  return {ca, cb};
}

// Both stationary configurations of the two-point pairing phase at a
// conjugate pair.
inline std::vector<CriticalConfig> conjugate_configs(const MetricField& metric,
                                                     const ConjugatePairDatum& pair,
                                                     double damping_c = 10.0,
                                                     const ShootOptions& shoot = {}) {
  const GeodesicPath path = shoot_geodesic(metric, pair.x0, pair.v0, shoot);
  if (path.trapped) throw NumericalError("conjugate_configs: carrying geodesic is trapped");
  const double sep = pair.s0 - pair.t0;
  if (!(sep > 0.0)) throw UsageError("conjugate_configs: pair times not ordered");

  CriticalConfig base;
  base.kind = PhaseKind::conjugate;
  base.x0 = pair.x0;
  base.xi = pair.xi_unit;
  base.y0 = pair.y0;
  base.eta = pair.eta;
  base.damping_c = damping_c;
  base.e2l = metric.conf2(pair.y0);
  base.f = pair.f_forward;

  CriticalConfig ca = base;  // ray from the boundary end behind x0
  ca.t = -path.t_entry;
  ca.s = -path.t_entry + sep;
  ca.z = path.entry.z;
  ca.w = path.entry.w;
  ca.cos_w = path.entry.cos_w;
  CriticalConfig cb = base;  // ray from the boundary end beyond y0
  cb.t = path.t_exit;
  cb.s = path.t_exit - sep;
  cb.z = path.exit.z;
  cb.w = path.exit.w;
  cb.cos_w = path.exit.cos_w;
  return {ca, cb};
}

// Finite-difference Hessian of the pairing phase at a stationary
// configuration.  Requires |grad| <= grad_tol (the configuration really is
// critical); reports the 4x4 Hessian in (t, s, z, w), its determinant,
// eigenvalues, and signature, plus the leading-order determinant prediction.
inline HessianReport numerical_hessian(const MetricField& metric, const CriticalConfig& config,
                                       const HessianOptions& opts = {}) {
  TwoPointPhase phase;
  phase.metric = &metric;
  phase.x0 = config.x0;
  phase.xi = config.xi;
  phase.y0 = config.y0;
  phase.eta = config.eta;
  phase.qx = detail::phase_curvature_correction(metric, config.x0, config.xi);
  phase.qy = detail::phase_curvature_correction(metric, config.y0, config.eta);
  phase.damping_c = config.damping_c;
  phase.e2l = config.e2l;
  phase.ode_step = opts.ode_step;

  const double q0[4] = {config.t, config.s, config.z, config.w};
  auto ev = [&](double dt, double ds, double dz, double dw) {
    return phase(q0[0] + dt, q0[1] + ds, q0[2] + dz, q0[3] + dw);
  };

  HessianReport rep;
  const double dg = opts.grad_delta;
  rep.gradient << (ev(dg, 0, 0, 0) - ev(-dg, 0, 0, 0)) / (2 * dg),
      (ev(0, dg, 0, 0) - ev(0, -dg, 0, 0)) / (2 * dg),
      (ev(0, 0, dg, 0) - ev(0, 0, -dg, 0)) / (2 * dg),
      (ev(0, 0, 0, dg) - ev(0, 0, 0, -dg)) / (2 * dg);
  rep.grad_norm = rep.gradient.norm();
  if (rep.grad_norm > opts.grad_tol) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "numerical_hessian: configuration is not stationary (|grad| = %.3e > %.3e)",
                  rep.grad_norm, opts.grad_tol);
    throw UsageError(msg);
  }

  const double d = opts.delta;
  const double f0 = ev(0, 0, 0, 0);
  for (int i = 0; i < 4; ++i) {
    for (int j = i; j < 4; ++j) {
      double o[4] = {0, 0, 0, 0};
      if (i == j) {
        o[i] = d;
        const double fp = ev(o[0], o[1], o[2], o[3]);
        o[i] = -d;
        const double fm = ev(o[0], o[1], o[2], o[3]);
        rep.hessian(i, i) = (fp - 2.0 * f0 + fm) / (d * d);
      } else {
        auto at = [&](double si, double sj) {
          double p[4] = {0, 0, 0, 0};
          p[i] = si * d;
          p[j] = sj * d;
          return ev(p[0], p[1], p[2], p[3]);
        };
        rep.hessian(i, j) = rep.hessian(j, i) =
            (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * d * d);
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(rep.hessian);
  rep.eigenvalues = es.eigenvalues();
  rep.det = rep.hessian.determinant();
  int npos = 0, nneg = 0;
  const double eig_floor = 1e-9 * rep.eigenvalues.cwiseAbs().maxCoeff();
  for (int i = 0; i < 4; ++i) {
    if (rep.eigenvalues(i) > eig_floor) ++npos;
    if (rep.eigenvalues(i) < -eig_floor) ++nneg;
  }
  rep.signature = npos - nneg;
  rep.predicted_det = -sqr(config.damping_c * config.cos_w * config.f);
  return rep;
}

}  // namespace tenray
