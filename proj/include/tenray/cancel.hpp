#pragma once
// Cancellation experiment: build a band-limited solenoidal probe at one
// interior point, extract the part of its normal-operator image that lives
// in a disjoint frequency cone at a second point, invert an elliptically
// regularized normal operator on that cone, and measure how much of the
// probe's boundary-data singularity the sign-flipped reconstruction
// removes.  On geometries where the carrying geodesic focuses the first
// point onto the second, the extracted part is genuine and the corrected
// field's data loses most of its band energy; on geometries with no
// focusing the extraction is empty and the data energy is unchanged.
//
// Design notes.
//  * The normal operator is realized as forward() composed with its exact
//    discrete transpose forward_transpose(), never the independent-
//    quadrature backprojector: at probe frequencies the angular sum of
//    backproject() is far from resolving the data oscillation, while the
//    fan lattice itself is chosen below to resolve it, and the transpose
//    pair makes the normal operator Hermitian positive semidefinite to
//    roundoff, which the conjugate-gradient solver relies on.
//  * Inside the solver the cone projections are pure frequency
//    multipliers (no spatial window), so they are Hermitian and commute
//    with translations exactly; the spatially windowed cones are used for
//    extraction and for energy meters only.
//  * Each boundary geodesic appears in the fan in both orientations.  The
//    orientation entering near the probe oscillates slowly in the fan
//    angle and is fully resolved; the opposite orientation oscillates at
//    the lever arm of the far boundary point and is kept representable
//    but near the angular Nyquist rate.  The data-cone meter therefore
//    locks onto the near orientation (peak search restricted to moderate
//    angular frequencies).
//  * The sinogram cone used for the cancellation ratio is not hardcoded:
//    its center, direction, and radial scale are fitted deterministically
//    to the spectral peak of the probe's own data, so the same code
//    measures curved and straight geometries without per-case tuning.

#include "tenray/core.hpp"
#include "tenray/fft_utils.hpp"
#include "tenray/helmholtz.hpp"
#include "tenray/io.hpp"
#include "tenray/jacobi.hpp"
#include "tenray/metric.hpp"
#include "tenray/microlocal.hpp"
#include "tenray/tensor_field.hpp"
#include "tenray/xray.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace tenray {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// Where the experiment lives: probe at (y0, eta), extraction target at
// (x0, xi).  Covectors are unit length in the metric, chart components.
struct ProbeLayout {
  Vec2 x0, xi, y0, eta;
};

inline ProbeLayout layout_from_pair(const ConjugatePairDatum& d) {
  return ProbeLayout{d.x0, d.xi_unit, d.y0, d.eta};
}

struct CancelOptions {
  double lambda = 60.0;  // probe frequency (metric units)
  int m = 0;             // tensor rank

  // Discretization; zeros derive resolutions from the frequency.
  int grid_n = 0;           // field lattice nodes per axis
  int fan_nz = 0;           // boundary fan; nw defaults to nz - 1
  int fan_nw = 0;
  double quad_dt = 0.0;     // ray quadrature spacing (0: 0.35 / lambda)
  double trace_step = 0.0;  // ray integration step (0: min(1e-3 R, dt/4))
  double roi_radius = 0.0;  // ray pruning radius around both points (0: auto)

  // Probe window, chart radii at y0.
  double probe_plateau = 0.22;
  double probe_support = 0.40;

  // Field cones.
  double cone_half_angle = 0.2;
  double band_lo = 0.6, band_hi = 1.4;
  double meter_window_radius = 0.45;  // spatial window of meters/extraction
  double meter_window_plateau_ratio = 0.55;

  // Sinogram cone (fitted around the measured data peak).
  double data_half_angle = 0.35;
  double data_window_radius = 0.60;

  // Regularized-normal-operator solve.
  double cg_tol = 1e-4;
  int cg_maxit = 30;

  // Probe hygiene gate: cone-energy share the solenoidal projection must
  // keep for the polarization to count as aligned with the frequency.
  double retention_floor = 0.5;

  // Artifact emission; empty out_dir writes nothing.
  std::string out_dir;
  std::string tag;
};

struct ParametrixReport {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
  bool stagnated = false;
};

struct CancelReport {
  double lambda = 0.0;
  int m = 0;
  // The headline number: band energy of the corrected data over band energy
  // of the probe data, inside the fitted sinogram cone.
  double rho = 0.0;
  double energy_before = 0.0, energy_after = 0.0;
  // Probe hygiene.
  double retention = 1.0;         // cone energy kept by the projection
  double div_rel = 0.0;           // relative divergence of the probe field
  double outside_fraction = 0.0;  // probe energy outside a widened cone
  // Extraction.
  double extract_fraction = 0.0;  // extracted energy share inside the cone
  double extract_rel = 0.0;       // extracted norm over normal-image norm
  // Solve.
  ParametrixReport solve;
  double converse_residual = 0.0;  // potential share of the solution
  double f1_div_rel = 0.0;         // relative divergence of the correction
  double f1_v1_fraction = 0.0;     // correction's band-energy share in the cone
  // Fitted data cone.
  Vec2 data_direction{};
  double data_lam0 = 0.0;
  Vec2 data_center{};  // (w, z)
  // Discretization and cost.
  int grid_n = 0, fan_nz = 0, fan_nw = 0;
  double quad_dt = 0.0;
  double seconds_table = 0.0, seconds_solve = 0.0, seconds_total = 0.0;
};

// ---------------------------------------------------------------------------
// Context: shared discretization of one experiment
// ---------------------------------------------------------------------------

struct CancelContext {
  MetricField metric;
  ProbeLayout layout;
  CancelOptions opts;
  GridSpec grid;
  std::shared_ptr<const GridMask> mask;
  RayTable table;
  double chart_lam1 = 0.0, chart_lam2 = 0.0;  // chart frequencies at x0, y0
  ConeSpec v1, v2;              // solver cones: frequency-only
  ConeSpec v1_meter, v2_meter;  // windowed variants for extraction/meters
  double seconds_table = 0.0;
};

namespace detail {

inline Vec2 chart_unit(const Vec2& v, const char* who) {
  const double n = norm(v);
  if (!(n > 0.0)) throw UsageError(std::string(who) + ": zero covector");
  return v / n;
}

inline int round_up_multiple(int v, int q) { return ((v + q - 1) / q) * q; }

// Direction-free band energy: the cone meters' radial factor alone, so
// inside-the-cone and whole-annulus energies are directly comparable.
inline double band_energy(const ComplexTensorField& f, double lam_min, double lam_max,
                          double edge = 0.15) {
  const FreqAxis ax{f.grid.n, f.grid.h(), false};
  const double dr = edge * (lam_max - lam_min);
  const double cell = f.grid.h() * f.grid.h();
  double acc = 0.0;
  for (int p = 0; p <= f.m; ++p) {
    const auto filt = apply_multiplier(ax, ax, f.comps[p], [&](const Vec2& k) {
      const double r = norm(k);
      return smoothstep5((r - lam_min) / dr) * smoothstep5((lam_max - r) / dr);
    });
    double comp = 0.0;
    for (const Complex& v : filt) comp += std::norm(v);
    acc += comp * static_cast<double>(binomial(f.m, p));
  }
  return acc * cell;
}

}  // namespace detail

inline CancelContext make_cancel_context(const MetricField& metric, const ProbeLayout& layout,
                                         const CancelOptions& opts) {
  if (opts.m < 0 || opts.m > 4) throw UsageError("cancel: rank must be in [0, 4]");
  if (!(opts.lambda > 0.0)) throw UsageError("cancel: frequency must be positive");
  if (!(norm(layout.x0) < metric.R) || !(norm(layout.y0) < metric.R))
    throw UsageError("cancel: layout points must be interior");

  CancelContext ctx;
  ctx.metric = metric;
  ctx.layout = layout;
  ctx.opts = opts;
  ctx.chart_lam1 = opts.lambda * norm(layout.xi);
  ctx.chart_lam2 = opts.lambda * norm(layout.eta);
  if (!(ctx.chart_lam1 > 0.0) || !(ctx.chart_lam2 > 0.0))
    throw UsageError("cancel: layout covectors must be nonzero");

  // The two cones must be disjoint for the extraction to mean anything:
  // one-sided sectors around the two directions, separated by more than
  // their apertures.
  const Vec2 d1 = detail::chart_unit(layout.xi, "cancel");
  const Vec2 d2 = detail::chart_unit(layout.eta, "cancel");
  const double sep = std::acos(std::clamp(dot(d1, d2), -1.0, 1.0));
  const double aperture = 2.0 * opts.cone_half_angle * (1.0 + 0.2);
  if (sep < aperture)
    throw UsageError("cancel: the target and probe cones overlap (directions too close)");

  // Field lattice: resolve the larger chart frequency.
  const double chart_max = std::max(ctx.chart_lam1, ctx.chart_lam2);
  ctx.grid.R = metric.R;
  ctx.grid.n = opts.grid_n > 0
                   ? opts.grid_n
                   : detail::round_up_multiple(
                         static_cast<int>(std::ceil(4.0 * metric.R * chart_max)), 64) +
                         1;
  if (chart_max * ctx.grid.h() > 0.5 + 1e-12)
    throw UsageError("cancel: field lattice cannot resolve the probe frequency");
  ctx.mask = std::make_shared<GridMask>(GridMask::make(ctx.grid, ctx.grid.R, 2));

  // Boundary fan: resolve the data band along the boundary (rate lambda
  // times band_hi, in the arclength coordinate) with >= 5 samples/wave.
  const double L = metric.boundary_length();
  FanSpec fan;
  fan.n_z = opts.fan_nz > 0
                ? opts.fan_nz
                : detail::round_up_multiple(
                      static_cast<int>(std::ceil(L * opts.band_hi * opts.lambda / 1.2)), 8);
  fan.n_w = opts.fan_nw > 0 ? opts.fan_nw : fan.n_z - 1;

  // Ray table with quadrature resolving the along-ray phase rate (exactly
  // lambda in metric units) and pruning to chords near the two points.
  const double quad_dt = opts.quad_dt > 0.0 ? opts.quad_dt : 0.35 / opts.lambda;
  double step = opts.trace_step > 0.0 ? opts.trace_step : std::min(1e-3 * metric.R, quad_dt / 4.0);
  const int stride = std::max(1, static_cast<int>(std::lround(quad_dt / step)));
  step = quad_dt / stride;
  const double roi =
      opts.roi_radius > 0.0
          ? opts.roi_radius
          : std::max(opts.probe_support, opts.meter_window_radius) + 0.15 * metric.R;
  TransportOptions topt;
  topt.step = step;
  topt.quad_stride = stride;
  const auto t0 = std::chrono::steady_clock::now();
  ctx.table = build_ray_table(metric, fan,
                              {RoiDisc{layout.x0, roi}, RoiDisc{layout.y0, roi}}, topt);
  ctx.seconds_table =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // Cones.  Solver cones are frequency-only; meter cones add the plateau
  // window at the owning point.
  ctx.v1 = ConeSpec::around(d1, ctx.chart_lam1, opts.cone_half_angle, opts.band_lo,
                            opts.band_hi);
  ctx.v2 = ConeSpec::around(d2, ctx.chart_lam2, opts.cone_half_angle, opts.band_lo,
                            opts.band_hi);
  auto windowed = [&](ConeSpec c, const Vec2& center, double rim_gap) {
    c.window_center = center;
    c.window_radius = std::min(opts.meter_window_radius, 0.85 * rim_gap);
    c.window_plateau = opts.meter_window_plateau_ratio * c.window_radius;
    return c;
  };
  ctx.v1_meter = windowed(ctx.v1, layout.x0, metric.R - norm(layout.x0));
  ctx.v2_meter = windowed(ctx.v2, layout.y0, metric.R - norm(layout.y0));
  return ctx;
}

// ---------------------------------------------------------------------------
// Probe construction
// ---------------------------------------------------------------------------

struct BuiltProbe {
  ComplexTensorField field;
  double retention = 1.0;
  double div_rel = 0.0;
  double outside_fraction = 0.0;
};

// Build the band-limited probe: a windowed oscillation at (y0, eta), placed
// in the polarization transverse to eta (the solenoidal one at that
// frequency) and projected onto solenoidal fields.  Rank 0 needs neither
// the polarization nor the projection.
inline BuiltProbe build_f2(const CancelContext& ctx) {
  const CancelOptions& opts = ctx.opts;
  OscillatoryProbe pr;
  pr.center = ctx.layout.y0;
  pr.xi = ctx.layout.eta;
  pr.lambda = opts.lambda;
  pr.window_plateau = opts.probe_plateau;
  pr.window_support = opts.probe_support;
  const ComplexTensorField scalar = make_probe(pr, ctx.grid, ctx.mask);

  BuiltProbe out{ComplexTensorField::zeros(opts.m, ctx.grid, ctx.mask)};
  if (opts.m == 0) {
    out.field = scalar;
  } else {
    // Rank-one symmetric power of the unit chart covector transverse to
    // eta: component p of u^{(m)} is u_x^p u_y^(m-p).
    const Vec2 u = detail::chart_unit(rot90(ctx.layout.eta), "build_f2");
    ComplexTensorField raw = ComplexTensorField::zeros(opts.m, ctx.grid, ctx.mask);
    for (int p = 0; p <= opts.m; ++p) {
      double mono = 1.0;
      for (int i = 0; i < p; ++i) mono *= u.x;
      for (int i = 0; i < opts.m - p; ++i) mono *= u.y;
      if (mono == 0.0) continue;
      for (std::size_t i = 0; i < scalar.comps[0].size(); ++i)
        raw.comps[p][i] = scalar.comps[0][i] * mono;
    }
    const double before = hf_energy(raw, ctx.v2_meter);
    auto split = project_solenoidal(raw, ctx.metric);
    out.field = std::move(split.solenoidal);
    const double after = hf_energy(out.field, ctx.v2_meter);
    out.retention = before > 0.0 ? after / before : 0.0;
    if (out.retention < opts.retention_floor)
      throw NumericalError(
          "build_f2: solenoidal projection kept " + std::to_string(out.retention) +
          " of the probe's cone energy; polarization and frequency are misaligned");
    out.div_rel = l2_norm(divergence(out.field, ctx.metric), ctx.metric) /
                  (ctx.chart_lam2 * l2_norm(out.field, ctx.metric));
  }

  // Angular localization within the band: share of the band-annulus energy
  // that the window-free cone misses.
  const double in_cone = hf_energy(out.field, ctx.v2);
  const double band = detail::band_energy(out.field, ctx.v2.lam_min, ctx.v2.lam_max);
  out.outside_fraction = band > 0.0 ? std::max(0.0, 1.0 - in_cone / band) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

struct ExtractResult {
  ComplexTensorField field;
  double energy = 0.0;              // flat energy of the extracted field
  double normal_band_energy = 0.0;  // band energy of N f2 at the probe point
  double v1_fraction = 0.0;         // energy share inside the frequency cone
  double rel_vs_normal = 0.0;       // extracted norm over whole normal-image norm
};

// Apply the normal operator to the probe and keep what lives in the target
// cone at x0.  `data` may pass a precomputed forward transform of f2.
inline ExtractResult extract_fio_part(const CancelContext& ctx, const ComplexTensorField& f2,
                                      const Sinogram<Complex>* data = nullptr) {
  Sinogram<Complex> owned{};
  if (!data) {
    owned = forward(f2, ctx.metric, ctx.table);
    data = &owned;
  }
  const ComplexTensorField nf2 = forward_transpose(*data, ctx.table, ctx.grid, ctx.mask);
  ExtractResult out{cone_filter(nf2, ctx.v1_meter)};
  out.energy = flat_energy(out.field);
  out.normal_band_energy = hf_energy(nf2, ctx.v2_meter);
  const double e_normal = flat_energy(nf2);
  out.rel_vs_normal = e_normal > 0.0 ? std::sqrt(out.energy / e_normal) : 0.0;
  out.v1_fraction = out.energy > 0.0 ? hf_energy(out.field, ctx.v1) / out.energy : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Regularized normal-operator solve
// ---------------------------------------------------------------------------

namespace detail {

inline Complex flat_dot(const ComplexTensorField& a, const ComplexTensorField& b) {
  Complex acc{};
  for (int p = 0; p <= a.m; ++p) {
    Complex s{};
    const auto& A = a.comps[p];
    const auto& B = b.comps[p];
    for (std::size_t i = 0; i < A.size(); ++i) s += std::conj(A[i]) * B[i];
    acc += s * static_cast<double>(binomial(a.m, p));
  }
  return acc * (a.grid.h() * a.grid.h());
}

inline double flat_nrm(const ComplexTensorField& a) {
  return std::sqrt(std::max(0.0, flat_dot(a, a).real()));
}

// Order -3 radial smoothing multiplier (1 + |k|^2)^(-3/2): balances the
// two derivative factors around it so the regularizer matches the normal
// operator's order on the band.
inline ComplexTensorField radial_smoothing(const ComplexTensorField& f) {
  const FreqAxis ax{f.grid.n, f.grid.h(), false};
  ComplexTensorField out = f;
  for (int p = 0; p <= f.m; ++p)
    out.comps[p] = apply_multiplier(ax, ax, f.comps[p], [](const Vec2& k) {
      const double r2 = 1.0 + k.x * k.x + k.y * k.y;
      return 1.0 / (r2 * std::sqrt(r2));
    });
  return out;
}

}  // namespace detail

// Solve the cone-restricted regularized operator equation C y = rhs in the
// least-squares sense, with C = N + d Lambda delta (rank 0: C = N), N the
// transpose-exact normal operator and Lambda the order -3 radial smoothing.
// C is self-adjoint but indefinite across the solenoidal/potential split
// for ranks >= 1, so the solver runs conjugate gradients on the normal
// equations C^2 y = C rhs, restricted to the cone via a frequency-only
// projection, while tracking the true first-order residual |C y - rhs|.
// Stagnation is reported, not thrown: the caller decides whether a
// partially converged parametrix is usable.
inline ComplexTensorField apply_parametrix(const CancelContext& ctx,
                                           const ComplexTensorField& rhs,
                                           ParametrixReport* report = nullptr) {
  const CancelOptions& opts = ctx.opts;
  ParametrixReport rep;

  auto project = [&](const ComplexTensorField& f) { return cone_filter(f, ctx.v1); };
  auto apply_c = [&](const ComplexTensorField& f) {
    const ComplexTensorField pf = project(f);
    ComplexTensorField nf =
        forward_transpose(forward(pf, ctx.metric, ctx.table), ctx.table, ctx.grid, ctx.mask);
    if (ctx.opts.m >= 1) {
      const ComplexTensorField reg = sym_derivative(
          detail::radial_smoothing(divergence(pf, ctx.metric)), ctx.metric);
      axpy(nf, Complex{1.0, 0.0}, reg);
    }
    return project(nf);
  };

  const ComplexTensorField b = project(rhs);
  const double bnorm = detail::flat_nrm(b);
  ComplexTensorField y = ComplexTensorField::zeros(rhs.m, rhs.grid, rhs.mask);
  if (bnorm == 0.0) {
    rep.converged = true;
    if (report) *report = rep;
    return y;
  }

  // Normal equations C^2 y = C b, accumulating C y alongside the iterate
  // so the reported residual is the first-order one.
  ComplexTensorField r = apply_c(b);  // y = 0
  ComplexTensorField p = r;
  ComplexTensorField cy = ComplexTensorField::zeros(rhs.m, rhs.grid, rhs.mask);
  double rho = detail::flat_dot(r, r).real();
  double best = 1e300;
  int since_best = 0;

  for (int it = 1; it <= opts.cg_maxit; ++it) {
    ComplexTensorField cp = apply_c(p);
    ComplexTensorField c2p = apply_c(cp);
    const double denom = detail::flat_dot(p, c2p).real();
    if (!(denom > 0.0)) {
      rep.stagnated = true;
      break;
    }
    const double alpha = rho / denom;
    axpy(y, Complex{alpha, 0.0}, p);
    axpy(cy, Complex{alpha, 0.0}, cp);
    axpy(r, Complex{-alpha, 0.0}, c2p);
    rep.iterations = it;

    ComplexTensorField res = cy;
    axpy(res, Complex{-1.0, 0.0}, b);
    const double rel = detail::flat_nrm(res) / bnorm;
    rep.rel_residual = rel;
    if (rel <= opts.cg_tol) {
      rep.converged = true;
      break;
    }
    if (rel < best * 0.98) {
      best = rel;
      since_best = 0;
    } else if (++since_best >= 5 && it >= 8) {
      rep.stagnated = true;
      break;
    }

    const double rho_new = detail::flat_dot(r, r).real();
    const double beta = rho_new / rho;
    rho = rho_new;
    for (int q = 0; q <= p.m; ++q)
      for (std::size_t i = 0; i < p.comps[q].size(); ++i)
        p.comps[q][i] = r.comps[q][i] + beta * p.comps[q][i];
  }

  y = project(y);
  if (report) *report = rep;
  return y;
}

// ---------------------------------------------------------------------------
// Data-cone fit and the demo
// ---------------------------------------------------------------------------

namespace detail {

// Fit the sinogram cone to the probe data: plateau window at the loudest
// fan cell, then the spectral peak of the windowed data over the radial
// band, restricted to moderate angular frequencies (the near orientation).
inline ConeSpec fit_data_cone(const Sinogram<Complex>& s, double lambda,
                              const CancelOptions& opts, CancelReport* rep) {
  int pz = 0, pw = 0;
  double loud = -1.0;
  for (int iz = 0; iz < s.fan.n_z; ++iz)
    for (int iw = 0; iw < s.fan.n_w; ++iw) {
      const double a = std::abs(s.at(iz, iw));
      if (a > loud) {
        loud = a;
        pz = iz;
        pw = iw;
      }
    }
  const Vec2 center{s.fan.w_of(pw), s.z_of(pz)};

  const double radius = opts.data_window_radius;
  const double plateau = 0.55 * radius;
  const int nf = next_pow2(2 * s.fan.n_w - 2);
  const int ns = s.fan.n_z;
  auto& plans = fft_plans(nf, ns);
  std::fill(plans.buf.begin(), plans.buf.end(), Complex{});
  const double L = s.boundary_len;
  for (int iz = 0; iz < ns; ++iz) {
    double dz = std::abs(wrap_periodic(s.z_of(iz) - center.y, L));
    dz = std::min(dz, L - dz);
    for (int iw = 0; iw < s.fan.n_w; ++iw) {
      const double dw = s.fan.w_of(iw) - center.x;
      const double w = plateau_window(std::sqrt(dw * dw + dz * dz), plateau, radius);
      if (w > 0.0)
        plans.buf[static_cast<std::size_t>(iz) * nf + iw] = s.at(iz, iw) * w;
    }
  }
  fftw_execute(plans.fwd);

  const double dkw = kTwoPi / (nf * s.fan.dw());
  const double dkz = kTwoPi / (ns * s.dz());
  const double kw_cap = 0.7 * kPi / s.fan.dw();
  Vec2 peak{0.0, 0.0};
  double mag = -1.0;
  for (int ks = 0; ks < ns; ++ks) {
    const double kz = signed_bin(ks, ns) * dkz;
    for (int kf = 0; kf < nf; ++kf) {
      const double kw = signed_bin(kf, nf) * dkw;
      if (std::abs(kw) > kw_cap) continue;
      const double r = std::hypot(kw, kz);
      if (r < 0.35 * lambda || r > 2.2 * lambda) continue;
      const double a = std::abs(plans.buf[static_cast<std::size_t>(ks) * nf + kf]);
      if (a > mag) {
        mag = a;
        peak = Vec2{kw, kz};
      }
    }
  }
  if (!(mag > 0.0))
    throw NumericalError("fit_data_cone: no spectral peak in the probe's data band");

  const double lam0 = norm(peak);
  ConeSpec cone = ConeSpec::around(peak / lam0, lam0, opts.data_half_angle, opts.band_lo,
                                   opts.band_hi);
  cone.window_center = center;
  cone.window_radius = radius;
  cone.window_plateau = plateau;
  if (rep) {
    rep->data_direction = peak / lam0;
    rep->data_lam0 = lam0;
    rep->data_center = center;
  }
  return cone;
}

}  // namespace detail

inline void write_cancel_report_json(const CancelReport& r, const std::string& path) {
  nlohmann::json j;
  j["lambda"] = r.lambda;
  j["m"] = r.m;
  j["rho"] = r.rho;
  j["energy_before"] = r.energy_before;
  j["energy_after"] = r.energy_after;
  j["retention"] = r.retention;
  j["div_rel"] = r.div_rel;
  j["outside_fraction"] = r.outside_fraction;
  j["extract_fraction"] = r.extract_fraction;
  j["extract_rel"] = r.extract_rel;
  j["converse_residual"] = r.converse_residual;
  j["f1_div_rel"] = r.f1_div_rel;
  j["f1_v1_fraction"] = r.f1_v1_fraction;
  j["solve"] = {{"iterations", r.solve.iterations},
                {"rel_residual", r.solve.rel_residual},
                {"converged", r.solve.converged},
                {"stagnated", r.solve.stagnated}};
  j["data_cone"] = {{"direction", {r.data_direction.x, r.data_direction.y}},
                    {"lam0", r.data_lam0},
                    {"center_w", r.data_center.x},
                    {"center_z", r.data_center.y}};
  j["grid_n"] = r.grid_n;
  j["fan"] = {r.fan_nz, r.fan_nw};
  j["quad_dt"] = r.quad_dt;
  j["seconds"] = {{"table", r.seconds_table},
                  {"solve", r.seconds_solve},
                  {"total", r.seconds_total}};
  std::ofstream out(path);
  if (!out) throw IoError("write_cancel_report_json: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write_cancel_report_json: write failed for " + path);
}

// Run the full experiment: probe, extraction, regularized inversion, and
// the band-energy ratio of corrected to uncorrected boundary data.
inline CancelReport cancellation_demo(const MetricField& metric, const ProbeLayout& layout,
                                      const CancelOptions& opts) {
  const auto wall0 = std::chrono::steady_clock::now();
  CancelContext ctx = make_cancel_context(metric, layout, opts);

  CancelReport rep;
  rep.lambda = opts.lambda;
  rep.m = opts.m;
  rep.grid_n = ctx.grid.n;
  rep.fan_nz = ctx.table.fan.n_z;
  rep.fan_nw = ctx.table.fan.n_w;
  rep.quad_dt = ctx.table.quad_dt;
  rep.seconds_table = ctx.seconds_table;

  BuiltProbe probe = build_f2(ctx);
  rep.retention = probe.retention;
  rep.div_rel = probe.div_rel;
  rep.outside_fraction = probe.outside_fraction;

  const Sinogram<Complex> s2 = forward(probe.field, ctx.metric, ctx.table);
  ExtractResult ext = extract_fio_part(ctx, probe.field, &s2);
  rep.extract_fraction = ext.v1_fraction;
  rep.extract_rel = ext.rel_vs_normal;

  const auto solve0 = std::chrono::steady_clock::now();
  ComplexTensorField y = apply_parametrix(ctx, ext.field, &rep.solve);
  rep.seconds_solve =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - solve0).count();

  // Corrected field: minus the solenoidal part of the solution.
  ComplexTensorField f1 = ComplexTensorField::zeros(opts.m, ctx.grid, ctx.mask);
  if (opts.m == 0) {
    axpy(f1, Complex{-1.0, 0.0}, y);
    rep.converse_residual = 0.0;
  } else {
    auto split = project_solenoidal(y, ctx.metric);
    axpy(f1, Complex{-1.0, 0.0}, split.solenoidal);
    // Potential leakage of the solution inside the target cone, relative.
    ComplexTensorField pot = y;
    axpy(pot, Complex{1.0, 0.0}, f1);  // y - solenoidal(y)
    const double denom = hf_energy(y, ctx.v1_meter);
    rep.converse_residual =
        denom > 0.0 ? std::sqrt(hf_energy(pot, ctx.v1_meter) / denom) : 0.0;
  }
  const double f1_total = flat_energy(f1);
  rep.f1_v1_fraction = f1_total > 0.0 ? hf_energy(f1, ctx.v1) / f1_total : 1.0;
  if (opts.m >= 1 && f1_total > 0.0)
    rep.f1_div_rel = l2_norm(divergence(f1, ctx.metric), ctx.metric) /
                     (ctx.chart_lam1 * l2_norm(f1, ctx.metric));

  Sinogram<Complex> s12 = forward(f1, ctx.metric, ctx.table);
  for (std::size_t i = 0; i < s12.values.size(); ++i) s12.values[i] += s2.values[i];

  const ConeSpec dcone = detail::fit_data_cone(s2, opts.lambda, opts, &rep);
  rep.energy_before = hf_energy(s2, dcone);
  rep.energy_after = hf_energy(s12, dcone);
  rep.rho = rep.energy_before > 0.0 ? rep.energy_after / rep.energy_before : 0.0;
  rep.seconds_total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();

  if (!opts.out_dir.empty()) {
    std::string tag = opts.tag;
    if (tag.empty()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "cancel_m%d_lam%g", opts.m, opts.lambda);
      tag = buf;
    }
    const std::string stem = opts.out_dir + "/" + tag;
    write_field(probe.field, stem + "_f2.tnrf");
    write_field(f1, stem + "_f1.tnrf");
    write_sinogram(s2, stem + "_s2.tnrs");
    write_sinogram(s12, stem + "_s12.tnrs");
    write_cancel_report_json(rep, stem + "_report.json");
  }
  return rep;
}

inline CancelReport cancellation_demo(const MetricField& metric, const ConjugatePairDatum& datum,
                                      const CancelOptions& opts) {
  return cancellation_demo(metric, layout_from_pair(datum), opts);
}

}  // namespace tenray
