// tenray — frequency-domain utilities: cached FFTW plans, smooth frequency
// multipliers, directional cone filters and band-energy meters for tensor
// fields on the square grid and for sinograms on the boundary fan.
//
// All transforms are plain complex 2D DFTs.  Non-periodic axes are zero-
// padded to a power of two at least 2n-2 before transforming so that the
// (decaying) spatial kernel of a smooth multiplier cannot wrap around the
// domain; periodic axes (the boundary coordinate of a sinogram) transform at
// their native length.

#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "tenray/core.hpp"
#include "tenray/grid.hpp"
#include "tenray/tensor_field.hpp"
#include "tenray/xray.hpp"

namespace tenray {

namespace detail {

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// A cached forward/backward plan pair with its working buffer.  FFTW plan
// creation is not reentrant and execution is tied to the buffer the plan was
// measured on, so entries are created once per shape and reused serially;
// callers must not share an entry across threads.
struct FftPlans {
  int nf = 0, ns = 0;  // fast (contiguous) and slow dimension
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  std::vector<Complex> buf;

  FftPlans(int nf_, int ns_) : nf(nf_), ns(ns_) {
    buf.assign(static_cast<std::size_t>(nf) * ns, Complex{});
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    fwd = fftw_plan_dft_2d(ns, nf, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_2d(ns, nf, p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!fwd || !bwd) throw NumericalError("fft: plan creation failed");
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
  ~FftPlans() {
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
  }
};

inline FftPlans& fft_plans(int nf, int ns) {
  static std::map<std::pair<int, int>, std::unique_ptr<FftPlans>> cache;
  auto& slot = cache[{nf, ns}];
  if (!slot) slot = std::make_unique<FftPlans>(nf, ns);
  return *slot;
}

// DFT bin -> signed integer frequency index.
inline int signed_bin(int k, int n) { return k <= n / 2 ? k : k - n; }

}  // namespace detail

// Uniform sampling axis for frequency-domain work.
struct FreqAxis {
  int n = 0;
  double spacing = 1.0;
  bool periodic = false;
};

// Apply a scalar frequency multiplier to data[islow * fast.n + ifast].  The
// callable receives the physical frequency Vec2{k_fast, k_slow} in radians
// per unit of the respective axis coordinate.
template <class Mult>
std::vector<Complex> apply_multiplier(const FreqAxis& fast, const FreqAxis& slow,
                                      const std::vector<Complex>& data, Mult&& mult) {
  if (fast.n <= 1 || slow.n <= 1) throw UsageError("apply_multiplier: need at least 2 samples per axis");
  if (data.size() != static_cast<std::size_t>(fast.n) * slow.n)
    throw UsageError("apply_multiplier: data size does not match the axes");
  const int nf = fast.periodic ? fast.n : detail::next_pow2(2 * fast.n - 2);
  const int ns = slow.periodic ? slow.n : detail::next_pow2(2 * slow.n - 2);

  auto& plans = detail::fft_plans(nf, ns);
  std::fill(plans.buf.begin(), plans.buf.end(), Complex{});
  for (int is = 0; is < slow.n; ++is)
    std::copy_n(data.begin() + static_cast<std::size_t>(is) * fast.n, fast.n,
                plans.buf.begin() + static_cast<std::size_t>(is) * nf);
  fftw_execute(plans.fwd);

  const double dkf = kTwoPi / (nf * fast.spacing);
  const double dks = kTwoPi / (ns * slow.spacing);
  for (int ks = 0; ks < ns; ++ks) {
    const double k_slow = detail::signed_bin(ks, ns) * dks;
    Complex* row = plans.buf.data() + static_cast<std::size_t>(ks) * nf;
    for (int kf = 0; kf < nf; ++kf) {
      const double k_fast = detail::signed_bin(kf, nf) * dkf;
      row[kf] *= mult(Vec2{k_fast, k_slow});
    }
  }

  fftw_execute(plans.bwd);
  const double scale = 1.0 / (static_cast<double>(nf) * ns);
  std::vector<Complex> out(data.size());
  for (int is = 0; is < slow.n; ++is)
    for (int k = 0; k < fast.n; ++k)
      out[static_cast<std::size_t>(is) * fast.n + k] =
          plans.buf[static_cast<std::size_t>(is) * nf + k] * scale;
  return out;
}

// ---------------------------------------------------------------------------
// Cone filters.
// ---------------------------------------------------------------------------

// A smooth directional frequency cutoff: the sector of half-angle
// `half_angle` around `direction`, intersected with the radial band
// [lam_min, lam_max], with smoothstep rolloffs occupying an `edge` fraction
// of the band and of the angular aperture.  The multiplier is identically 1
// on the core of the cone and identically 0 outside it.  An optional spatial
// plateau window localizes the object before filtering.
struct ConeSpec {
  Vec2 direction{1.0, 0.0};   // central frequency direction (not necessarily unit)
  double half_angle = 0.2;    // radians, in (0, pi/2)
  double lam_min = 0.0;       // radial band in |k|
  double lam_max = 0.0;
  double edge = 0.15;         // rolloff fraction of the band width / aperture
  bool two_sided = false;     // also pass the antipodal sector
  Vec2 axis_scale{1.0, 1.0};  // per-axis frequency scaling applied before |k| and angle
  // Spatial localizer (cone_filter only); disabled when window_radius <= 0.
  Vec2 window_center{0.0, 0.0};
  double window_plateau = 0.0;
  double window_radius = 0.0;

  void validate() const {
    if (!(half_angle > 0.0 && half_angle < kPi / 2))
      throw UsageError("ConeSpec: half_angle must lie in (0, pi/2)");
    if (!(lam_max > lam_min && lam_min >= 0.0))
      throw UsageError("ConeSpec: radial band is empty");
    if (!(edge > 0.0 && edge < 0.5)) throw UsageError("ConeSpec: edge fraction must lie in (0, 0.5)");
    if (norm(direction) == 0.0) throw UsageError("ConeSpec: zero direction");
  }

  // Center frequency and a convenience constructor for the default band
  // shape around it.
  static ConeSpec around(Vec2 direction, double lam0, double half_angle = 0.2,
                         double band_lo = 0.6, double band_hi = 1.4) {
    ConeSpec c;
    c.direction = direction;
    c.half_angle = half_angle;
    c.lam_min = band_lo * lam0;
    c.lam_max = band_hi * lam0;
    return c;
  }

  double multiplier(const Vec2& k) const {
    const Vec2 ke{k.x * axis_scale.x, k.y * axis_scale.y};
    const double r = norm(ke);
    if (r <= 0.0) return 0.0;
    const double dr = edge * (lam_max - lam_min);
    double val = smoothstep5((r - lam_min) / dr) * smoothstep5((lam_max - r) / dr);
    if (val == 0.0) return 0.0;
    const Vec2 d{direction.x * axis_scale.x, direction.y * axis_scale.y};
    double c = dot(ke, d) / (r * norm(d));
    if (two_sided) c = std::abs(c);
    const double theta = std::acos(std::clamp(c, -1.0, 1.0));
    const double da = edge * half_angle;
    val *= smoothstep5((half_angle - theta) / da);
    return val;
  }
};

// Smooth cutoff applied to one scalar layer on the square grid, in the chart
// frequency plane (k_x, k_y).
inline std::vector<Complex> cone_filter_grid(const GridSpec& grid, std::vector<Complex> data,
                                             const ConeSpec& cone) {
  cone.validate();
  if (data.size() != grid.size()) throw UsageError("cone_filter_grid: data size mismatch");
  if (cone.window_radius > 0.0) {
    for (int iy = 0; iy < grid.n; ++iy)
      for (int ix = 0; ix < grid.n; ++ix)
        data[grid.index(ix, iy)] *= plateau_window(norm(grid.node(ix, iy) - cone.window_center),
                                                   cone.window_plateau, cone.window_radius);
  }
  const FreqAxis ax{grid.n, grid.h(), false};
  return apply_multiplier(ax, ax, data, [&](const Vec2& k) { return cone.multiplier(k); });
}

// Directional filter of a complex tensor field: each independent component is
// windowed and filtered with the same cone.  The output is left unmasked —
// integrals only ever read nodes inside the disc.
inline SymTensorField<Complex> cone_filter(const SymTensorField<Complex>& f, const ConeSpec& cone) {
  SymTensorField<Complex> out = f;
  for (int p = 0; p <= f.m; ++p) out.comps[p] = cone_filter_grid(f.grid, f.comps[p], cone);
  return out;
}

inline SymTensorField<Complex> cone_filter(const SymTensorField<double>& f, const ConeSpec& cone) {
  return cone_filter(f.to_complex(), cone);
}

// Directional filter of a sinogram in the (z, w) frequency plane: the
// boundary coordinate is periodic, the angle coordinate is zero-padded.  The
// fast data axis is w, so ConeSpec directions are (k_w, k_z) pairs; the
// axis_scale member lets callers put the two coordinates in comparable
// units.  A window, when enabled, is a plateau bump at window_center =
// (w0, z0) with z-distance measured around the period.
inline ComplexSinogram cone_filter(const ComplexSinogram& s, const ConeSpec& cone) {
  cone.validate();
  ComplexSinogram out = s;
  if (cone.window_radius > 0.0) {
    const double L = s.boundary_len;
    for (int iz = 0; iz < s.fan.n_z; ++iz) {
      double dz = std::abs(wrap_periodic(s.z_of(iz) - cone.window_center.y, L));
      dz = std::min(dz, L - dz);
      for (int iw = 0; iw < s.fan.n_w; ++iw) {
        const double dw = s.fan.w_of(iw) - cone.window_center.x;
        out.at(iz, iw) *= plateau_window(std::sqrt(dw * dw + dz * dz), cone.window_plateau,
                                         cone.window_radius);
      }
    }
  }
  const FreqAxis aw{s.fan.n_w, s.fan.dw(), false};
  const FreqAxis az{s.fan.n_z, s.dz(), true};
  out.values = apply_multiplier(aw, az, out.values, [&](const Vec2& k) { return cone.multiplier(k); });
  return out;
}

inline ComplexSinogram to_complex(const RealSinogram& s) {
  ComplexSinogram out;
  out.m = s.m;
  out.fan = s.fan;
  out.boundary_len = s.boundary_len;
  out.values.assign(s.values.begin(), s.values.end());
  return out;
}

inline ComplexSinogram cone_filter(const RealSinogram& s, const ConeSpec& cone) {
  return cone_filter(to_complex(s), cone);
}

// ---------------------------------------------------------------------------
// Band-energy meters.
// ---------------------------------------------------------------------------

// Flat (multiplicity-weighted, unit-metric) squared norm of a tensor field:
// the measure used to compare energies before and after filtering, where the
// conformal weight would only rescale both sides.
inline double flat_energy(const SymTensorField<Complex>& f) {
  const double cell = sqr(f.grid.h());
  double acc = 0.0;
  for (int p = 0; p <= f.m; ++p) {
    double comp = 0.0;
    for (const Complex& v : f.comps[p]) comp += std::norm(v);
    acc += comp * f.multiplicity(p);
  }
  return acc * cell;
}

inline double flat_energy(const ComplexSinogram& s) {
  double acc = 0.0;
  for (const Complex& v : s.values) acc += std::norm(v);
  return acc * s.dz() * s.fan.dw();
}

// Cone-band energy: squared flat norm of the cone_filter output.  Serves as
// the numerical meter for "how singular is this object in the cone".
inline double hf_energy(const SymTensorField<Complex>& f, const ConeSpec& cone) {
  return flat_energy(cone_filter(f, cone));
}
inline double hf_energy(const SymTensorField<double>& f, const ConeSpec& cone) {
  return hf_energy(f.to_complex(), cone);
}
inline double hf_energy(const ComplexSinogram& s, const ConeSpec& cone) {
  return flat_energy(cone_filter(s, cone));
}
inline double hf_energy(const RealSinogram& s, const ConeSpec& cone) {
  return hf_energy(to_complex(s), cone);
}

}  // namespace tenray
