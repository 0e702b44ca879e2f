// tenray — geodesic ray transform on the disc: fans, forward, backprojection.
//
// Rays are parameterized by inflow coordinates (z, w): boundary g-arclength
// z in [0, L) and the signed angle w in (-pi/2, pi/2) from the inward
// normal.  A sinogram samples z uniformly (periodic) and w at midpoints of a
// uniform grid on (-pi/2 + eps, pi/2 - eps); the natural pairing weight is
// cos(w) dz dw, which makes the backprojector the exact adjoint of the
// forward map in the continuum.
//
// Geometry is precomputed into tables so that repeated transforms (iterative
// solvers, frequency sweeps) only do interpolation work:
//   RayTable        per fan ray: boundary data plus subsampled quadrature
//                   states, optionally restricted to rays passing near
//                   regions of interest;
//   BackprojectTable  per (grid node, direction): inflow coordinates of the
//                   ray through that node, found by tracing both half rays.
//
// Rays that exceed the length cap before leaving the disc are marked and
// skipped: the transform pair is then the restriction to escaping chords,
// which keeps the operator symmetric.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tenray/core.hpp"
#include "tenray/grid.hpp"
#include "tenray/metric.hpp"
#include "tenray/tensor_field.hpp"

namespace tenray {

struct FanSpec {
  int n_z = 360;
  int n_w = 359;
  double eps_w = 0.03;  // angular inset from the grazing directions

  double dw() const { return (kPi - 2.0 * eps_w) / n_w; }
  double w_of(int iw) const { return -kPi / 2.0 + eps_w + (iw + 0.5) * dw(); }
  bool operator==(const FanSpec& o) const {
    return n_z == o.n_z && n_w == o.n_w && eps_w == o.eps_w;
  }
};

template <class S>
struct Sinogram {
  int m = 0;  // tensor rank of the transformed field
  FanSpec fan;
  double boundary_len = 0.0;
  std::vector<S> values;  // [iz * n_w + iw]

  static Sinogram zeros(int m, const FanSpec& fan, double boundary_len) {
    Sinogram s;
    s.m = m;
    s.fan = fan;
    s.boundary_len = boundary_len;
    s.values.assign(static_cast<std::size_t>(fan.n_z) * fan.n_w, S{});
    return s;
  }

  double dz() const { return boundary_len / fan.n_z; }
  double z_of(int iz) const { return iz * dz(); }
  S& at(int iz, int iw) { return values[static_cast<std::size_t>(iz) * fan.n_w + iw]; }
  const S& at(int iz, int iw) const {
    return values[static_cast<std::size_t>(iz) * fan.n_w + iw];
  }
};

using RealSinogram = Sinogram<double>;
using ComplexSinogram = Sinogram<Complex>;

// Bilinear interpolation of sinogram values at fan coordinates (z, w):
// periodic in z (period = boundary length), clamped to the sampled w band.
template <class S>
S sinogram_bilinear(const Sinogram<S>& h, double z, double w) {
  const int n_z = h.fan.n_z;
  const int n_w = h.fan.n_w;
  const double fz = z / h.dz();
  const double fw = std::clamp((w - h.fan.w_of(0)) / h.fan.dw(), 0.0,
                               static_cast<double>(n_w - 1));
  const double zf = std::floor(fz);
  int iz0 = static_cast<int>(zf) % n_z;
  if (iz0 < 0) iz0 += n_z;
  const int iz1 = (iz0 + 1) % n_z;
  const int iw0 = std::min(static_cast<int>(fw), n_w - 2);
  const int iw1 = iw0 + 1;
  const double tz = fz - zf;
  const double tw = fw - iw0;
  return h.at(iz0, iw0) * ((1.0 - tz) * (1.0 - tw)) +
         h.at(iz1, iw0) * (tz * (1.0 - tw)) +
         h.at(iz0, iw1) * ((1.0 - tz) * tw) +
         h.at(iz1, iw1) * (tz * tw);
}

// Weighted sinogram pairing sum h1 conj(h2) cos(w) dz dw (the measure that
// matches the volume pairing through the transform adjoint).
template <class S>
S sinogram_inner(const Sinogram<S>& a, const Sinogram<S>& b) {
  if (!(a.fan == b.fan)) throw UsageError("sinogram_inner: mismatched fans");
  S acc{};
  const double dzdw = a.dz() * a.fan.dw();
  for (int iz = 0; iz < a.fan.n_z; ++iz) {
    S row{};
    for (int iw = 0; iw < a.fan.n_w; ++iw) {
      row += a.at(iz, iw) * detail::conj_if_complex(b.at(iz, iw)) *
             std::cos(a.fan.w_of(iw));
    }
    acc += row;
  }
  return acc * dzdw;
}

// ---------------------------------------------------------------------------
// Regions of interest: rays missing all of them can be skipped in cached
// transforms of fields supported inside.
// ---------------------------------------------------------------------------

struct RoiDisc {
  Vec2 center;
  double radius = 0.0;
};

struct TransportOptions {
  double step = 0.0;        // RK4 step; 0 -> 1e-3 R
  double max_length = 0.0;  // trap cap; 0 -> 50 R
  int quad_stride = 4;      // quadrature nodes every `stride` RK samples
};

// ---------------------------------------------------------------------------
// RayTable
// ---------------------------------------------------------------------------

struct RayTable {
  FanSpec fan;
  double boundary_len = 0.0;
  double quad_dt = 0.0;  // spacing of stored quadrature nodes

  struct Ray {
    double z_out = 0.0, w_out = 0.0;
    double length = 0.0;
    std::uint32_t offset = 0;  // into the node buffer, in nodes
    std::uint32_t count = 0;   // uniform nodes from t=0 at quad_dt spacing
    bool kept = false;
    bool trapped = false;
  };
  std::vector<Ray> rays;        // [iz * n_w + iw]
  std::vector<float> nodes;     // packed (x, y, vx, vy) per node
  // Exact exit state appended per kept ray for the remainder cell.
  std::vector<float> exit_state;  // packed (x, y, vx, vy), aligned with kept order? no: per ray 4 floats
  std::size_t n_kept = 0;

  const Ray& ray(int iz, int iw) const {
    return rays[static_cast<std::size_t>(iz) * fan.n_w + iw];
  }
};

// Build the geometry table for a fan.  With an empty `rois` every ray keeps
// its quadrature nodes; otherwise only rays whose chord comes within
// roi.radius (plus a step margin) of a center do.
inline RayTable build_ray_table(const MetricField& m, const FanSpec& fan,
                                const std::vector<RoiDisc>& rois = {},
                                const TransportOptions& opt = {}) {
  const double step = (opt.step > 0.0) ? opt.step : 1e-3 * m.R;
  const double cap = (opt.max_length > 0.0) ? opt.max_length : 50.0 * m.R;
  const int stride = std::max(1, opt.quad_stride);

  RayTable tab;
  tab.fan = fan;
  tab.boundary_len = m.boundary_length();
  tab.quad_dt = step * stride;
  tab.rays.assign(static_cast<std::size_t>(fan.n_z) * fan.n_w, {});
  tab.exit_state.assign(tab.rays.size() * 4, 0.0f);

  const double margin = 2.0 * tab.quad_dt;
  std::vector<float> scratch;
  scratch.reserve(1 << 14);

  for (int iz = 0; iz < fan.n_z; ++iz) {
    const double z = iz * tab.boundary_len / fan.n_z;
    const BoundaryFrame f = m.boundary_frame(z);
    for (int iw = 0; iw < fan.n_w; ++iw) {
      const double w = fan.w_of(iw);
      RayTable::Ray& ray = tab.rays[static_cast<std::size_t>(iz) * fan.n_w + iw];
      const detail::OdeState start{f.point, m.direction_from_angle(f, w)};

      scratch.clear();
      double mind = 1e300;
      detail::OdeState cross;

      if (m.family == MetricFamily::euclidean) {
        // Straight chord: exact exit, nodes generated directly; distance to
        // a region center is the point-to-segment distance.
        const ChordEnd ce = trace_to_boundary(m, start.x, start.v, step, cap);
        ray.length = ce.t;
        cross = {ce.x, ce.v};
        for (const auto& roi : rois) {
          const double tc = std::clamp(dot(roi.center - start.x, start.v), 0.0, ce.t);
          mind = std::min(mind, norm(start.x + start.v * tc - roi.center) - roi.radius);
        }
        const bool keep = rois.empty() || (mind <= margin);
        if (keep) {
          const int count = static_cast<int>(std::floor(ce.t / tab.quad_dt)) + 1;
          scratch.reserve(4 * count);
          for (int j = 0; j < count; ++j) {
            const Vec2 xj = start.x + start.v * (j * tab.quad_dt);
            scratch.push_back(static_cast<float>(xj.x));
            scratch.push_back(static_cast<float>(xj.y));
            scratch.push_back(static_cast<float>(start.v.x));
            scratch.push_back(static_cast<float>(start.v.y));
          }
        }
      } else {
        detail::OdeState s = start;
        auto note = [&](const detail::OdeState& st) {
          scratch.push_back(static_cast<float>(st.x.x));
          scratch.push_back(static_cast<float>(st.x.y));
          scratch.push_back(static_cast<float>(st.v.x));
          scratch.push_back(static_cast<float>(st.v.y));
          for (const auto& roi : rois) {
            mind = std::min(mind, norm(st.x - roi.center) - roi.radius);
          }
        };
        note(s);
        // March whole RK steps, keeping every stride-th state, until the
        // ray leaves the disc or hits the cap.
        const double R2 = m.R * m.R;
        double t = 0.0;
        int isub = 0;
        bool out = false;
        detail::OdeState prev = s;
        while (t < cap) {
          prev = s;
          s = detail::rk4_step(m, s, step);
          t += step;
          if (dot(s.x, s.x) > R2) {
            out = true;
            break;
          }
          if (++isub == stride) {
            isub = 0;
            note(s);
          }
        }
        if (!out) {
          ray.trapped = true;
          continue;
        }
        // Refine the crossing from the last inside state.
        double lo = 0.0, hi = step;
        cross = s;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          const detail::OdeState trial = detail::rk4_step(m, prev, mid);
          if (dot(trial.x, trial.x) > R2) {
            hi = mid;
            cross = trial;
          } else {
            lo = mid;
          }
          if (hi - lo < 1e-10 * m.R) break;
        }
        const double r = norm(cross.x);
        if (r > 0.0) cross.x = cross.x * (m.R / r);
        ray.length = (t - step) + hi;
        // Drop stored nodes past the actual chord (the final partial step
        // may have retired one pending stride slot).
        const int maxn = static_cast<int>(std::floor(ray.length / tab.quad_dt)) + 1;
        if (static_cast<int>(scratch.size() / 4) > maxn) scratch.resize(4 * maxn);
      }

      const BoundaryHit hx = inflow_coords(m, cross.x, -cross.v);
      ray.z_out = hx.z;
      ray.w_out = hx.w;
      const std::size_t ridx = static_cast<std::size_t>(iz) * fan.n_w + iw;
      tab.exit_state[4 * ridx + 0] = static_cast<float>(cross.x.x);
      tab.exit_state[4 * ridx + 1] = static_cast<float>(cross.x.y);
      tab.exit_state[4 * ridx + 2] = static_cast<float>(cross.v.x);
      tab.exit_state[4 * ridx + 3] = static_cast<float>(cross.v.y);

      const bool keep = rois.empty() || (mind <= margin);
      if (keep && !scratch.empty()) {
        ray.kept = true;
        ray.offset = static_cast<std::uint32_t>(tab.nodes.size() / 4);
        ray.count = static_cast<std::uint32_t>(scratch.size() / 4);
        tab.nodes.insert(tab.nodes.end(), scratch.begin(), scratch.end());
        ++tab.n_kept;
      }
    }
  }
  return tab;
}

// ---------------------------------------------------------------------------
// Forward transform
// ---------------------------------------------------------------------------

// Integrate <f, gamma-dot^m> along every kept ray of the table: composite
// Simpson over the uniform quadrature nodes, trapezoid on the remainder cell
// up to the exact exit state.  Rays that were pruned or trapped produce 0.
template <class S>
Sinogram<S> forward(const SymTensorField<S>& f, const MetricField& metric,
                    const RayTable& tab) {
  auto out = Sinogram<S>::zeros(f.m, tab.fan, tab.boundary_len);
  const double dt = tab.quad_dt;
  std::vector<S> vals;
  for (std::size_t r = 0; r < tab.rays.size(); ++r) {
    const RayTable::Ray& ray = tab.rays[r];
    if (!ray.kept || ray.trapped || ray.count == 0) continue;
    const int n = static_cast<int>(ray.count);
    vals.resize(n);
    const float* base = &tab.nodes[4 * static_cast<std::size_t>(ray.offset)];
    for (int j = 0; j < n; ++j) {
      const Vec2 x{base[4 * j + 0], base[4 * j + 1]};
      const Vec2 v{base[4 * j + 2], base[4 * j + 3]};
      vals[j] = f.pair(x, v);
    }
    // Composite Simpson over pairs of cells; trapezoid leftovers.
    S acc{};
    int j = 0;
    while (j + 2 < n) {
      acc += (vals[j] + vals[j + 1] * 4.0 + vals[j + 2]) * (dt / 3.0);
      j += 2;
    }
    if (j + 1 < n) acc += (vals[j] + vals[j + 1]) * (0.5 * dt);
    // Remainder from the last stored node to the exact exit.
    const double t_last = (n - 1) * dt;
    const double rem = ray.length - t_last;
    if (rem > 0.0) {
      const float* ex = &tab.exit_state[4 * r];
      const Vec2 x{ex[0], ex[1]};
      const Vec2 v{ex[2], ex[3]};
      acc += (vals[n - 1] + f.pair(x, v)) * (0.5 * rem);
    }
    out.values[r] = acc;
  }
  return out;
}

namespace detail {

// Deposit a tensor sample: the transpose of SymTensorField::pair under the
// multiplicity-weighted flat pairing (the binomial factors cancel).
template <class S>
void scatter_pair(SymTensorField<S>& f, const Vec2& x, const Vec2& v, const S& val) {
  for (int p = 0; p <= f.m; ++p) splat_cubic(f.grid, f.comps[p], x, val * f.vpow(v, p));
}

}  // namespace detail

// Exact discrete transpose of forward(): scatter boundary data back along
// the stored quadrature nodes with the same Simpson/trapezoid weights, the
// cos(w) dz dw boundary measure, and the transposed interpolation stencil.
// With the shipped pairings the identity
//   sinogram_inner(forward(f), h) == l2-flat(f, forward_transpose(h))
// holds to roundoff (flat pairing: multiplicity- and cell-weighted sum), so
// gather/scatter normal operators built from this routine are Hermitian
// positive semidefinite by construction -- the property iterative solvers
// need.  backproject() below evaluates the same adjoint by an independent
// angular quadrature and is the one to prefer for standalone imaging; its
// direction sum cannot resolve strongly oscillatory data, while this
// routine is exactly as well resolved as the fan that produced the data.
template <class S>
SymTensorField<S> forward_transpose(const Sinogram<S>& h, const RayTable& tab,
                                    const GridSpec& grid,
                                    std::shared_ptr<const GridMask> mask) {
  if (!(h.fan == tab.fan)) throw UsageError("forward_transpose: fan mismatch");
  auto out = SymTensorField<S>::zeros(h.m, grid, std::move(mask));
  const double dt = tab.quad_dt;
  const double cell = grid.h() * grid.h();
  const double dzdw = h.dz() * h.fan.dw();
  std::vector<double> weight;
  for (std::size_t r = 0; r < tab.rays.size(); ++r) {
    const RayTable::Ray& ray = tab.rays[r];
    if (!ray.kept || ray.trapped || ray.count == 0) continue;
    const int iw = static_cast<int>(r % static_cast<std::size_t>(tab.fan.n_w));
    const S scale = h.values[r] * (std::cos(tab.fan.w_of(iw)) * dzdw / cell);
    if (scale == S{}) continue;
    const int n = static_cast<int>(ray.count);
    // Reproduce forward()'s composite quadrature weights per node.
    weight.assign(n, 0.0);
    int j = 0;
    while (j + 2 < n) {
      weight[j] += dt / 3.0;
      weight[j + 1] += 4.0 * dt / 3.0;
      weight[j + 2] += dt / 3.0;
      j += 2;
    }
    if (j + 1 < n) {
      weight[j] += 0.5 * dt;
      weight[j + 1] += 0.5 * dt;
    }
    const double rem = ray.length - (n - 1) * dt;
    if (rem > 0.0) weight[n - 1] += 0.5 * rem;
    const float* base = &tab.nodes[4 * static_cast<std::size_t>(ray.offset)];
    for (int k = 0; k < n; ++k) {
      const Vec2 x{base[4 * k + 0], base[4 * k + 1]};
      const Vec2 v{base[4 * k + 2], base[4 * k + 3]};
      detail::scatter_pair(out, x, v, scale * weight[k]);
    }
    if (rem > 0.0) {
      const float* ex = &tab.exit_state[4 * r];
      detail::scatter_pair(out, Vec2{ex[0], ex[1]}, Vec2{ex[2], ex[3]}, scale * (0.5 * rem));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backprojection
// ---------------------------------------------------------------------------

struct BackprojectTable {
  GridSpec grid;
  int n_v = 256;
  double boundary_len = 0.0;
  std::vector<std::uint32_t> node_ids;  // grid indices covered by the table
  // Per (node, direction): inflow coordinates of the ray through the node
  // with that direction; invalid entries (trapped) are flagged.
  std::vector<float> entry_z;
  std::vector<float> entry_w;
  std::vector<std::uint8_t> valid;
  std::size_t n_invalid = 0;

  std::size_t slot(std::size_t node_pos, int k) const { return node_pos * n_v + k; }
};

// Build entry coordinates for every node of `node_set` (a mask aligned with
// `grid`; nullptr means all inside-disc nodes) and n_v equispaced chart-angle
// directions.  Each antipodal direction pair shares one chord trace.
inline BackprojectTable build_backproject_table(const MetricField& m, const GridSpec& grid,
                                                const GridMask& mask,
                                                const std::vector<std::uint8_t>* node_set,
                                                int n_v = 256,
                                                const TransportOptions& opt = {}) {
  const double step = (opt.step > 0.0) ? opt.step : 1e-3 * m.R;
  const double cap = (opt.max_length > 0.0) ? opt.max_length : 50.0 * m.R;
  if (n_v % 2 != 0) throw UsageError("build_backproject_table: n_v must be even");

  BackprojectTable tab;
  tab.grid = grid;
  tab.n_v = n_v;
  tab.boundary_len = m.boundary_length();
  for (int iy = 0; iy < grid.n; ++iy) {
    for (int ix = 0; ix < grid.n; ++ix) {
      const std::size_t idx = grid.index(ix, iy);
      if (!mask.inside[idx]) continue;
      if (node_set && !(*node_set)[idx]) continue;
      tab.node_ids.push_back(static_cast<std::uint32_t>(idx));
    }
  }
  const std::size_t total = tab.node_ids.size() * static_cast<std::size_t>(n_v);
  tab.entry_z.assign(total, 0.0f);
  tab.entry_w.assign(total, 0.0f);
  tab.valid.assign(total, 0);

  for (std::size_t np = 0; np < tab.node_ids.size(); ++np) {
    const std::size_t idx = tab.node_ids[np];
    const int iy = static_cast<int>(idx) / grid.n;
    const int ix = static_cast<int>(idx) % grid.n;
    const Vec2 x = grid.node(ix, iy);
    const double el = std::exp(-m.lambda(x));
    for (int k = 0; k < n_v / 2; ++k) {
      const double th = (k + 0.5) * kTwoPi / n_v;
      const Vec2 v = Vec2{std::cos(th), std::sin(th)} * el;
      // One chord serves the direction and its reverse: the +v half ray ends
      // where the reversed direction enters, and vice versa.
      const ChordEnd fwd = trace_to_boundary(m, x, v, step, cap);
      const ChordEnd bwd = trace_to_boundary(m, x, -v, step, cap);
      const int k2 = k + n_v / 2;
      if (bwd.escaped) {
        const BoundaryHit h = inflow_coords(m, bwd.x, -bwd.v);
        tab.entry_z[tab.slot(np, k)] = static_cast<float>(h.z);
        tab.entry_w[tab.slot(np, k)] = static_cast<float>(h.w);
        tab.valid[tab.slot(np, k)] = 1;
      } else {
        ++tab.n_invalid;
      }
      if (fwd.escaped) {
        const BoundaryHit h = inflow_coords(m, fwd.x, -fwd.v);
        tab.entry_z[tab.slot(np, k2)] = static_cast<float>(h.z);
        tab.entry_w[tab.slot(np, k2)] = static_cast<float>(h.w);
        tab.valid[tab.slot(np, k2)] = 1;
      } else {
        ++tab.n_invalid;
      }
    }
  }
  return tab;
}

// Apply the adjoint: smear the sinogram back along rays,
//   (I* h)_P(x) = integral over directions of h(entry(x, v)) v-flat^{(m)}_P,
// with the direction integral as a midpoint sum over n_v chart angles and
// bilinear interpolation of h in (z, w).  The lowered direction components
// contribute e^{m lambda} cos^p th sin^(m-p) th for the class-p component.
template <class S>
SymTensorField<S> backproject(const Sinogram<S>& h, const MetricField& metric,
                              const BackprojectTable& tab,
                              std::shared_ptr<const GridMask> mask) {
  auto out = SymTensorField<S>::zeros(h.m, tab.grid, std::move(mask));
  const int m = h.m;
  const int n_v = tab.n_v;
  const double dth = kTwoPi / n_v;
  std::vector<double> cth(n_v), sth(n_v);
  for (int k = 0; k < n_v; ++k) {
    cth[k] = std::cos((k + 0.5) * dth);
    sth[k] = std::sin((k + 0.5) * dth);
  }
  for (std::size_t np = 0; np < tab.node_ids.size(); ++np) {
    const std::size_t idx = tab.node_ids[np];
    const int iy = static_cast<int>(idx) / tab.grid.n;
    const int ix = static_cast<int>(idx) % tab.grid.n;
    const double em = std::exp(m * metric.lambda(tab.grid.node(ix, iy)));
    for (int p = 0; p <= m; ++p) {
      S acc{};
      for (int k = 0; k < n_v; ++k) {
        if (!tab.valid[tab.slot(np, k)]) continue;
        const double ze = tab.entry_z[tab.slot(np, k)];
        const double we = tab.entry_w[tab.slot(np, k)];
        const S hv = sinogram_bilinear(h, ze, we);
        double tp = 1.0;
        for (int i = 0; i < p; ++i) tp *= cth[k];
        for (int i = 0; i < m - p; ++i) tp *= sth[k];
        acc += hv * tp;
      }
      out.comps[p][idx] = acc * (dth * em);
    }
  }
  return out;
}

// Normal operator: backprojection of the forward data using shared tables.
template <class S>
SymTensorField<S> normal_operator(const SymTensorField<S>& f, const MetricField& metric,
                                  const RayTable& rt, const BackprojectTable& bt) {
  const Sinogram<S> h = forward(f, metric, rt);
  return backproject(h, metric, bt, f.mask);
}

}  // namespace tenray
