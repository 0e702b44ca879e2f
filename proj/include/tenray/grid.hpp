// tenray — uniform Cartesian grid over the disc chart, masks, interpolation.
//
// Fields live on an n x n grid covering [-R, R]^2 with the closed disc
// |x| <= R cut out by a node mask.  Interpolation is 4-point Lagrange
// cubic per axis (O(h^4) for smooth data), falling back to the clamped
// stencil near the box edge; values requested outside the disc mask are
// treated as zero, which is consistent with the compactly supported
// fields the transforms act on.

#pragma once

#include <cstddef>
#include <vector>

#include "tenray/core.hpp"

namespace tenray {

struct GridSpec {
  int n = 257;       // nodes per axis
  double R = 1.0;    // disc radius; grid spans [-R, R]^2

  double h() const { return 2.0 * R / (n - 1); }
  double coord(int i) const { return -R + h() * i; }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(n) + ix;
  }
  std::size_t size() const { return static_cast<std::size_t>(n) * static_cast<std::size_t>(n); }
  Vec2 node(int ix, int iy) const { return {coord(ix), coord(iy)}; }

  bool operator==(const GridSpec& o) const { return n == o.n && R == o.R; }
};

// Node classification for a disc of radius `mask_radius` (defaults to R).
// `interior` additionally requires a margin of `margin_nodes` grid cells to
// the disc boundary so that wide finite-difference stencils stay inside.
struct GridMask {
  GridSpec grid;
  std::vector<std::uint8_t> inside;    // |x| <= mask_radius
  std::vector<std::uint8_t> interior;  // inside with stencil margin

  static GridMask make(const GridSpec& grid, double mask_radius, int margin_nodes) {
    GridMask m;
    m.grid = grid;
    m.inside.assign(grid.size(), 0);
    m.interior.assign(grid.size(), 0);
    const double margin = margin_nodes * grid.h();
    for (int iy = 0; iy < grid.n; ++iy) {
      for (int ix = 0; ix < grid.n; ++ix) {
        const double r = norm(grid.node(ix, iy));
        const std::size_t idx = grid.index(ix, iy);
        if (r <= mask_radius) m.inside[idx] = 1;
        if (r <= mask_radius - margin) m.interior[idx] = 1;
      }
    }
    return m;
  }
};

namespace detail {

// Weights of 4-point Lagrange interpolation at offset u in [0,1] relative to
// the second node of the stencil {-1, 0, 1, 2}.
inline void cubic_weights(double u, double w[4]) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  w[0] = (-u3 + 3.0 * u2 - 2.0 * u) / 6.0;
  w[1] = (3.0 * u3 - 6.0 * u2 - 3.0 * u + 6.0) / 6.0;
  w[2] = (-3.0 * u3 + 3.0 * u2 + 6.0 * u) / 6.0;
  w[3] = (u3 - u) / 6.0;
}

}  // namespace detail

// Cubic interpolation of a scalar lattice at chart point p.  Values outside
// the [-R,R]^2 box evaluate to zero.  The caller is responsible for the data
// being zero-padded near the disc boundary (fields carry masks).
template <class S>
S interp_cubic(const GridSpec& g, const std::vector<S>& data, const Vec2& p) {
  const double h = g.h();
  const double fx = (p.x + g.R) / h;
  const double fy = (p.y + g.R) / h;
  if (fx < 0.0 || fy < 0.0 || fx > g.n - 1 || fy > g.n - 1) return S{};
  int ix = static_cast<int>(fx);
  int iy = static_cast<int>(fy);
  if (ix > g.n - 2) ix = g.n - 2;
  if (iy > g.n - 2) iy = g.n - 2;
  // Clamp the 4-node stencil {i-1 .. i+2} into the box.
  int bx = ix - 1, by = iy - 1;
  if (bx < 0) bx = 0;
  if (by < 0) by = 0;
  if (bx > g.n - 4) bx = g.n - 4;
  if (by > g.n - 4) by = g.n - 4;
  double wx[4], wy[4];
  detail::cubic_weights(fx - bx - 1.0, wx);
  detail::cubic_weights(fy - by - 1.0, wy);
  S acc{};
  for (int j = 0; j < 4; ++j) {
    S row{};
    const S* base = &data[g.index(bx, by + j)];
    for (int i = 0; i < 4; ++i) row += base[i] * wx[i];
    acc += row * wy[j];
  }
  return acc;
}

// Exact transpose of interp_cubic: deposit `val` across the same 4x4
// stencil with the same weights and the same clamping.  Gather/scatter
// pairs built from interp_cubic and splat_cubic are adjoint to roundoff,
// which iterative solvers on gather-scatter operators rely on.
template <class S>
void splat_cubic(const GridSpec& g, std::vector<S>& data, const Vec2& p, const S& val) {
  const double h = g.h();
  const double fx = (p.x + g.R) / h;
  const double fy = (p.y + g.R) / h;
  if (fx < 0.0 || fy < 0.0 || fx > g.n - 1 || fy > g.n - 1) return;
  int ix = static_cast<int>(fx);
  int iy = static_cast<int>(fy);
  if (ix > g.n - 2) ix = g.n - 2;
  if (iy > g.n - 2) iy = g.n - 2;
  int bx = ix - 1, by = iy - 1;
  if (bx < 0) bx = 0;
  if (by < 0) by = 0;
  if (bx > g.n - 4) bx = g.n - 4;
  if (by > g.n - 4) by = g.n - 4;
  double wx[4], wy[4];
  detail::cubic_weights(fx - bx - 1.0, wx);
  detail::cubic_weights(fy - by - 1.0, wy);
  for (int j = 0; j < 4; ++j) {
    S* base = &data[g.index(bx, by + j)];
    for (int i = 0; i < 4; ++i) base[i] += val * (wx[i] * wy[j]);
  }
}

// Bilinear interpolation (used for sinogram lookups in the backprojector).
template <class S>
S interp_bilinear_clamped(int nx, int ny, const std::vector<S>& data, double fx, double fy,
                          bool periodic_x) {
  // fx, fy are fractional indices.  x may wrap periodically (arclength axis).
  if (periodic_x) {
    fx = wrap_periodic(fx, static_cast<double>(nx));
  } else {
    if (fx < 0.0) fx = 0.0;
    if (fx > nx - 1) fx = static_cast<double>(nx - 1);
  }
  if (fy < 0.0) fy = 0.0;
  if (fy > ny - 1) fy = static_cast<double>(ny - 1);
  int ix = static_cast<int>(fx);
  int iy = static_cast<int>(fy);
  if (!periodic_x && ix > nx - 2) ix = nx - 2;
  if (iy > ny - 2) iy = ny - 2;
  const double ux = fx - ix;
  const double uy = fy - iy;
  const int ixp = periodic_x ? (ix + 1) % nx : ix + 1;
  const auto at = [&](int i, int j) -> S {
    return data[static_cast<std::size_t>(j) * nx + i];
  };
  return at(ix, iy) * ((1.0 - ux) * (1.0 - uy)) + at(ixp, iy) * (ux * (1.0 - uy)) +
         at(ix, iy + 1) * ((1.0 - ux) * uy) + at(ixp, iy + 1) * (ux * uy);
}

}  // namespace tenray
