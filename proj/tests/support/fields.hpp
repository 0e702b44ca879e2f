// Test support: deterministic smooth random fields.
//
// Draws are sums of a few low-frequency plane waves under a plateau window,
// represented as continuum closures so that the same draw can be sampled on
// grids of different resolution (needed by the refinement-stability checks).

#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "tenray/core.hpp"
#include "tenray/grid.hpp"
#include "tenray/tensor_field.hpp"

namespace testsupport {

struct SmoothDraw {
  std::vector<double> amp, kx, ky, phase;
  double plateau = 0.5;
  double radius = 0.8;

  double operator()(const tenray::Vec2& x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < amp.size(); ++i) {
      acc += amp[i] * std::cos(kx[i] * x.x + ky[i] * x.y + phase[i]);
    }
    return acc * tenray::plateau_window(tenray::norm(x), plateau, radius);
  }
};

inline SmoothDraw smooth_draw(std::mt19937& rng, double kmax, double plateau,
                              double radius, int n_modes = 5) {
  std::uniform_real_distribution<double> uamp(-1.0, 1.0);
  std::uniform_real_distribution<double> uk(-kmax, kmax);
  std::uniform_real_distribution<double> uph(0.0, tenray::kTwoPi);
  SmoothDraw d;
  d.plateau = plateau;
  d.radius = radius;
  for (int i = 0; i < n_modes; ++i) {
    d.amp.push_back(uamp(rng));
    d.kx.push_back(uk(rng));
    d.ky.push_back(uk(rng));
    d.phase.push_back(uph(rng));
  }
  return d;
}

inline std::vector<SmoothDraw> draw_components(int m, std::mt19937& rng, double kmax,
                                               double plateau, double radius) {
  std::vector<SmoothDraw> out;
  for (int p = 0; p <= m; ++p) out.push_back(smooth_draw(rng, kmax, plateau, radius));
  return out;
}

inline tenray::RealTensorField sample_components(
    int m, const tenray::GridSpec& g, std::shared_ptr<const tenray::GridMask> mask,
    const std::vector<SmoothDraw>& draws) {
  auto f = tenray::RealTensorField::zeros(m, g, std::move(mask));
  for (int p = 0; p <= m; ++p) {
    for (int iy = 0; iy < g.n; ++iy) {
      for (int ix = 0; ix < g.n; ++ix) {
        const std::size_t idx = g.index(ix, iy);
        if (!f.mask->inside[idx]) continue;
        f.comps[p][idx] = draws[p](g.node(ix, iy));
      }
    }
  }
  return f;
}

}  // namespace testsupport
