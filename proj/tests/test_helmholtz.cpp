#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>

#include "support/fields.hpp"
#include "tenray/helmholtz.hpp"
#include "tenray/tensor_field.hpp"
#include "tenray/xray.hpp"

using namespace tenray;
using Catch::Approx;

namespace {

std::shared_ptr<const GridMask> disc_mask(const GridSpec& g) {
  return std::make_shared<GridMask>(GridMask::make(g, g.R, 4));
}

double gauss(const Vec2& x, const Vec2& c, double s) {
  return std::exp(-(sqr(x.x - c.x) + sqr(x.y - c.y)) / (2.0 * s * s));
}

// Rank-(m-1) potential with smooth compactly supported components.
RealTensorField windowed_potential(int rank, const GridSpec& g,
                                   std::shared_ptr<const GridMask> mask) {
  auto u = RealTensorField::zeros(rank, g, std::move(mask));
  for (int p = 0; p <= rank; ++p) {
    for (int iy = 0; iy < g.n; ++iy) {
      for (int ix = 0; ix < g.n; ++ix) {
        const std::size_t idx = g.index(ix, iy);
        if (!u.mask->inside[idx]) continue;
        const Vec2 x = g.node(ix, iy);
        u.comps[p][idx] = gauss(x, {0.1 * (1 + p), -0.08}, 0.25) *
                          plateau_window(norm(x), 0.55 * g.R, 0.85 * g.R);
      }
    }
  }
  return u;
}

RealTensorField random_inside_field(int rank, const GridSpec& g,
                                    std::shared_ptr<const GridMask> mask,
                                    std::mt19937& rng) {
  auto f = RealTensorField::zeros(rank, g, std::move(mask));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int p = 0; p <= rank; ++p) {
    for (std::size_t i = 0; i < f.comps[p].size(); ++i) {
      if (f.mask->inside[i]) f.comps[p][i] = u(rng);
    }
  }
  return f;
}

}  // namespace

TEST_CASE("derivative scatter is the exact discrete adjoint", "[helmholtz]") {
  const MetricField bump = MetricField::gaussian_bump(0.4, {0.15, -0.1}, 0.35, 1.0);
  const GridSpec g{65, 1.0};
  auto mask = disc_mask(g);
  std::mt19937 rng(911);
  for (int m : {1, 2, 3}) {
    const auto u = random_inside_field(m - 1, g, mask, rng);
    const auto f = random_inside_field(m, g, mask, rng);
    const double lhs = l2_inner(sym_derivative(u, bump), f, bump);
    const double rhs = l2_inner(u, sym_derivative_adjoint(f, bump), bump);
    CHECK(lhs == Approx(rhs).epsilon(1e-12));
  }
  // Complex data: the pairing is Hermitian and the stencil real, so the same
  // identity holds for the complex inner product.
  const auto ur = random_inside_field(1, g, mask, rng);
  const auto ui = random_inside_field(1, g, mask, rng);
  const auto fr = random_inside_field(2, g, mask, rng);
  const auto fi = random_inside_field(2, g, mask, rng);
  auto uc = ur.to_complex();
  axpy(uc, Complex(0.0, 1.0), ui.to_complex());
  auto fc = fr.to_complex();
  axpy(fc, Complex(0.0, 1.0), fi.to_complex());
  const Complex lhs = l2_inner(sym_derivative(uc, bump), fc, bump);
  const Complex rhs = l2_inner(uc, sym_derivative_adjoint(fc, bump), bump);
  CHECK(std::abs(lhs - rhs) < 1e-12 * std::abs(lhs));
}

TEST_CASE("potential solve recovers a known potential", "[helmholtz]") {
  const MetricField bump = MetricField::gaussian_bump(0.4, {0.15, -0.1}, 0.35, 1.0);
  const GridSpec g{129, 1.0};
  auto mask = disc_mask(g);
  const auto u0 = windowed_potential(1, g, mask);
  const auto f = sym_derivative(u0, bump);
  PotentialSolveInfo info;
  const auto u = solve_potential(f, bump, {}, &info);
  CHECK(info.iterations > 0);
  CHECK(info.rel_residual < 1e-8);
  auto diff = u;
  axpy(diff, -1.0, u0);
  CHECK(l2_norm(diff, bump) < 1e-3 * l2_norm(u0, bump));
}

TEST_CASE("solenoidal input produces a vanishing potential", "[helmholtz]") {
  const MetricField eu = MetricField::euclidean(1.0);
  const GridSpec g{129, 1.0};
  auto mask = disc_mask(g);
  // Rotational field (-d_y psi, d_x psi) of a rapidly decaying stream
  // function: divergence-free in the euclidean metric by construction.
  auto f = RealTensorField::zeros(1, g, mask);
  const Vec2 c{0.1, -0.05};
  const double s = 0.18;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!mask->inside[idx]) continue;
      const Vec2 x = g.node(ix, iy);
      const double psi = gauss(x, c, s);
      const double dpsi_dx = -(x.x - c.x) / (s * s) * psi;
      const double dpsi_dy = -(x.y - c.y) / (s * s) * psi;
      f.comps[1][idx] = -dpsi_dy;  // x-component
      f.comps[0][idx] = dpsi_dx;   // y-component
    }
  }
  const auto split = project_solenoidal(f, eu);
  const double fn = l2_norm(f, eu);
  CHECK(l2_norm(split.potential, eu) < 1e-3 * fn);
  auto diff = split.solenoidal;
  axpy(diff, -1.0, f);
  CHECK(l2_norm(diff, eu) < 1e-3 * fn);
}

TEST_CASE("euclidean gradient plus rotational field splits analytically",
          "[helmholtz]") {
  const MetricField eu = MetricField::euclidean(1.0);
  const GridSpec g{129, 1.0};
  auto mask = disc_mask(g);
  const Vec2 cphi{-0.12, 0.08}, cpsi{0.15, 0.1};
  const double sphi = 0.2, spsi = 0.22;
  auto f = RealTensorField::zeros(1, g, mask);
  auto rot = RealTensorField::zeros(1, g, mask);
  auto phi_nodal = RealTensorField::zeros(0, g, mask);
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const std::size_t idx = g.index(ix, iy);
      if (!mask->inside[idx]) continue;
      const Vec2 x = g.node(ix, iy);
      const double phi = gauss(x, cphi, sphi);
      const double psi = gauss(x, cpsi, spsi);
      const Vec2 gphi{-(x.x - cphi.x) / (sphi * sphi) * phi,
                      -(x.y - cphi.y) / (sphi * sphi) * phi};
      const Vec2 gpsi{-(x.x - cpsi.x) / (spsi * spsi) * psi,
                      -(x.y - cpsi.y) / (spsi * spsi) * psi};
      phi_nodal.comps[0][idx] = phi;
      rot.comps[1][idx] = -gpsi.y;
      rot.comps[0][idx] = gpsi.x;
      f.comps[1][idx] = gphi.x - gpsi.y;
      f.comps[0][idx] = gphi.y + gpsi.x;
    }
  }
  const auto split = project_solenoidal(f, eu);
  auto du_err = split.potential;
  axpy(du_err, -1.0, phi_nodal);
  CHECK(l2_norm(du_err, eu) < 1e-3 * l2_norm(phi_nodal, eu));
  auto sf_err = split.solenoidal;
  axpy(sf_err, -1.0, rot);
  CHECK(l2_norm(sf_err, eu) < 1e-3 * l2_norm(f, eu));
}

TEST_CASE("decomposition is orthogonal, Pythagorean, and idempotent",
          "[helmholtz]") {
  const MetricField bump = MetricField::gaussian_bump(0.4, {0.15, -0.1}, 0.35, 1.0);
  const GridSpec g{129, 1.0};
  auto mask = disc_mask(g);
  std::mt19937 rng(5150);
  const auto draws = testsupport::draw_components(2, rng, 6.0, 0.5, 0.8);
  const auto f = testsupport::sample_components(2, g, mask, draws);
  const auto split = project_solenoidal(f, bump);
  const auto du = sym_derivative(split.potential, bump);
  const double fn = l2_norm(f, bump);
  const double sn = l2_norm(split.solenoidal, bump);
  const double dn = l2_norm(du, bump);
  // Orthogonality holds at stencil truncation order: the solve drives the
  // composed divergence of sf to zero, and <sf, du'> pairs that divergence
  // against the potential up to the h^4 difference between the divergence
  // stencil and the exact transpose of the derivative stencil.  (Measured
  // 3.3e-4 here, falling to 1.1e-4 at n=257.)
  CHECK(std::abs(l2_inner(split.solenoidal, du, bump)) < 1e-3 * sn * dn);
  CHECK(sqr(fn) == Approx(sqr(sn) + sqr(dn)).epsilon(1e-3));
  // Idempotency: re-projecting the solenoidal part changes nothing.
  const auto split2 = project_solenoidal(split.solenoidal, bump);
  auto diff = split2.solenoidal;
  axpy(diff, -1.0, split.solenoidal);
  CHECK(l2_norm(diff, bump) < 1e-6 * fn);
  // A-posteriori defining property: the divergence of the solenoidal part is
  // the solver residual, at every degree of freedom.
  const auto div = divergence(split.solenoidal, bump);
  CHECK(l2_norm(div, bump) < 1e-3 * fn);
}

TEST_CASE("ray transform annihilates the recovered potential part", "[helmholtz]") {
  const MetricField eu = MetricField::euclidean(1.0);
  const GridSpec g{193, 1.0};
  auto mask = disc_mask(g);
  const auto u0 = windowed_potential(0, g, mask);
  const auto f = sym_derivative(u0, eu);
  const auto split = project_solenoidal(f, eu);
  auto du = f;
  axpy(du, -1.0, split.solenoidal);
  FanSpec fan;
  fan.n_z = 60;
  fan.n_w = 61;
  TransportOptions opt;
  opt.quad_stride = 2;
  const auto sino = forward(du, eu, build_ray_table(eu, fan, {}, opt));
  const double tnorm = std::sqrt(sinogram_inner(sino, sino));
  CHECK(tnorm < 1e-3 * l2_norm(du, eu));
}

TEST_CASE("stability report is refinement-stable and flags pure potentials",
          "[helmholtz]") {
  const MetricField eu = MetricField::euclidean(1.0);
  std::mt19937 rng(24601);
  for (int draw = 0; draw < 5; ++draw) {
    const auto draws = testsupport::draw_components(2, rng, 7.0, 0.5, 0.8);
    double ratio[2];
    int k = 0;
    for (int n : {65, 129}) {
      const GridSpec g{n, 1.0};
      auto mask = disc_mask(g);
      const auto f = testsupport::sample_components(2, g, mask, draws);
      const auto rep = stability_report(f, eu);
      REQUIRE(rep.f_l2 > 0.0);
      CHECK(rep.solenoidal_ratio <= 1.0 + 1e-3);
      CHECK(rep.sf_h1 > 0.0);
      ratio[k++] = rep.solenoidal_ratio;
    }
    // Same continuum draw sampled on both grids: the empirical projection
    // norm must be grid-converged well within the 10% stability budget.
    CHECK(std::abs(ratio[1] - ratio[0]) < 0.1 * ratio[1]);
  }
  // Pure potential input: the solenoidal remainder is solver noise.
  const GridSpec g{97, 1.0};
  auto mask = disc_mask(g);
  const auto u0 = windowed_potential(1, g, mask);
  const auto rep = stability_report(sym_derivative(u0, eu), eu);
  CHECK(rep.solenoidal_ratio < 1e-3);
  // Zero input short-circuits.
  const auto zero_rep = stability_report(RealTensorField::zeros(2, g, mask), eu);
  CHECK(zero_rep.f_l2 == 0.0);
  CHECK(zero_rep.solenoidal_ratio == 0.0);
}

TEST_CASE("solver reports non-convergence with the residual", "[helmholtz]") {
  const MetricField eu = MetricField::euclidean(1.0);
  const GridSpec g{65, 1.0};
  auto mask = disc_mask(g);
  const auto u0 = windowed_potential(0, g, mask);
  const auto f = sym_derivative(u0, eu);
  PotentialSolveOptions opt;
  opt.max_iter = 3;
  CHECK_THROWS_AS(solve_potential(f, eu, opt), NumericalError);
  try {
    solve_potential(f, eu, opt);
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("relative residual") != std::string::npos);
  }
}
