// Transverse (Jacobi) field tests: closed forms on model geometries,
// cross-checks against the reference integrator, conjugate pair data.

#include <catch2/catch_amalgamated.hpp>

#include "tenray/jacobi.hpp"
#include "support/oracles.hpp"
#include "support/reference_ode.hpp"

using namespace tenray;
namespace ts = testsupport;

TEST_CASE("euclidean transverse fields are linear", "[jacobi]") {
  const MetricField eu = MetricField::euclidean(1.0);
  const GeodesicPath p = shoot_from_boundary(eu, 2.0, 0.4);
  const JacobiSolution s = integrate_scalar_jacobi(eu, p, 0.0, 1.0);
  CHECK(s.value_at(0.7) == Catch::Approx(0.7).epsilon(1e-12));
  CHECK(s.deriv_at(0.7) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(find_conjugate_points(eu, p).empty());
}

TEST_CASE("constant curvature transverse fields are sinusoidal", "[jacobi]") {
  const MetricField cc = MetricField::constant_curvature(1.0, 1.25);
  const double z = cc.z_of_beta(kPi);
  const GeodesicPath p = shoot_from_boundary(cc, z, 0.0);
  REQUIRE(p.length() == Catch::Approx(3.5842215382853757).epsilon(1e-9));

  const JacobiSolution s = integrate_scalar_jacobi(cc, p, 0.0, 1.0);
  for (double t : {0.3, 1.0, 2.2, 3.1}) {
    CHECK(s.value_at(t) == Catch::Approx(std::sin(t)).margin(2e-9));
    CHECK(s.deriv_at(t) == Catch::Approx(std::cos(t)).margin(2e-9));
  }

  // First conjugate point of the entry at parameter pi, slope -1.
  const auto cps = find_conjugate_points(cc, p);
  REQUIRE(cps.size() == 1);
  CHECK(cps[0].s == Catch::Approx(kPi).margin(1e-9));
  CHECK(cps[0].bdot == Catch::Approx(-1.0).margin(1e-8));
}

TEST_CASE("wronskian of independent solutions is conserved", "[jacobi]") {
  const MetricField bump = MetricField::gaussian_bump(1.0, {0.1, -0.05}, 0.5, 1.0);
  const GeodesicPath p = shoot_from_boundary(bump, 0.7, 0.25);
  const JacobiSolution a = integrate_scalar_jacobi(bump, p, 0.0, 1.0);
  const JacobiSolution b = integrate_scalar_jacobi(bump, p, 1.0, 0.0);
  CHECK(wronskian(a, b, 0.0) == Catch::Approx(-1.0).epsilon(1e-12));
  CHECK(wronskian(a, b, 0.8 * p.length()) == Catch::Approx(-1.0).epsilon(1e-10));
  CHECK(wronskian_drift(a, b) < 1e-11);
}

TEST_CASE("f factor closed form on constant curvature", "[jacobi]") {
  const MetricField cc = MetricField::constant_curvature(1.0, 1.25);
  const GeodesicPath p = shoot_from_boundary(cc, cc.z_of_beta(kPi), 0.0);
  const double t0 = 0.5;
  for (double s0 : {0.9, 1.7, 2.8, 3.4}) {
    CHECK(f_factor(cc, p, t0, s0) == Catch::Approx(std::cos(s0 - t0)).margin(1e-9));
  }
  // Reversal symmetry f(t0, s0) = f(s0, t0) (both solve the same equation
  // with the roles of the endpoints swapped).
  CHECK(f_factor(cc, p, 0.4, 2.9) == Catch::Approx(f_factor(cc, p, 2.9, 0.4)).margin(1e-10));
}

TEST_CASE("conjugate pair datum on the model equator chord", "[jacobi]") {
  const MetricField cc = MetricField::constant_curvature(1.0, 1.25);
  const GeodesicPath p = shoot_from_boundary(cc, cc.z_of_beta(kPi), 0.0);

  const auto datum = find_symmetric_pair(cc, p);
  REQUIRE(datum.has_value());
  // Symmetric placement: t0 = (L - pi) / 2 with the pair at (-1, 0), (1, 0).
  const double t0_want = (3.5842215382853757 - kPi) / 2.0;
  CHECK(datum->t0 == Catch::Approx(t0_want).margin(1e-7));
  CHECK(datum->s0 - datum->t0 == Catch::Approx(kPi).margin(1e-7));
  CHECK(datum->x0.x == Catch::Approx(-1.0).margin(1e-7));
  CHECK(std::abs(datum->x0.y) < 1e-9);
  CHECK(datum->y0.x == Catch::Approx(1.0).margin(1e-7));

  // Slope of the vanishing transverse field at the far point is -1: the
  // matched codirection is opposite to the rotated tangent and unit length.
  CHECK(datum->bdot_s0 == Catch::Approx(-1.0).margin(1e-7));
  CHECK(datum->rho == Catch::Approx(1.0).margin(1e-7));
  CHECK(cc.norm_cov(datum->y0, datum->eta) == Catch::Approx(1.0).margin(1e-7));

  // Both boundary ends are hit normally; the transverse comparison value is
  // cos(pi) = -1 from either end.
  CHECK(datum->cos_w0 == Catch::Approx(1.0).margin(1e-8));
  CHECK(datum->cos_w1 == Catch::Approx(1.0).margin(1e-8));
  CHECK(datum->f_forward == Catch::Approx(-1.0).margin(1e-8));
  CHECK(datum->f_backward == Catch::Approx(datum->f_forward).margin(1e-10));

  // Unit conormal at x0 is perpendicular to the tangent.
  CHECK(cc.norm_cov(datum->x0, datum->xi_unit) == Catch::Approx(1.0).epsilon(1e-10));
  const Vec2 v0_cov = cc.lower(datum->x0, datum->v0);
  CHECK(cc.inner_cov(datum->x0, datum->xi_unit, v0_cov) == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("conjugate points agree with the reference integrator", "[jacobi]") {
  // Generic bump geometry, generic chord: integrate the coupled
  // geodesic + transverse system with the adaptive reference scheme and
  // compare zero locations.
  const MetricField bump = MetricField::gaussian_bump(1.15, {0.0, 0.0}, 0.5, 1.0);
  const GeodesicPath p = shoot_from_boundary(bump, bump.z_of_beta(kPi), 0.07);
  REQUIRE(!p.trapped);

  const auto rhs = [&bump](double, const ts::State<6>& y) -> ts::State<6> {
    const Vec2 x{y[0], y[1]}, v{y[2], y[3]};
    const Vec2 dl = bump.grad_lambda(x);
    const double lv = dot(dl, v);
    const double vv = dot(v, v);
    const Vec2 a = v * (-2.0 * lv) + dl * vv;
    const double K = bump.gauss_curvature(x);
    return {v.x, v.y, a.x, a.y, y[5], -K * y[4]};
  };

  const auto cps = find_conjugate_points(bump, p);
  if (!cps.empty()) {
    const auto event = [](const ts::State<6>& y) { return -y[4]; };  // b -> negative
    const ts::State<6> y0{p.entry_point.x, p.entry_point.y, p.entry_vel.x,
                          p.entry_vel.y,   0.0,             1.0};
    const auto [t_ref, y_ref] = ts::integrate_to_event(rhs, 0.0, y0, event, p.length());
    CHECK(cps[0].s == Catch::Approx(t_ref).margin(1e-8));
    CHECK(cps[0].bdot == Catch::Approx(y_ref[5]).margin(1e-6));
  } else {
    SUCCEED("no conjugate point on this chord; nothing to compare");
  }
}

TEST_CASE("initial data away from the anchor", "[jacobi]") {
  const MetricField cc = MetricField::constant_curvature(1.0, 0.8);
  const GeodesicPath p = shoot_from_boundary(cc, 0.3, 0.2);
  const double t0 = 0.4 * p.length();
  const JacobiSolution s = integrate_scalar_jacobi(cc, p, 0.0, 1.0, t0);
  CHECK(s.value_at(t0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(s.deriv_at(t0) == Catch::Approx(1.0).margin(1e-12));
  for (double dt : {-0.3, 0.25, 0.6}) {
    if (t0 + dt > 0 && t0 + dt < p.length()) {
      CHECK(s.value_at(t0 + dt) == Catch::Approx(std::sin(dt)).margin(1e-9));
    }
  }
}
