// Test-support: independent adaptive Dormand-Prince RK45 integrator.
//
// Deliberately separate from the library's fixed-step RK4 so that geodesic
// and transverse-field integrations can be cross-checked against a different
// scheme with a much tighter, error-controlled tolerance.

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace testsupport {

template <std::size_t N>
using State = std::array<double, N>;

template <std::size_t N>
State<N> axpy(const State<N>& y, double a, const State<N>& d) {
  State<N> r;
  for (std::size_t i = 0; i < N; ++i) r[i] = y[i] + a * d[i];
  return r;
}

// One embedded Dormand-Prince 5(4) step; returns the 5th-order solution and
// writes the embedded error estimate.
template <std::size_t N, class F>
State<N> dp45_step(const F& f, double t, const State<N>& y, double h, double& err) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  const State<N> k1 = f(t, y);
  State<N> tmp = axpy(y, h * (1.0 / 5), k1);
  const State<N> k2 = f(t + c2 * h, tmp);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (3.0 / 40 * k1[i] + 9.0 / 40 * k2[i]);
  const State<N> k3 = f(t + c3 * h, tmp);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (44.0 / 45 * k1[i] - 56.0 / 15 * k2[i] + 32.0 / 9 * k3[i]);
  const State<N> k4 = f(t + c4 * h, tmp);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (19372.0 / 6561 * k1[i] - 25360.0 / 2187 * k2[i] +
                         64448.0 / 6561 * k3[i] - 212.0 / 729 * k4[i]);
  const State<N> k5 = f(t + c5 * h, tmp);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (9017.0 / 3168 * k1[i] - 355.0 / 33 * k2[i] + 46732.0 / 5247 * k3[i] +
                         49.0 / 176 * k4[i] - 5103.0 / 18656 * k5[i]);
  const State<N> k6 = f(t + h, tmp);
  State<N> y5;
  for (std::size_t i = 0; i < N; ++i)
    y5[i] = y[i] + h * (35.0 / 384 * k1[i] + 500.0 / 1113 * k3[i] + 125.0 / 192 * k4[i] -
                        2187.0 / 6784 * k5[i] + 11.0 / 84 * k6[i]);
  const State<N> k7 = f(t + h, y5);
  err = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double e = h * (71.0 / 57600 * k1[i] - 71.0 / 16695 * k3[i] + 71.0 / 1920 * k4[i] -
                          17253.0 / 339200 * k5[i] + 22.0 / 525 * k6[i] - 1.0 / 40 * k7[i]);
    err += e * e;
  }
  err = std::sqrt(err);
  return y5;
}

// Integrate y' = f(t, y) from t0 to t1 with adaptive steps.
template <std::size_t N, class F>
State<N> integrate(const F& f, double t0, State<N> y, double t1, double tol = 1e-12) {
  double t = t0;
  double h = (t1 > t0 ? 1.0 : -1.0) * std::max(1e-6, std::abs(t1 - t0) / 100.0);
  int guard = 0;
  while ((t1 - t) * (t1 > t0 ? 1.0 : -1.0) > 1e-15) {
    if (++guard > 2000000) throw std::runtime_error("reference integrate: too many steps");
    if (std::abs(h) > std::abs(t1 - t)) h = t1 - t;
    double err = 0.0;
    const State<N> ynew = dp45_step(f, t, y, h, err);
    const double scale = tol * (1.0 + 10.0);
    if (err <= scale) {
      t += h;
      y = ynew;
    }
    const double fac = (err > 0.0) ? 0.9 * std::pow(scale / err, 0.2) : 2.0;
    h *= std::min(4.0, std::max(0.1, fac));
  }
  return y;
}

// Integrate until event(y) crosses from negative to positive; returns the
// state and time of the crossing to within `ttol`.
template <std::size_t N, class F, class E>
std::pair<double, State<N>> integrate_to_event(const F& f, double t0, State<N> y,
                                               const E& event, double max_t,
                                               double tol = 1e-12, double ttol = 1e-12) {
  double t = t0;
  double h = 1e-3;
  int guard = 0;
  while (t < max_t) {
    if (++guard > 2000000) throw std::runtime_error("reference event: too many steps");
    double err = 0.0;
    State<N> ynew = dp45_step(f, t, y, h, err);
    const double scale = tol * (1.0 + 10.0);
    if (err <= scale) {
      if (event(ynew) > 0.0) {
        // Bisect the step length from the accepted state y.
        double lo = 0.0, hi = h;
        State<N> best = ynew;
        for (int it = 0; it < 100 && hi - lo > ttol; ++it) {
          const double mid = 0.5 * (lo + hi);
          double e2 = 0.0;
          State<N> trial = dp45_step(f, t, y, mid, e2);
          if (event(trial) > 0.0) {
            hi = mid;
            best = trial;
          } else {
            lo = mid;
          }
        }
        return {t + hi, best};
      }
      t += h;
      y = ynew;
    }
    const double fac = (err > 0.0) ? 0.9 * std::pow(scale / err, 0.2) : 2.0;
    h *= std::min(4.0, std::max(0.1, fac));
    h = std::min(h, 5e-2);
  }
  throw std::runtime_error("reference event: no crossing before max_t");
}

}  // namespace testsupport
