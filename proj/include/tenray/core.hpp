// tenray — small shared utilities: 2D vectors, errors, hashing, windows.
//
// Everything in the library works in a fixed Cartesian chart on the disc
// |x| <= R, so plain 2-vectors and 2x2 matrices are enough.  We keep them
// as aggregates with explicit component access rather than pulling a
// linear-algebra library into the hot paths; Eigen is used only where
// dense factorizations are genuinely needed (see symbols.hpp).

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tenray {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

using Complex = std::complex<double>;

// ---------------------------------------------------------------------------
// Error taxonomy.  The CLI maps these to process exit codes, so library code
// should throw the most specific one that applies.
// ---------------------------------------------------------------------------

// Numerical failure: breached tolerance, non-convergence, invalid geometry.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Bad user input: malformed config, unknown keys, out-of-range parameters.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / serialization problems.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// 2D vectors and matrices.
// ---------------------------------------------------------------------------

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  Vec2 operator-() const { return {-x, -y}; }

  double operator[](int i) const { return i == 0 ? x : y; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// Euclidean dot/norm on chart components (metric-aware versions live on
// MetricField).
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2& v) { return std::sqrt(dot(v, v)); }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

// Counter-clockwise rotation by +90 degrees in the chart.
inline Vec2 rot90(const Vec2& v) { return {-v.y, v.x}; }

inline Vec2 normalized(const Vec2& v) {
  const double n = norm(v);
  if (n == 0.0) throw NumericalError("normalized: zero vector");
  return v / n;
}

struct Mat2 {
  // Row-major: [a b; c d].
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

  Vec2 apply(const Vec2& v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
  double det() const { return a * d - b * c; }
  Mat2 inverse() const {
    const double dt = det();
    if (std::abs(dt) < 1e-300) throw NumericalError("Mat2::inverse: singular matrix");
    return {d / dt, -b / dt, -c / dt, a / dt};
  }
};

// ---------------------------------------------------------------------------
// Smooth cutoff windows.
// ---------------------------------------------------------------------------

// Quintic smoothstep: 0 for u<=0, 1 for u>=1, C^2 across the joins.
inline double smoothstep5(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

// Radial plateau window: identically 1 for r <= plateau, 0 for r >= radius,
// C^2 monotone in between.  Used for probe envelopes and localizers, where a
// flat top keeps the amplitude (and its derivatives) trivial at the center.
inline double plateau_window(double r, double plateau, double radius) {
  if (radius <= plateau) throw UsageError("plateau_window: radius must exceed plateau");
  return smoothstep5((radius - r) / (radius - plateau));
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit hashing (checksums for manifests and determinism checks).
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t nbytes,
                             std::uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < nbytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Misc small helpers.
// ---------------------------------------------------------------------------

inline double sqr(double v) { return v * v; }

// Wrap an angle-like coordinate into [0, period).
inline double wrap_periodic(double v, double period) {
  double w = std::fmod(v, period);
  if (w < 0.0) w += period;
  return w;
}

// Binomial coefficient for small arguments (tensor component multiplicities).
inline int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace tenray
