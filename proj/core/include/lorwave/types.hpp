#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lorwave {

// Spacetime dimension is at most 3+1. Chart vectors and tensors are stored in
// fixed 4-slot arrays; entries at indices >= dim are kept at zero.
inline constexpr int kMaxDim = 4;

using Vec4 = std::array<double, 4>;
using Mat4 = std::array<Vec4, 4>;

struct Tens3 {
  double c[4][4][4] = {};
};

struct Tens4 {
  double c[4][4][4][4] = {};
};

struct Tens5 {
  double c[4][4][4][4][4] = {};
};

inline Vec4 zero_vec() { return Vec4{0.0, 0.0, 0.0, 0.0}; }

inline Vec4 add(const Vec4& a, const Vec4& b) {
  return Vec4{a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
}

inline Vec4 sub(const Vec4& a, const Vec4& b) {
  return Vec4{a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]};
}

inline Vec4 scale(double s, const Vec4& a) {
  return Vec4{s * a[0], s * a[1], s * a[2], s * a[3]};
}

inline double dot_euclid(const Vec4& a, const Vec4& b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) s += a[i] * b[i];
  return s;
}

inline double norm_euclid(const Vec4& a, int dim) {
  return std::sqrt(dot_euclid(a, a, dim));
}

// g(u, v) for a metric given by its component matrix.
inline double metric_dot(const Mat4& g, const Vec4& u, const Vec4& v, int dim) {
  double s = 0.0;
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) s += g[a][b] * u[a] * v[b];
  return s;
}

// Solve g x = rhs by Gaussian elimination with partial pivoting.
// Throws on (numerically) singular input; `cond_hint` reports the pivot ratio.
Mat4 invert_spd_like(const Mat4& g, int dim, double* cond_hint = nullptr);

inline Vec4 mat_vec(const Mat4& m, const Vec4& v, int dim) {
  Vec4 out = zero_vec();
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) out[a] += m[a][b] * v[b];
  return out;
}

double det(const Mat4& m, int dim);

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

struct ChartDomainError : std::runtime_error {
  explicit ChartDomainError(const std::string& what) : std::runtime_error(what) {}
};

struct SingularMetricError : std::runtime_error {
  double condition;
  SingularMetricError(const std::string& what, double cond)
      : std::runtime_error(what), condition(cond) {}
};

struct ConvergenceError : std::runtime_error {
  double residual;
  ConvergenceError(const std::string& what, double res)
      : std::runtime_error(what), residual(res) {}
};

struct IntegrationError : std::runtime_error {
  double where;
  IntegrationError(const std::string& what, double s)
      : std::runtime_error(what), where(s) {}
};

struct DivergenceError : std::runtime_error {
  double where;
  DivergenceError(const std::string& what, double s)
      : std::runtime_error(what), where(s) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyRegionError : std::runtime_error {
  explicit EmptyRegionError(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic counter-based generator (splitmix64) so sweeps are
// reproducible regardless of evaluation order.
struct CounterRng {
  std::uint64_t state;
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : state(seed * 0x9e3779b97f4a7c15ull + stream * 0xbf58476d1ce4e5b9ull) {}
  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // uniform in [0,1)
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }
  // uniform in [a,b)
  double uniform(double a, double b) { return a + (b - a) * next_double(); }
  // standard normal via Box-Muller
  double normal() {
    double u1 = next_double(), u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

}  // namespace lorwave
