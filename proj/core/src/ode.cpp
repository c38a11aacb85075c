#include "lorwave/ode.hpp"

#include <cmath>

namespace lorwave {

Mat4 invert_spd_like(const Mat4& g, int dim, double* cond_hint) {
  double a[4][8];
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) a[i][j] = g[i][j];
    for (int j = 0; j < dim; ++j) a[i][dim + j] = (i == j) ? 1.0 : 0.0;
  }
  double max_pivot = 0.0, min_pivot = 1e300;
  for (int col = 0; col < dim; ++col) {
    int piv = col;
    for (int r = col + 1; r < dim; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (piv != col)
      for (int j = 0; j < 2 * dim; ++j) std::swap(a[col][j], a[piv][j]);
    const double p = a[col][col];
    max_pivot = std::max(max_pivot, std::abs(p));
    min_pivot = std::min(min_pivot, std::abs(p));
    if (std::abs(p) < 1e-14 * std::max(1.0, max_pivot)) {
      const double cond = max_pivot / std::max(std::abs(p), 1e-300);
      throw SingularMetricError("matrix numerically singular", cond);
    }
    const double inv = 1.0 / p;
    for (int j = 0; j < 2 * dim; ++j) a[col][j] *= inv;
    for (int r = 0; r < dim; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (int j = 0; j < 2 * dim; ++j) a[r][j] -= f * a[col][j];
    }
  }
  if (cond_hint) *cond_hint = max_pivot / std::max(min_pivot, 1e-300);
  Mat4 out{};
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) out[i][j] = a[i][dim + j];
  return out;
}

double det(const Mat4& m, int dim) {
  double a[4][4];
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a[i][j] = m[i][j];
  double d = 1.0;
  for (int col = 0; col < dim; ++col) {
    int piv = col;
    for (int r = col + 1; r < dim; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (piv != col) {
      for (int j = 0; j < dim; ++j) std::swap(a[col][j], a[piv][j]);
      d = -d;
    }
    if (a[col][col] == 0.0) return 0.0;
    d *= a[col][col];
    for (int r = col + 1; r < dim; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int j = col; j < dim; ++j) a[r][j] -= f * a[col][j];
    }
  }
  return d;
}

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                 e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                 e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

}  // namespace

void integrate_ode(const OdeRhs& f, std::vector<double>& y, double s0, double s1,
                   const OdeOptions& opts, const OdeObserver& observe) {
  const std::size_t m = y.size();
  const double dir = (s1 >= s0) ? 1.0 : -1.0;
  double s = s0;
  double h = std::min(std::abs(opts.initial_step), std::abs(s1 - s0));
  if (opts.max_step > 0) h = std::min(h, opts.max_step);
  if (h == 0.0) return;

  std::vector<double> k1(m), k2(m), k3(m), k4(m), k5(m), k6(m), k7(m), yt(m), ynew(m);
  f(s, y, k1);
  if (observe && !observe(s, y, k1)) return;

  for (int step = 0; step < opts.max_steps; ++step) {
    if (dir * (s - s1) >= 0.0) return;
    h = std::min(h, std::abs(s1 - s));
    const double hs = dir * h;

    for (std::size_t i = 0; i < m; ++i) yt[i] = y[i] + hs * a21 * k1[i];
    f(s + c2 * hs, yt, k2);
    for (std::size_t i = 0; i < m; ++i) yt[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
    f(s + c3 * hs, yt, k3);
    for (std::size_t i = 0; i < m; ++i)
      yt[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    f(s + c4 * hs, yt, k4);
    for (std::size_t i = 0; i < m; ++i)
      yt[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    f(s + c5 * hs, yt, k5);
    for (std::size_t i = 0; i < m; ++i)
      yt[i] = y[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                           a65 * k5[i]);
    f(s + hs, yt, k6);
    for (std::size_t i = 0; i < m; ++i)
      ynew[i] = y[i] + hs * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                             b6 * k6[i]);
    f(s + hs, ynew, k7);

    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double ei = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                              e6 * k6[i] + e7 * k7[i]);
      const double sc = opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err = std::max(err, std::abs(ei) / sc);
    }

    if (err <= 1.0) {
      s += hs;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      if (observe && !observe(s, y, k1)) return;
      if (dir * (s - s1) >= 0.0) return;
    }

    double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
    fac = std::min(5.0, std::max(0.2, fac));
    h *= fac;
    if (opts.max_step > 0) h = std::min(h, opts.max_step);
    if (h < opts.min_step)
      throw IntegrationError("step-size underflow in ODE integration", s);
  }
  throw IntegrationError("ODE step budget exhausted", s);
}

}  // namespace lorwave
