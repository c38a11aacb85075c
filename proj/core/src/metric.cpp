#include "lorwave/metric.hpp"

#include <cmath>
#include <sstream>

namespace lorwave {

namespace {

constexpr double kFdStep = 1e-3;  // chart-unit step for curvature differences

Vec4 shifted(const Vec4& x, int axis, double h) {
  Vec4 y = x;
  y[axis] += h;
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// Defaults: finite-difference curvature path (4th-order central differences)
// ---------------------------------------------------------------------------

Tens3 MetricModel::christoffel(const Vec4& x) const {
  const int d = dim_;
  // dg[m][a][b] = d_m g_ab
  double dg[4][4][4];
  for (int m = 0; m < d; ++m) {
    const Mat4 gp2 = metric(shifted(x, m, 2 * kFdStep));
    const Mat4 gp1 = metric(shifted(x, m, kFdStep));
    const Mat4 gm1 = metric(shifted(x, m, -kFdStep));
    const Mat4 gm2 = metric(shifted(x, m, -2 * kFdStep));
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        dg[m][a][b] =
            (-gp2[a][b] + 8 * gp1[a][b] - 8 * gm1[a][b] + gm2[a][b]) / (12 * kFdStep);
  }
  const Mat4 ginv = invert_spd_like(metric(x), d);
  Tens3 out;
  for (int l = 0; l < d; ++l)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        double s = 0.0;
        for (int m = 0; m < d; ++m)
          s += ginv[l][m] * (dg[a][m][b] + dg[b][m][a] - dg[m][a][b]);
        out.c[l][a][b] = 0.5 * s;
      }
  return out;
}

Tens4 MetricModel::riemann(const Vec4& x) const {
  const int d = dim_;
  // dG[m][l][a][b] = d_m Gamma^l_ab
  double dG[4][4][4][4];
  for (int m = 0; m < d; ++m) {
    const Tens3 gp2 = christoffel(shifted(x, m, 2 * kFdStep));
    const Tens3 gp1 = christoffel(shifted(x, m, kFdStep));
    const Tens3 gm1 = christoffel(shifted(x, m, -kFdStep));
    const Tens3 gm2 = christoffel(shifted(x, m, -2 * kFdStep));
    for (int l = 0; l < d; ++l)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          dG[m][l][a][b] = (-gp2.c[l][a][b] + 8 * gp1.c[l][a][b] - 8 * gm1.c[l][a][b] +
                            gm2.c[l][a][b]) /
                           (12 * kFdStep);
  }
  const Tens3 G = christoffel(x);
  const Mat4 g = metric(x);
  Tens4 up;  // R^l_{s m n}
  for (int l = 0; l < d; ++l)
    for (int s = 0; s < d; ++s)
      for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n) {
          double t = dG[m][l][n][s] - dG[n][l][m][s];
          for (int k = 0; k < d; ++k)
            t += G.c[l][m][k] * G.c[k][n][s] - G.c[l][n][k] * G.c[k][m][s];
          up.c[l][s][m][n] = t;
        }
  Tens4 out;
  for (int l = 0; l < d; ++l)
    for (int s = 0; s < d; ++s)
      for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n) {
          double t = 0.0;
          for (int k = 0; k < d; ++k) t += g[l][k] * up.c[k][s][m][n];
          out.c[l][s][m][n] = t;
        }
  return out;
}

Tens4 MetricModel::nabla_riemann_dir(const Vec4& x, int dir) const {
  const int d = dim_;
  const Tens4 Rp2 = riemann(shifted(x, dir, 2 * kFdStep));
  const Tens4 Rp1 = riemann(shifted(x, dir, kFdStep));
  const Tens4 Rm1 = riemann(shifted(x, dir, -kFdStep));
  const Tens4 Rm2 = riemann(shifted(x, dir, -2 * kFdStep));
  const Tens4 R = riemann(x);
  const Tens3 G = christoffel(x);
  Tens4 out;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int c = 0; c < d; ++c)
        for (int e = 0; e < d; ++e) {
          double t = (-Rp2.c[a][b][c][e] + 8 * Rp1.c[a][b][c][e] -
                      8 * Rm1.c[a][b][c][e] + Rm2.c[a][b][c][e]) /
                     (12 * kFdStep);
          for (int k = 0; k < d; ++k) {
            t -= G.c[k][dir][a] * R.c[k][b][c][e];
            t -= G.c[k][dir][b] * R.c[a][k][c][e];
            t -= G.c[k][dir][c] * R.c[a][b][k][e];
            t -= G.c[k][dir][e] * R.c[a][b][c][k];
          }
          out.c[a][b][c][e] = t;
        }
  return out;
}

Tens4 MetricModel::nabla_riemann_vec(const Vec4& x, const Vec4& u) const {
  const int d = dim_;
  const double h = 1e-4;
  Vec4 xp = x, xm = x;
  for (int a = 0; a < d; ++a) {
    xp[a] += h * u[a];
    xm[a] -= h * u[a];
  }
  const Tens4 Rp = riemann(xp);
  const Tens4 Rm = riemann(xm);
  const Tens4 R = riemann(x);
  const Tens3 G = christoffel(x);
  // connection contracted with the direction
  double Gu[4][4];
  for (int l = 0; l < d; ++l)
    for (int a = 0; a < d; ++a) {
      double s = 0.0;
      for (int m = 0; m < d; ++m) s += G.c[l][m][a] * u[m];
      Gu[l][a] = s;
    }
  Tens4 out;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int c = 0; c < d; ++c)
        for (int e = 0; e < d; ++e) {
          double t = (Rp.c[a][b][c][e] - Rm.c[a][b][c][e]) / (2 * h);
          for (int k = 0; k < d; ++k) {
            t -= Gu[k][a] * R.c[k][b][c][e];
            t -= Gu[k][b] * R.c[a][k][c][e];
            t -= Gu[k][c] * R.c[a][b][k][e];
            t -= Gu[k][e] * R.c[a][b][c][k];
          }
          out.c[a][b][c][e] = t;
        }
  return out;
}

// ---------------------------------------------------------------------------
// Catalog models
// ---------------------------------------------------------------------------

namespace {

class MinkowskiModel final : public MetricModel {
 public:
  MinkowskiModel(int dim, std::map<std::string, double> params)
      : MetricModel("minkowski", dim, std::move(params), 100.0) {}
  bool flat() const override { return true; }
  Mat4 metric(const Vec4& x) const override {
    if (!in_chart(x)) throw ChartDomainError("point outside chart domain");
    Mat4 g{};
    g[0][0] = -1.0;
    for (int i = 1; i < dim_; ++i) g[i][i] = 1.0;
    return g;
  }
  Tens3 christoffel(const Vec4&) const override { return Tens3{}; }
  Tens4 riemann(const Vec4&) const override { return Tens4{}; }
  Tens4 nabla_riemann_dir(const Vec4&, int) const override { return Tens4{}; }
  Tens4 nabla_riemann_vec(const Vec4&, const Vec4&) const override { return Tens4{}; }
};

// -dt^2 + w^2 sum_i dx_i^2 with w = 1 + delta sin(k t) prod_i sin(k x_i)
class WarpedModel final : public MetricModel {
 public:
  WarpedModel(int dim, std::map<std::string, double> params)
      : MetricModel("warped", dim, std::move(params), 100.0),
        delta_(param("delta", 0.0)), k_(param("k", 1.0)) {}

  double warp(const Vec4& x) const {
    double s = std::sin(k_ * x[0]);
    for (int i = 1; i < dim_; ++i) s *= std::sin(k_ * x[i]);
    return 1.0 + delta_ * s;
  }
  // first partials of w
  void warp_grad(const Vec4& x, double* dw) const {
    for (int a = 0; a < dim_; ++a) {
      double s = delta_ * k_;
      for (int b = 0; b < dim_; ++b)
        s *= (b == a) ? std::cos(k_ * x[b]) : std::sin(k_ * x[b]);
      dw[a] = s;
    }
  }

  Mat4 metric(const Vec4& x) const override {
    if (!in_chart(x)) throw ChartDomainError("point outside chart domain");
    const double w = warp(x);
    Mat4 g{};
    g[0][0] = -1.0;
    for (int i = 1; i < dim_; ++i) g[i][i] = w * w;
    return g;
  }

  Tens3 christoffel(const Vec4& x) const override {
    const double w = warp(x);
    if (std::abs(w) < 1e-12)
      throw SingularMetricError("warp factor vanished", 1.0 / std::abs(w));
    double dw[4];
    warp_grad(x, dw);
    Tens3 G;
    // spatial block: Gamma^i_{jk} = (dw_j d_ik + dw_k d_ij - dw_i d_jk)/w
    for (int i = 1; i < dim_; ++i)
      for (int j = 1; j < dim_; ++j)
        for (int k = 1; k < dim_; ++k) {
          double v = 0.0;
          if (i == k) v += dw[j];
          if (i == j) v += dw[k];
          if (j == k) v -= dw[i];
          G.c[i][j][k] = v / w;
        }
    // mixed blocks: Gamma^t_{ii} = w dw_t, Gamma^i_{ti} = dw_t / w
    for (int i = 1; i < dim_; ++i) {
      G.c[i][0][i] = G.c[i][i][0] = dw[0] / w;
      G.c[0][i][i] = w * dw[0];
    }
    return G;
  }

  Tens4 riemann(const Vec4& x) const override {
    if (dim_ != 2) return MetricModel::riemann(x);
    // 1+1: single independent component R_{txtx} = -w * d^2_t w
    const double w = warp(x);
    const double wtt = -k_ * k_ * delta_ * std::sin(k_ * x[0]) * std::sin(k_ * x[1]);
    const double val = -w * wtt;
    Tens4 R;
    R.c[0][1][0][1] = R.c[1][0][1][0] = val;
    R.c[0][1][1][0] = R.c[1][0][0][1] = -val;
    return R;
  }

  Tens4 nabla_riemann_dir(const Vec4& x, int dir) const override {
    if (dim_ != 2) return MetricModel::nabla_riemann_dir(x, dir);
    const double st = std::sin(k_ * x[0]), ct = std::cos(k_ * x[0]);
    const double sx = std::sin(k_ * x[1]), cx = std::cos(k_ * x[1]);
    const double w = 1.0 + delta_ * st * sx;
    const double k2 = k_ * k_;
    const double wt = delta_ * k_ * ct * sx, wx = delta_ * k_ * st * cx;
    const double wtt = -k2 * delta_ * st * sx;
    const double wttt = -k2 * k_ * delta_ * ct * sx;
    const double wttx = -k2 * k_ * delta_ * st * cx;
    // partial derivative of the single component
    const double dval = (dir == 0) ? -(wt * wtt + w * wttt) : -(wx * wtt + w * wttx);
    const Tens4 R = riemann(x);
    const Tens3 G = christoffel(x);
    Tens4 out;
    const int d = 2;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c)
          for (int e = 0; e < d; ++e) {
            const int sgn_ab = (a == 0 && b == 1) ? 1 : (a == 1 && b == 0) ? -1 : 0;
            const int sgn_ce = (c == 0 && e == 1) ? 1 : (c == 1 && e == 0) ? -1 : 0;
            double t = sgn_ab * sgn_ce * dval;
            for (int kk = 0; kk < d; ++kk) {
              t -= G.c[kk][dir][a] * R.c[kk][b][c][e];
              t -= G.c[kk][dir][b] * R.c[a][kk][c][e];
              t -= G.c[kk][dir][c] * R.c[a][b][kk][e];
              t -= G.c[kk][dir][e] * R.c[a][b][c][kk];
            }
            out.c[a][b][c][e] = t;
          }
    return out;
  }

  Tens4 nabla_riemann_vec(const Vec4& x, const Vec4& u) const override {
    if (dim_ != 2) return MetricModel::nabla_riemann_vec(x, u);
    const Tens4 d0 = nabla_riemann_dir(x, 0);
    const Tens4 d1 = nabla_riemann_dir(x, 1);
    Tens4 out;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c)
          for (int e = 0; e < 2; ++e)
            out.c[a][b][c][e] = u[0] * d0.c[a][b][c][e] + u[1] * d1.c[a][b][c][e];
    return out;
  }

 private:
  double delta_, k_;
};

// (1 + delta exp(-|x|^2 - t^2)) * minkowski
class ConformalModel final : public MetricModel {
 public:
  ConformalModel(int dim, std::map<std::string, double> params)
      : MetricModel("conformal", dim, std::move(params), 100.0),
        delta_(param("delta", 0.0)) {}

  double omega(const Vec4& x) const {
    double q = 0.0;
    for (int a = 0; a < dim_; ++a) q += x[a] * x[a];
    return 1.0 + delta_ * std::exp(-q);
  }

  Mat4 metric(const Vec4& x) const override {
    if (!in_chart(x)) throw ChartDomainError("point outside chart domain");
    const double om = omega(x);
    Mat4 g{};
    g[0][0] = -om;
    for (int i = 1; i < dim_; ++i) g[i][i] = om;
    return g;
  }

  Tens3 christoffel(const Vec4& x) const override {
    const double om = omega(x);
    if (om <= 1e-12) throw SingularMetricError("conformal factor vanished", 1.0 / om);
    double q = 0.0;
    for (int a = 0; a < dim_; ++a) q += x[a] * x[a];
    const double e = delta_ * std::exp(-q);
    // phi = log(omega)/2, phi_a = -x^a e / omega
    double phi[4];
    for (int a = 0; a < dim_; ++a) phi[a] = -x[a] * e / om;
    Tens3 G;
    for (int l = 0; l < dim_; ++l)
      for (int a = 0; a < dim_; ++a)
        for (int b = 0; b < dim_; ++b) {
          double v = 0.0;
          if (l == a) v += phi[b];
          if (l == b) v += phi[a];
          // - eta_ab eta^{l m} phi_m
          const double eta_ab = (a == b) ? (a == 0 ? -1.0 : 1.0) : 0.0;
          if (eta_ab != 0.0) {
            const double eta_ll = (l == 0) ? -1.0 : 1.0;
            v -= eta_ab * eta_ll * phi[l];
          }
          G.c[l][a][b] = v;
        }
    return G;
  }

 private:
  double delta_;
};

}  // namespace

ModelPtr make_model(const std::string& name, const std::map<std::string, double>& params) {
  auto it = params.find("dim");
  const int dim = it == params.end() ? 3 : int(it->second);
  if (dim < 2 || dim > 4)
    throw ConfigError("model dimension must be 2, 3 or 4 (got " + std::to_string(dim) + ")");
  if (name == "minkowski") return std::make_shared<MinkowskiModel>(dim, params);
  if (name == "warped") return std::make_shared<WarpedModel>(dim, params);
  if (name == "conformal") return std::make_shared<ConformalModel>(dim, params);
  throw ConfigError("unknown model '" + name + "'");
}

Mat4 metric_at(const MetricModel& model, const Vec4& x) {
  Mat4 g = model.metric(x);
  // symmetrise exactly against closed-form roundoff
  for (int a = 0; a < model.dim(); ++a)
    for (int b = a + 1; b < model.dim(); ++b) {
      const double s = 0.5 * (g[a][b] + g[b][a]);
      g[a][b] = g[b][a] = s;
    }
  return g;
}

Tens3 christoffel_at(const MetricModel& model, const Vec4& x) {
  if (!model.in_chart(x)) throw ChartDomainError("point outside chart domain");
  double cond = 0.0;
  invert_spd_like(model.metric(x), model.dim(), &cond);
  return model.christoffel(x);
}

Tens4 riemann_at(const MetricModel& model, const Vec4& x) {
  if (!model.in_chart(x)) throw ChartDomainError("point outside chart domain");
  return model.riemann(x);
}

Tens5 nabla_riemann_at(const MetricModel& model, const Vec4& x) {
  Tens5 out;
  for (int m = 0; m < model.dim(); ++m) {
    const Tens4 d = model.nabla_riemann_dir(x, m);
    for (int a = 0; a < model.dim(); ++a)
      for (int b = 0; b < model.dim(); ++b)
        for (int c = 0; c < model.dim(); ++c)
          for (int e = 0; e < model.dim(); ++e) out.c[m][a][b][c][e] = d.c[a][b][c][e];
  }
  return out;
}

}  // namespace lorwave
