#include "lorwave/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lorwave {

namespace {

inline int sym_index(int b, int c) {  // b <= c
  return c * (c + 1) / 2 + b;
}
inline int sym_size(int n) { return n * (n + 1) / 2; }

// Layout of the joint radial state (d = dim, n = d-1):
//   [0, d)          chart point x
//   [d, 2d)         velocity = E_rho
//   [2d, 3d)        E_0
//   [3d + i*d, ..)  E_A (i < n-1)
//   then the scalar block: u = r q (sym n), grad t (n), G = r^2 grad^3 f
//   (n * sym n, derivative index major), T (sym n).
struct Layout {
  int d, n, ns;
  int off_x, off_v, off_e0, off_ea, off_u, off_vt, off_g, off_t, total;
  explicit Layout(int dim) {
    d = dim;
    n = d - 1;
    ns = sym_size(n);
    off_x = 0;
    off_v = d;
    off_e0 = 2 * d;
    off_ea = 3 * d;
    off_u = off_ea + (n - 1) * d;
    off_vt = off_u + ns;
    off_g = off_vt + n;
    off_t = off_g + n * ns;
    total = off_t + ns;
  }
};

struct BlockFrame {
  // block vectors (chart components): slot 0 = E_theta, slots 1.. = E_A
  Vec4 e[kMaxBlock];
};

// q_a^c w_c with the block inverse metric diag(-kappa, 1, ..)
inline void contract_q(const double q[kMaxBlock][kMaxBlock], const double* w,
                       double kappa, int n, double* out) {
  for (int a = 0; a < n; ++a) {
    double s = -kappa * q[a][0] * w[0];
    for (int c = 1; c < n; ++c) s += q[a][c] * w[c];
    out[a] = s;
  }
}

}  // namespace

Geometry::Geometry(ModelPtr model, const Vec4& p, double tol)
    : Geometry(model, p, basis_at(*model, p), tol) {}

Geometry::Geometry(ModelPtr model, const Vec4& p, const OrthonormalBasis& basis,
                   double tol)
    : model_(std::move(model)), p_(p), basis_(basis), tol_(tol) {
  if (basis_.dim != model_->dim())
    throw std::invalid_argument("basis dimension does not match the model");
  riemann_p_ = model_->riemann(p_);
}

double Geometry::riemann_at_centre(const Vec4& a, const Vec4& b, const Vec4& c,
                                   const Vec4& d) const {
  return riemann_component(riemann_p_, a, b, c, d, model_->dim());
}

Vec4 Geometry::log_vector(const Vec4& q, const Vec4* guess) const {
  return log_map(*model_, p_, q, tol_, guess);
}

FramePoint Geometry::frame_point(const Vec4& q, const Vec4* guess) const {
  const int d = model_->dim();
  const Vec4 v = log_vector(q, guess);
  const Mat4 gp = metric_at(*model_, p_);

  FramePoint fp;
  fp.x = q;
  // normal coordinates = components of v on the orthonormal basis
  fp.t = -metric_dot(gp, v, basis_.e[0], d);
  double r2 = 0.0;
  Vec4 spatial = {0, 0, 0, 0};
  for (int k = 1; k < d; ++k) {
    spatial[k - 1] = metric_dot(gp, v, basis_.e[k], d);
    r2 += spatial[k - 1] * spatial[k - 1];
  }
  fp.r = std::sqrt(r2);
  fp.f = 0.25 * (r2 - fp.t * fp.t);
  fp.in_D = fp.f > 0.0;
  fp.rho = fp.in_D ? 2.0 * std::sqrt(fp.f) : 0.0;
  if (fp.r > 0.0) {
    fp.omega.omega0 = fp.t / fp.r;
    fp.omega.spatial = scale(1.0 / fp.r, spatial);
  }
  if (fp.in_D && fp.r > 0.0)
    fp.frame = radial_frame(*model_, p_, basis_, fp.omega, fp.r, tol_);
  return fp;
}

namespace {

// Assemble a GeomPoint from the joint state at radius r.
GeomPoint state_to_point(const Layout& lay, const Direction& omega, double r,
                         const std::vector<double>& y) {
  const int d = lay.d, n = lay.n;
  GeomPoint gp;
  FramePoint& fp = gp.fp;
  for (int a = 0; a < d; ++a) fp.x[a] = y[lay.off_x + a];
  fp.t = omega.omega0 * r;
  fp.r = r;
  fp.omega = omega;
  const double rho2 = r * r * (1.0 - omega.omega0 * omega.omega0);
  fp.f = 0.25 * rho2;
  fp.rho = std::sqrt(rho2);
  fp.in_D = fp.f > 0.0;
  fp.frame.omega = omega;
  fp.frame.s = r;
  fp.frame.x = fp.x;
  for (int a = 0; a < d; ++a) {
    fp.frame.E_rho[a] = y[lay.off_v + a];
    fp.frame.E_0[a] = y[lay.off_e0 + a];
  }
  const double rr = 1.0 - omega.omega0 * omega.omega0;
  for (int a = 0; a < d; ++a)
    fp.frame.E_theta[a] = omega.omega0 * fp.frame.E_rho[a] + rr * fp.frame.E_0[a];
  fp.frame.E_A.resize(n - 1);
  for (int i = 0; i < n - 1; ++i)
    for (int a = 0; a < d; ++a) fp.frame.E_A[i][a] = y[lay.off_ea + i * d + a];

  TransportState& ts = gp.ts;
  ts.n = n;
  ts.r = r;
  ts.omega0 = omega.omega0;
  ts.kappa = 1.0 / rr;
  for (int b = 0; b < n; ++b)
    for (int c = b; c < n; ++c) {
      const double u = y[lay.off_u + sym_index(b, c)];
      ts.q(b, c) = ts.q(c, b) = u / r;
      const double T = y[lay.off_t + sym_index(b, c)];
      ts.T(b, c) = ts.T(c, b) = T;
    }
  for (int a = 0; a < n; ++a) ts.grad_t[a] = y[lay.off_vt + a];
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = b; c < n; ++c) {
        const double g = y[lay.off_g + a * lay.ns + sym_index(b, c)];
        ts.G(a, b, c) = g;
        ts.G(a, c, b) = g;
      }
  return gp;
}

}  // namespace

std::vector<GeomPoint> Geometry::ray(const Direction& omega,
                                     std::span<const double> radii) const {
  const int d = model_->dim();
  const int n = d - 1;
  if (std::abs(omega.omega0) >= 1.0)
    throw std::invalid_argument("|omega0| must be < 1 inside the cone exterior");
  std::vector<GeomPoint> out;
  if (radii.empty()) return out;

  const Vec4 e_rho = e_rho_of(basis_, omega, d);
  const Vec4 e_theta = e_theta_of(basis_, omega, d);
  const Vec4 e_r = sub(e_rho, scale(omega.omega0, basis_.e[0]));

  // H_omega basis at the centre
  std::vector<Vec4> hbasis;
  {
    const Mat4 g = metric_at(*model_, p_);
    const double rn = metric_dot(g, e_r, e_r, d);
    for (int k = 1; k < d && int(hbasis.size()) < n - 1; ++k) {
      Vec4 v = basis_.e[k];
      v = sub(v, scale(metric_dot(g, v, e_r, d) / rn, e_r));
      for (const Vec4& u : hbasis) v = sub(v, scale(metric_dot(g, v, u, d), u));
      const double nn = metric_dot(g, v, v, d);
      if (nn > 1e-12) hbasis.push_back(scale(1.0 / std::sqrt(nn), v));
    }
  }

  const double kappa = 1.0 / (1.0 - omega.omega0 * omega.omega0);

  if (model_->flat()) {
    for (double r : radii) {
      Layout lay(d);
      std::vector<double> y(lay.total, 0.0);
      for (int a = 0; a < d; ++a) {
        y[lay.off_x + a] = p_[a] + r * e_rho[a];
        y[lay.off_v + a] = e_rho[a];
        y[lay.off_e0 + a] = basis_.e[0][a];
      }
      for (int i = 0; i < n - 1; ++i)
        for (int a = 0; a < d; ++a) y[lay.off_ea + i * d + a] = hbasis[i][a];
      y[lay.off_vt + 0] = 1.0;
      out.push_back(state_to_point(lay, omega, r, y));
    }
    return out;
  }

  // vertex limits feed the Taylor initial state at r_start
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (radii[i] < radii[i - 1])
      throw std::invalid_argument("radii must be ascending");
  const double r_start = std::min(1e-6, 0.5 * radii.front());
  Layout lay(d);

  Vec4 eblock[kMaxBlock];
  eblock[0] = e_theta;
  for (int i = 0; i < n - 1; ++i) eblock[1 + i] = hbasis[i];

  auto Rp_of = [&](const Vec4& a, const Vec4& b, const Vec4& c, const Vec4& e) {
    return riemann_component(riemann_p_, a, b, c, e, d);
  };

  const Tens3 Gp = model_->christoffel(p_);
  auto vertex_state = [&](double rs) {
    std::vector<double> y(lay.total, 0.0);
    Vec4 gee = {0, 0, 0, 0};  // Gamma(e_rho, e_rho)
    for (int l = 0; l < d; ++l) {
      double s = 0.0;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) s += Gp.c[l][a][b] * e_rho[a] * e_rho[b];
      gee[l] = s;
    }
    auto transported_ic = [&](const Vec4& w, int off) {
      for (int l = 0; l < d; ++l) {
        double s = 0.0;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) s += Gp.c[l][a][b] * e_rho[a] * w[b];
        y[off + l] = w[l] - rs * s;
      }
    };
    for (int a = 0; a < d; ++a) {
      y[lay.off_x + a] = p_[a] + rs * e_rho[a] - 0.5 * rs * rs * gee[a];
      y[lay.off_v + a] = e_rho[a] - rs * gee[a];
    }
    transported_ic(basis_.e[0], lay.off_e0);
    for (int i = 0; i < n - 1; ++i) transported_ic(hbasis[i], lay.off_ea + i * d);

    const double rs3 = rs * rs * rs;
    for (int b = 0; b < n; ++b)
      for (int c = b; c < n; ++c)
        y[lay.off_u + sym_index(b, c)] =
            rs3 * (-1.0 / 6.0) * Rp_of(e_rho, eblock[b], e_rho, eblock[c]);
    y[lay.off_vt + 0] = 1.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = b; c < n; ++c)
          y[lay.off_g + a * lay.ns + sym_index(b, c)] =
              rs3 * (-1.0 / 6.0) *
              (Rp_of(e_rho, eblock[b], eblock[a], eblock[c]) +
               Rp_of(e_rho, eblock[c], eblock[a], eblock[b]));
    return y;
  };
  std::vector<double> y = vertex_state(r_start);

  auto rhs = [&](double r, const std::vector<double>& ys, std::vector<double>& dys) {
    Vec4 x = {0, 0, 0, 0}, v = {0, 0, 0, 0}, E0 = {0, 0, 0, 0};
    for (int a = 0; a < d; ++a) {
      x[a] = ys[lay.off_x + a];
      v[a] = ys[lay.off_v + a];
      E0[a] = ys[lay.off_e0 + a];
    }
    BlockFrame bf;
    const double rr2 = 1.0 - omega.omega0 * omega.omega0;
    for (int a = 0; a < d; ++a) bf.e[0][a] = omega.omega0 * v[a] + rr2 * E0[a];
    for (int i = 0; i < n - 1; ++i)
      for (int a = 0; a < d; ++a) bf.e[1 + i][a] = ys[lay.off_ea + i * d + a];

    const Tens3 G = model_->christoffel(x);
    for (int a = 0; a < d; ++a) dys[lay.off_x + a] = v[a];
    auto transport_rhs = [&](const double* w, double* dw) {
      for (int l = 0; l < d; ++l) {
        double s = 0.0;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) s += G.c[l][a][b] * v[a] * w[b];
        dw[l] = -s;
      }
    };
    transport_rhs(&ys[lay.off_v], &dys[lay.off_v]);
    transport_rhs(&ys[lay.off_e0], &dys[lay.off_e0]);
    for (int i = 0; i < n - 1; ++i)
      transport_rhs(&ys[lay.off_ea + i * d], &dys[lay.off_ea + i * d]);

    // curvature contractions on the current frame
    const Tens4 R = model_->riemann(x);
    double Rq[kMaxBlock][kMaxBlock];   // R(E_rho, a, E_rho, b)
    double RG[kMaxBlock][kMaxBlock][kMaxBlock];  // R(E_rho, l, m, b)
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b)
        Rq[a][b] = Rq[b][a] = riemann_component(R, v, bf.e[a], v, bf.e[b], d);
    for (int l = 0; l < n; ++l)
      for (int m = 0; m < n; ++m)
        for (int b = 0; b < n; ++b)
          RG[l][m][b] = riemann_component(R, v, bf.e[l], bf.e[m], bf.e[b], d);

    double q[kMaxBlock][kMaxBlock];
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        q[b][c] = ys[lay.off_u + sym_index(std::min(b, c), std::max(b, c))] / r;
        if (std::abs(q[b][c]) > 1e6)
          throw DivergenceError("deviation tensor exceeded its cap along the ray", r);
      }
    const double* vt = &ys[lay.off_vt];

    // u' : E_rho(r q_ab)
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) {
        double s = 2.0 * kappa * q[a][0] * q[b][0];
        for (int c = 1; c < n; ++c) s -= 2.0 * q[a][c] * q[b][c];
        s -= 0.5 * r * r * Rq[a][b];
        dys[lay.off_u + sym_index(a, b)] = s;
      }

    // grad t ' : E_rho(grad_a t) = -(2/r) q_a^c grad_c t
    {
      double qv[kMaxBlock];
      contract_q(q, vt, kappa, n, qv);
      for (int a = 0; a < n; ++a) dys[lay.off_vt + a] = -(2.0 / r) * qv[a];
    }

    // G' : transport of r^2 grad^3 f (tangential block)
    double g3[kMaxBlock][kMaxBlock][kMaxBlock];
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          g3[a][b][c] =
              ys[lay.off_g + a * lay.ns + sym_index(std::min(b, c), std::max(b, c))] /
              (r * r);
    // directional curvature derivative contracted on the frame
    double dR[kMaxBlock][kMaxBlock][kMaxBlock];
    for (int a = 0; a < n; ++a) {
      const Tens4 nr = model_->nabla_riemann_vec(x, bf.e[a]);
      for (int b = 0; b < n; ++b)
        for (int c = b; c < n; ++c)
          dR[a][b][c] = dR[a][c][b] = riemann_component(nr, v, bf.e[b], v, bf.e[c], d);
    }
    auto qdot = [&](int a, const double* w) {  // q_a^m w_m
      double s = -kappa * q[a][0] * w[0];
      for (int m = 1; m < n; ++m) s += q[a][m] * w[m];
      return s;
    };
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = b; c < n; ++c) {
          double w1[kMaxBlock], w2[kMaxBlock], w3[kMaxBlock];
          for (int m = 0; m < n; ++m) w1[m] = g3[a][b][m];  // grad3 f_{a b mu}
          for (int m = 0; m < n; ++m) w2[m] = g3[m][b][c];  // grad3 f_{mu b c}
          for (int m = 0; m < n; ++m) w3[m] = g3[a][m][c];  // grad3 f_{a mu c}
          double s = -2.0 * r * (qdot(c, w1) + qdot(a, w2) + qdot(b, w3));
          s -= 0.5 * r * r * r * dR[a][b][c];
          // curvature-times-q sources
          double t1 = 0.0;
          for (int m = 0; m < n; ++m) {
            const double ql = (m == 0 ? -kappa : 1.0);
            t1 += (RG[c][m][b] + RG[b][m][c]) * ql * q[a][m];
            t1 += RG[a][m][b] * ql * q[c][m];
            t1 += RG[a][m][c] * ql * q[b][m];
          }
          s -= r * r * t1;
          s -= 0.5 * r * r * (RG[c][a][b] + RG[b][a][c] + RG[a][c][b] + RG[a][b][c]);
          dys[lay.off_g + a * lay.ns + sym_index(b, c)] = s;
        }

    // T' with source B_ab
    const double t_here = omega.omega0 * r;
    double Tm[kMaxBlock][kMaxBlock];
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        Tm[b][c] = ys[lay.off_t + sym_index(std::min(b, c), std::max(b, c))];
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) {
        double rowb[kMaxBlock], rowa[kMaxBlock];
        for (int m = 0; m < n; ++m) rowb[m] = Tm[b][m];
        for (int m = 0; m < n; ++m) rowa[m] = Tm[a][m];
        double s = -(2.0 / r) * (qdot(a, rowb) + qdot(b, rowa));
        // B source
        double qq = -kappa * q[a][0] * q[b][0];
        for (int m = 1; m < n; ++m) qq += q[a][m] * q[b][m];
        const double grad3_rho = -(q[a][b]) / r - (2.0 / r) * qq - 0.5 * r * Rq[a][b];
        const double W_rho = (2.0 / r) * grad3_rho + 2.0 * Rq[a][b];
        double B = -kappa * W_rho * (2.0 * t_here * t_here / r);
        for (int m = 0; m < n; ++m) {
          const double W_m = (2.0 / r) * g3[m][a][b] + RG[b][m][a] + RG[a][m][b];
          const double gt_m = 2.0 * t_here * vt[m];
          B -= (m == 0 ? -kappa : 1.0) * W_m * gt_m;
        }
        s += B;
        dys[lay.off_t + sym_index(a, b)] = s;
      }
  };

  OdeOptions opts;
  opts.rtol = tol_;
  opts.atol = tol_ * 1e-2;
  opts.initial_step = 1e-4;

  double current = r_start;
  for (double r_target : radii) {
    if (r_target <= r_start) {
      // resolved by the vertex limits instead of quadrature
      const double rt = std::max(r_target, 1e-12);
      out.push_back(state_to_point(lay, omega, rt, vertex_state(rt)));
      continue;
    }
    integrate_ode(rhs, y, current, r_target, opts);
    current = r_target;
    out.push_back(state_to_point(lay, omega, r_target, y));
    if (!model_->in_chart(out.back().fp.x))
      throw ChartDomainError("radial geodesic left the chart during transport");
  }
  return out;
}

GeomPoint Geometry::eval(const Vec4& q, const Vec4* guess) const {
  const int d = model_->dim();
  const Mat4 gp = metric_at(*model_, p_);
  const Vec4 v = log_vector(q, guess);
  double t = -metric_dot(gp, v, basis_.e[0], d);
  double r2 = 0.0;
  Vec4 spatial = {0, 0, 0, 0};
  for (int k = 1; k < d; ++k) {
    spatial[k - 1] = metric_dot(gp, v, basis_.e[k], d);
    r2 += spatial[k - 1] * spatial[k - 1];
  }
  const double r = std::sqrt(r2);
  if (r <= 0.0 || std::abs(t) >= r)
    throw std::domain_error("point is not in the exterior domain of the null cone");
  Direction omega;
  omega.omega0 = t / r;
  omega.spatial = scale(1.0 / r, spatial);
  const double rad[1] = {r};
  auto pts = ray(omega, std::span<const double>(rad, 1));
  GeomPoint gpnt = std::move(pts.front());
  gpnt.fp.x = q;  // keep the caller's chart point exactly
  gpnt.fp.frame.x = q;
  return gpnt;
}

// ---------------------------------------------------------------------------
// Curvature budget (declared in metric.hpp)
// ---------------------------------------------------------------------------

CurvatureBudget curvature_budget(const MetricModel& model, const Vec4& p, double r0,
                                 const BudgetSampling& sampling, double eps0,
                                 double c_dagger) {
  const int d = model.dim();
  const int n = d - 1;
  CurvatureBudget budget;
  budget.eps0 = eps0;
  budget.c_dagger = c_dagger;
  budget.region = "D_{r0} sample, r <= 0.95 r0";

  auto model_ptr = ModelPtr(&model, [](const MetricModel*) {});
  Geometry geo(model_ptr, p, sampling.tol);

  std::vector<double> radii;
  for (int i = 0; i < sampling.n_radii; ++i)
    radii.push_back((i + 1) * 0.95 * r0 / sampling.n_radii);
  const auto dirs = sphere_directions(n, sampling.n_directions);

  double sup_R = 0.0, sup_dR = 0.0;
  int count = 0;
  bool degenerate = false;
  for (int io = 0; io < sampling.n_omega0; ++io) {
    const double omega0 = -0.9 + 1.8 * (io + 0.5) / sampling.n_omega0;
    for (const Vec4& dir : dirs) {
      Direction omega{omega0, dir};
      std::vector<GeomPoint> pts;
      try {
        pts = geo.ray(omega, radii);
      } catch (const std::exception&) {
        degenerate = true;  // metric degenerated along the ray
        continue;
      }
      for (const GeomPoint& gp : pts) {
        const Frame& fr = gp.fp.frame;
        std::vector<Vec4> set;
        set.push_back(fr.E_rho);
        set.push_back(fr.E_0);
        for (const Vec4& ea : fr.E_A) set.push_back(ea);
        Tens4 R;
        try {
          R = model.riemann(gp.fp.x);
        } catch (const std::exception&) {
          degenerate = true;
          continue;
        }
        for (const Vec4& X : set)
          for (const Vec4& Y : set)
            for (const Vec4& Z : set)
              sup_R = std::max(sup_R,
                               std::abs(riemann_component(R, fr.E_rho, X, Y, Z, d)));
        for (const Vec4& Z : set) {
          Tens4 nr;
          try {
            nr = model.nabla_riemann_vec(gp.fp.x, Z);
          } catch (const std::exception&) {
            degenerate = true;
            continue;
          }
          for (const Vec4& X : set)
            for (const Vec4& Y : set)
              sup_dR = std::max(
                  sup_dR, std::abs(riemann_component(nr, fr.E_rho, X, fr.E_rho, Y, d)));
        }
        ++count;
      }
    }
  }
  if (count == 0)
    throw EmptyRegionError("curvature budget sampling produced no points in region");
  if (degenerate) {
    sup_R = std::numeric_limits<double>::infinity();
    sup_dR = std::numeric_limits<double>::infinity();
  }
  budget.samples = count;
  budget.C0_est = n * r0 * r0 * sup_R;
  budget.C1_est = n * r0 * r0 * r0 * sup_dR;
  budget.pass = (budget.C0_est < n * eps0 * c_dagger) && (budget.C1_est < n * c_dagger);
  return budget;
}

}  // namespace lorwave
