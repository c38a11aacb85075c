#include "lorwave/hyperquadric.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace lorwave {

namespace {

// normal-coordinate scalars at a chart point, warm-started shooting
struct NormalCoords {
  double t, r, f;
  Vec4 v;  // log vector, reusable as a guess for neighbours
};

NormalCoords normal_coords(const Geometry& geo, const Vec4& x, const Vec4* guess) {
  const int d = geo.dim();
  NormalCoords nc;
  nc.v = geo.log_vector(x, guess);
  const Mat4 gp = metric_at(geo.model(), geo.centre());
  nc.t = -metric_dot(gp, nc.v, geo.basis().e[0], d);
  double r2 = 0.0;
  for (int k = 1; k < d; ++k) {
    const double c = metric_dot(gp, nc.v, geo.basis().e[k], d);
    r2 += c * c;
  }
  nc.r = std::sqrt(r2);
  nc.f = 0.25 * (r2 - nc.t * nc.t);
  return nc;
}

using ScalarField = std::function<double(const Vec4&, const Vec4*)>;

// Richardson-extrapolated central first derivative along chart axis.
double fd_grad(const ScalarField& field, const Vec4& x, int axis, double h,
               const Vec4* guess) {
  auto sft = [&](double dh) {
    Vec4 y = x;
    y[axis] += dh;
    return field(y, guess);
  };
  const double d1 = (sft(h) - sft(-h)) / (2 * h);
  const double d2 = (sft(h / 2) - sft(-h / 2)) / h;
  return (4 * d2 - d1) / 3.0;
}

// Plain second-order chart Hessian of a scalar field (no Richardson: the
// shooting pipeline noise dominates below h ~ 1e-3).
void fd_hessian(const ScalarField& field, const Vec4& x, int dim, double h,
                const Vec4* guess, double out[4][4], double* grad_out = nullptr) {
  const double f0 = field(x, guess);
  double fp[4], fm[4];
  for (int a = 0; a < dim; ++a) {
    Vec4 xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    fp[a] = field(xp, guess);
    fm[a] = field(xm, guess);
    out[a][a] = (fp[a] - 2 * f0 + fm[a]) / (h * h);
    if (grad_out) grad_out[a] = (fp[a] - fm[a]) / (2 * h);
  }
  for (int a = 0; a < dim; ++a)
    for (int b = a + 1; b < dim; ++b) {
      Vec4 xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[a] += h; xpp[b] += h;
      xpm[a] += h; xpm[b] -= h;
      xmp[a] -= h; xmp[b] += h;
      xmm[a] -= h; xmm[b] -= h;
      const double v = (field(xpp, guess) - field(xpm, guess) - field(xmp, guess) +
                        field(xmm, guess)) /
                       (4 * h * h);
      out[a][b] = out[b][a] = v;
    }
}

// covariant Hessian: chart second differences minus connection term
void covariant_hessian(const Geometry& geo, const ScalarField& field, const Vec4& x,
                       double h, const Vec4* guess, double out[4][4]) {
  const int d = geo.dim();
  double grad[4];
  fd_hessian(field, x, d, h, guess, out, grad);
  // refine the gradient with Richardson (first derivatives are cheap to clean)
  for (int a = 0; a < d; ++a) grad[a] = fd_grad(field, x, a, h, guess);
  const Tens3 G = geo.model().christoffel(x);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double corr = 0.0;
      for (int l = 0; l < d; ++l) corr += G.c[l][a][b] * grad[l];
      out[a][b] -= corr;
    }
}

}  // namespace

FramePoint frame_point(const Geometry& geo, const Vec4& q_chart) {
  return geo.frame_point(q_chart);
}

GradFCheck grad_f_check(const Geometry& geo, const FramePoint& fp, double h) {
  GradFCheck res;
  if (fp.r < 50 * h) {
    res.excluded = true;
    return res;
  }
  const int d = geo.dim();
  const Vec4 x = fp.x;
  Vec4 vguess = geo.log_vector(x);

  ScalarField f_field = [&](const Vec4& y, const Vec4* g) {
    return normal_coords(geo, y, g).f;
  };
  double df[4];
  for (int a = 0; a < d; ++a) df[a] = fd_grad(f_field, x, a, h, &vguess);

  const Mat4 g = metric_at(geo.model(), x);
  const Mat4 ginv = invert_spd_like(g, d);
  Vec4 grad_sharp = zero_vec();
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) grad_sharp[a] += ginv[a][b] * df[b];

  double gg = 0.0;
  for (int a = 0; a < d; ++a) gg += grad_sharp[a] * df[a];
  res.gauss_residual = std::abs(gg - fp.f);

  // polar coordinate vectors by differencing the exponential map
  const double hj = 1e-5;
  const Vec4 e0 = geo.basis().e[0];
  Vec4 e_r = zero_vec();
  for (int k = 1; k < d; ++k)
    e_r = add(e_r, scale(fp.omega.spatial[k - 1], geo.basis().e[k]));
  const Vec4 v = geo.log_vector(x, &vguess);
  auto push = [&](const Vec4& dirv) {
    const Vec4 xp = exp_map(geo.model(), geo.centre(), add(v, scale(hj, dirv)), geo.tol());
    const Vec4 xm = exp_map(geo.model(), geo.centre(), sub(v, scale(hj, dirv)), geo.tol());
    return scale(1.0 / (2 * hj), sub(xp, xm));
  };
  const Vec4 dt_vec = push(e0);
  const Vec4 dr_vec = push(e_r);
  const Vec4 expect = scale(0.5, add(scale(fp.t, dt_vec), scale(fp.r, dr_vec)));
  res.radial_residual = norm_euclid(sub(grad_sharp, expect), d);
  return res;
}

std::vector<QComponents> q_transport(const Geometry& geo, const Direction& omega,
                                     std::span<const double> radii) {
  const auto pts = geo.ray(omega, radii);
  std::vector<QComponents> out;
  out.reserve(pts.size());
  for (const auto& gp : pts) {
    QComponents qc;
    qc.n = gp.ts.n;
    qc.r = gp.ts.r;
    qc.q = gp.ts.q;
    qc.source = QComponents::Source::transport;
    out.push_back(qc);
  }
  return out;
}

QComponents q_fd_oracle(const Geometry& geo, const FramePoint& fp, double h) {
  const int d = geo.dim();
  const int n = d - 1;
  QComponents qc;
  qc.n = n;
  qc.r = fp.r;
  qc.source = QComponents::Source::fd_oracle;
  if (fp.r < 100 * h) qc.near_vertex_noise = true;

  Vec4 vguess = geo.log_vector(fp.x);
  ScalarField f_field = [&](const Vec4& y, const Vec4* g) {
    return normal_coords(geo, y, g).f;
  };
  double H[4][4];
  covariant_hessian(geo, f_field, fp.x, h, &vguess, H);

  const Mat4 g = metric_at(geo.model(), fp.x);
  Vec4 eb[kMaxBlock];
  eb[0] = fp.frame.E_theta;
  for (int i = 0; i < n - 1; ++i) eb[1 + i] = fp.frame.E_A[i];
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      double hv = 0.0;
      for (int mu = 0; mu < d; ++mu)
        for (int nu = 0; nu < d; ++nu) hv += H[mu][nu] * eb[a][mu] * eb[b][nu];
      const double gv = metric_dot(g, eb[a], eb[b], d);
      qc.q(a, b) = qc.q(b, a) = hv - 0.5 * gv;
    }
  return qc;
}

BlockVec grad_t_fd_oracle(const Geometry& geo, const FramePoint& fp, double h) {
  const int d = geo.dim();
  const int n = d - 1;
  Vec4 vguess = geo.log_vector(fp.x);
  ScalarField t_field = [&](const Vec4& y, const Vec4* g) {
    return normal_coords(geo, y, g).t;
  };
  double dt[4];
  for (int a = 0; a < d; ++a) dt[a] = fd_grad(t_field, fp.x, a, h, &vguess);
  BlockVec out;
  Vec4 eb[kMaxBlock];
  eb[0] = fp.frame.E_theta;
  for (int i = 0; i < n - 1; ++i) eb[1 + i] = fp.frame.E_A[i];
  for (int a = 0; a < n; ++a) {
    double s = 0.0;
    for (int mu = 0; mu < d; ++mu) s += dt[mu] * eb[a][mu];
    out[a] = s;
  }
  return out;
}

double grad_t_rho_fd_oracle(const Geometry& geo, const FramePoint& fp, double h) {
  const int d = geo.dim();
  Vec4 vguess = geo.log_vector(fp.x);
  ScalarField t_field = [&](const Vec4& y, const Vec4* g) {
    return normal_coords(geo, y, g).t;
  };
  double s = 0.0;
  for (int a = 0; a < d; ++a)
    s += fd_grad(t_field, fp.x, a, h, &vguess) * fp.frame.E_rho[a];
  return s;
}

double scalar_fd_hessian(const Geometry& geo, const FramePoint& fp,
                         const std::function<double(double, double)>& func,
                         const Vec4& u, const Vec4& v, double h) {
  const int d = geo.dim();
  Vec4 vguess = geo.log_vector(fp.x);
  ScalarField field = [&](const Vec4& y, const Vec4* g) {
    const NormalCoords nc = normal_coords(geo, y, g);
    return func(nc.t, nc.r);
  };
  double H[4][4];
  covariant_hessian(geo, field, fp.x, h, &vguess, H);
  double s = 0.0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) s += H[a][b] * u[a] * v[b];
  return s;
}

BlockSym hess_t2_fd_oracle(const Geometry& geo, const FramePoint& fp, double h) {
  const int d = geo.dim();
  const int n = d - 1;
  Vec4 vguess = geo.log_vector(fp.x);
  ScalarField t2_field = [&](const Vec4& y, const Vec4* g) {
    const double t = normal_coords(geo, y, g).t;
    return t * t;
  };
  double H[4][4];
  covariant_hessian(geo, t2_field, fp.x, h, &vguess, H);
  BlockSym out;
  Vec4 eb[kMaxBlock];
  eb[0] = fp.frame.E_theta;
  for (int i = 0; i < n - 1; ++i) eb[1 + i] = fp.frame.E_A[i];
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      double hv = 0.0;
      for (int mu = 0; mu < d; ++mu)
        for (int nu = 0; nu < d; ++nu) hv += H[mu][nu] * eb[a][mu] * eb[b][nu];
      out(a, b) = out(b, a) = hv;
    }
  return out;
}

double grad3_f_fd_oracle(const Geometry& geo, const FramePoint& fp, int a, int b, int c,
                         double h) {
  // grad^3 f (E_a; E_b, E_c): difference the covariant Hessian field along the
  // chart, then correct with the connection. Loose accuracy by construction.
  const int d = geo.dim();
  const int n = d - 1;
  Vec4 eb[kMaxBlock];
  eb[0] = fp.frame.E_theta;
  for (int i = 0; i < n - 1; ++i) eb[1 + i] = fp.frame.E_A[i];

  ScalarField f_field = [&](const Vec4& y, const Vec4* g) {
    return normal_coords(geo, y, g).f;
  };
  Vec4 vguess = geo.log_vector(fp.x);

  auto hess_at = [&](const Vec4& y, double out[4][4]) {
    covariant_hessian(geo, f_field, y, h, &vguess, out);
  };

  // dH/d(chart mu) along direction E_a
  double Hp[4][4], Hm[4][4];
  const double hs = h;
  Vec4 xp = fp.x, xm = fp.x;
  for (int mu = 0; mu < d; ++mu) {
    xp[mu] += hs * eb[a][mu];
    xm[mu] -= hs * eb[a][mu];
  }
  hess_at(xp, Hp);
  hess_at(xm, Hm);
  double dH[4][4];
  for (int mu = 0; mu < d; ++mu)
    for (int nu = 0; nu < d; ++nu) dH[mu][nu] = (Hp[mu][nu] - Hm[mu][nu]) / (2 * hs);

  double H0[4][4];
  hess_at(fp.x, H0);
  const Tens3 G = geo.model().christoffel(fp.x);
  // connection correction: (nabla_a H)_{mu nu} = dH - Gamma^l_{a mu} H_{l nu} - Gamma^l_{a nu} H_{mu l}
  double corr[4][4];
  for (int mu = 0; mu < d; ++mu)
    for (int nu = 0; nu < d; ++nu) {
      double s = 0.0;
      for (int l = 0; l < d; ++l) {
        double Ga_mu = 0.0, Ga_nu = 0.0;
        for (int al = 0; al < d; ++al) {
          Ga_mu += G.c[l][al][mu] * eb[a][al];
          Ga_nu += G.c[l][al][nu] * eb[a][al];
        }
        s += Ga_mu * H0[l][nu] + Ga_nu * H0[mu][l];
      }
      corr[mu][nu] = s;
    }
  double val = 0.0;
  for (int mu = 0; mu < d; ++mu)
    for (int nu = 0; nu < d; ++nu)
      val += (dH[mu][nu] - corr[mu][nu]) * eb[b][mu] * eb[c][nu];
  return val;
}

TDerivatives t_derivatives_from_state(const TransportState& ts, double omega0) {
  TDerivatives td;
  td.n = ts.n;
  td.r = ts.r;
  td.grad_t_rho = omega0;
  td.grad_t = ts.grad_t;
  const double t = omega0 * ts.r;
  for (int a = 0; a < ts.n; ++a)
    for (int b = 0; b < ts.n; ++b)
      td.hess_t2(a, b) = ts.T(a, b) + 2.0 * ts.grad_t[a] * ts.grad_t[b];
  td.hess_t2_rho_rho = 2.0 * t * t / (ts.r * ts.r);
  const BlockVec qv = ts.q_contract(ts.grad_t);
  for (int a = 0; a < ts.n; ++a)
    td.hess_t2_rho[a] = (2.0 * t / ts.r) * ts.grad_t[a] - (4.0 * t / ts.r) * qv[a];
  return td;
}

std::vector<TDerivatives> t_transport(const Geometry& geo, const Direction& omega,
                                      std::span<const double> radii) {
  const auto pts = geo.ray(omega, radii);
  std::vector<TDerivatives> out;
  out.reserve(pts.size());
  for (const auto& gp : pts)
    out.push_back(t_derivatives_from_state(gp.ts, omega.omega0));
  return out;
}

// ---------------------------------------------------------------------------
// Envelope report
// ---------------------------------------------------------------------------

namespace {

struct EnvelopeAccumulator {
  double sup_ratio = 0.0;  // LHS / envelope
  double sup_lhs = 0.0;
  int count = 0;
  void add(double lhs, double envelope) {
    if (envelope < 1e-300) return;
    sup_ratio = std::max(sup_ratio, std::abs(lhs) / envelope);
    sup_lhs = std::max(sup_lhs, std::abs(lhs));
    ++count;
  }
};

VerificationRow envelope_row(const std::string& id, const std::string& ref,
                             const EnvelopeAccumulator& acc, double limit,
                             bool advisory) {
  VerificationRow row;
  row.check_id = id;
  row.reference = ref;
  row.measured = acc.sup_ratio;
  row.fitted_constant = acc.sup_ratio;
  row.bound = limit;
  row.margin = limit - acc.sup_ratio;
  row.pass = acc.sup_ratio <= limit;
  row.advisory = advisory;
  return row;
}

}  // namespace

std::vector<VerificationRow> section2_bounds_report(const Geometry& geo, double r0,
                                                    const SweepSampling& sampling,
                                                    const CurvatureBudget& budget) {
  if (sampling.n_omega0 <= 0 || sampling.n_directions <= 0 || sampling.n_radii <= 0)
    throw EmptyRegionError("envelope report sampling is empty");
  const int n = geo.n();
  const double C0 = std::max(budget.C0_est, 1e-300);
  const double C1 = std::max(budget.C1_est, 1e-300);

  std::vector<double> radii;
  for (int i = 0; i < sampling.n_radii; ++i)
    radii.push_back(r0 * (sampling.r_min_frac +
                          (sampling.r_max_frac - sampling.r_min_frac) *
                              (i + 0.5) / sampling.n_radii));
  const auto dirs = sphere_directions(n, sampling.n_directions);

  EnvelopeAccumulator q_ab, q_ta, q_tt;
  EnvelopeAccumulator t_a, t_th, t2_a, t2_th;
  EnvelopeAccumulator td_ab, td_ta, td_tt;
  EnvelopeAccumulator g3[6];

  for (int io = 0; io < sampling.n_omega0; ++io) {
    const double omega0 =
        -sampling.omega0_max + 2.0 * sampling.omega0_max * (io + 0.5) / sampling.n_omega0;
    for (const Vec4& dir : dirs) {
      Direction omega{omega0, dir};
      const auto pts = geo.ray(omega, radii);
      for (const auto& gp : pts) {
        const auto& ts = gp.ts;
        const double r = ts.r, t = omega0 * r;
        const double rho2_r2 = 1.0 / ts.kappa;
        const double base_q = (C0 / (3.0 * n)) * (r * r) / (r0 * r0);
        const double base_t = (C0 / n) * (r * r) / (r0 * r0);
        const double base_td =
            (C0 / n) * (r * r) / (r0 * r0) + (C1 / n) * (r * r * std::abs(t)) / (r0 * r0 * r0);
        const double base_g3 =
            (1.0 / n) * (C0 * r / (r0 * r0) + C1 * r * r / (r0 * r0 * r0));

        const TDerivatives td = t_derivatives_from_state(ts, omega0);
        q_tt.add(ts.q(0, 0), rho2_r2 * rho2_r2 * base_q);
        t_th.add(td.grad_t[0] - 1.0, rho2_r2 * base_t);
        t2_th.add(2.0 * t * td.grad_t[0] - 2.0 * t, rho2_r2 * base_t * std::abs(t));
        td_tt.add(td.hess_t2(0, 0) - 2.0, rho2_r2 * base_td);
        g3[5].add(ts.grad3f(0, 0, 0), rho2_r2 * rho2_r2 * base_g3);
        for (int A = 1; A < n; ++A) {
          q_ta.add(ts.q(0, A), rho2_r2 * base_q);
          t_a.add(td.grad_t[A], base_t);
          t2_a.add(2.0 * t * td.grad_t[A], base_t * std::abs(t));
          td_ta.add(td.hess_t2(0, A), base_td);
          g3[3].add(ts.grad3f(0, 0, A), rho2_r2 * base_g3);
          g3[4].add(ts.grad3f(A, 0, 0), rho2_r2 * base_g3);
          for (int B = 1; B < n; ++B) {
            q_ab.add(ts.q(A, B), base_q);
            td_ab.add(td.hess_t2(A, B), base_td / rho2_r2);
            g3[1].add(ts.grad3f(0, A, B), base_g3);
            g3[2].add(ts.grad3f(A, 0, B), base_g3);
            for (int C = 1; C < n; ++C) g3[0].add(ts.grad3f(A, B, C), base_g3);
          }
        }
      }
    }
  }

  std::vector<VerificationRow> rows;
  const double uc = 100.0;  // acceptance cap on fitted universal constants
  if (n > 1) {
    rows.push_back(envelope_row("q_AB_envelope", "deviation-tensor bound (AB)", q_ab, 1.0, false));
    rows.push_back(envelope_row("q_thetaA_envelope", "deviation-tensor bound (theta A)", q_ta, 1.0, false));
  }
  rows.push_back(envelope_row("q_thetatheta_envelope", "deviation-tensor bound (theta theta)", q_tt, 1.0, false));
  if (n > 1) {
    rows.push_back(envelope_row("grad_t_A_envelope", "dt tangential bound", t_a, uc, false));
    rows.push_back(envelope_row("grad_t2_A_envelope", "dt^2 tangential bound", t2_a, uc, false));
    rows.push_back(envelope_row("hess_t2_AB_envelope", "hess t^2 bound (AB)", td_ab, uc, false));
    rows.push_back(envelope_row("hess_t2_thetaA_envelope", "hess t^2 bound (theta A)", td_ta, uc, false));
  }
  rows.push_back(envelope_row("grad_t_theta_envelope", "dt theta bound", t_th, uc, false));
  rows.push_back(envelope_row("grad_t2_theta_envelope", "dt^2 theta bound", t2_th, uc, false));
  rows.push_back(envelope_row("hess_t2_thetatheta_envelope", "hess t^2 bound (theta theta)", td_tt, uc, false));
  static const char* g3names[6] = {"grad3f_ABC", "grad3f_thetaBC", "grad3f_AthetaC",
                                   "grad3f_thetathetaC", "grad3f_Athetatheta",
                                   "grad3f_thetathetatheta"};
  for (int i = 0; i < 6; ++i) {
    if (n == 1 && i != 5) continue;
    rows.push_back(envelope_row(g3names[i], "third-derivative bound", g3[i], uc, true));
  }
  return rows;
}

}  // namespace lorwave
