#include "lorwave/carleman.hpp"

#include <algorithm>
#include <cmath>

namespace lorwave {

void CarlemanParams::validate(int n_spatial) const {
  const double n2 = double(n_spatial) * n_spatial;
  if (a < n2) throw ConfigError("carleman: a must satisfy a >= n^2");
  if (!(eps0 > 0) || !(b0 > 0) || !(r0 > 0))
    throw ConfigError("carleman: eps0, b0, r0 must be positive");
  if (eps0 > b0 / 4.0) throw ConfigError("carleman: eps0 <= b0/4 required");
  if (b0 / 4.0 > 1.0 / 16.0) throw ConfigError("carleman: b0/4 <= 1/16 required");
}

ConjugationBundle conjugation_bundle(const CarlemanParams& params, const GeomPoint& gp) {
  ConjugationBundle cb;
  cb.pt = pc_assemble(gp, params.pc());
  const double fb = cb.pt.fbar;
  if (!(fb > 0.0)) throw std::domain_error("conjugation bundle needs fbar > 0");
  const double b = params.b(), a = params.a;
  cb.F = -a * (std::log(fb) + b * fb);
  cb.zeta = std::exp(-2.0 * cb.F);
  cb.Fp = -a / fb - a * b;
  cb.Fpp = a / (fb * fb);
  cb.Fppp = -2.0 * a / (fb * fb * fb);
  cb.c_n = 0.25 * (cb.pt.d - 2);  // (n-1)/4
  cb.w = 0.5 * cb.pt.box_fbar - cb.pt.hbar;
  cb.A = (cb.Fp * cb.Fp + cb.Fpp) * cb.pt.grad_fbar_sq + 2.0 * cb.pt.hbar * cb.Fp;
  const double gsq = cb.pt.grad_fbar_sq;
  double grad_fbar_dot_hbar = 0.0;
  for (int i = 0; i < cb.pt.d; ++i)
    grad_fbar_dot_hbar += cb.pt.gFinv[i] * cb.pt.grad_fbar[i] * cb.pt.grad_hbar[i];
  cb.B = (cb.Fp * cb.Fp + cb.Fpp) * cb.pt.hess_fbar_gradgrad +
         0.5 * (2.0 * cb.Fp * cb.Fpp + cb.Fppp) * gsq * gsq +
         cb.pt.hbar * cb.Fpp * gsq + cb.Fp * grad_fbar_dot_hbar + cb.pt.hbar * cb.A;
  cb.Ehat_shift = cb.c_n * (2.0 / cb.pt.r) * gsq / fb;
  for (int i = 0; i < cb.pt.d; ++i) cb.S[i] = cb.pt.gFinv[i] * cb.pt.grad_fbar[i];
  return cb;
}

BBoundResult B_lower_bound_check(const Geometry& geo, const CarlemanParams& params,
                                 const SweepSampling& sampling) {
  params.validate(geo.n());
  BBoundResult res;
  res.min_margin = 1e300;
  std::vector<double> radii;
  for (int i = 0; i < sampling.n_radii; ++i)
    radii.push_back(params.r0 * (sampling.r_min_frac +
                                 (sampling.r_max_frac - sampling.r_min_frac) *
                                     (i + 0.5) / sampling.n_radii));
  const auto dirs = sphere_directions(geo.n(), sampling.n_directions);
  for (int io = 0; io < sampling.n_omega0; ++io) {
    const double omega0 =
        -sampling.omega0_max + 2.0 * sampling.omega0_max * (io + 0.5) / sampling.n_omega0;
    for (const Vec4& dir : dirs) {
      const auto pts = geo.ray(Direction{omega0, dir}, radii);
      for (const auto& gp : pts) {
        const ConjugationBundle cb = conjugation_bundle(params, gp);
        const double margin =
            cb.B - 0.5 * params.a * params.a * params.b() -
            0.25 * params.a * params.a / cb.pt.fbar * params.eps() * cb.pt.r * cb.pt.r;
        res.min_margin = std::min(res.min_margin, margin);
        ++res.samples;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

namespace {

TestFunction make_product(const std::string& name,
                          std::function<double(double)> ft,
                          std::function<double(double)> dft,
                          std::function<double(double)> ddft,
                          std::function<double(double)> fx,
                          std::function<double(double)> dfx,
                          std::function<double(double)> ddfx) {
  TestFunction tf;
  tf.name = name;
  tf.value = [=](const Vec4& x) { return ft(x[0]) * fx(x[1]); };
  tf.gradient = [=](const Vec4& x) {
    return Vec4{dft(x[0]) * fx(x[1]), ft(x[0]) * dfx(x[1]), 0, 0};
  };
  tf.hessian = [=](const Vec4& x) {
    Mat4 h{};
    h[0][0] = ddft(x[0]) * fx(x[1]);
    h[0][1] = h[1][0] = dft(x[0]) * dfx(x[1]);
    h[1][1] = ft(x[0]) * ddfx(x[1]);
    return h;
  };
  return tf;
}

}  // namespace

std::vector<TestFunction> carleman_test_suite(double x_left, double x_right) {
  const double L = x_right - x_left;
  const double kc = M_PI / L;
  auto cut = [=](double x) { return std::sin(kc * (x - x_left)); };
  auto dcut = [=](double x) { return kc * std::cos(kc * (x - x_left)); };
  auto ddcut = [=](double x) { return -kc * kc * std::sin(kc * (x - x_left)); };

  std::vector<TestFunction> suite;
  {
    TestFunction zero;
    zero.name = "zero";
    zero.value = [](const Vec4&) { return 0.0; };
    zero.gradient = [](const Vec4&) { return Vec4{0, 0, 0, 0}; };
    zero.hessian = [](const Vec4&) { return Mat4{}; };
    suite.push_back(zero);
  }
  suite.push_back(make_product(
      "poly_bump",
      [](double t) { return 1.0 - 0.1 * t * t; },
      [](double t) { return -0.2 * t; },
      [](double) { return -0.2; },
      cut, dcut, ddcut));
  {
    const double xc = 0.5 * (x_left + x_right), wdt = 0.35 * L;
    suite.push_back(make_product(
        "gauss_bump",
        [wdt](double t) { return std::exp(-t * t / (wdt * wdt)); },
        [wdt](double t) { return -2.0 * t / (wdt * wdt) * std::exp(-t * t / (wdt * wdt)); },
        [wdt](double t) {
          const double u = t / wdt;
          return (4.0 * u * u - 2.0) / (wdt * wdt) * std::exp(-u * u);
        },
        [=](double x) {
          const double u = (x - xc) / wdt;
          return cut(x) * std::exp(-u * u);
        },
        [=](double x) {
          const double u = (x - xc) / wdt;
          return (dcut(x) - cut(x) * 2.0 * u / wdt) * std::exp(-u * u);
        },
        [=](double x) {
          const double u = (x - xc) / wdt;
          const double e = std::exp(-u * u);
          return (ddcut(x) - 2.0 * dcut(x) * 2.0 * u / wdt +
                  cut(x) * (4.0 * u * u - 2.0) / (wdt * wdt)) *
                 e;
        }));
  }
  for (double freq : {1.0, 2.0, 3.0}) {
    const double kt = freq * kc;
    suite.push_back(make_product(
        "oscillatory_" + std::to_string(int(freq)),
        [kt](double t) { return std::cos(kt * t); },
        [kt](double t) { return -kt * std::sin(kt * t); },
        [kt](double t) { return -kt * kt * std::cos(kt * t); },
        cut, dcut, ddcut));
  }
  return suite;
}

// ---------------------------------------------------------------------------
// Pointwise identity
// ---------------------------------------------------------------------------

namespace {

// bundle of everything the identity needs at one chart point
struct CarlEval {
  GeomPoint gp;
  ConjugationBundle cb;
  Mat4 frame_rows;  // row i = chart components of frame vector i (rho, theta, A..)
  Mat4 g, ginv;
  double sqrtg = 0;
  int d = 2;

  // chart covector from a frame covector
  Vec4 to_chart(const double* frame_co) const {
    Mat4 At{};
    for (int i = 0; i < d; ++i)
      for (int mu = 0; mu < d; ++mu) At[i][mu] = frame_rows[i][mu];
    // solve A xi = frame_co where A[i][mu] = E_i^mu
    const Mat4 Ainv = invert_spd_like(At, d);
    Vec4 out = zero_vec();
    // xi = A^{-1} applied on the right: xi_mu = sum_i (A^{-1})_{mu i} frame_co[i]
    // invert_spd_like returns inverse of A; xi = A^{-1T}? We need xi with
    // A xi = f, i.e. xi = A^{-1} f with row-major A.
    for (int mu = 0; mu < d; ++mu)
      for (int i = 0; i < d; ++i) out[mu] += Ainv[mu][i] * frame_co[i];
    return out;
  }
  // frame covector of a chart covector (plain contraction with frame vectors)
  void to_frame(const Vec4& chart_co, double* frame_co) const {
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int mu = 0; mu < d; ++mu) s += chart_co[mu] * frame_rows[i][mu];
      frame_co[i] = s;
    }
  }
};

CarlEval carl_eval(const Geometry& geo, const CarlemanParams& params, const Vec4& x,
                   const Vec4* guess) {
  CarlEval ev;
  ev.d = geo.dim();
  ev.gp = geo.eval(x, guess);
  ev.cb = conjugation_bundle(params, ev.gp);
  const Frame& fr = ev.gp.fp.frame;
  ev.frame_rows[0] = fr.E_rho;
  ev.frame_rows[1] = fr.E_theta;
  for (std::size_t i = 0; i < fr.E_A.size(); ++i) ev.frame_rows[2 + i] = fr.E_A[i];
  ev.g = metric_at(geo.model(), x);
  ev.ginv = invert_spd_like(ev.g, ev.d);
  ev.sqrtg = std::sqrt(std::abs(det(ev.g, ev.d)));
  return ev;
}

double box_scalar(const Geometry& geo, const Vec4& x, const Vec4& grad, const Mat4& hess) {
  const int d = geo.dim();
  const Mat4 ginv = invert_spd_like(metric_at(geo.model(), x), d);
  const Tens3 G = geo.model().christoffel(x);
  double s = 0.0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double hab = hess[a][b];
      for (int l = 0; l < d; ++l) hab -= G.c[l][a][b] * grad[l];
      s += ginv[a][b] * hab;
    }
  return s;
}

}  // namespace

PointwiseIdentityResult pointwise_identity_residual(const Geometry& geo,
                                                    const CarlemanParams& params,
                                                    const TestFunction& psi,
                                                    const Vec4& x_chart, double h,
                                                    IdentityForm form) {
  params.validate(geo.n());
  const int d = geo.dim();
  PointwiseIdentityResult out;

  Vec4 guess;
  try {
    guess = geo.log_vector(x_chart);
  } catch (const ConvergenceError&) {
    out.excluded = true;
    return out;
  }

  auto eval_at = [&](const Vec4& y) { return carl_eval(geo, params, y, &guess); };

  // frame-covector of grad psi and the scalar pieces at a point
  struct Fields {
    double psi_v, S_w_psi, A, w, fbar, box_psi;
    Vec4 grad_psi_chart;
    Vec4 grad_fbar_chart;
    Vec4 grad_w_chart;  // by chart FD, filled separately
    CarlEval ev;
  };
  auto fields_at = [&](const Vec4& y, bool with_grad_w) {
    Fields f;
    f.ev = eval_at(y);
    f.psi_v = psi.value(y);
    f.grad_psi_chart = psi.gradient(y);
    double psi_frame[4];
    f.ev.to_frame(f.grad_psi_chart, psi_frame);
    const PcPoint& pt = f.ev.cb.pt;
    double Spsi = 0.0;
    for (int i = 0; i < d; ++i) Spsi += pt.gFinv[i] * pt.grad_fbar[i] * psi_frame[i];
    f.w = f.ev.cb.w;
    f.A = f.ev.cb.A;
    f.fbar = pt.fbar;
    f.S_w_psi = Spsi + f.w * f.psi_v;
    f.grad_fbar_chart = f.ev.to_chart(pt.grad_fbar);
    f.box_psi = box_scalar(geo, y, f.grad_psi_chart, psi.hessian(y));
    if (with_grad_w) {
      for (int mu = 0; mu < d; ++mu) {
        Vec4 yp = y, ym = y;
        yp[mu] += h;
        ym[mu] -= h;
        f.grad_w_chart[mu] = (eval_at(yp).cb.w - eval_at(ym).cb.w) / (2 * h);
      }
    }
    return f;
  };

  const bool direct = (form == IdentityForm::direct);
  const Fields f0 = fields_at(x_chart, true);

  // P covector at a chart point
  auto P_chart = [&](const Vec4& y) -> Vec4 {
    Fields f = fields_at(y, direct);
    double gradsq = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        gradsq += f.ev.ginv[a][b] * f.grad_psi_chart[a] * f.grad_psi_chart[b];
    Vec4 P = zero_vec();
    for (int mu = 0; mu < d; ++mu) {
      P[mu] = f.S_w_psi * f.grad_psi_chart[mu] - 0.5 * f.grad_fbar_chart[mu] * gradsq +
              0.5 * f.A * f.grad_fbar_chart[mu] * f.psi_v * f.psi_v;
      if (direct) P[mu] -= 0.5 * f.grad_w_chart[mu] * f.psi_v * f.psi_v;
    }
    return P;
  };

  // divergence (1/sqrt g) d_mu (sqrt g P^mu)
  double divP = 0.0;
  for (int mu = 0; mu < d; ++mu) {
    Vec4 yp = x_chart, ym = x_chart;
    yp[mu] += h;
    ym[mu] -= h;
    auto raise_mu = [&](const Vec4& y, const Vec4& co) {
      const Mat4 gi = invert_spd_like(metric_at(geo.model(), y), d);
      const double sg = std::sqrt(std::abs(det(metric_at(geo.model(), y), d)));
      double s = 0.0;
      for (int nu = 0; nu < d; ++nu) s += gi[mu][nu] * co[nu];
      return sg * s;
    };
    divP += (raise_mu(yp, P_chart(yp)) - raise_mu(ym, P_chart(ym))) / (2 * h);
  }
  divP /= f0.ev.sqrtg;

  const double Lpsi = f0.box_psi + 2.0 * f0.ev.cb.Fp * f0.S_w_psi + f0.A * f0.psi_v;
  out.lhs = -Lpsi * f0.S_w_psi + divP;

  // RHS
  const PcPoint& pt = f0.ev.cb.pt;
  double psi_frame[4];
  f0.ev.to_frame(f0.grad_psi_chart, psi_frame);
  double psi_up[4];
  for (int i = 0; i < d; ++i) psi_up[i] = pt.gFinv[i] * psi_frame[i];
  const double pi_gradgrad = pt.bilinear(pt.pi, psi_up, psi_up);
  double rhs = pi_gradgrad - 2.0 * f0.ev.cb.Fp * f0.S_w_psi * f0.S_w_psi;
  if (direct) {
    // box w by chart FD of grad w
    double box_w = 0.0;
    {
      Mat4 hess_w{};
      Vec4 grad_w = f0.grad_w_chart;
      for (int mu = 0; mu < d; ++mu) {
        Vec4 yp = x_chart, ym = x_chart;
        yp[mu] += h;
        ym[mu] -= h;
        const Fields fp = fields_at(yp, true);
        const Fields fm = fields_at(ym, true);
        for (int nu = 0; nu < d; ++nu)
          hess_w[mu][nu] = (fp.grad_w_chart[nu] - fm.grad_w_chart[nu]) / (2 * h);
      }
      // symmetrise the FD Hessian
      for (int a2 = 0; a2 < d; ++a2)
        for (int b2 = a2 + 1; b2 < d; ++b2) {
          const double s = 0.5 * (hess_w[a2][b2] + hess_w[b2][a2]);
          hess_w[a2][b2] = hess_w[b2][a2] = s;
        }
      box_w = box_scalar(geo, x_chart, grad_w, hess_w);
    }
    rhs += (f0.ev.cb.B - 0.5 * box_w) * f0.psi_v * f0.psi_v;
  } else {
    double wdot = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        wdot += f0.ev.ginv[a][b] * f0.grad_w_chart[a] * f0.grad_psi_chart[b];
    rhs += f0.ev.cb.B * f0.psi_v * f0.psi_v + f0.psi_v * wdot;
  }
  out.rhs = rhs;
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

// ---------------------------------------------------------------------------
// Integrated estimate (1+1)
// ---------------------------------------------------------------------------

CarlemanQuadrature::CarlemanQuadrature(const Geometry& geo, const Domain1p1& domain,
                                       int nt, int nx)
    : geo_(geo), domain_(domain), nt_(nt), nx_(nx) {
  if (geo.dim() != 2)
    throw ConfigError("integrated Carleman quadrature is a 1+1 configuration");
  dt_ = (domain.t_max - domain.t_min) / nt;
  dx_ = (domain.x_right - domain.x_left) / nx;

  // f at cell corners for the interface clipping
  std::vector<double> corner_f((nt + 1) * (nx + 1));
  {
    Vec4 guess = {0, 0, 0, 0};
    bool have_guess = false;
    for (int j = 0; j <= nx; ++j) {
      for (int i = 0; i <= nt; ++i) {
        const Vec4 x = {domain.t_min + i * dt_, domain.x_left + j * dx_, 0, 0};
        try {
          const Vec4 v = geo.log_vector(x, have_guess ? &guess : nullptr);
          guess = v;
          have_guess = true;
          const Mat4 gp = metric_at(geo.model(), geo.centre());
          const double tnc = -metric_dot(gp, v, geo.basis().e[0], 2);
          const double xnc = metric_dot(gp, v, geo.basis().e[1], 2);
          corner_f[i * (nx + 1) + j] = 0.25 * (xnc * xnc - tnc * tnc);
        } catch (const std::exception&) {
          corner_f[i * (nx + 1) + j] = -1.0;  // treat as outside D
        }
      }
    }
  }

  Vec4 col_guess = {0, 0, 0, 0};
  bool have_col_guess = false;
  for (int j = 0; j < nx; ++j) {
    have_col_guess = false;
    for (int i = 0; i < nt; ++i) {
      const double f00 = corner_f[i * (nx + 1) + j];
      const double f01 = corner_f[i * (nx + 1) + j + 1];
      const double f10 = corner_f[(i + 1) * (nx + 1) + j];
      const double f11 = corner_f[(i + 1) * (nx + 1) + j + 1];
      int pos = (f00 > 0) + (f01 > 0) + (f10 > 0) + (f11 > 0);
      if (pos == 0) continue;
      double fraction = 1.0;
      if (pos < 4) {
        // linear interface reconstruction by bilinear subsampling
        int hits = 0;
        for (int si = 0; si < 4; ++si)
          for (int sj = 0; sj < 4; ++sj) {
            const double u = (si + 0.5) / 4, vxy = (sj + 0.5) / 4;
            const double fv = (1 - u) * (1 - vxy) * f00 + (1 - u) * vxy * f01 +
                              u * (1 - vxy) * f10 + u * vxy * f11;
            if (fv > 0) ++hits;
          }
        fraction = hits / 16.0;
        if (fraction == 0.0) continue;
      }
      Cell cell;
      cell.x = Vec4{domain.t_min + (i + 0.5) * dt_, domain.x_left + (j + 0.5) * dx_, 0, 0};
      try {
        cell.gp = geo.eval(cell.x, have_col_guess ? &col_guess : nullptr);
        col_guess = geo.log_vector(cell.x, have_col_guess ? &col_guess : nullptr);
        have_col_guess = true;
      } catch (const std::exception&) {
        continue;  // midpoint outside D; only a sliver of the cell was inside
      }
      const double sg = std::sqrt(std::abs(det(metric_at(geo.model(), cell.x), 2)));
      cell.weight = sg * dt_ * dx_ * fraction;
      cell.in_D = true;
      cells_.push_back(std::move(cell));
    }
  }

  if (cells_.empty())
    throw EmptyRegionError("quadrature domain does not meet the cone exterior");

  // lateral boundary samples (midpoint rule in t)
  for (int side = 0; side < 2; ++side) {
    const double xb = side == 0 ? domain.x_left : domain.x_right;
    Vec4 guess = {0, 0, 0, 0};
    bool have_guess = false;
    for (int i = 0; i < nt; ++i) {
      BoundaryNode node;
      node.x = Vec4{domain.t_min + (i + 0.5) * dt_, xb, 0, 0};
      node.sign = side == 0 ? -1.0 : 1.0;
      try {
        node.gp = geo.eval(node.x, have_guess ? &guess : nullptr);
        guess = geo.log_vector(node.x, &guess);
        have_guess = true;
        node.in_D = node.gp.fp.in_D;
      } catch (const std::exception&) {
        node.in_D = false;
      }
      if (!node.in_D) continue;
      const Mat4 g = metric_at(geo.model(), node.x);
      node.weight = std::sqrt(std::abs(g[0][0])) * dt_;  // induced line measure
      boundary_.push_back(std::move(node));
    }
  }
}

namespace {

struct FramePhi {
  double e_rho, e_theta, e_0;
};

FramePhi frame_derivatives(const GeomPoint& gp, const TestFunction& phi) {
  const Vec4 grad = phi.gradient(gp.fp.x);
  FramePhi out;
  out.e_rho = grad[0] * gp.fp.frame.E_rho[0] + grad[1] * gp.fp.frame.E_rho[1];
  out.e_theta = grad[0] * gp.fp.frame.E_theta[0] + grad[1] * gp.fp.frame.E_theta[1];
  out.e_0 = grad[0] * gp.fp.frame.E_0[0] + grad[1] * gp.fp.frame.E_0[1];
  return out;
}

double zeta_of(double fbar, double a, double b) {
  return std::exp(2.0 * a * (std::log(fbar) + b * fbar));
}

// N(f eta^{-1}) for the outward normal of the x = const wall
double normal_f_eta(const Geometry& geo, const GeomPoint& gp, const PcParams& pc,
                    double sign) {
  const PcPoint pt = pc_assemble(gp, pc);
  // chart covector of d(f/eta)
  double co_frame[4];
  const double ie = 1.0 / pt.eta;
  for (int i = 0; i < pt.d; ++i)
    co_frame[i] = ie * pt.grad_f[i] - pt.f * ie * ie * pt.grad_eta[i];
  // chart components: solve with the frame matrix
  Mat4 A{};
  A[0] = gp.fp.frame.E_rho;
  A[1] = gp.fp.frame.E_theta;
  const Mat4 Ainv = invert_spd_like(A, 2);
  Vec4 chart = zero_vec();
  for (int mu = 0; mu < 2; ++mu)
    for (int i = 0; i < 2; ++i) chart[mu] += Ainv[mu][i] * co_frame[i];
  const Mat4 g = metric_at(geo.model(), gp.fp.x);
  const double beta = std::sqrt(g[1][1]);
  return sign * chart[1] / beta;  // unit outward normal is +- beta^{-1} d_x
}

}  // namespace

IntegratedCarleman CarlemanQuadrature::evaluate(const CarlemanParams& params,
                                                const TestFunction& phi) const {
  params.validate(1);
  // trace contract: the test function must vanish on the timelike walls
  for (double tprobe : {domain_.t_min * 0.7, 0.0, domain_.t_max * 0.7}) {
    for (double xb : {domain_.x_left, domain_.x_right}) {
      const double v = phi.value(Vec4{tprobe, xb, 0, 0});
      if (std::abs(v) > 1e-10)
        throw ConfigError("test function violates the boundary trace condition");
    }
  }
  IntegratedCarleman res;
  const double a = params.a, b = params.b(), eps = params.eps();
  const PcParams pc = params.pc();

  for (const Cell& cell : cells_) {
    const PcPoint pt = pc_assemble(cell.gp, pc);
    const double zeta = zeta_of(pt.fbar, a, b);
    if (zeta == 0.0) continue;
    const FramePhi d = frame_derivatives(cell.gp, phi);
    const double phi_v = phi.value(cell.x);
    const double r2 = pt.r * pt.r;
    const double kap = pt.kappa;

    res.lhs_grad += cell.weight * (eps / 64.0) * zeta * r2 *
                    (kap * d.e_rho * d.e_rho + kap * d.e_theta * d.e_theta);
    res.lhs_zero += cell.weight * 0.125 * a * a * b * zeta * phi_v * phi_v;

    const double box_phi =
        box_scalar(geo_, cell.x, phi.gradient(cell.x), phi.hessian(cell.x));
    res.rhs_bulk += cell.weight * (1.0 / (4.0 * a)) * zeta * pt.f * box_phi * box_phi;

    // (E_rho, E_0) variant: pinned constant eps/192 from the frame exchange
    res.margin_e0_variant -= cell.weight * (eps / 192.0) * zeta * pt.rho2 *
                             (d.e_rho * d.e_rho + d.e_0 * d.e_0);
  }

  for (const BoundaryNode& node : boundary_) {
    const PcPoint pt = pc_assemble(node.gp, pc);
    const double zeta = zeta_of(pt.fbar, a, b);
    if (zeta == 0.0) continue;
    const Mat4 g = metric_at(geo_.model(), node.x);
    const double beta = std::sqrt(g[1][1]);
    const Vec4 grad = phi.gradient(node.x);
    const double nphi = node.sign * grad[1] / beta;
    const double nfe = normal_f_eta(geo_, node.gp, pc, node.sign);
    res.rhs_boundary += node.weight * 0.5 * zeta * nfe * nphi * nphi;
  }

  res.margin = res.rhs_bulk + res.rhs_boundary - res.lhs_grad - res.lhs_zero;
  res.margin_e0_variant +=
      res.rhs_bulk + res.rhs_boundary - res.lhs_zero;  // gradient part added above
  return res;
}

IntegratedCarleman integrated_carleman(const Geometry& geo, const CarlemanParams& params,
                                       const Domain1p1& domain, const TestFunction& phi,
                                       int nt, int nx) {
  CarlemanQuadrature quad(geo, domain, nt, nx);
  return quad.evaluate(params, phi);
}

std::vector<BoundarySample> boundary_term(const Geometry& geo,
                                          const CarlemanParams& params, double x_b,
                                          double outward_sign, double t_min, double t_max,
                                          int nt, const TestFunction& phi) {
  params.validate(geo.n());
  const PcParams pc = params.pc();
  std::vector<BoundarySample> out;
  const double dt = (t_max - t_min) / nt;
  Vec4 guess = {0, 0, 0, 0};
  bool have_guess = false;
  for (int i = 0; i < nt; ++i) {
    BoundarySample s;
    s.t = t_min + (i + 0.5) * dt;
    const Vec4 x = {s.t, x_b, 0, 0};
    GeomPoint gp;
    try {
      gp = geo.eval(x, have_guess ? &guess : nullptr);
      guess = geo.log_vector(x, have_guess ? &guess : nullptr);
      have_guess = true;
      s.in_D = gp.fp.in_D;
    } catch (const std::exception&) {
      s.in_D = false;
    }
    if (!s.in_D) {
      out.push_back(s);
      continue;
    }
    const PcPoint pt = pc_assemble(gp, pc);
    const Mat4 g = metric_at(geo.model(), x);
    const double beta = std::sqrt(g[1][1]);
    if (!(beta > 0))
      throw SingularMetricError("degenerate boundary normal", 0.0);
    const Vec4 grad = phi.gradient(x);
    const double nphi = outward_sign * grad[1] / beta;
    s.normal_f_eta = normal_f_eta(geo, gp, pc, outward_sign);
    s.integrand = zeta_of(pt.fbar, params.a, params.b()) * s.normal_f_eta * nphi * nphi;
    out.push_back(s);
  }
  return out;
}

HDeltaDecay h_delta_boundary_integral(const Geometry& geo, const CarlemanParams& params,
                                      const Domain1p1& domain, const TestFunction& phi,
                                      double delta, int n_samples) {
  params.validate(geo.n());
  if (geo.dim() != 2) throw ConfigError("H_delta integral is a 1+1 configuration");

  // parametrise {f = delta} by t on each spatial side, restrict to the box
  HDeltaDecay out;
  double total = 0.0, total_env = 0.0, fitted = 0.0;
  for (double side : {1.0, -1.0}) {
    const int nsteps = n_samples;
    const double t_lo = -domain.t_max, t_hi = domain.t_max;
    const double dt = (t_hi - t_lo) / nsteps;
    for (int i = 0; i < nsteps; ++i) {
      const double t = t_lo + (i + 0.5) * dt;
      const double r = std::sqrt(t * t + 4.0 * delta);
      const double omega0 = t / r;
      if (std::abs(omega0) > 0.999999) continue;
      Direction omega{omega0, Vec4{side, 0, 0, 0}};
      const double hr = 1e-4 * std::max(r, 1.0);
      const double radii[3] = {r - hr, r, r + hr};
      std::vector<GeomPoint> pts;
      try {
        pts = geo.ray(omega, std::span<const double>(radii, 3));
      } catch (const std::exception&) {
        continue;
      }
      const GeomPoint& gp = pts[1];
      const double xc = gp.fp.x[1];
      if (xc <= domain.x_left || xc >= domain.x_right) continue;

      const ConjugationBundle cb = conjugation_bundle(params, gp);
      const PcPoint& pt = cb.pt;
      const double eF = std::exp(-cb.F);  // sqrt(zeta)
      const double phi_v = phi.value(gp.fp.x);
      const FramePhi fd = frame_derivatives(gp, phi);

      const double E_rho_fbar = pt.grad_fbar[0];
      // S(e^{-F} phi) = e^{-F}[ S phi - F' |grad fbar|^2 phi ]
      double S_phi = 0.0;
      {
        double psi_frame[2] = {fd.e_rho, fd.e_theta};
        for (int i2 = 0; i2 < 2; ++i2)
          S_phi += pt.gFinv[i2] * pt.grad_fbar[i2] * psi_frame[i2];
      }
      const double S_eF = eF * (S_phi - cb.Fp * pt.grad_fbar_sq * phi_v);
      const double Erho_eF = eF * (fd.e_rho - cb.Fp * E_rho_fbar * phi_v);
      double gradsq_phi = 0.0;
      {
        double psi_frame[2] = {fd.e_rho, fd.e_theta};
        for (int i2 = 0; i2 < 2; ++i2)
          gradsq_phi += pt.gFinv[i2] * psi_frame[i2] * psi_frame[i2];
      }
      const double gradsq_eF =
          eF * eF *
          (gradsq_phi - 2.0 * cb.Fp * phi_v * S_phi +
           cb.Fp * cb.Fp * pt.grad_fbar_sq * phi_v * phi_v);
      // E_rho w by differencing along the ray
      const double w_minus = conjugation_bundle(params, pts[0]).w;
      const double w_plus = conjugation_bundle(params, pts[2]).w;
      const double Erho_w = (w_plus - w_minus) / (2.0 * hr);

      const double r_here = pt.r;
      const double Pstar =
          0.5 * r_here * S_eF * Erho_eF - 0.25 * r_here * E_rho_fbar * gradsq_eF +
          0.5 * r_here * cb.w * eF * phi_v * Erho_eF +
          0.5 * (0.5 * r_here * cb.A * E_rho_fbar - 0.5 * r_here * Erho_w) * eF * eF *
              phi_v * phi_v;

      // curve measure: c(t) = point with f = delta; |g(c',c')|^{1/2} dt
      // c' = d/dt [exp(r(t) e_rho(omega0(t)))]; approximate through the chart
      // tangent by differencing neighbouring samples in t
      const double tp = t + 0.5 * dt, tm = t - 0.5 * dt;
      auto point_at = [&](double tv) -> Vec4 {
        const double rv = std::sqrt(tv * tv + 4.0 * delta);
        Direction om{tv / rv, Vec4{side, 0, 0, 0}};
        const double rr[1] = {rv};
        return geo.ray(om, std::span<const double>(rr, 1))[0].fp.x;
      };
      Vec4 cdot;
      try {
        const Vec4 xp = point_at(tp), xm = point_at(tm);
        cdot = scale(1.0 / (tp - tm), sub(xp, xm));
      } catch (const std::exception&) {
        continue;
      }
      const Mat4 g = metric_at(geo.model(), gp.fp.x);
      const double measure = std::sqrt(std::abs(metric_dot(g, cdot, cdot, 2)));
      const double envelope =
          params.r0 * std::exp(params.a) * std::pow(pt.f, 2.0 * params.a) *
          (fd.e_rho * fd.e_rho + fd.e_theta * fd.e_theta +
           params.a * params.a / pt.f * phi_v * phi_v);
      total += std::abs(Pstar) * measure * dt;
      total_env += envelope * measure * dt;
      if (envelope > 1e-280)
        fitted = std::max(fitted, std::abs(Pstar) / envelope);
    }
  }
  out.pstar_integral = total / delta;
  out.envelope_integral = total_env / delta;
  out.fitted_constant = fitted;
  return out;
}

}  // namespace lorwave
