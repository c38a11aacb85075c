#include "lorwave/wave.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lorwave {

namespace {

// diagonal metric coefficients of the catalog models: g = -alpha^2 dt^2 +
// sum_i beta_i^2 dx_i^2
struct DiagMetric {
  double alpha, beta[2];
  double sg;  // sqrt|det g|
};

DiagMetric diag_metric(const MetricModel& model, double t, const double* xs, int nsd) {
  Vec4 x = {t, xs[0], nsd > 1 ? xs[1] : 0.0, 0.0};
  const Mat4 g = model.metric(x);
  DiagMetric out;
  out.alpha = std::sqrt(-g[0][0]);
  out.sg = out.alpha;
  for (int i = 0; i < nsd; ++i) {
    out.beta[i] = std::sqrt(g[1 + i][1 + i]);
    out.sg *= out.beta[i];
  }
  return out;
}

struct StepTables {
  int nnodes = 0, nt = 0, nsd = 1;
  int nx[2] = {0, 0};
  double dx[2] = {0, 0}, dt = 0;
  double xt2 = 0;         // X^t / (2 dt)
  double xx2[2] = {0, 0};  // X^i / (2 dx_i)
  std::vector<double> ctt_p, ctt_m, cxp[2], cxm[2], pot, c0, invD;
  std::vector<int> interior;            // flattened node ids
  std::vector<std::uint8_t> is_interior;

  std::size_t at(int n, int j) const { return std::size_t(n) * nnodes + j; }
  int node(int j, int k) const { return j + nx[0] * k; }
};

// builds tables for one choice of potential (forward q or adjoint V)
StepTables build_tables(const ControlProblem& pb, bool adjoint_potential) {
  StepTables tb;
  tb.nsd = pb.nsd;
  tb.nt = pb.nt;
  tb.nx[0] = pb.nx[0];
  tb.nx[1] = pb.nsd > 1 ? pb.nx[1] : 1;
  tb.nnodes = tb.nx[0] * tb.nx[1];
  tb.dx[0] = pb.dx[0];
  tb.dx[1] = pb.nsd > 1 ? pb.dx[1] : 1.0;
  tb.dt = pb.dt;
  tb.xt2 = pb.X_t / (2.0 * pb.dt);
  tb.xx2[0] = pb.X_x / (2.0 * pb.dx[0]);
  if (pb.nsd > 1) tb.xx2[1] = pb.X_y / (2.0 * pb.dx[1]);

  const std::size_t total = std::size_t(tb.nt + 1) * tb.nnodes;
  if (total > 40u * 1000u * 1000u)
    throw ConfigError("wave grid too large for coefficient tables");
  tb.ctt_p.assign(total, 0.0);
  tb.ctt_m.assign(total, 0.0);
  for (int i = 0; i < tb.nsd; ++i) {
    tb.cxp[i].assign(total, 0.0);
    tb.cxm[i].assign(total, 0.0);
  }
  tb.pot.assign(total, 0.0);
  tb.invD.assign(total, 0.0);
  tb.c0.assign(tb.nnodes, 0.0);

  tb.is_interior.assign(tb.nnodes, 0);
  for (int k = 0; k < tb.nx[1]; ++k)
    for (int j = 0; j < tb.nx[0]; ++j) {
      const bool in_x = j > 0 && j < tb.nx[0] - 1;
      const bool in_y = tb.nsd == 1 || (k > 0 && k < tb.nx[1] - 1);
      if (in_x && in_y) {
        tb.is_interior[tb.node(j, k)] = 1;
        tb.interior.push_back(tb.node(j, k));
      }
    }

  const MetricModel& model = *pb.model;
  auto coords = [&](int j, int k, double* xs) {
    xs[0] = pb.x_lo[0] + j * pb.dx[0];
    xs[1] = pb.nsd > 1 ? pb.x_lo[1] + k * pb.dx[1] : 0.0;
  };
  const double hdiv = 1e-5;  // step for the flat-divergence of X
  for (int n = 0; n <= tb.nt; ++n) {
    const double t = pb.tau_minus + n * pb.dt;
    for (int k = 0; k < tb.nx[1]; ++k)
      for (int j = 0; j < tb.nx[0]; ++j) {
        const int id = tb.node(j, k);
        if (!tb.is_interior[id]) continue;
        double xs[2];
        coords(j, k, xs);
        const DiagMetric m0 = diag_metric(model, t, xs, tb.nsd);
        const double inv_sg_dt2 = 1.0 / (m0.sg * pb.dt * pb.dt);
        const DiagMetric mp = diag_metric(model, t + 0.5 * pb.dt, xs, tb.nsd);
        const DiagMetric mm = diag_metric(model, t - 0.5 * pb.dt, xs, tb.nsd);
        tb.ctt_p[tb.at(n, id)] = -(mp.sg / (mp.alpha * mp.alpha)) * inv_sg_dt2;
        tb.ctt_m[tb.at(n, id)] = -(mm.sg / (mm.alpha * mm.alpha)) * inv_sg_dt2;
        for (int i = 0; i < tb.nsd; ++i) {
          double xp[2] = {xs[0], xs[1]};
          double xm[2] = {xs[0], xs[1]};
          xp[i] += 0.5 * pb.dx[i];
          xm[i] -= 0.5 * pb.dx[i];
          const DiagMetric sp = diag_metric(model, t, xp, tb.nsd);
          const DiagMetric sm = diag_metric(model, t, xm, tb.nsd);
          const double inv_sg_dx2 = 1.0 / (m0.sg * pb.dx[i] * pb.dx[i]);
          tb.cxp[i][tb.at(n, id)] = (sp.sg / (sp.beta[i] * sp.beta[i])) * inv_sg_dx2;
          tb.cxm[i][tb.at(n, id)] = (sm.sg / (sm.beta[i] * sm.beta[i])) * inv_sg_dx2;
        }
        double pot = pb.q_pot;
        if (adjoint_potential) {
          // V = q - div X, with div X = (1/sg) d_mu (sg X^mu)
          double div = 0.0;
          if (pb.X_t != 0.0 || pb.X_x != 0.0 || (pb.nsd > 1 && pb.X_y != 0.0)) {
            const DiagMetric tp = diag_metric(model, t + hdiv, xs, tb.nsd);
            const DiagMetric tm = diag_metric(model, t - hdiv, xs, tb.nsd);
            div += pb.X_t * (tp.sg - tm.sg) / (2 * hdiv * m0.sg);
            double xsp[2] = {xs[0], xs[1]}, xsm[2] = {xs[0], xs[1]};
            xsp[0] += hdiv;
            xsm[0] -= hdiv;
            const DiagMetric sp = diag_metric(model, t, xsp, tb.nsd);
            const DiagMetric sm = diag_metric(model, t, xsm, tb.nsd);
            div += pb.X_x * (sp.sg - sm.sg) / (2 * hdiv * m0.sg);
            if (pb.nsd > 1) {
              double ysp[2] = {xs[0], xs[1]}, ysm[2] = {xs[0], xs[1]};
              ysp[1] += hdiv;
              ysm[1] -= hdiv;
              const DiagMetric yp = diag_metric(model, t, ysp, tb.nsd);
              const DiagMetric ym = diag_metric(model, t, ysm, tb.nsd);
              div += pb.X_y * (yp.sg - ym.sg) / (2 * hdiv * m0.sg);
            }
          }
          pot = pb.q_pot - div;
        }
        tb.pot[tb.at(n, id)] = pot;
        tb.invD[tb.at(n, id)] = 1.0 / (tb.ctt_p[tb.at(n, id)] + tb.xt2);
        if (n == 0) {
          const DiagMetric mc = diag_metric(model, t, xs, tb.nsd);
          tb.c0[id] = mc.alpha * mc.alpha;  // -sg/sgtt at the initial slice
        }
      }
  }
  return tb;
}

const StepTables& make_tables(const ControlProblem& pb, bool adjoint_potential) {
  auto& slot = pb.step_cache[adjoint_potential ? 1 : 0];
  if (!slot) slot = std::make_shared<StepTables>(build_tables(pb, adjoint_potential));
  return *static_cast<const StepTables*>(slot.get());
}

// neighbour ids in +x, -x (, +y, -y)
inline void neighbours(const StepTables& tb, int id, int* out) {
  out[0] = id + 1;
  out[1] = id - 1;
  if (tb.nsd > 1) {
    out[2] = id + tb.nx[0];
    out[3] = id - tb.nx[0];
  }
}

double spatial_op(const StepTables& tb, int n, const std::vector<double>& y, int id) {
  int nb[4];
  neighbours(tb, id, nb);
  double s = tb.pot[tb.at(n, id)] * y[id];
  for (int i = 0; i < tb.nsd; ++i) {
    const double cp = tb.cxp[i][tb.at(n, id)], cm = tb.cxm[i][tb.at(n, id)];
    s += cp * (y[nb[2 * i]] - y[id]) - cm * (y[id] - y[nb[2 * i + 1]]);
    s += tb.xx2[i] * (y[nb[2 * i]] - y[nb[2 * i + 1]]);
  }
  return s;
}

// y^{n+1} (interior) from y^n, y^{n-1}
void step_forward(const StepTables& tb, int n, const std::vector<double>& y,
                  const std::vector<double>& ym, std::vector<double>& yp) {
  for (int id : tb.interior) {
    const double ctt_p = tb.ctt_p[tb.at(n, id)];
    const double ctt_m = tb.ctt_m[tb.at(n, id)];
    const double bracket = ctt_p * y[id] + ctt_m * (y[id] - ym[id]) + tb.xt2 * ym[id] -
                           spatial_op(tb, n, y, id);
    yp[id] = bracket * tb.invD[tb.at(n, id)];
  }
}

// adjoint of step_forward: distribute a^{n+1} into a^n and a^{n-1}
void step_adjoint(const StepTables& tb, int n, const std::vector<double>& ap,
                  std::vector<double>& a, std::vector<double>& am) {
  for (int id : tb.interior) {
    const double g = ap[id] * tb.invD[tb.at(n, id)];
    if (g == 0.0) continue;
    const double ctt_p = tb.ctt_p[tb.at(n, id)];
    const double ctt_m = tb.ctt_m[tb.at(n, id)];
    int nb[4];
    neighbours(tb, id, nb);
    double self = ctt_p + ctt_m - tb.pot[tb.at(n, id)];
    for (int i = 0; i < tb.nsd; ++i) {
      const double cp = tb.cxp[i][tb.at(n, id)], cm = tb.cxm[i][tb.at(n, id)];
      self += cp + cm;
      a[nb[2 * i]] += g * (-cp - tb.xx2[i]);
      a[nb[2 * i + 1]] += g * (-cm + tb.xx2[i]);
    }
    a[id] += g * self;
    am[id] += g * (-ctt_m + tb.xt2);
  }
}

// first step y^1 = y0 + dt y1 + dt^2/2 * c0 (spatial(y0) + X^t y1)
void first_step(const StepTables& tb, const std::vector<double>& y0,
                const std::vector<double>& y1, std::vector<double>& out) {
  const double half_dt2 = 0.5 * tb.dt * tb.dt;
  for (int id : tb.interior) {
    const double ytt = tb.c0[id] * (spatial_op(tb, 0, y0, id) + tb.xt2 * 2.0 * tb.dt * y1[id]);
    out[id] = y0[id] + tb.dt * y1[id] + half_dt2 * ytt;
  }
}

void first_step_adjoint(const StepTables& tb, const std::vector<double>& a1,
                        std::vector<double>& a0_data, std::vector<double>& a1_data) {
  const double half_dt2 = 0.5 * tb.dt * tb.dt;
  for (int id : tb.interior) {
    const double v = a1[id];
    if (v == 0.0) continue;
    a0_data[id] += v;                                            // d/d y0 (direct)
    a1_data[id] += v * (tb.dt + half_dt2 * tb.c0[id] * tb.xt2 * 2.0 * tb.dt);
    const double g = v * half_dt2 * tb.c0[id];
    int nb[4];
    neighbours(tb, id, nb);
    double self = tb.pot[tb.at(0, id)];
    for (int i = 0; i < tb.nsd; ++i) {
      const double cp = tb.cxp[i][tb.at(0, id)], cm = tb.cxm[i][tb.at(0, id)];
      self -= cp + cm;
      a0_data[nb[2 * i]] += g * (cp + tb.xx2[i]);
      a0_data[nb[2 * i + 1]] += g * (cm - tb.xx2[i]);
    }
    a0_data[id] += g * self;
  }
}

int boundary_node_id(const ControlProblem& pb, const StepTables& tb, int bnode) {
  const int side = pb.boundary_side[bnode];
  const int tr = int(pb.boundary_coord[bnode] + 0.5);
  if (pb.nsd == 1) return side == 0 ? 0 : tb.nx[0] - 1;
  switch (side) {
    case 0: return tb.node(0, tr);
    case 1: return tb.node(tb.nx[0] - 1, tr);
    case 2: return tb.node(tr, 0);
    default: return tb.node(tr, tb.nx[1] - 1);
  }
}

// N phi via the second-order one-sided stencil; phi vanishes on the wall, so
// both walls reduce to the same two interior coefficients.
struct TraceStencil {
  int id1 = -1, id2 = -1;
  double c1 = 0, c2 = 0;
};

TraceStencil trace_stencil(const ControlProblem& pb, const StepTables& tb, int bnode,
                           double t) {
  TraceStencil ts;
  const int side = pb.boundary_side[bnode];
  const int id = boundary_node_id(pb, tb, bnode);
  const int stride = (pb.nsd == 1 || side < 2) ? 1 : tb.nx[0];
  const int dir = (side % 2 == 0) ? 1 : -1;  // inward direction
  ts.id1 = id + dir * stride;
  ts.id2 = id + 2 * dir * stride;
  double xs[2];
  xs[0] = pb.x_lo[0] + (id % tb.nx[0]) * pb.dx[0];
  xs[1] = pb.nsd > 1 ? pb.x_lo[1] + (id / tb.nx[0]) * pb.dx[1] : 0.0;
  const DiagMetric m = diag_metric(*pb.model, t, xs, pb.nsd);
  const int axis = (pb.nsd == 1 || side < 2) ? 0 : 1;
  const double base = 1.0 / (2.0 * pb.dx[axis] * m.beta[axis]);
  ts.c1 = -4.0 * base;
  ts.c2 = 1.0 * base;
  return ts;
}

double wall_measure(const ControlProblem& pb, int bnode, double t) {
  // induced boundary measure per time step: alpha dt (1+1) times ds (2+1)
  const int side = pb.boundary_side[bnode];
  double xs[2];
  if (pb.nsd == 1) {
    xs[0] = side == 0 ? pb.x_lo[0] : pb.x_hi[0];
    xs[1] = 0.0;
  } else {
    const int tr = int(pb.boundary_coord[bnode] + 0.5);
    if (side < 2) {
      xs[0] = side == 0 ? pb.x_lo[0] : pb.x_hi[0];
      xs[1] = pb.x_lo[1] + tr * pb.dx[1];
    } else {
      xs[0] = pb.x_lo[0] + tr * pb.dx[0];
      xs[1] = side == 2 ? pb.x_lo[1] : pb.x_hi[1];
    }
  }
  const DiagMetric m = diag_metric(*pb.model, t, xs, pb.nsd);
  double w = m.alpha * pb.dt;
  if (pb.nsd > 1) {
    const int axis = (side < 2) ? 1 : 0;  // transverse axis
    w *= m.beta[axis] * pb.dx[axis];
  }
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// Problem assembly
// ---------------------------------------------------------------------------

namespace {

// N(f / eta) at a boundary point for the wall with outward chart direction
// sign*d_{axis}; requires the point to be inside D.
double wall_normal_f_eta(const Geometry& geo, const GeomPoint& gp, double eps,
                         int axis, double sign) {
  const int d = geo.dim();
  const PcParams pc{eps * 1.0, 1.0};  // eps0 = eps with r0 = 1
  const PcPoint pt = pc_assemble(gp, pc);
  double co_frame[4];
  const double ie = 1.0 / pt.eta;
  for (int i = 0; i < d; ++i)
    co_frame[i] = ie * pt.grad_f[i] - pt.f * ie * ie * pt.grad_eta[i];
  Mat4 A{};
  A[0] = gp.fp.frame.E_rho;
  A[1] = gp.fp.frame.E_theta;
  for (std::size_t i = 0; i < gp.fp.frame.E_A.size(); ++i)
    A[2 + i] = gp.fp.frame.E_A[i];
  const Mat4 Ainv = invert_spd_like(A, d);
  Vec4 chart = zero_vec();
  for (int mu = 0; mu < d; ++mu)
    for (int i = 0; i < d; ++i) chart[mu] += Ainv[mu][i] * co_frame[i];
  const Mat4 g = metric_at(geo.model(), gp.fp.x);
  const double beta = std::sqrt(g[1 + axis][1 + axis]);
  return sign * chart[1 + axis] / beta;
}

}  // namespace

ControlProblem build_problem(const WaveConfig& config) {
  ControlProblem pb;
  pb.model = config.model;
  pb.nsd = config.spatial_dims;
  if (pb.nsd < 1 || pb.nsd > 2) throw ConfigError("spatial_dims must be 1 or 2");
  if (config.model->dim() != pb.nsd + 1)
    throw ConfigError("model dimension does not match the wave configuration");
  for (int i = 0; i < pb.nsd; ++i) {
    pb.x_lo[i] = config.x_lo[i];
    pb.x_hi[i] = config.x_hi[i];
    pb.nx[i] = config.nx[i];
    if (pb.nx[i] < 16) throw ConfigError("grid sizes must be >= 16");
    pb.dx[i] = (pb.x_hi[i] - pb.x_lo[i]) / (pb.nx[i] - 1);
  }
  pb.tau_minus = config.tau_minus;
  pb.tau_plus = config.tau_plus;
  pb.nt = config.nt;
  if (pb.nt < 16) throw ConfigError("grid sizes must be >= 16");
  pb.dt = (pb.tau_plus - pb.tau_minus) / pb.nt;
  pb.cfl = config.cfl;
  if (pb.cfl > 0.5) throw ConfigError("CFL number must be <= 0.5");
  pb.centre = config.centre;
  pb.interior_centre = config.interior_centre;
  pb.carleman = config.carleman;
  pb.X_t = config.X_t;
  pb.X_x = config.X_x;
  pb.X_y = config.X_y;
  pb.q_pot = config.q_pot;
  pb.geometry_tol = config.geometry_tol;

  // CFL over a coarse scan of the cylinder
  double max_speed_ratio = 0.0;  // max over grid of (alpha/beta_i)/dx_i
  for (int n = 0; n <= pb.nt; n += std::max(1, pb.nt / 16)) {
    const double t = pb.tau_minus + n * pb.dt;
    for (int j = 0; j < pb.nx[0]; j += std::max(1, pb.nx[0] / 32)) {
      double xs[2] = {pb.x_lo[0] + j * pb.dx[0], 0.0};
      const int kmax = pb.nsd > 1 ? pb.nx[1] : 1;
      for (int k = 0; k < kmax; k += std::max(1, kmax / 8)) {
        if (pb.nsd > 1) xs[1] = pb.x_lo[1] + k * pb.dx[1];
        const DiagMetric m = diag_metric(*pb.model, t, xs, pb.nsd);
        for (int i = 0; i < pb.nsd; ++i)
          max_speed_ratio = std::max(max_speed_ratio, m.alpha / (m.beta[i] * pb.dx[i]));
      }
    }
  }
  if (pb.dt > pb.cfl / max_speed_ratio + 1e-12)
    throw ConfigError("CFL violation: dt = " + std::to_string(pb.dt) +
                      " exceeds " + std::to_string(pb.cfl / max_speed_ratio));

  // boundary node bookkeeping
  if (pb.nsd == 1) {
    pb.n_boundary = 2;
    pb.boundary_side = {0, 1};
    pb.boundary_coord = {0.0, 0.0};
  } else {
    pb.boundary_side.clear();
    pb.boundary_coord.clear();
    for (int k = 1; k < pb.nx[1] - 1; ++k) {
      pb.boundary_side.push_back(0);
      pb.boundary_coord.push_back(k);
      pb.boundary_side.push_back(1);
      pb.boundary_coord.push_back(k);
    }
    for (int j = 1; j < pb.nx[0] - 1; ++j) {
      pb.boundary_side.push_back(2);
      pb.boundary_coord.push_back(j);
      pb.boundary_side.push_back(3);
      pb.boundary_coord.push_back(j);
    }
    pb.n_boundary = int(pb.boundary_side.size());
  }
  pb.n_interior = (pb.nx[0] - 2) * (pb.nsd > 1 ? pb.nx[1] - 2 : 1);

  // hyperquadric geometry: exterior uses the single centre, interior uses two
  // shifted centres and an enlarged control window
  const bool centre_inside = [&] {
    if (pb.centre[0] < pb.tau_minus || pb.centre[0] > pb.tau_plus) return false;
    for (int i = 0; i < pb.nsd; ++i)
      if (pb.centre[1 + i] < pb.x_lo[i] || pb.centre[1 + i] > pb.x_hi[i]) return false;
    return true;
  }();
  if (centre_inside != config.interior_centre)
    throw ConfigError(centre_inside
                          ? "centre lies inside the cylinder: set interior_centre"
                          : "interior_centre set but the centre is outside the cylinder");

  pb.geometry = std::make_shared<Geometry>(pb.model, pb.centre, pb.geometry_tol);
  if (pb.interior_centre) {
    Vec4 p1 = pb.centre, p2 = pb.centre;
    p1[1] -= config.interior_shift;
    p2[1] += config.interior_shift;
    pb.geometry_alt[0] = std::make_shared<Geometry>(pb.model, p1, pb.geometry_tol);
    pb.geometry_alt[1] = std::make_shared<Geometry>(pb.model, p2, pb.geometry_tol);
  }

  // assumption: U cap D inside {r < r0}; scan the grid corners and a coarse
  // interior sample of the normal radius
  {
    double max_r = 0.0;
    for (int n = 0; n <= pb.nt; n += std::max(1, pb.nt / 8)) {
      const double t = pb.tau_minus + n * pb.dt;
      for (int j = 0; j < pb.nx[0]; j += std::max(1, pb.nx[0] / 8)) {
        Vec4 x = {t, pb.x_lo[0] + j * pb.dx[0], 0, 0};
        const int kmax = pb.nsd > 1 ? pb.nx[1] : 1;
        for (int k = 0; k < kmax; k += std::max(1, std::max(kmax / 8, 1))) {
          if (pb.nsd > 1) x[2] = pb.x_lo[1] + k * pb.dx[1];
          try {
            const FramePoint fp = pb.geometry->frame_point(x);
            if (fp.in_D) max_r = std::max(max_r, fp.r);
          } catch (const std::exception&) {
          }
        }
      }
    }
    if (max_r >= config.r0)
      throw ConfigError("assumption violated: U cap D extends to r = " +
                        std::to_string(max_r) + " >= r0 = " + std::to_string(config.r0));
  }

  // Gamma_plus and the control mask
  const double eps = config.carleman.eps0 / (config.r0 * config.r0);
  const std::size_t slots = std::size_t(pb.n_boundary) * (pb.nt + 1);
  pb.gamma_plus_mask.assign(slots, 0);
  pb.gamma_mask.assign(slots, 0);
  pb.normal_f_eta.assign(slots, 0.0);

  auto classify = [&](const Geometry& geo, int b, int n) -> double {
    const double t = pb.t_of(n);
    Vec4 x = {t, 0, 0, 0};
    const int side = pb.boundary_side[b];
    if (pb.nsd == 1) {
      x[1] = side == 0 ? pb.x_lo[0] : pb.x_hi[0];
    } else {
      const int tr = int(pb.boundary_coord[b] + 0.5);
      if (side < 2) {
        x[1] = side == 0 ? pb.x_lo[0] : pb.x_hi[0];
        x[2] = pb.x_lo[1] + tr * pb.dx[1];
      } else {
        x[1] = pb.x_lo[0] + tr * pb.dx[0];
        x[2] = side == 2 ? pb.x_lo[1] : pb.x_hi[1];
      }
    }
    try {
      const GeomPoint gp = geo.eval(x);
      if (!gp.fp.in_D) return 0.0;
      const int axis = (pb.nsd == 1 || side < 2) ? 0 : 1;
      const double sign = (side % 2 == 0) ? -1.0 : 1.0;
      return wall_normal_f_eta(geo, gp, eps, axis, sign);
    } catch (const std::exception&) {
      return 0.0;  // outside D or shooting failed: not in Gamma_plus
    }
  };

  for (int b = 0; b < pb.n_boundary; ++b)
    for (int n = 0; n <= pb.nt; ++n) {
      const std::size_t slot = std::size_t(b) * (pb.nt + 1) + n;
      const double nfe = classify(*pb.geometry, b, n);
      pb.normal_f_eta[slot] = nfe;
      pb.gamma_plus_mask[slot] = nfe > 0.0;
      if (!pb.interior_centre) {
        pb.gamma_mask[slot] = pb.gamma_plus_mask[slot];
      } else {
        const double n1 = classify(*pb.geometry_alt[0], b, n);
        const double n2 = classify(*pb.geometry_alt[1], b, n);
        pb.gamma_mask[slot] = (nfe > 0.0) || (n1 > 0.0) || (n2 > 0.0);
      }
    }
  if (pb.interior_centre) {
    // enlarge to an open superset of the closure: dilate by one time level
    std::vector<std::uint8_t> dilated = pb.gamma_mask;
    for (int b = 0; b < pb.n_boundary; ++b)
      for (int n = 0; n <= pb.nt; ++n) {
        const std::size_t slot = std::size_t(b) * (pb.nt + 1) + n;
        if (!pb.gamma_mask[slot]) {
          const bool lo = n > 0 && pb.gamma_mask[slot - 1];
          const bool hi = n < pb.nt && pb.gamma_mask[slot + 1];
          if (lo || hi) dilated[slot] = 1;
        }
      }
    pb.gamma_mask.swap(dilated);
  }

  // are the data slices clear of the closed cone exterior?
  pb.exterior_hypotheses_met = true;
  for (int j = 0; j < pb.nx[0] && pb.exterior_hypotheses_met; ++j) {
    for (double tcap : {pb.tau_minus, pb.tau_plus}) {
      Vec4 x = {tcap, pb.x_lo[0] + j * pb.dx[0], 0, 0};
      if (pb.nsd > 1) x[2] = 0.5 * (pb.x_lo[1] + pb.x_hi[1]);
      try {
        const FramePoint fp = pb.geometry->frame_point(x);
        if (fp.f >= 0.0) {
          pb.exterior_hypotheses_met = false;
          break;
        }
      } catch (const std::exception&) {
      }
    }
  }
  return pb;
}

// ---------------------------------------------------------------------------
// Evolutions
// ---------------------------------------------------------------------------

namespace {

struct SweepResult {
  std::vector<double> y_final, y_prev, y_prev2;
  std::vector<double> energy;
  std::vector<std::vector<double>> snapshots;
  std::vector<double> trace;  // Gamma_plus slots (row-major [b][n])
  int snapshot_stride = 0;
};

// shared forward sweep; F may be null (homogeneous boundary)
SweepResult sweep(const ControlProblem& pb, const StepTables& tb,
                  const BoundaryControl* F, const std::vector<double>* y0_full,
                  const std::vector<double>* y1_full, bool collect_trace,
                  bool collect_diag) {
  const int nn = tb.nnodes;
  std::vector<double> ym(nn, 0.0), y(nn, 0.0), yp(nn, 0.0);

  auto apply_boundary = [&](std::vector<double>& arr, int level) {
    for (int b = 0; b < pb.n_boundary; ++b) {
      const int id = boundary_node_id(pb, tb, b);
      double v = 0.0;
      if (F && pb.gamma(b, level)) v = F->at(b, level);
      arr[id] = v;
    }
  };

  // level 0
  if (y0_full)
    for (int id : tb.interior) ym[id] = (*y0_full)[id];
  apply_boundary(ym, 0);
  // level 1
  std::vector<double> zeros(nn, 0.0);
  first_step(tb, ym, y1_full ? *y1_full : zeros, y);
  if (y1_full) {
    // first_step handles y1 only through the Taylor term; add dt*y1 is inside
  }
  apply_boundary(y, 1);

  SweepResult res;
  res.snapshot_stride = std::max(1, tb.nt / 16);
  if (collect_diag) {
    res.snapshots.push_back(ym);
    res.energy.reserve(tb.nt);
  }
  if (collect_trace) res.trace.assign(std::size_t(pb.n_boundary) * (tb.nt + 1), 0.0);

  auto record = [&](int level, const std::vector<double>& cur,
                    const std::vector<double>& prev) {
    if (collect_trace) {
      for (int b = 0; b < pb.n_boundary; ++b)
        if (pb.gamma_plus(b, level)) {
          const TraceStencil st = trace_stencil(pb, tb, b, pb.t_of(level));
          res.trace[std::size_t(b) * (tb.nt + 1) + level] =
              st.c1 * cur[st.id1] + st.c2 * cur[st.id2];
        }
    }
    if (collect_diag && level >= 1) {
      // discrete energy of the leapfrog pair (prev, cur); the time-staggered
      // spatial product keeps the flat homogeneous case exactly conserved
      double e = 0.0;
      for (int id : tb.interior) {
        const double vt = (cur[id] - prev[id]) / tb.dt;
        e += vt * vt;
      }
      const int krows = tb.nsd > 1 ? tb.nx[1] : 1;
      for (int k = 0; k < krows; ++k)
        for (int j = 0; j < tb.nx[0] - 1; ++j) {
          const int id = tb.nsd > 1 ? tb.node(j, k) : j;
          const double da = (cur[id + 1] - cur[id]) / tb.dx[0];
          const double db = (prev[id + 1] - prev[id]) / tb.dx[0];
          e += da * db;
        }
      if (tb.nsd > 1)
        for (int k = 0; k < tb.nx[1] - 1; ++k)
          for (int j = 0; j < tb.nx[0]; ++j) {
            const int id = tb.node(j, k);
            const double da = (cur[id + tb.nx[0]] - cur[id]) / tb.dx[1];
            const double db = (prev[id + tb.nx[0]] - prev[id]) / tb.dx[1];
            e += da * db;
          }
      res.energy.push_back(0.5 * e * tb.dx[0] * (tb.nsd > 1 ? tb.dx[1] : 1.0));
    }
    if (collect_diag && level % res.snapshot_stride == 0 && level > 0)
      res.snapshots.push_back(cur);
  };
  record(0, ym, ym);
  record(1, y, ym);

  for (int n = 1; n < tb.nt; ++n) {
    std::fill(yp.begin(), yp.end(), 0.0);
    step_forward(tb, n, y, ym, yp);
    apply_boundary(yp, n + 1);
    const double probe = yp[tb.interior[tb.interior.size() / 2]];
    if (!std::isfinite(probe) || std::abs(probe) > 1e50)
      throw DivergenceError("instability detected in the wave sweep", n + 1);
    ym.swap(y);
    y.swap(yp);
    record(n + 1, y, ym);
    if (n == tb.nt - 2) res.y_prev2 = ym;  // y^{nt-2} before the last swap? see below
  }
  // after the loop: y = y^{nt}, ym = y^{nt-1}
  res.y_final = y;
  res.y_prev = ym;
  if (res.y_prev2.empty()) res.y_prev2 = ym;
  return res;
}

}  // namespace

StateTrajectory forward_solve(const ControlProblem& pb, const BoundaryControl& F,
                              const std::vector<double>& y0,
                              const std::vector<double>& y1) {
  const StepTables& tb = make_tables(pb, false);
  SweepResult sr = sweep(pb, tb, &F, &y0, &y1, true, true);
  StateTrajectory out;
  out.nt = pb.nt;
  out.final_state = sr.y_final;
  out.final_state_prev = sr.y_prev;
  out.final_velocity.assign(tb.nnodes, 0.0);
  for (int id = 0; id < tb.nnodes; ++id)
    out.final_velocity[id] =
        (3.0 * sr.y_final[id] - 4.0 * sr.y_prev[id] + sr.y_prev2[id]) / (2.0 * pb.dt);
  out.energy = std::move(sr.energy);
  out.boundary_trace = std::move(sr.trace);
  out.snapshots = std::move(sr.snapshots);
  out.snapshot_stride = sr.snapshot_stride;
  return out;
}

StateTrajectory adjoint_solve(const ControlProblem& pb, const std::vector<double>& phi0,
                              const std::vector<double>& phi1) {
  const StepTables& tb = make_tables(pb, true);
  SweepResult sr = sweep(pb, tb, nullptr, &phi0, &phi1, true, true);
  StateTrajectory out;
  out.nt = pb.nt;
  out.final_state = sr.y_final;
  out.final_state_prev = sr.y_prev;
  out.final_velocity.assign(tb.nnodes, 0.0);
  for (int id = 0; id < tb.nnodes; ++id)
    out.final_velocity[id] =
        (3.0 * sr.y_final[id] - 4.0 * sr.y_prev[id] + sr.y_prev2[id]) / (2.0 * pb.dt);
  out.energy = std::move(sr.energy);
  out.boundary_trace = std::move(sr.trace);
  out.snapshots = std::move(sr.snapshots);
  out.snapshot_stride = sr.snapshot_stride;
  return out;
}

// ---------------------------------------------------------------------------
// Exact-transpose linear maps for HUM
// ---------------------------------------------------------------------------

TerminalPair apply_control_to_terminal(const ControlProblem& pb, const BoundaryControl& F) {
  const StepTables& tb = make_tables(pb, false);
  const int nn = tb.nnodes;
  std::vector<double> ym(nn, 0.0), y(nn, 0.0), yp(nn, 0.0), y_nt2(nn, 0.0);
  auto apply_boundary = [&](std::vector<double>& arr, int level) {
    for (int b = 0; b < pb.n_boundary; ++b) {
      const int id = boundary_node_id(pb, tb, b);
      arr[id] = pb.gamma(b, level) ? F.at(b, level) : 0.0;
    }
  };
  apply_boundary(ym, 0);
  std::vector<double> zeros(nn, 0.0);
  first_step(tb, ym, zeros, y);
  apply_boundary(y, 1);
  if (tb.nt - 2 == 1) y_nt2 = y;
  if (tb.nt - 2 == 0) y_nt2 = ym;
  for (int n = 1; n < tb.nt; ++n) {
    std::fill(yp.begin(), yp.end(), 0.0);
    step_forward(tb, n, y, ym, yp);
    apply_boundary(yp, n + 1);
    ym.swap(y);
    y.swap(yp);
    if (n + 1 == tb.nt - 2) y_nt2 = y;
  }
  TerminalPair out;
  out.pos = y;
  out.vel.assign(nn, 0.0);
  for (int id = 0; id < nn; ++id)
    out.vel[id] = (3.0 * y[id] - 4.0 * ym[id] + y_nt2[id]) / (2.0 * pb.dt);
  // terminal pair lives on interior nodes only
  for (int id = 0; id < nn; ++id)
    if (!tb.is_interior[id]) {
      out.pos[id] = 0.0;
      out.vel[id] = 0.0;
    }
  return out;
}

BoundaryControl apply_control_to_terminal_transpose(const ControlProblem& pb,
                                                    const TerminalPair& w) {
  const StepTables& tb = make_tables(pb, false);
  const int nn = tb.nnodes;
  // adjoint levels
  std::vector<std::vector<double>> adj(tb.nt + 1, std::vector<double>(nn, 0.0));
  const double cd = 1.0 / (2.0 * pb.dt);
  for (int id = 0; id < nn; ++id) {
    if (!tb.is_interior[id]) continue;
    adj[tb.nt][id] += w.pos[id] + 3.0 * cd * w.vel[id];
    adj[tb.nt - 1][id] += -4.0 * cd * w.vel[id];
    adj[tb.nt - 2][id] += 1.0 * cd * w.vel[id];
  }
  BoundaryControl F;
  F.n_boundary = pb.n_boundary;
  F.nt_levels = pb.nt + 1;
  F.values.assign(std::size_t(pb.n_boundary) * (pb.nt + 1), 0.0);

  for (int level = tb.nt; level >= 2; --level) {
    // boundary rows
    for (int b = 0; b < pb.n_boundary; ++b) {
      const int id = boundary_node_id(pb, tb, b);
      if (pb.gamma(b, level)) F.at(b, level) += adj[level][id];
      adj[level][id] = 0.0;  // boundary value never came from earlier levels
    }
    step_adjoint(tb, level - 1, adj[level], adj[level - 1], adj[level - 2]);
  }
  // level 1 rows
  for (int b = 0; b < pb.n_boundary; ++b) {
    const int id = boundary_node_id(pb, tb, b);
    if (pb.gamma(b, 1)) F.at(b, 1) += adj[1][id];
    adj[1][id] = 0.0;
  }
  {
    std::vector<double> a0_data(nn, 0.0), a1_data(nn, 0.0);
    first_step_adjoint(tb, adj[1], a0_data, a1_data);
    for (int id = 0; id < nn; ++id) adj[0][id] += a0_data[id];
    // a1_data corresponds to initial velocity, which is zero for the control map
  }
  for (int b = 0; b < pb.n_boundary; ++b) {
    const int id = boundary_node_id(pb, tb, b);
    if (pb.gamma(b, 0)) F.at(b, 0) += adj[0][id];
  }
  return F;
}

std::vector<double> apply_data_to_trace(const ControlProblem& pb,
                                        const std::vector<double>& phi0,
                                        const std::vector<double>& phi1) {
  const StepTables& tb = make_tables(pb, true);
  SweepResult sr = sweep(pb, tb, nullptr, &phi0, &phi1, true, false);
  return sr.trace;
}

void apply_data_to_trace_transpose(const ControlProblem& pb,
                                   const std::vector<double>& trace_w,
                                   std::vector<double>& phi0_out,
                                   std::vector<double>& phi1_out) {
  const StepTables& tb = make_tables(pb, true);
  const int nn = tb.nnodes;
  std::vector<std::vector<double>> adj(tb.nt + 1, std::vector<double>(nn, 0.0));
  for (int b = 0; b < pb.n_boundary; ++b)
    for (int n = 0; n <= tb.nt; ++n) {
      if (!pb.gamma_plus(b, n)) continue;
      const double wv = trace_w[std::size_t(b) * (tb.nt + 1) + n];
      if (wv == 0.0) continue;
      const TraceStencil st = trace_stencil(pb, tb, b, pb.t_of(n));
      adj[n][st.id1] += wv * st.c1;
      adj[n][st.id2] += wv * st.c2;
    }
  phi0_out.assign(nn, 0.0);
  phi1_out.assign(nn, 0.0);
  for (int level = tb.nt; level >= 2; --level) {
    for (int b = 0; b < pb.n_boundary; ++b) {
      const int id = boundary_node_id(pb, tb, b);
      adj[level][id] = 0.0;  // homogeneous Dirichlet rows
    }
    step_adjoint(tb, level - 1, adj[level], adj[level - 1], adj[level - 2]);
  }
  for (int b = 0; b < pb.n_boundary; ++b)
    adj[1][boundary_node_id(pb, tb, b)] = 0.0;
  {
    std::vector<double> a0_data(nn, 0.0), a1_data(nn, 0.0);
    first_step_adjoint(tb, adj[1], a0_data, a1_data);
    for (int id = 0; id < nn; ++id) {
      adj[0][id] += a0_data[id];
      phi1_out[id] += a1_data[id];
    }
  }
  for (int b = 0; b < pb.n_boundary; ++b)
    adj[0][boundary_node_id(pb, tb, b)] = 0.0;
  for (int id = 0; id < nn; ++id)
    if (tb.is_interior[id]) phi0_out[id] += adj[0][id];
  for (int id = 0; id < nn; ++id)
    if (!tb.is_interior[id]) {
      phi0_out[id] = 0.0;
      phi1_out[id] = 0.0;
    }
}

// ---------------------------------------------------------------------------
// Inner products
// ---------------------------------------------------------------------------

namespace {

double cell_volume(const ControlProblem& pb) {
  return pb.dx[0] * (pb.nsd > 1 ? pb.dx[1] : 1.0);
}

// tridiagonal/CG solve of the discrete Dirichlet Laplacian A z = rhs
std::vector<double> dirichlet_laplacian_solve(const ControlProblem& pb,
                                              const std::vector<double>& rhs) {
  const int nx0 = pb.nx[0];
  if (pb.nsd == 1) {
    const int m = nx0 - 2;
    std::vector<double> a(m, -1.0 / (pb.dx[0] * pb.dx[0]));
    std::vector<double> bdiag(m, 2.0 / (pb.dx[0] * pb.dx[0]));
    std::vector<double> c(m, -1.0 / (pb.dx[0] * pb.dx[0]));
    std::vector<double> d(m), z(nx0, 0.0);
    for (int j = 1; j <= m; ++j) d[j - 1] = rhs[j];
    for (int i = 1; i < m; ++i) {
      const double w = a[i] / bdiag[i - 1];
      bdiag[i] -= w * c[i - 1];
      d[i] -= w * d[i - 1];
    }
    std::vector<double> sol(m);
    sol[m - 1] = d[m - 1] / bdiag[m - 1];
    for (int i = m - 2; i >= 0; --i) sol[i] = (d[i] - c[i] * sol[i + 1]) / bdiag[i];
    for (int j = 1; j <= m; ++j) z[j] = sol[j - 1];
    return z;
  }
  // 2D: plain CG on the 5-point Laplacian
  const int nn = pb.nx[0] * pb.nx[1];
  auto apply_A = [&](const std::vector<double>& u, std::vector<double>& out) {
    out.assign(nn, 0.0);
    for (int k = 1; k < pb.nx[1] - 1; ++k)
      for (int j = 1; j < pb.nx[0] - 1; ++j) {
        const int id = j + pb.nx[0] * k;
        out[id] = (2 * u[id] - u[id - 1] - u[id + 1]) / (pb.dx[0] * pb.dx[0]) +
                  (2 * u[id] - u[id - pb.nx[0]] - u[id + pb.nx[0]]) /
                      (pb.dx[1] * pb.dx[1]);
      }
  };
  std::vector<double> z(nn, 0.0), r = rhs, p = rhs, Ap(nn);
  for (int id = 0; id < nn; ++id) {
    const int j = id % pb.nx[0], k = id / pb.nx[0];
    if (j == 0 || j == pb.nx[0] - 1 || k == 0 || k == pb.nx[1] - 1) {
      r[id] = 0.0;
      p[id] = 0.0;
    }
  }
  double rr = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
  const double rr0 = rr;
  for (int it = 0; it < 4000 && rr > 1e-26 * std::max(1.0, rr0); ++it) {
    apply_A(p, Ap);
    const double pAp = std::inner_product(p.begin(), p.end(), Ap.begin(), 0.0);
    const double alpha = rr / pAp;
    for (int id = 0; id < nn; ++id) {
      z[id] += alpha * p[id];
      r[id] -= alpha * Ap[id];
    }
    const double rr_new = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (int id = 0; id < nn; ++id) p[id] = r[id] + beta * p[id];
  }
  return z;
}

}  // namespace

double slice_l2(const ControlProblem& pb, const std::vector<double>& u,
                const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s * cell_volume(pb);
}

double slice_h1(const ControlProblem& pb, const std::vector<double>& u,
                const std::vector<double>& v) {
  double s = slice_l2(pb, u, v);
  const int nx0 = pb.nx[0];
  if (pb.nsd == 1) {
    for (int j = 0; j < nx0 - 1; ++j)
      s += ((u[j + 1] - u[j]) / pb.dx[0]) * ((v[j + 1] - v[j]) / pb.dx[0]) * pb.dx[0];
  } else {
    for (int k = 0; k < pb.nx[1]; ++k)
      for (int j = 0; j < nx0 - 1; ++j) {
        const int id = j + nx0 * k;
        s += ((u[id + 1] - u[id]) / pb.dx[0]) * ((v[id + 1] - v[id]) / pb.dx[0]) *
             cell_volume(pb);
      }
    for (int k = 0; k < pb.nx[1] - 1; ++k)
      for (int j = 0; j < nx0; ++j) {
        const int id = j + nx0 * k;
        s += ((u[id + nx0] - u[id]) / pb.dx[1]) * ((v[id + nx0] - v[id]) / pb.dx[1]) *
             cell_volume(pb);
      }
  }
  return s;
}

double slice_hm1(const ControlProblem& pb, const std::vector<double>& u,
                 const std::vector<double>& v) {
  const std::vector<double> z = dirichlet_laplacian_solve(pb, v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * z[i];
  return s * cell_volume(pb);
}

double gamma_l2(const ControlProblem& pb, const BoundaryControl& F,
                const BoundaryControl& G) {
  double s = 0.0;
  for (int b = 0; b < pb.n_boundary; ++b)
    for (int n = 0; n <= pb.nt; ++n)
      if (pb.gamma(b, n)) s += F.at(b, n) * G.at(b, n) * wall_measure(pb, b, pb.t_of(n));
  return s;
}

double terminal_inner(const ControlProblem& pb, const TerminalPair& u,
                      const TerminalPair& v) {
  return slice_l2(pb, u.pos, v.pos) + slice_hm1(pb, u.vel, v.vel);
}

// ---------------------------------------------------------------------------
// HUM
// ---------------------------------------------------------------------------

namespace {

// Gstar = D_Gamma^{-1} G^T W, where W is the terminal L2 (+) H^-1 weight
BoundaryControl hum_gstar(const ControlProblem& pb, const TerminalPair& mu) {
  TerminalPair wmu;
  wmu.pos.assign(mu.pos.size(), 0.0);
  wmu.vel = dirichlet_laplacian_solve(pb, mu.vel);
  const double vol = cell_volume(pb);
  for (std::size_t i = 0; i < mu.pos.size(); ++i) {
    wmu.pos[i] = mu.pos[i] * vol;
    wmu.vel[i] *= vol;
  }
  BoundaryControl Ft = apply_control_to_terminal_transpose(pb, wmu);
  for (int b = 0; b < pb.n_boundary; ++b)
    for (int n = 0; n <= pb.nt; ++n) {
      if (!pb.gamma(b, n)) {
        Ft.at(b, n) = 0.0;
        continue;
      }
      Ft.at(b, n) /= wall_measure(pb, b, pb.t_of(n));
    }
  return Ft;
}

}  // namespace

TerminalPair hum_gramian_apply(const ControlProblem& pb, const TerminalPair& mu) {
  return apply_control_to_terminal(pb, hum_gstar(pb, mu));
}

HumResult hum_control(const ControlProblem& pb, const std::vector<double>& y0_minus,
                      const std::vector<double>& y1_minus,
                      const std::vector<double>& y0_plus,
                      const std::vector<double>& y1_plus, double tol, int max_iter) {
  const StepTables& tb = make_tables(pb, false);
  const int nn = tb.nnodes;

  // free evolution endpoint
  BoundaryControl zeroF;
  zeroF.n_boundary = pb.n_boundary;
  zeroF.nt_levels = pb.nt + 1;
  zeroF.values.assign(std::size_t(pb.n_boundary) * (pb.nt + 1), 0.0);
  const StateTrajectory free_run = forward_solve(pb, zeroF, y0_minus, y1_minus);

  TerminalPair d;
  d.pos.assign(nn, 0.0);
  d.vel.assign(nn, 0.0);
  for (int id = 0; id < nn; ++id) {
    if (!tb.is_interior[id]) continue;
    d.pos[id] = y0_plus[id] - free_run.final_state[id];
    d.vel[id] = y1_plus[id] - free_run.final_velocity[id];
  }

  HumResult res;
  const double dnorm = std::sqrt(std::max(terminal_inner(pb, d, d), 0.0));
  if (dnorm < 1e-14) {
    res.control = zeroF;
    res.converged = true;
    res.terminal_error_l2 = 0.0;
    res.terminal_error_full = 0.0;
    return res;
  }

  TerminalPair mu;
  mu.pos.assign(nn, 0.0);
  mu.vel.assign(nn, 0.0);
  TerminalPair r = d, p = d;
  double rr = terminal_inner(pb, r, r);
  res.residual_history.push_back(std::sqrt(rr) / dnorm);

  int it = 0;
  for (; it < max_iter; ++it) {
    if (std::sqrt(rr) / dnorm <= tol) break;
    const TerminalPair q = hum_gramian_apply(pb, p);
    const double pq = terminal_inner(pb, p, q);
    if (!(pq > 0)) break;  // Gramian is only PSD; stagnation on the null space
    const double alpha = rr / pq;
    for (int id = 0; id < nn; ++id) {
      mu.pos[id] += alpha * p.pos[id];
      mu.vel[id] += alpha * p.vel[id];
      r.pos[id] -= alpha * q.pos[id];
      r.vel[id] -= alpha * q.vel[id];
    }
    const double rr_new = terminal_inner(pb, r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (int id = 0; id < nn; ++id) {
      p.pos[id] = r.pos[id] + beta * p.pos[id];
      p.vel[id] = r.vel[id] + beta * p.vel[id];
    }
    res.residual_history.push_back(std::sqrt(rr) / dnorm);
  }
  res.iterations = it;
  res.control = hum_gstar(pb, mu);
  res.control_norm = std::sqrt(std::max(gamma_l2(pb, res.control, res.control), 0.0));

  // measured terminal error of the realised control
  const StateTrajectory controlled = forward_solve(pb, res.control, y0_minus, y1_minus);
  std::vector<double> err_pos(nn, 0.0), err_vel(nn, 0.0), tgt_pos(nn, 0.0),
      tgt_vel(nn, 0.0);
  for (int id = 0; id < nn; ++id) {
    if (!tb.is_interior[id]) continue;
    err_pos[id] = controlled.final_state[id] - y0_plus[id];
    err_vel[id] = controlled.final_velocity[id] - y1_plus[id];
    tgt_pos[id] = y0_plus[id];
    tgt_vel[id] = y1_plus[id];
  }
  const double tgt_l2 = std::sqrt(std::max(slice_l2(pb, tgt_pos, tgt_pos), 1e-300));
  res.terminal_error_l2 = std::sqrt(slice_l2(pb, err_pos, err_pos)) / tgt_l2;
  TerminalPair epair{err_pos, err_vel}, tpair{tgt_pos, tgt_vel};
  res.terminal_error_full = std::sqrt(std::max(terminal_inner(pb, epair, epair), 0.0)) /
                            std::sqrt(std::max(terminal_inner(pb, tpair, tpair), 1e-300));
  res.converged = res.terminal_error_l2 <= tol || (!res.residual_history.empty() &&
                                                   res.residual_history.back() <= tol);
  return res;
}

// ---------------------------------------------------------------------------
// Observability probe
// ---------------------------------------------------------------------------

ObservabilityResult observability_probe(const ControlProblem& pb, int n_samples,
                                        std::uint64_t seed, int power_iters) {
  ObservabilityResult res;
  bool any_gamma = false;
  for (std::size_t i = 0; i < pb.gamma_plus_mask.size(); ++i)
    if (pb.gamma_plus_mask[i]) any_gamma = true;
  if (!any_gamma) {
    res.no_observability = true;
    return res;
  }
  const StepTables& tb = make_tables(pb, true);
  const int nn = tb.nnodes;

  auto data_norm2 = [&](const std::vector<double>& p0, const std::vector<double>& p1) {
    return slice_h1(pb, p0, p0) + slice_l2(pb, p1, p1);
  };
  auto trace_norm2 = [&](const std::vector<double>& tr) {
    double s = 0.0;
    for (int b = 0; b < pb.n_boundary; ++b)
      for (int n = 0; n <= pb.nt; ++n)
        if (pb.gamma_plus(b, n)) {
          const double v = tr[std::size_t(b) * (pb.nt + 1) + n];
          s += v * v * wall_measure(pb, b, pb.t_of(n));
        }
    return s;
  };

  double qmin = 1e300, qmax = 0.0;
  CounterRng rng(seed);
  std::vector<double> p0(nn, 0.0), p1(nn, 0.0);
  for (int s = 0; s < n_samples; ++s) {
    for (int id : tb.interior) {
      p0[id] = rng.normal();
      p1[id] = rng.normal();
    }
    // smooth the position sample a little so it is not dominated by the mesh
    // frequency (three Jacobi sweeps)
    for (int sweep_i = 0; sweep_i < 3; ++sweep_i) {
      std::vector<double> q0 = p0;
      for (int id : tb.interior) {
        int nb[4];
        neighbours(tb, id, nb);
        double acc = 2.0 * q0[id];
        int cnt = 2;
        for (int i = 0; i < 2 * tb.nsd; ++i) {
          acc += q0[nb[i]];
          ++cnt;
        }
        p0[id] = acc / cnt;
      }
    }
    const double dn = data_norm2(p0, p1);
    if (dn < 1e-30) continue;
    const auto tr = apply_data_to_trace(pb, p0, p1);
    const double q = trace_norm2(tr) / dn;
    qmin = std::min(qmin, q);
    qmax = std::max(qmax, q);
  }
  res.min_quotient_sampled = qmin;
  res.max_quotient = qmax;
  res.samples = n_samples;

  // power-iteration refinement of the smallest quotient:
  // M = W^{-1} O^T D O is symmetric PSD in the W inner product; iterate on
  // (lambda_hat I - M) to converge toward its smallest eigenvalue.
  auto apply_M = [&](const std::vector<double>& u0, const std::vector<double>& u1,
                     std::vector<double>& o0, std::vector<double>& o1) {
    const auto tr = apply_data_to_trace(pb, u0, u1);
    std::vector<double> trw(tr.size(), 0.0);
    for (int b = 0; b < pb.n_boundary; ++b)
      for (int n = 0; n <= pb.nt; ++n)
        if (pb.gamma_plus(b, n)) {
          const std::size_t i = std::size_t(b) * (pb.nt + 1) + n;
          trw[i] = tr[i] * wall_measure(pb, b, pb.t_of(n));
        }
    std::vector<double> w0, w1;
    apply_data_to_trace_transpose(pb, trw, w0, w1);
    // w = O^T D O u in euclidean coordinates; apply W^{-1}
    // W = (H1 Gram, L2 Gram): H1 Gram = vol (A + I) on interiors
    const double vol = cell_volume(pb);
    // solve (A + I) z = w0 / vol by CG (SPD)
    const int m = nn;
    std::vector<double> rhs(m, 0.0);
    for (int id : tb.interior) rhs[id] = w0[id] / vol;
    auto apply_AI = [&](const std::vector<double>& u, std::vector<double>& out) {
      out.assign(m, 0.0);
      for (int id : tb.interior) {
        int nb[4];
        neighbours(tb, id, nb);
        double lap = 0.0;
        lap += (2 * u[id] - u[nb[0]] - u[nb[1]]) / (pb.dx[0] * pb.dx[0]);
        if (tb.nsd > 1)
          lap += (2 * u[id] - u[nb[2]] - u[nb[3]]) / (pb.dx[1] * pb.dx[1]);
        out[id] = lap + u[id];
      }
    };
    std::vector<double> z(m, 0.0), rr_ = rhs, pp = rhs, Ap(m);
    double rs = std::inner_product(rr_.begin(), rr_.end(), rr_.begin(), 0.0);
    const double rs0 = rs;
    for (int itc = 0; itc < 2000 && rs > 1e-24 * std::max(1.0, rs0); ++itc) {
      apply_AI(pp, Ap);
      const double pAp = std::inner_product(pp.begin(), pp.end(), Ap.begin(), 0.0);
      const double alpha = rs / pAp;
      for (int id = 0; id < m; ++id) {
        z[id] += alpha * pp[id];
        rr_[id] -= alpha * Ap[id];
      }
      const double rs_new = std::inner_product(rr_.begin(), rr_.end(), rr_.begin(), 0.0);
      const double beta = rs_new / rs;
      rs = rs_new;
      for (int id = 0; id < m; ++id) pp[id] = rr_[id] + beta * pp[id];
    }
    o0 = z;
    o1.assign(m, 0.0);
    for (int id : tb.interior) o1[id] = w1[id] / vol;
  };

  // estimate the top eigenvalue first
  std::vector<double> u0(nn, 0.0), u1(nn, 0.0), v0, v1;
  for (int id : tb.interior) {
    u0[id] = rng.normal();
    u1[id] = rng.normal();
  }
  double lam_top = 0.0;
  for (int i = 0; i < power_iters; ++i) {
    apply_M(u0, u1, v0, v1);
    const double nrm = std::sqrt(data_norm2(v0, v1));
    if (nrm < 1e-300) break;
    lam_top = std::sqrt(data_norm2(v0, v1)) / std::max(std::sqrt(data_norm2(u0, u1)), 1e-300);
    const double inv = 1.0 / nrm;
    for (int id = 0; id < nn; ++id) {
      u0[id] = v0[id] * inv;
      u1[id] = v1[id] * inv;
    }
  }
  const double shift = 1.1 * std::max(lam_top, qmax);
  for (int id : tb.interior) {
    u0[id] = rng.normal();
    u1[id] = rng.normal();
  }
  double top_shifted = 0.0;
  for (int i = 0; i < power_iters; ++i) {
    apply_M(u0, u1, v0, v1);
    for (int id = 0; id < nn; ++id) {
      v0[id] = shift * u0[id] - v0[id];
      v1[id] = shift * u1[id] - v1[id];
    }
    const double nrm = std::sqrt(data_norm2(v0, v1));
    if (nrm < 1e-300) break;
    top_shifted = nrm / std::max(std::sqrt(data_norm2(u0, u1)), 1e-300);
    const double inv = 1.0 / nrm;
    for (int id = 0; id < nn; ++id) {
      u0[id] = v0[id] * inv;
      u1[id] = v1[id] * inv;
    }
  }
  res.min_quotient_refined = std::max(shift - top_shifted, 0.0);
  return res;
}

void bump_target(const ControlProblem& pb, double centre, double width,
                 std::vector<double>& y0, std::vector<double>& y1) {
  const StepTables& tb = make_tables(pb, false);
  y0.assign(tb.nnodes, 0.0);
  y1.assign(tb.nnodes, 0.0);
  for (int id : tb.interior) {
    const int j = id % pb.nx[0];
    const double x = pb.x_lo[0] + j * pb.dx[0];
    const double u = (x - centre) / width;
    double cut = 1.0;
    if (pb.nsd > 1) {
      const int k = id / pb.nx[0];
      const double yc = pb.x_lo[1] + k * pb.dx[1];
      const double uy = (yc - 0.5 * (pb.x_lo[1] + pb.x_hi[1])) / width;
      cut = std::exp(-uy * uy);
    }
    y0[id] = std::exp(-u * u) * cut;
    // left-moving profile: y(t, x) = B(x + (t - tau_plus))
    y1[id] = -2.0 * u / width * std::exp(-u * u) * cut;
  }
}

double energy_ratio_estimate(const ControlProblem& pb, int n_samples, std::uint64_t seed) {
  const StepTables& tb = make_tables(pb, true);
  const int nn = tb.nnodes;
  CounterRng rng(seed);
  double worst = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    std::vector<double> p0(nn, 0.0), p1(nn, 0.0);
    for (int id : tb.interior) {
      p0[id] = rng.normal();
      p1[id] = rng.normal();
    }
    // smooth twice so the ratio reflects resolved modes
    for (int sw = 0; sw < 4; ++sw) {
      std::vector<double> q0 = p0, q1 = p1;
      for (int id : tb.interior) {
        int nb[4];
        neighbours(tb, id, nb);
        double a0 = 2 * q0[id], a1 = 2 * q1[id];
        int cnt = 2;
        for (int i = 0; i < 2 * tb.nsd; ++i) {
          a0 += q0[nb[i]];
          a1 += q1[nb[i]];
          ++cnt;
        }
        p0[id] = a0 / cnt;
        p1[id] = a1 / cnt;
      }
    }
    const StateTrajectory tr = adjoint_solve(pb, p0, p1);
    const double n_minus = slice_h1(pb, p0, p0) + slice_l2(pb, p1, p1);
    const double n_plus = slice_h1(pb, tr.final_state, tr.final_state) +
                          slice_l2(pb, tr.final_velocity, tr.final_velocity);
    if (n_plus > 1e-30) worst = std::max(worst, std::sqrt(n_minus / n_plus));
  }
  return worst;
}

}  // namespace lorwave
