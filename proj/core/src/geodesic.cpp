#include "lorwave/geodesic.hpp"

#include <algorithm>
#include <cmath>

namespace lorwave {

namespace {

// state = (x, v)
void geodesic_rhs(const MetricModel& model, double, const std::vector<double>& y,
                  std::vector<double>& dy) {
  const int d = model.dim();
  Vec4 x = {0, 0, 0, 0}, v = {0, 0, 0, 0};
  for (int a = 0; a < d; ++a) {
    x[a] = y[a];
    v[a] = y[d + a];
  }
  const Tens3 G = model.christoffel(x);
  for (int a = 0; a < d; ++a) dy[a] = v[a];
  for (int l = 0; l < d; ++l) {
    double acc = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) acc += G.c[l][a][b] * v[a] * v[b];
    dy[d + l] = -acc;
  }
}

}  // namespace

void GeodesicPath::eval(double si, Vec4* xs, Vec4* vs) const {
  if (s.empty()) throw IntegrationError("empty geodesic path", si);
  const int d = dim;
  if (si <= s.front() || s.size() == 1) {
    if (xs) *xs = x.front();
    if (vs) *vs = v.front();
    return;
  }
  if (si >= s.back()) {
    if (xs) *xs = x.back();
    if (vs) *vs = v.back();
    return;
  }
  const auto it = std::upper_bound(s.begin(), s.end(), si);
  const std::size_t hi = std::size_t(it - s.begin());
  const std::size_t lo = hi - 1;
  const double h = s[hi] - s[lo];
  const double u = (si - s[lo]) / h;
  const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
  const double h10 = u * (1 - u) * (1 - u);
  const double h01 = u * u * (3 - 2 * u);
  const double h11 = u * u * (u - 1);
  // velocities double as derivatives of x; v is interpolated linearly in the
  // Hermite sense through finite slope reconstruction
  for (int a = 0; a < d; ++a) {
    if (xs)
      (*xs)[a] = h00 * x[lo][a] + h * h10 * v[lo][a] + h01 * x[hi][a] + h * h11 * v[hi][a];
    if (vs) (*vs)[a] = (1 - u) * v[lo][a] + u * v[hi][a];
  }
}

GeodesicPath integrate_geodesic(const MetricModel& model, const Vec4& x0,
                                const Vec4& v0, double s_end, double tol) {
  if (!model.in_chart(x0)) throw ChartDomainError("geodesic start outside chart");
  const int d = model.dim();
  GeodesicPath path;
  path.dim = d;

  std::vector<double> y(2 * d);
  for (int a = 0; a < d; ++a) {
    y[a] = x0[a];
    y[d + a] = v0[a];
  }
  OdeOptions opts;
  opts.rtol = tol;
  opts.atol = tol * 1e-2;
  opts.initial_step = std::min(1e-2, std::abs(s_end) > 0 ? std::abs(s_end) : 1e-2);

  auto record = [&](double s, const std::vector<double>& ys,
                    const std::vector<double>&) -> bool {
    Vec4 xs = {0, 0, 0, 0}, vs = {0, 0, 0, 0};
    for (int a = 0; a < d; ++a) {
      xs[a] = ys[a];
      vs[a] = ys[d + a];
    }
    path.s.push_back(s);
    path.x.push_back(xs);
    path.v.push_back(vs);
    if (!model.in_chart(xs)) {
      path.truncated = true;
      return false;
    }
    return true;
  };

  auto rhs = [&](double s, const std::vector<double>& ys, std::vector<double>& dys) {
    geodesic_rhs(model, s, ys, dys);
  };
  integrate_ode(rhs, y, 0.0, s_end, opts, record);
  return path;
}

Vec4 exp_map(const MetricModel& model, const Vec4& p, const Vec4& v, double tol) {
  if (model.flat()) return add(p, v);
  const GeodesicPath path = integrate_geodesic(model, p, v, 1.0, tol);
  if (path.truncated)
    throw ChartDomainError("geodesic leaves the chart before parameter 1");
  return path.x.back();
}

Vec4 log_map(const MetricModel& model, const Vec4& p, const Vec4& q, double tol,
             const Vec4* initial_guess) {
  if (model.flat()) return sub(q, p);
  const int d = model.dim();
  Vec4 v = initial_guess ? *initial_guess : sub(q, p);

  const double jac_step = 1e-6;
  double best_res = 1e300;
  Vec4 best_v = v;
  for (int iter = 0; iter < 50; ++iter) {
    const Vec4 fx = sub(exp_map(model, p, v, tol), q);
    const double res = norm_euclid(fx, d);
    if (res < best_res) {
      best_res = res;
      best_v = v;
    }
    if (res < tol) return v;

    // forward-difference Jacobian of v -> exp_p(v)
    Mat4 J{};
    for (int c = 0; c < d; ++c) {
      Vec4 vp = v;
      vp[c] += jac_step;
      const Vec4 fp = sub(exp_map(model, p, vp, tol), q);
      for (int r = 0; r < d; ++r) J[r][c] = (fp[r] - fx[r]) / jac_step;
    }
    Vec4 step;
    try {
      const Mat4 Jinv = invert_spd_like(J, d);
      step = mat_vec(Jinv, fx, d);
    } catch (const SingularMetricError&) {
      throw ConvergenceError("log_map shooting Jacobian singular", res);
    }
    // damped update
    double lambda = 1.0;
    for (int back = 0; back < 8; ++back) {
      Vec4 vn = sub(v, scale(lambda, step));
      double rn;
      try {
        rn = norm_euclid(sub(exp_map(model, p, vn, tol), q), d);
      } catch (const ChartDomainError&) {
        lambda *= 0.5;
        continue;
      }
      if (rn < res) {
        v = vn;
        break;
      }
      lambda *= 0.5;
      if (back == 7) v = vn;
    }
  }
  const double final_res = norm_euclid(sub(exp_map(model, p, best_v, tol), q), d);
  if (final_res < 50 * tol) return best_v;
  throw ConvergenceError("log_map Newton stalled", final_res);
}

std::vector<Vec4> parallel_transport(const MetricModel& model, const GeodesicPath& path,
                                     const Vec4& w0, double tol) {
  const int d = path.dim;
  std::vector<Vec4> out;
  out.reserve(path.s.size());
  if (model.flat()) {
    out.assign(path.s.size(), w0);
    return out;
  }

  // re-integrate (x, v, w) along the stored parameter range for accuracy
  std::vector<double> y(3 * d);
  for (int a = 0; a < d; ++a) {
    y[a] = path.x.front()[a];
    y[d + a] = path.v.front()[a];
    y[2 * d + a] = w0[a];
  }
  OdeOptions opts;
  opts.rtol = tol;
  opts.atol = tol * 1e-2;

  std::size_t next = 0;
  std::vector<Vec4> samples(path.s.size());
  auto rhs = [&](double, const std::vector<double>& ys, std::vector<double>& dys) {
    Vec4 x = {0, 0, 0, 0}, v = {0, 0, 0, 0}, w = {0, 0, 0, 0};
    for (int a = 0; a < d; ++a) {
      x[a] = ys[a];
      v[a] = ys[d + a];
      w[a] = ys[2 * d + a];
    }
    const Tens3 G = model.christoffel(x);
    for (int a = 0; a < d; ++a) dys[a] = v[a];
    for (int l = 0; l < d; ++l) {
      double av = 0.0, aw = 0.0;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          av += G.c[l][a][b] * v[a] * v[b];
          aw += G.c[l][a][b] * v[a] * w[b];
        }
      dys[d + l] = -av;
      dys[2 * d + l] = -aw;
    }
  };

  // integrate segment by segment so samples land exactly on path nodes
  for (next = 0; next < path.s.size(); ++next) {
    const double target = path.s[next];
    if (next > 0) integrate_ode(rhs, y, path.s[next - 1], target, opts);
    Vec4 w = {0, 0, 0, 0};
    for (int a = 0; a < d; ++a) w[a] = y[2 * d + a];
    samples[next] = w;
  }
  return samples;
}

OrthonormalBasis basis_at(const MetricModel& model, const Vec4& p) {
  const int d = model.dim();
  const Mat4 g = metric_at(model, p);
  OrthonormalBasis basis;
  basis.dim = d;
  // Gram-Schmidt over chart axes in fixed order; axis 0 carries the timelike
  // direction for every catalog model.
  Vec4 cand[4];
  for (int a = 0; a < d; ++a) {
    cand[a] = zero_vec();
    cand[a][a] = 1.0;
  }
  for (int a = 0; a < d; ++a) {
    Vec4 v = cand[a];
    for (int b = 0; b < a; ++b) {
      const double gbb = metric_dot(g, basis.e[b], basis.e[b], d);
      const double prj = metric_dot(g, v, basis.e[b], d) / gbb;
      v = sub(v, scale(prj, basis.e[b]));
    }
    const double nn = metric_dot(g, v, v, d);
    if (a == 0 && nn >= 0.0)
      throw ChartDomainError("chart axis 0 is not timelike at the centre");
    basis.e[a] = scale(1.0 / std::sqrt(std::abs(nn)), v);
  }
  return basis;
}

Vec4 e_rho_of(const OrthonormalBasis& basis, const Direction& omega, int dim) {
  Vec4 v = scale(omega.omega0, basis.e[0]);
  for (int k = 1; k < dim; ++k) v = add(v, scale(omega.spatial[k - 1], basis.e[k]));
  return v;
}

Vec4 e_theta_of(const OrthonormalBasis& basis, const Direction& omega, int dim) {
  Vec4 v = basis.e[0];
  for (int k = 1; k < dim; ++k)
    v = add(v, scale(omega.omega0 * omega.spatial[k - 1], basis.e[k]));
  return v;
}

Frame radial_frame(const MetricModel& model, const Vec4& p, const OrthonormalBasis& basis,
                   const Direction& omega, double s, double tol) {
  if (std::abs(omega.omega0) >= 1.0)
    throw std::invalid_argument("|omega0| must be < 1: frame degenerates on the null cone");
  const int d = model.dim();
  const int n = d - 1;

  const Vec4 e_rho = e_rho_of(basis, omega, d);
  const Vec4 e_theta = e_theta_of(basis, omega, d);
  const Vec4 e_r = sub(e_rho, scale(omega.omega0, basis.e[0]));

  // orthonormal basis of H_omega: complement of {e_0, e_r}
  std::vector<Vec4> hbasis;
  {
    const Mat4 g = metric_at(model, p);
    const double r_norm = metric_dot(g, e_r, e_r, d);
    std::vector<Vec4> acc;
    for (int k = 1; k < d && int(acc.size()) < n - 1; ++k) {
      Vec4 v = basis.e[k];
      const double pr = metric_dot(g, v, e_r, d) / r_norm;
      v = sub(v, scale(pr, e_r));
      for (const Vec4& u : acc) v = sub(v, scale(metric_dot(g, v, u, d), u));
      const double nn = metric_dot(g, v, v, d);
      if (nn > 1e-12) acc.push_back(scale(1.0 / std::sqrt(nn), v));
    }
    hbasis = std::move(acc);
  }

  Frame fr;
  fr.omega = omega;
  fr.s = s;
  if (s == 0.0 || model.flat()) {
    fr.x = model.flat() ? add(p, scale(s, e_rho)) : p;
    fr.E_rho = e_rho;
    fr.E_theta = e_theta;
    fr.E_0 = basis.e[0];
    fr.E_A = hbasis;
    return fr;
  }

  const GeodesicPath path = integrate_geodesic(model, p, e_rho, s, tol);
  if (path.truncated) throw ChartDomainError("radial geodesic left the chart");
  fr.x = path.x.back();
  fr.E_rho = path.v.back();
  const auto e0_t = parallel_transport(model, path, basis.e[0], tol);
  fr.E_0 = e0_t.back();
  const double rho2_r2 = 1.0 - omega.omega0 * omega.omega0;
  fr.E_theta = add(scale(omega.omega0, fr.E_rho), scale(rho2_r2, fr.E_0));
  fr.E_A.clear();
  for (const Vec4& h : hbasis)
    fr.E_A.push_back(parallel_transport(model, path, h, tol).back());
  return fr;
}

std::vector<Vec4> sphere_directions(int n_spatial, int count) {
  std::vector<Vec4> dirs;
  if (n_spatial == 1) {
    dirs.push_back(Vec4{1, 0, 0, 0});
    dirs.push_back(Vec4{-1, 0, 0, 0});
    return dirs;
  }
  if (n_spatial == 2) {
    for (int i = 0; i < count; ++i) {
      const double th = 2.0 * M_PI * (i + 0.5) / count;
      dirs.push_back(Vec4{std::cos(th), std::sin(th), 0, 0});
    }
    return dirs;
  }
  // Fibonacci sphere
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double th = golden * i;
    dirs.push_back(Vec4{rad * std::cos(th), rad * std::sin(th), z, 0});
  }
  return dirs;
}

}  // namespace lorwave
