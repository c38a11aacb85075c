#pragma once

#include <vector>

#include "lorwave/metric.hpp"
#include "lorwave/ode.hpp"
#include "lorwave/types.hpp"

namespace lorwave {

// Solution of the geodesic equation, sampled at the accepted integrator steps.
// Evaluation between nodes uses cubic Hermite interpolation.
struct GeodesicPath {
  std::vector<double> s;
  std::vector<Vec4> x;
  std::vector<Vec4> v;
  bool truncated = false;  // left the chart domain before s_end
  int dim = 4;

  double s_end() const { return s.empty() ? 0.0 : s.back(); }
  void eval(double si, Vec4* xs, Vec4* vs) const;
};

GeodesicPath integrate_geodesic(const MetricModel& model, const Vec4& x0,
                                const Vec4& v0, double s_end, double tol = 1e-10);

// exp_p(v) = gamma_v(1). Throws ChartDomainError if the geodesic leaves the chart.
Vec4 exp_map(const MetricModel& model, const Vec4& p, const Vec4& v, double tol = 1e-10);

// Inverse of exp_map by damped Newton shooting on v -> exp_p(v) - q.
// Multiple-preimage detection is out of scope (star-shapedness assumed).
Vec4 log_map(const MetricModel& model, const Vec4& p, const Vec4& q,
             double tol = 1e-10, const Vec4* initial_guess = nullptr);

// Parallel transport of w0 along the path; returns w at every path node.
std::vector<Vec4> parallel_transport(const MetricModel& model,
                                     const GeodesicPath& path, const Vec4& w0,
                                     double tol = 1e-10);

// ---------------------------------------------------------------------------
// Orthonormal basis at the centre and the adapted radial frames
// ---------------------------------------------------------------------------

// e_0 timelike (g(e0,e0) = -1), e_1..e_n spacelike unit; built by Gram-Schmidt
// over the chart axes in a fixed order so frames are reproducible.
struct OrthonormalBasis {
  Vec4 e[4];
  int dim = 4;
};

OrthonormalBasis basis_at(const MetricModel& model, const Vec4& p);

// Direction label omega = (omega0, unit spatial direction in basis span).
struct Direction {
  double omega0 = 0.0;          // in (-1, 1)
  Vec4 spatial = {0, 0, 0, 0};  // coefficients on e_1..e_n, unit Euclidean norm
};

// Frame {E_rho, E_theta, E_A, E_0} at gamma_omega(s), all as chart vectors.
struct Frame {
  Vec4 x = {0, 0, 0, 0};  // base point
  Vec4 E_rho = {0, 0, 0, 0};
  Vec4 E_theta = {0, 0, 0, 0};
  Vec4 E_0 = {0, 0, 0, 0};
  std::vector<Vec4> E_A;
  Direction omega;
  double s = 0.0;  // radial parameter (= r along the geodesic)
};

// Builds e_{rho,omega}, e_{theta,omega}, an orthonormal basis of the
// orthogonal complement H_omega, and transports everything to parameter s.
// Requires |omega0| < 1 (the frame degenerates on the null cone).
Frame radial_frame(const MetricModel& model, const Vec4& p,
                   const OrthonormalBasis& basis, const Direction& omega,
                   double s, double tol = 1e-10);

// Unit spatial directions for sweeps: 2 points for n=1, a uniform circle for
// n=2, a Fibonacci sphere for n=3. Deterministic.
std::vector<Vec4> sphere_directions(int n_spatial, int count);

}  // namespace lorwave
