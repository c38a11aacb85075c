#pragma once

#include <span>
#include <vector>

#include "lorwave/geometry.hpp"
#include "lorwave/report.hpp"

namespace lorwave {

// ---------------------------------------------------------------------------
// Hyperquadric layer: f = (r^2 - t^2)/4 on normal coordinates, its deviation
// tensor q = hess f - g/2, and derivatives of the time function t. The primary
// computation path is the transport ODE system (see geometry.hpp); the
// finite-difference evaluators below are the independent oracles.
// ---------------------------------------------------------------------------

struct QComponents {
  int n = 1;
  double r = 0.0;
  BlockSym q;  // block {theta, A...}
  enum class Source { transport, fd_oracle } source = Source::transport;
  bool near_vertex_noise = false;  // oracle too close to the vertex

  double theta_theta() const { return q(0, 0); }
  double theta_A(int A) const { return q(0, 1 + A); }
  double AB(int A, int B) const { return q(1 + A, 1 + B); }
};

struct TDerivatives {
  int n = 1;
  double r = 0.0;
  double grad_t_rho = 0.0;  // = t/r exactly along radial geodesics
  BlockVec grad_t;          // frame components (theta, A...)
  BlockSym hess_t2;         // tangential block of hess(t^2)
  double hess_t2_rho_rho = 0.0;
  BlockVec hess_t2_rho;     // (rho, a) components
};

// Normal-polar resolution of a chart point (log_map based).
FramePoint frame_point(const Geometry& geo, const Vec4& q_chart);

// |grad f . grad f - f| and |grad^sharp f - (t d_t + r d_r)/2|, both via chart
// finite differences of f composed with log_map (Richardson extrapolated).
struct GradFCheck {
  double gauss_residual = 0.0;     // |grad f . grad f - f|
  double radial_residual = 0.0;    // euclidean norm of the vector mismatch
  bool excluded = false;           // FD step underflow near the vertex
};
GradFCheck grad_f_check(const Geometry& geo, const FramePoint& fp, double h = 1e-4);

// q along gamma_omega from the transport ODE, sampled at the given radii.
std::vector<QComponents> q_transport(const Geometry& geo, const Direction& omega,
                                     std::span<const double> radii);

// Independent oracle: covariant chart Hessian of f minus g/2, contracted with
// the frame. Flags the result when r is too close to the vertex for the step.
QComponents q_fd_oracle(const Geometry& geo, const FramePoint& fp, double h = 1e-3);

// dt and hess(t^2) along gamma_omega from the transport ODEs.
std::vector<TDerivatives> t_transport(const Geometry& geo, const Direction& omega,
                                      std::span<const double> radii);

// FD oracles for dt and hess(t^2) frame components.
BlockVec grad_t_fd_oracle(const Geometry& geo, const FramePoint& fp, double h = 1e-4);
double grad_t_rho_fd_oracle(const Geometry& geo, const FramePoint& fp, double h = 1e-4);
BlockSym hess_t2_fd_oracle(const Geometry& geo, const FramePoint& fp, double h = 1e-3);

// FD covariant Hessian of an arbitrary function of the normal coordinates
// (t, r), contracted with a chart vector pair. Used as the cross-validation
// oracle for the algebraically assembled shifted-quadric Hessians.
double scalar_fd_hessian(const Geometry& geo, const FramePoint& fp,
                         const std::function<double(double t, double r)>& func,
                         const Vec4& u, const Vec4& v, double h = 1e-3);

// Third-derivative oracle (loose): covariant third derivative of f by chart
// finite differences, contracted with frame vectors (a = derivative slot).
double grad3_f_fd_oracle(const Geometry& geo, const FramePoint& fp,
                         int a, int b, int c, double h = 2e-3);

TDerivatives t_derivatives_from_state(const TransportState& ts, double omega0);

// Sampling grid shared by the sweep-style checks.
struct SweepSampling {
  int n_omega0 = 16;
  int n_directions = 32;
  int n_radii = 20;
  double omega0_max = 0.9;
  double r_min_frac = 0.05;   // radii in [r_min_frac, r_max_frac] * r0
  double r_max_frac = 0.95;
};

// Envelope verification for the deviation-tensor and t-derivative estimates.
// Fitted constants are the smallest universal constants making each bound
// hold on the sample; rows are advisory where third derivatives enter.
std::vector<VerificationRow> section2_bounds_report(const Geometry& geo,
                                                    double r0,
                                                    const SweepSampling& sampling,
                                                    const CurvatureBudget& budget);

}  // namespace lorwave
