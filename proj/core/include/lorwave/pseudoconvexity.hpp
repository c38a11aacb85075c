#pragma once

#include <span>
#include <vector>

#include "lorwave/geometry.hpp"
#include "lorwave/hyperquadric.hpp"
#include "lorwave/report.hpp"

namespace lorwave {

// Parameters of the shifted hyperquadric fbar = f / (1 - eps t^2).
struct PcParams {
  double eps0 = 0.05;
  double r0 = 1.0;
  double eps() const { return eps0 / (r0 * r0); }
};

// Everything the shifted-quadric layer derives at one point, expressed in the
// full orthogonal frame {E_rho, E_theta, E_A...} (index 0 = rho, 1 = theta,
// 2.. = A). Frame metric is diag(rho^2/r^2, -rho^2/r^2, 1, ...).
struct PcPoint {
  int d = 2;  // full-frame size n+1
  double t = 0, r = 0, rho2 = 0, kappa = 1, f = 0;
  double eta = 0, fbar = 0, hbar = 0;
  double eps = 0;

  double grad_t[4] = {};    // full-frame covector (rho first)
  double grad_f[4] = {};
  double grad_eta[4] = {};
  double grad_fbar[4] = {};
  double grad_r2[4] = {};
  double grad_hbar[4] = {};
  double hess_t2[4][4] = {};
  double hess_eta[4][4] = {};
  double hess_f[4][4] = {};
  double hess_fbar[4][4] = {};
  double gF[4] = {};        // diagonal frame metric
  double gFinv[4] = {};
  double pi[4][4] = {};     // hess fbar - hbar g

  // barred frame coefficient vectors on the full frame
  double Ebar_theta[4] = {};
  double Ebar_A[2][4] = {};
  double Ebar_rho[4] = {};

  double grad_fbar_sq = 0;      // |grad fbar|^2
  double hess_fbar_gradgrad = 0;  // hess fbar (grad fbar, grad fbar)
  double box_fbar = 0;

  // helpers
  double dot_covec(const double* u, const double* w) const {
    double s = 0;
    for (int i = 0; i < d; ++i) s += gFinv[i] * u[i] * w[i];
    return s;
  }
  double bilinear(const double (*M)[4], const double* X, const double* Y) const {
    double s = 0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) s += M[i][j] * X[i] * Y[j];
    return s;
  }
  double g_vec(const double* X, const double* Y) const {
    double s = 0;
    for (int i = 0; i < d; ++i) s += gF[i] * X[i] * Y[i];
    return s;
  }
};

// Assembles the shifted-quadric data from transported geometry. Throws
// std::domain_error when eta <= 0 (out of the working regime).
PcPoint pc_assemble(const GeomPoint& gp, const PcParams& params);

// (eta, fbar, hbar) at a frame point.
struct EtaFbarHbar { double eta, fbar, hbar; };
EtaFbarHbar eta_fbar_hbar(const PcParams& params, const FramePoint& fp);

// Tangency maps between level sets of f and fbar. Vectors are full-frame
// coefficient vectors; X must annihilate f (|X^rho| below tol).
struct FrameVec {
  double c[4] = {};
  int d = 2;
};
FrameVec p_map(const PcPoint& pt, const FrameVec& X, double tangency_tol = 1e-8);
FrameVec pbar_map(const PcPoint& pt, const FrameVec& Xbar, double tangency_tol = 1e-8);

// Barred frame bundle for one resolved point.
struct BarredFrame {
  PcPoint pt;
  // gbar_plus on barred-coefficient vectors (theta, A..) per the frame formula
  double gbar_plus(const BlockVec& X, const BlockVec& Y, int n) const {
    double s = (1.0 / pt.kappa) * X[0] * Y[0];
    for (int a = 1; a < n; ++a) s += X[a] * Y[a];
    return s;
  }
};
BarredFrame barred_frames(const PcParams& params, const GeomPoint& gp);

struct PiTensor {
  int n = 1;
  double hbar = 0;
  BlockSym pi_barred;      // pi(Ebar_a, Ebar_b), tangential block
  double pi_rho_rho = 0;   // pi(Ebar_rho, Ebar_rho)
  BlockVec pi_rho_a;       // pi(Ebar_rho, Ebar_a)
};
PiTensor pi_tensor(const PcParams& params, const GeomPoint& gp);

// min over sampled points and sampled fbar-tangent directions of
//   pi(X,X) - (eps0/8)(r^2/r0^2) gbar_plus(X,X)
// with X unit-normalised in gbar_plus. Also reports min margin / (eps r^2).
struct PcCheckResult {
  double min_margin = 0.0;
  double min_margin_normalised = 0.0;  // divided by eps r^2
  int samples = 0;
  bool sign_flip = false;  // some sampled margin was negative
};
PcCheckResult pseudoconvexity_check(const Geometry& geo, const PcParams& params,
                                    const SweepSampling& sampling,
                                    int directions_per_point = 64,
                                    std::uint64_t seed = 2026);

// Shifted Gauss lemma residuals E1, E2 (exactly zero when eps = 0).
struct ShiftedGaussResiduals { double e1, e2; };
ShiftedGaussResiduals shifted_gauss_residuals(const PcParams& params, const GeomPoint& gp);

// Verifies the eta derivative estimates (exact radial identities as
// equalities, envelopes with fitted constants).
std::vector<VerificationRow> eta_derivative_report(const Geometry& geo,
                                                   const PcParams& params,
                                                   const SweepSampling& sampling,
                                                   const CurvatureBudget& budget);

}  // namespace lorwave
