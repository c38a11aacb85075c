#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "lorwave/carleman.hpp"
#include "lorwave/geometry.hpp"

namespace lorwave {

// ---------------------------------------------------------------------------
// Discrete wave control on a spacetime cylinder U = box x (tau-, tau+).
// Divergence-form leapfrog in 1+1 (required) and 2+1 (config flag), with the
// adjoint taken as the exact transpose of the discrete forward map.
// ---------------------------------------------------------------------------

struct WaveConfig {
  ModelPtr model;
  int spatial_dims = 1;          // 1 or 2
  double x_lo[2] = {1.0, 0.0};
  double x_hi[2] = {2.0, 1.0};
  int nx[2] = {128, 16};         // nodes per spatial dim (incl. boundaries)
  double tau_minus = -0.5;
  double tau_plus = 0.5;
  int nt = 256;
  double cfl = 0.5;
  Vec4 centre = {0, 0, 0, 0};    // hyperquadric centre p
  bool interior_centre = false;  // p inside the closed cylinder
  double interior_shift = 0.05;  // two-centre offset
  CarlemanParams carleman;
  double r0 = 2.5;
  // lower-order coefficients: X = (Xt, Xx, Xy) constants, potential q constant
  double X_t = 0.0, X_x = 0.0, X_y = 0.0;
  double q_pot = 0.0;
  double geometry_tol = 1e-10;
};

// Boundary control values: one row per boundary node, one column per time
// level. Entries outside Gamma are ignored by the solver.
struct BoundaryControl {
  int n_boundary = 0;
  int nt_levels = 0;  // nt + 1
  std::vector<double> values;  // row-major [node][level]
  double& at(int b, int n) { return values[std::size_t(b) * nt_levels + n]; }
  double at(int b, int n) const { return values[std::size_t(b) * nt_levels + n]; }
};

struct ControlProblem {
  ModelPtr model;
  std::shared_ptr<Geometry> geometry;          // centred at p (exterior case)
  std::shared_ptr<Geometry> geometry_alt[2];   // two-centre interior build
  int nsd = 1;
  double x_lo[2] = {}, x_hi[2] = {};
  int nx[2] = {};                // nodes per dim
  double dx[2] = {};
  double tau_minus = 0, tau_plus = 0, dt = 0;
  int nt = 0;
  double cfl = 0.5;
  Vec4 centre = {0, 0, 0, 0};
  bool interior_centre = false;
  CarlemanParams carleman;
  double X_t = 0, X_x = 0, X_y = 0, q_pot = 0;
  double div_X = 0;  // flat-chart divergence of the constant field (0)
  double geometry_tol = 1e-10;

  int n_interior = 0;                  // flattened interior nodes
  int n_boundary = 0;                  // boundary nodes
  std::vector<int> boundary_side;      // 0:left,1:right (1D); 2D: 0..3
  std::vector<double> boundary_coord;  // transverse coordinate of the node
  std::vector<std::uint8_t> gamma_mask;        // [node][level], control region
  std::vector<std::uint8_t> gamma_plus_mask;   // [node][level], observation
  std::vector<double> normal_f_eta;            // N(f eta^{-1}) per [node][level]
  bool exterior_hypotheses_met = false;        // V+- clear of the cone exterior

  // lazily built step-coefficient tables (forward / adjoint potential);
  // invalidated only by rebuilding the problem
  mutable std::shared_ptr<void> step_cache[2];

  bool gamma(int b, int n) const { return gamma_mask[std::size_t(b) * (nt + 1) + n]; }
  bool gamma_plus(int b, int n) const {
    return gamma_plus_mask[std::size_t(b) * (nt + 1) + n];
  }
  double t_of(int n) const { return tau_minus + n * dt; }
  int ix(int j, int k = 0) const {  // interior flattened index
    return nsd == 1 ? (j - 1) : (j - 1) + (nx[0] - 2) * (k - 1);
  }
};

ControlProblem build_problem(const WaveConfig& config);

struct StateTrajectory {
  int nt = 0;
  std::vector<double> final_state;       // y at tau+
  std::vector<double> final_state_prev;  // y at tau+ - dt (for velocities)
  std::vector<double> final_velocity;    // one-sided second-order dt y
  std::vector<double> energy;            // diagnostic energy per step
  std::vector<double> boundary_trace;    // N y samples on Gamma_plus slots
  std::vector<std::vector<double>> snapshots;  // coarse snapshots incl. t=tau-
  int snapshot_stride = 0;
};

// Forward problem: box y + X . grad y + q y = 0, Dirichlet y = F 1_Gamma.
StateTrajectory forward_solve(const ControlProblem& problem, const BoundaryControl& F,
                              const std::vector<double>& y0,
                              const std::vector<double>& y1);

// Homogeneous-Dirichlet evolution with potential V = q - div X; returns the
// trajectory plus the one-sided normal trace on Gamma_plus.
StateTrajectory adjoint_solve(const ControlProblem& problem,
                              const std::vector<double>& phi0,
                              const std::vector<double>& phi1);

// ---------------------------------------------------------------------------
// Linear maps for HUM (exact transposes of the discrete evolutions).
// ---------------------------------------------------------------------------

struct TerminalPair {
  std::vector<double> pos;  // y(tau+)
  std::vector<double> vel;  // dt y(tau+)
};

// G : boundary control (zero initial data) -> terminal pair.
TerminalPair apply_control_to_terminal(const ControlProblem& problem,
                                       const BoundaryControl& F);
// Euclidean transpose of apply_control_to_terminal.
BoundaryControl apply_control_to_terminal_transpose(const ControlProblem& problem,
                                                    const TerminalPair& w);

// O : initial data -> normal trace samples on Gamma_plus (flattened).
std::vector<double> apply_data_to_trace(const ControlProblem& problem,
                                        const std::vector<double>& phi0,
                                        const std::vector<double>& phi1);
void apply_data_to_trace_transpose(const ControlProblem& problem,
                                   const std::vector<double>& trace_w,
                                   std::vector<double>& phi0_out,
                                   std::vector<double>& phi1_out);

// Slice inner products.
double slice_l2(const ControlProblem& problem, const std::vector<double>& u,
                const std::vector<double>& v);
double slice_h1(const ControlProblem& problem, const std::vector<double>& u,
                const std::vector<double>& v);
double slice_hm1(const ControlProblem& problem, const std::vector<double>& u,
                 const std::vector<double>& v);  // discrete H^{-1}
double gamma_l2(const ControlProblem& problem, const BoundaryControl& F,
                const BoundaryControl& G);  // weighted by boundary measure

// ---------------------------------------------------------------------------
// Observability probe
// ---------------------------------------------------------------------------

struct ObservabilityResult {
  double min_quotient_sampled = 0;   // min over random data
  double min_quotient_refined = 0;   // power-iteration refinement
  double max_quotient = 0;
  int samples = 0;
  bool no_observability = false;     // empty Gamma_plus
};

ObservabilityResult observability_probe(const ControlProblem& problem, int n_samples,
                                        std::uint64_t seed = 7, int power_iters = 40);

// ---------------------------------------------------------------------------
// HUM conjugate gradient
// ---------------------------------------------------------------------------

struct HumResult {
  BoundaryControl control;
  std::vector<double> residual_history;  // CG residual per iteration
  double terminal_error_l2 = 0;          // relative L2 error of the position
  double terminal_error_full = 0;        // relative L2 + H-1 error
  double control_norm = 0;               // L2(Gamma) norm of the control
  int iterations = 0;
  bool converged = false;
};

// Gramian application (exposed for the symmetry / Rayleigh tests):
// Lambda = G o Gstar on terminal pairs, symmetric PSD in the L2 x H^-1 product.
TerminalPair hum_gramian_apply(const ControlProblem& problem, const TerminalPair& mu);
double terminal_inner(const ControlProblem& problem, const TerminalPair& u,
                      const TerminalPair& v);

HumResult hum_control(const ControlProblem& problem,
                      const std::vector<double>& y0_minus,
                      const std::vector<double>& y1_minus,
                      const std::vector<double>& y0_plus,
                      const std::vector<double>& y1_plus,
                      double tol, int max_iter);

// Smooth bump target helpers (traveling profile: reachable in one crossing).
void bump_target(const ControlProblem& problem, double centre, double width,
                 std::vector<double>& y0, std::vector<double>& y1);

double energy_ratio_estimate(const ControlProblem& problem, int n_samples,
                             std::uint64_t seed = 11);

}  // namespace lorwave
