#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lorwave/pseudoconvexity.hpp"

namespace lorwave {

// Carleman weight parameters. Enforced: a >= n^2, eps0 <= b0/4 <= 1/16.
struct CarlemanParams {
  double a = 4.0;
  double b0 = 0.2;
  double eps0 = 0.05;
  double r0 = 1.0;
  double b() const { return b0 / (r0 * r0); }
  double eps() const { return eps0 / (r0 * r0); }
  PcParams pc() const { return PcParams{eps0, r0}; }
  void validate(int n_spatial) const;
};

// Conjugation quantities at one point: F = -a (log fbar + b fbar), the weight
// zeta = e^{-2F}, the multiplier field S = grad fbar, w = box(fbar)/2 - hbar,
// and the zero-order coefficients A and B.
struct ConjugationBundle {
  PcPoint pt;
  double F = 0, zeta = 0;
  double Fp = 0, Fpp = 0, Fppp = 0;  // derivatives of F in fbar
  double w = 0, c_n = 0;             // c_n = (n-1)/4
  double A = 0, B = 0;
  double S[4] = {};                  // grad^sharp fbar, full-frame vector
  double Ehat_shift = 0;             // c_n * (2/r) eta^{-3}-type zero-order shift
};

ConjugationBundle conjugation_bundle(const CarlemanParams& params, const GeomPoint& gp);

// min over samples of  B - a^2 b / 2 - a^2 fbar^{-1} eps r^2 / 4.
struct BBoundResult {
  double min_margin = 0;
  int samples = 0;
};
BBoundResult B_lower_bound_check(const Geometry& geo, const CarlemanParams& params,
                                 const SweepSampling& sampling);

// ---------------------------------------------------------------------------
// Test functions: analytic value/gradient/hessian on the chart.
// ---------------------------------------------------------------------------

struct TestFunction {
  std::string name;
  std::function<double(const Vec4&)> value;
  std::function<Vec4(const Vec4&)> gradient;
  std::function<Mat4(const Vec4&)> hessian;
};

// {zero, polynomial bump, gaussian bump, oscillatory x 3 frequencies}, each
// multiplied by a lateral cutoff vanishing at x = x_l and x = x_r (so the
// trace condition on the timelike boundary holds).
std::vector<TestFunction> carleman_test_suite(double x_left, double x_right);

// ---------------------------------------------------------------------------
// Pointwise identity check
// ---------------------------------------------------------------------------

enum class IdentityForm {
  direct,       // literal identity, needs box(w) by second differences
  first_order,  // equivalent rearrangement needing only grad(w)
};

struct PointwiseIdentityResult {
  double residual = 0;
  double lhs = 0, rhs = 0;
  bool excluded = false;
};

// Evaluates both sides of the conjugated pointwise identity at fp with all
// derivative couplings by chart finite differences of step h.
PointwiseIdentityResult pointwise_identity_residual(
    const Geometry& geo, const CarlemanParams& params, const TestFunction& psi,
    const Vec4& x_chart, double h, IdentityForm form = IdentityForm::direct);

// ---------------------------------------------------------------------------
// Integrated estimate (1+1 configuration)
// ---------------------------------------------------------------------------

struct Domain1p1 {
  double x_left = 1.0, x_right = 2.0;
  double t_min = -2.0, t_max = 2.0;
};

struct IntegratedCarleman {
  double lhs_grad = 0;       // weighted gradient bulk term
  double lhs_zero = 0;       // a^2 b zero-order bulk term
  double rhs_bulk = 0;       // (1/4a) zeta f |box phi|^2
  double rhs_boundary = 0;   // signed boundary trace term
  double margin = 0;         // rhs - lhs
  double margin_e0_variant = 0;  // same for the (E_rho, E_0, E_A) variant
};

// Precomputes per-cell geometry once so several (a, phi) pairs can be
// evaluated on the same grid.
class CarlemanQuadrature {
 public:
  CarlemanQuadrature(const Geometry& geo, const Domain1p1& domain,
                     int nt, int nx);
  IntegratedCarleman evaluate(const CarlemanParams& params,
                              const TestFunction& phi) const;
  const Domain1p1& domain() const { return domain_; }

 private:
  struct Cell {
    Vec4 x;
    double weight = 0;   // sqrt|g| * clipped cell area
    bool in_D = false;
    GeomPoint gp;
  };
  struct BoundaryNode {
    Vec4 x;
    double weight = 0;   // boundary line measure
    double sign = 1.0;   // outward normal direction (+1 right, -1 left)
    bool in_D = false;
    GeomPoint gp;
    double normal_f_eta = 0;  // N(f / eta) for the configured eps comes later
  };
  const Geometry& geo_;
  Domain1p1 domain_;
  int nt_, nx_;
  double dt_, dx_;
  std::vector<Cell> cells_;
  std::vector<BoundaryNode> boundary_;
  friend IntegratedCarleman integrated_carleman(const Geometry&, const CarlemanParams&,
                                                const Domain1p1&, const TestFunction&,
                                                int, int);
};

IntegratedCarleman integrated_carleman(const Geometry& geo, const CarlemanParams& params,
                                       const Domain1p1& domain, const TestFunction& phi,
                                       int nt = 256, int nx = 512);

// ---------------------------------------------------------------------------
// Boundary machinery
// ---------------------------------------------------------------------------

struct BoundarySample {
  double t = 0;
  double integrand = 0;        // zeta * N(f eta^{-1}) * |N phi|^2
  double normal_f_eta = 0;     // sign feeds Gamma_+
  bool in_D = false;
};

// Samples zeta N(f eta^{-1}) |N phi|^2 along one timelike boundary line
// x = x_b of the 1+1 cylinder. `outward_sign` is +1 on the right wall.
std::vector<BoundarySample> boundary_term(const Geometry& geo,
                                          const CarlemanParams& params,
                                          double x_b, double outward_sign,
                                          double t_min, double t_max, int nt,
                                          const TestFunction& phi);

// Surface integrals over the level set {f = delta} inside the cylinder.
// `envelope_integral` is delta^{-1} times the integral of the bounding
// quantity r0 e^a f^{2a} [ (E_rho phi)^2 + (E_theta phi)^2 + a^2 f^{-1} phi^2 ],
// which decays like delta^{2a - 3/2}; `pstar_integral` is the same for the
// assembled |P*(grad f)| (faster decay for smooth phi), and
// `fitted_constant` is the smallest C with |P*| <= C * envelope on the sample.
struct HDeltaDecay {
  double envelope_integral = 0;
  double pstar_integral = 0;
  double fitted_constant = 0;
};
HDeltaDecay h_delta_boundary_integral(const Geometry& geo, const CarlemanParams& params,
                                      const Domain1p1& domain, const TestFunction& phi,
                                      double delta, int n_samples = 400);

}  // namespace lorwave
