#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lorwave/geodesic.hpp"
#include "lorwave/metric.hpp"
#include "lorwave/types.hpp"

namespace lorwave {

// ---------------------------------------------------------------------------
// Frame-block containers. Block index a ranges over {theta, A_1, .., A_{n-1}},
// so a = 0 is the theta slot and a >= 1 are the H-distribution slots. The
// block metric is diag(-rho^2/r^2, 1, ..., 1) and kappa := r^2/rho^2 is
// constant along each radial geodesic.
// ---------------------------------------------------------------------------

inline constexpr int kMaxBlock = 3;  // n <= 3

struct BlockSym {
  double m[kMaxBlock][kMaxBlock] = {};
  double& operator()(int a, int b) { return m[a][b]; }
  double operator()(int a, int b) const { return m[a][b]; }
};

struct BlockVec {
  double v[kMaxBlock] = {};
  double& operator[](int a) { return v[a]; }
  double operator[](int a) const { return v[a]; }
};

// third derivative block, first index = derivative slot, symmetric in (b,c)
struct BlockTens3 {
  double t[kMaxBlock][kMaxBlock][kMaxBlock] = {};
  double& operator()(int a, int b, int c) { return t[a][b][c]; }
  double operator()(int a, int b, int c) const { return t[a][b][c]; }
};

// Raise a block covector with the block inverse metric diag(-kappa, 1, ..).
inline BlockVec raise_block(const BlockVec& w, double kappa, int n) {
  BlockVec out;
  out[0] = -kappa * w[0];
  for (int a = 1; a < n; ++a) out[a] = w[a];
  return out;
}

inline double block_dot(const BlockVec& u, const BlockVec& w, double kappa, int n) {
  double s = -kappa * u[0] * w[0];
  for (int a = 1; a < n; ++a) s += u[a] * w[a];
  return s;
}

// Transported scalar data on a radial geodesic at radius r:
//   q   = hessian deviation of the hyperquadric function (tangential block)
//   grad_t = frame components of dt (theta component tends to 1 at the vertex)
//   G   = r^2 * third covariant derivative of f, tangential block
//   T   = hess(t^2) - 2 dt (x) dt, tangential block
struct TransportState {
  int n = 1;
  double r = 0.0;
  double omega0 = 0.0;
  double kappa = 1.0;  // r^2 / rho^2
  BlockSym q;
  BlockVec grad_t;
  BlockTens3 G;
  BlockSym T;

  // q with one index raised, contracted against a block covector.
  BlockVec q_contract(const BlockVec& w) const {
    BlockVec out;
    for (int a = 0; a < n; ++a) {
      double s = -kappa * q(a, 0) * w[0];
      for (int c = 1; c < n; ++c) s += q(a, c) * w[c];
      out[a] = s;
    }
    return out;
  }
  // grad3f_{abc} = G_{abc} / r^2
  double grad3f(int a, int b, int c) const { return G(a, b, c) / (r * r); }
};

// A fully resolved manifold point: normal-polar coordinates, hyperquadric
// values, the adapted frame, and the transported tensor data.
struct FramePoint {
  Vec4 x = {0, 0, 0, 0};
  double t = 0.0, r = 0.0;
  Direction omega;
  double f = 0.0;
  double rho = 0.0;  // 2 sqrt(f) when in_D
  bool in_D = false;
  Frame frame;
};

struct GeomPoint {
  FramePoint fp;
  TransportState ts;
};

// ---------------------------------------------------------------------------
// Geometry facade: a model with a fixed centre p and orthonormal basis there.
// Exact closed forms are used for the flat model; otherwise everything is
// carried along radial geodesics by one joint ODE system.
// ---------------------------------------------------------------------------

class Geometry {
 public:
  Geometry(ModelPtr model, const Vec4& p, double tol = 1e-11);
  Geometry(ModelPtr model, const Vec4& p, const OrthonormalBasis& basis,
           double tol = 1e-11);

  const MetricModel& model() const { return *model_; }
  ModelPtr model_ptr() const { return model_; }
  const Vec4& centre() const { return p_; }
  const OrthonormalBasis& basis() const { return basis_; }
  double tol() const { return tol_; }
  int dim() const { return model_->dim(); }
  int n() const { return model_->spatial_dim(); }

  // Normal-polar coordinates of a chart point (via log_map), without the
  // transported data. `guess` warm-starts the shooting.
  FramePoint frame_point(const Vec4& q, const Vec4* guess = nullptr) const;

  // Full evaluation including the transport state. Requires in_D unless
  // `allow_outside` (the frame degenerates on the null cone).
  GeomPoint eval(const Vec4& q, const Vec4* guess = nullptr) const;

  // Evaluate along one radial geodesic at the given (ascending) radii.
  std::vector<GeomPoint> ray(const Direction& omega,
                             std::span<const double> radii) const;

  // log_map of q expressed as (t, r, direction) plus the tangent vector.
  Vec4 log_vector(const Vec4& q, const Vec4* guess = nullptr) const;

  // Riemann at the centre contracted with basis-frame vectors at p
  // (used for vertex-limit checks).
  double riemann_at_centre(const Vec4& a, const Vec4& b, const Vec4& c,
                           const Vec4& d) const;

 private:
  ModelPtr model_;
  Vec4 p_;
  OrthonormalBasis basis_;
  double tol_;
  Tens4 riemann_p_;  // cached curvature at the centre
};

// chart components of e_{rho,omega} / e_{theta,omega} for a basis
Vec4 e_rho_of(const OrthonormalBasis& basis, const Direction& omega, int dim);
Vec4 e_theta_of(const OrthonormalBasis& basis, const Direction& omega, int dim);

}  // namespace lorwave
