#pragma once

#include <map>
#include <memory>
#include <string>

#include "lorwave/types.hpp"

namespace lorwave {

// A closed-form Lorentzian metric on a global chart, signature (-,+,...,+).
// Models are immutable after construction; all evaluators are pure.
class MetricModel {
 public:
  virtual ~MetricModel() = default;

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }                 // n+1
  int spatial_dim() const { return dim_ - 1; }     // n
  const std::map<std::string, double>& params() const { return params_; }
  double param(const std::string& key, double fallback) const {
    auto it = params_.find(key);
    return it == params_.end() ? fallback : it->second;
  }

  // True when the metric is exactly diag(-1, 1, ..., 1) everywhere.
  virtual bool flat() const { return false; }

  // Chart domain half-width; points with any |x^a| beyond it are rejected.
  double chart_radius() const { return chart_radius_; }
  bool in_chart(const Vec4& x) const {
    for (int a = 0; a < dim_; ++a)
      if (std::abs(x[a]) > chart_radius_) return false;
    return true;
  }

  virtual Mat4 metric(const Vec4& x) const = 0;
  virtual Tens3 christoffel(const Vec4& x) const;   // default: FD of metric
  virtual Tens4 riemann(const Vec4& x) const;       // default: FD of christoffel
  // Covariant derivative of riemann in the chart direction `dir` (a coordinate
  // index), default: FD of riemann plus connection corrections.
  virtual Tens4 nabla_riemann_dir(const Vec4& x, int dir) const;
  // Covariant derivative along an arbitrary chart vector; default is a
  // second-order directional difference of riemann plus connection terms.
  virtual Tens4 nabla_riemann_vec(const Vec4& x, const Vec4& u) const;

 protected:
  MetricModel(std::string name, int dim, std::map<std::string, double> params,
              double chart_radius)
      : name_(std::move(name)), dim_(dim), params_(std::move(params)),
        chart_radius_(chart_radius) {}

  std::string name_;
  int dim_;
  std::map<std::string, double> params_;
  double chart_radius_;
};

using ModelPtr = std::shared_ptr<const MetricModel>;

// Catalog: "minkowski" (dims 2..4), "warped" (-dt^2 + w^2 sum dx_i^2 with
// w = 1 + delta sin(k t) prod_i sin(k x_i)), "conformal"
// ((1 + delta exp(-|x|^2 - t^2)) * minkowski). Parameters: delta, k, dim.
ModelPtr make_model(const std::string& name, const std::map<std::string, double>& params);

// ---------------------------------------------------------------------------
// Point evaluators
// ---------------------------------------------------------------------------

Mat4 metric_at(const MetricModel& model, const Vec4& x);
Tens3 christoffel_at(const MetricModel& model, const Vec4& x);

// All-indices-down curvature R_{abcd} with the symmetries
// R_{abcd} = -R_{bacd} = -R_{abdc} = R_{cdab} and first Bianchi identity.
// Sign fixed so that R(X,Y,X,Y) > 0 on a round sphere.
Tens4 riemann_at(const MetricModel& model, const Vec4& x);

// nabla_m R_{abcd}; first index is the derivative direction.
Tens5 nabla_riemann_at(const MetricModel& model, const Vec4& x);

inline double riemann_component(const Tens4& R, const Vec4& a, const Vec4& b,
                                const Vec4& c, const Vec4& d, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) {
    if (a[i] == 0.0) continue;
    for (int j = 0; j < dim; ++j) {
      if (b[j] == 0.0) continue;
      double sij = 0.0;
      for (int k = 0; k < dim; ++k)
        for (int l = 0; l < dim; ++l) sij += R.c[i][j][k][l] * c[k] * d[l];
      s += a[i] * b[j] * sij;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Curvature budget
// ---------------------------------------------------------------------------

struct CurvatureBudget {
  double C0_est = 0.0;   // n r0^2 * sup of frame-contracted |R|
  double C1_est = 0.0;   // n r0^3 * sup of frame-contracted |nabla R|
  double eps0 = 0.05;
  double c_dagger = 1.0 / 16.0;
  std::string region;
  int samples = 0;
  bool pass = false;     // C0_est < n eps0 c_dagger and C1_est < n c_dagger
};

struct BudgetSampling {
  int n_omega0 = 8;        // values of omega^0 in (-0.9, 0.9)
  int n_directions = 16;   // sphere directions
  int n_radii = 10;        // radii in (0, 0.95 r0]
  double tol = 1e-10;
};

struct OrthonormalBasis;  // geodesic.hpp

CurvatureBudget curvature_budget(const MetricModel& model, const Vec4& p,
                                 double r0, const BudgetSampling& sampling,
                                 double eps0, double c_dagger);

}  // namespace lorwave
