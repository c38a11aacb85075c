#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lorwave/types.hpp"

namespace lorwave {

// Adaptive Dormand-Prince 5(4) integrator on std::vector<double> state.
//
// The right-hand side signature is f(s, y, dy). `observe` is called at every
// accepted step with (s, y, dy) and may be used to build dense output.
struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double initial_step = 1e-3;
  double min_step = 1e-14;
  double max_step = 0.0;  // 0 = unlimited
  int max_steps = 200000;
};

struct OdeStepRecord {
  double s;
  std::vector<double> y;
  std::vector<double> dy;
};

using OdeRhs = std::function<void(double, const std::vector<double>&, std::vector<double>&)>;
using OdeObserver = std::function<bool(double, const std::vector<double>&, const std::vector<double>&)>;

// Integrates y' = f(s, y) from s0 to s1 (s1 may be < s0). The observer, when
// given, can stop the integration early by returning false. Throws
// IntegrationError on step-size underflow or step-count exhaustion.
void integrate_ode(const OdeRhs& f, std::vector<double>& y, double s0, double s1,
                   const OdeOptions& opts, const OdeObserver& observe = nullptr);

// Cubic Hermite interpolation between two stored steps.
inline void hermite_eval(const OdeStepRecord& a, const OdeStepRecord& b, double s,
                         std::vector<double>& out) {
  const double h = b.s - a.s;
  const double u = (s - a.s) / h;
  const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
  const double h10 = u * (1 - u) * (1 - u);
  const double h01 = u * u * (3 - 2 * u);
  const double h11 = u * u * (u - 1);
  out.resize(a.y.size());
  for (std::size_t i = 0; i < a.y.size(); ++i)
    out[i] = h00 * a.y[i] + h * h10 * a.dy[i] + h01 * b.y[i] + h * h11 * b.dy[i];
}

}  // namespace lorwave
