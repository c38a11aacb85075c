#pragma once

#include <map>
#include <string>

#include "lorwave/types.hpp"

namespace lorwave {

// Run configuration: one JSON-compatible file, every field optional with
// validated defaults. The effective configuration is echoed into reports.
struct Config {
  std::string model = "minkowski";
  int dim = 3;  // n+1; geometry sweeps default to 2+1
  double delta = 0.0;
  double k = 1.0;

  double centre[4] = {0, 0, 0, 0};
  std::uint64_t seed = 2026;

  // Carleman / pseudoconvexity parameters
  double eps0 = 0.05;
  double b0 = 0.2;
  double a = 0.0;  // 0 = default 4 n^2
  double r0 = 1.0;
  double c_dagger = 1.0 / 16.0;

  // sampling densities
  int n_omega0 = 16;
  int n_directions = 32;
  int n_radii = 20;

  // wave control geometry
  int wave_dims = 1;
  double box_lo[2] = {1.0, 0.0};
  double box_hi[2] = {2.0, 1.0};
  int grid_nx = 128;
  int grid_nt = 256;
  double tau_minus = -0.5;
  double tau_plus = 0.5;
  double wave_r0 = 2.5;
  bool interior_centre = false;

  std::string out_dir = ".";
  std::string format = "json";

  double effective_a(int n_spatial) const {
    return a > 0.0 ? a : 4.0 * n_spatial * n_spatial;
  }
  std::map<std::string, std::string> echo() const;
};

// Loads and validates; unknown keys are an error with key context. An empty
// or missing-field file yields the defaults above.
Config load_config(const std::string& path);
Config parse_config_text(const std::string& text);  // exposed for tests
void write_config(const Config& config, const std::string& path);
void validate(const Config& config);

}  // namespace lorwave
