#include "lorwave/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lorwave/report.hpp"

namespace lorwave {

namespace {

const std::set<std::string> kKnownKeys = {
    "model",      "dim",        "delta",     "k",          "centre",
    "seed",       "eps0",       "b0",        "a",          "r0",
    "c_dagger",   "n_omega0",   "n_directions", "n_radii",
    "wave_dims",  "box_lo",     "box_hi",    "grid_nx",    "grid_nt",
    "tau_minus",  "tau_plus",   "wave_r0",   "interior_centre",
    "out_dir",    "format"};

}  // namespace

void validate(const Config& c) {
  if (c.model != "minkowski" && c.model != "warped" && c.model != "conformal")
    throw ConfigError("config: unknown model '" + c.model + "'");
  if (c.dim < 2 || c.dim > 4) throw ConfigError("config: dim must be 2, 3 or 4");
  if (c.delta < 0.0) throw ConfigError("config: delta must be >= 0");
  if (c.eps0 <= 0.0 || c.b0 <= 0.0 || c.r0 <= 0.0)
    throw ConfigError("config: eps0, b0, r0 must be positive");
  if (c.eps0 > c.b0 / 4.0)
    throw ConfigError("config: eps0 must satisfy eps0 <= b0/4");
  if (c.b0 / 4.0 > 1.0 / 16.0)
    throw ConfigError("config: b0 must satisfy b0/4 <= 1/16");
  const int n = c.dim - 1;
  if (c.a != 0.0 && c.a < double(n) * n)
    throw ConfigError("config: a must satisfy a >= n^2");
  if (c.grid_nx < 16 || c.grid_nt < 16)
    throw ConfigError("config: grid sizes must be >= 16");
  if (c.tau_plus <= c.tau_minus) throw ConfigError("config: empty time span");
  if (c.wave_dims < 1 || c.wave_dims > 2)
    throw ConfigError("config: wave_dims must be 1 or 2");
  if (c.format != "json" && c.format != "csv")
    throw ConfigError("config: format must be json or csv");
}

Config parse_config_text(const std::string& text) {
  Config c;
  std::string trimmed;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch))) trimmed += ch;
  if (trimmed.empty()) {
    validate(c);
    return c;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kKnownKeys.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "'");

  auto num = [&](const char* key, double fallback) {
    return j.contains(key) ? j[key].get<double>() : fallback;
  };
  if (j.contains("model")) c.model = j["model"].get<std::string>();
  c.dim = int(num("dim", c.dim));
  c.delta = num("delta", c.delta);
  c.k = num("k", c.k);
  if (j.contains("centre")) {
    const auto& arr = j["centre"];
    if (!arr.is_array() || arr.size() > 4)
      throw ConfigError("config: centre must be an array of <= 4 numbers");
    for (std::size_t i = 0; i < arr.size(); ++i) c.centre[i] = arr[i].get<double>();
  }
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  c.eps0 = num("eps0", c.eps0);
  c.b0 = num("b0", c.b0);
  c.a = num("a", c.a);
  c.r0 = num("r0", c.r0);
  c.c_dagger = num("c_dagger", c.c_dagger);
  c.n_omega0 = int(num("n_omega0", c.n_omega0));
  c.n_directions = int(num("n_directions", c.n_directions));
  c.n_radii = int(num("n_radii", c.n_radii));
  c.wave_dims = int(num("wave_dims", c.wave_dims));
  if (j.contains("box_lo"))
    for (std::size_t i = 0; i < j["box_lo"].size() && i < 2; ++i)
      c.box_lo[i] = j["box_lo"][i].get<double>();
  if (j.contains("box_hi"))
    for (std::size_t i = 0; i < j["box_hi"].size() && i < 2; ++i)
      c.box_hi[i] = j["box_hi"][i].get<double>();
  c.grid_nx = int(num("grid_nx", c.grid_nx));
  c.grid_nt = int(num("grid_nt", c.grid_nt));
  c.tau_minus = num("tau_minus", c.tau_minus);
  c.tau_plus = num("tau_plus", c.tau_plus);
  c.wave_r0 = num("wave_r0", c.wave_r0);
  if (j.contains("interior_centre")) c.interior_centre = j["interior_centre"].get<bool>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("format")) c.format = j["format"].get<std::string>();

  validate(c);
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

void write_config(const Config& c, const std::string& path) {
  nlohmann::ordered_json j;
  j["model"] = c.model;
  j["dim"] = c.dim;
  j["delta"] = c.delta;
  j["k"] = c.k;
  j["centre"] = {c.centre[0], c.centre[1], c.centre[2], c.centre[3]};
  j["seed"] = c.seed;
  j["eps0"] = c.eps0;
  j["b0"] = c.b0;
  j["a"] = c.a;
  j["r0"] = c.r0;
  j["c_dagger"] = c.c_dagger;
  j["n_omega0"] = c.n_omega0;
  j["n_directions"] = c.n_directions;
  j["n_radii"] = c.n_radii;
  j["wave_dims"] = c.wave_dims;
  j["box_lo"] = {c.box_lo[0], c.box_lo[1]};
  j["box_hi"] = {c.box_hi[0], c.box_hi[1]};
  j["grid_nx"] = c.grid_nx;
  j["grid_nt"] = c.grid_nt;
  j["tau_minus"] = c.tau_minus;
  j["tau_plus"] = c.tau_plus;
  j["wave_r0"] = c.wave_r0;
  j["interior_centre"] = c.interior_centre;
  j["out_dir"] = c.out_dir;
  j["format"] = c.format;
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write config file: " + path);
  os << j.dump(2) << "\n";
}

std::map<std::string, std::string> Config::echo() const {
  std::map<std::string, std::string> m;
  m["model"] = model;
  m["dim"] = std::to_string(dim);
  m["delta"] = format_double(delta);
  m["k"] = format_double(k);
  m["eps0"] = format_double(eps0);
  m["b0"] = format_double(b0);
  m["a"] = format_double(a);
  m["r0"] = format_double(r0);
  m["c_dagger"] = format_double(c_dagger);
  m["seed"] = std::to_string(seed);
  m["grid"] = std::to_string(grid_nx) + "x" + std::to_string(grid_nt);
  m["time_span"] = format_double(tau_minus) + ".." + format_double(tau_plus);
  return m;
}

}  // namespace lorwave
