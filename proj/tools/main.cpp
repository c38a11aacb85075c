// Command-line front end: verification and control runs over the model
// catalog, emitting pass/fail reports as JSON or CSV.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "lorwave/carleman.hpp"
#include "lorwave/config.hpp"
#include "lorwave/geometry.hpp"
#include "lorwave/hyperquadric.hpp"
#include "lorwave/metric.hpp"
#include "lorwave/pseudoconvexity.hpp"
#include "lorwave/report.hpp"
#include "lorwave/wave.hpp"

namespace lw = lorwave;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

lw::ModelPtr model_of(const lw::Config& cfg) {
  std::map<std::string, double> params = {{"dim", double(cfg.dim)},
                                          {"delta", cfg.delta},
                                          {"k", cfg.k},
                                          {"r0", cfg.r0}};
  return lw::make_model(cfg.model, params);
}

lw::VerificationRow row(const std::string& id, const std::string& ref, double measured,
                        double bound, bool pass, bool advisory = false) {
  lw::VerificationRow r;
  r.check_id = id;
  r.reference = ref;
  r.measured = measured;
  r.bound = bound;
  r.margin = bound - measured;
  r.pass = pass;
  r.advisory = advisory;
  return r;
}

void print_report(const lw::Report& report) {
  std::printf("== %s ==\n", report.title.c_str());
  for (const auto& r : report.rows)
    std::printf("%-38s %-10s measured=%-12.5g bound=%-12.5g%s\n", r.check_id.c_str(),
                r.pass ? "pass" : (r.advisory ? "ADVISORY" : "FAIL"), r.measured,
                r.bound, r.advisory ? " (advisory)" : "");
}

void emit(const lw::Config& cfg, lw::Report& report) {
  for (const auto& [k, v] : cfg.echo()) report.header.emplace_back(k, v);
  print_report(report);
  const std::string path = cfg.out_dir + "/" + report.title + "." + cfg.format;
  lw::write_report(report, path,
                   cfg.format == "csv" ? lw::ReportFormat::csv : lw::ReportFormat::json);
  std::printf("report written to %s\n", path.c_str());
}

lw::Report verify_geometry(const lw::Config& cfg) {
  Timer timer;
  lw::Report report;
  report.title = "verify-geometry";
  const auto model = model_of(cfg);
  const lw::Vec4 p = {cfg.centre[0], cfg.centre[1], cfg.centre[2], cfg.centre[3]};
  lw::Geometry geo(model, p);

  lw::BudgetSampling bs;
  bs.n_omega0 = std::max(4, cfg.n_omega0 / 2);
  bs.n_directions = std::max(4, cfg.n_directions / 2);
  bs.n_radii = std::max(5, cfg.n_radii / 2);
  const lw::CurvatureBudget budget =
      lw::curvature_budget(*model, p, cfg.r0, bs, cfg.eps0, cfg.c_dagger);
  {
    // hypothesis gate: reports whether the configured universal constants
    // certify the curvature assumption; the verified margins below gate the
    // exit code
    lw::VerificationRow r = row("curvature_budget_C0", "curvature bound", budget.C0_est,
                                (cfg.dim - 1) * cfg.eps0 * cfg.c_dagger, budget.pass,
                                /*advisory=*/true);
    r.fitted_constant = budget.C1_est;
    report.add(r);
  }

  // Gauss identity over a sample of D_{r0}
  lw::CounterRng rng(cfg.seed);
  double max_gauss = 0.0, max_radial = 0.0;
  int used = 0;
  for (int i = 0; i < 200 && used < 150; ++i) {
    lw::Direction omega;
    omega.omega0 = rng.uniform(-0.85, 0.85);
    const auto dirs = lw::sphere_directions(cfg.dim - 1, 8);
    omega.spatial = dirs[i % dirs.size()];
    const double radius = rng.uniform(0.2 * cfg.r0, 0.9 * cfg.r0);
    try {
      const auto pts = geo.ray(omega, std::span<const double>(&radius, 1));
      const lw::GradFCheck gc = lw::grad_f_check(geo, pts[0].fp);
      if (gc.excluded) continue;
      max_gauss = std::max(max_gauss, gc.gauss_residual);
      max_radial = std::max(max_radial, gc.radial_residual);
      ++used;
    } catch (const std::exception&) {
    }
  }
  const double gauss_tol = model->flat() ? 1e-9 : 1e-5;
  report.add(row("gauss_identity", "gradient identity for f", max_gauss, gauss_tol,
                 max_gauss < gauss_tol));
  report.add(row("radial_gradient", "radial form of grad f", max_radial, 1e-4,
                 max_radial < 1e-4));

  // frame algebra residuals
  double frame_resid = 0.0;
  {
    const auto dirs = lw::sphere_directions(cfg.dim - 1, std::min(cfg.n_directions, 8));
    std::vector<double> radii;
    for (int i = 1; i <= 5; ++i) radii.push_back(0.18 * i * cfg.r0);
    for (int io = 0; io < 6; ++io) {
      lw::Direction omega;
      omega.omega0 = -0.75 + 0.3 * io;
      for (const auto& dv : dirs) {
        omega.spatial = dv;
        const auto pts = geo.ray(omega, radii);
        for (const auto& gp : pts) {
          const lw::Mat4 g = lw::metric_at(*model, gp.fp.x);
          const auto& fr = gp.fp.frame;
          const double rr = gp.fp.rho * gp.fp.rho / (gp.fp.r * gp.fp.r);
          frame_resid = std::max(
              frame_resid,
              std::abs(lw::metric_dot(g, fr.E_rho, fr.E_rho, cfg.dim) - rr));
          frame_resid = std::max(
              frame_resid,
              std::abs(lw::metric_dot(g, fr.E_theta, fr.E_theta, cfg.dim) + rr));
          frame_resid = std::max(
              frame_resid, std::abs(lw::metric_dot(g, fr.E_rho, fr.E_theta, cfg.dim)));
        }
      }
    }
  }
  report.add(row("frame_algebra", "adapted frame inner products", frame_resid, 1e-7,
                 frame_resid < 1e-7));

  auto section2 = lw::section2_bounds_report(geo, cfg.r0, lw::SweepSampling{8, 8, 8},
                                             budget);
  for (auto& r : section2) report.add(r);
  report.rows.front().runtime_seconds = timer.seconds();
  return report;
}

lw::Report verify_pseudoconvexity(const lw::Config& cfg) {
  Timer timer;
  lw::Report report;
  report.title = "verify-pseudoconvexity";
  const auto model = model_of(cfg);
  const lw::Vec4 p = {cfg.centre[0], cfg.centre[1], cfg.centre[2], cfg.centre[3]};
  lw::Geometry geo(model, p);
  const lw::PcParams pc{cfg.eps0, cfg.r0};

  lw::BudgetSampling bs;
  const lw::CurvatureBudget budget =
      lw::curvature_budget(*model, p, cfg.r0, bs, cfg.eps0, cfg.c_dagger);
  report.add(row("curvature_budget", "curvature bound", budget.C0_est,
                 (cfg.dim - 1) * cfg.eps0 * cfg.c_dagger, budget.pass, true));

  const lw::SweepSampling sweep{std::max(6, cfg.n_omega0 / 2),
                                std::max(6, cfg.n_directions / 4),
                                std::max(6, cfg.n_radii / 2)};
  const lw::PcCheckResult pcres = lw::pseudoconvexity_check(geo, pc, sweep, 32, cfg.seed);
  {
    lw::VerificationRow r = row("pseudoconvexity_margin", "level-set convexity",
                                -pcres.min_margin, 0.0, pcres.min_margin >= 0.0);
    r.fitted_constant = pcres.min_margin_normalised;
    report.add(r);
  }
  for (auto& r : lw::eta_derivative_report(geo, pc, sweep, budget)) report.add(r);
  report.rows.front().runtime_seconds = timer.seconds();
  return report;
}

lw::Report verify_carleman(const lw::Config& cfg) {
  Timer timer;
  lw::Report report;
  report.title = "verify-carleman";
  if (cfg.dim != 2)
    throw lw::ConfigError("verify-carleman runs the 1+1 configuration (dim = 2)");
  const auto model = model_of(cfg);
  const lw::Vec4 p = {cfg.centre[0], cfg.centre[1], 0, 0};
  lw::Geometry geo(model, p);
  lw::CarlemanParams params;
  params.a = cfg.effective_a(1);
  params.b0 = cfg.b0;
  params.eps0 = cfg.eps0;
  params.r0 = cfg.r0;

  const lw::SweepSampling sweep{8, 2, 10};
  const lw::BBoundResult bres = lw::B_lower_bound_check(geo, params, sweep);
  // the bound is established only under genuine scale separation; outside
  // eps0 <= b0/8 the row is informational
  const bool separated = params.eps0 <= params.b0 / 8.0 + 1e-15;
  report.add(row("zero_order_lower_bound", "conjugated zero-order coefficient",
                 -bres.min_margin, 0.0, bres.min_margin >= 0.0, !separated));

  const lw::Domain1p1 domain{1.0, 2.0, -2.2, 2.2};
  lw::CarlemanQuadrature quad(geo, domain, cfg.grid_nt, cfg.grid_nx);
  const auto suite = lw::carleman_test_suite(domain.x_left, domain.x_right);
  double worst_margin = 1e300, worst_e0 = 1e300;
  for (const auto& phi : suite) {
    const lw::IntegratedCarleman ic = quad.evaluate(params, phi);
    if (phi.name != "zero") {
      worst_margin = std::min(worst_margin, ic.margin);
      worst_e0 = std::min(worst_e0, ic.margin_e0_variant);
    }
  }
  report.add(row("integrated_margin", "weighted integral estimate", -worst_margin, 0.0,
                 worst_margin >= 0.0));
  report.add(row("integrated_margin_e0_variant", "uniform-frame variant", -worst_e0,
                 0.0, worst_e0 >= 0.0));
  report.rows.front().runtime_seconds = timer.seconds();
  return report;
}

lw::Report observability_report(const lw::Config& cfg) {
  Timer timer;
  lw::Report report;
  report.title = "observability";
  lw::Config wcfg = cfg;
  wcfg.dim = cfg.wave_dims + 1;  // the cylinder fixes the model dimension
  lw::WaveConfig wc;
  wc.model = model_of(wcfg);
  wc.spatial_dims = cfg.wave_dims;
  wc.x_lo[0] = cfg.box_lo[0];
  wc.x_hi[0] = cfg.box_hi[0];
  wc.nx[0] = cfg.grid_nx;
  wc.tau_minus = cfg.tau_minus;
  wc.tau_plus = cfg.tau_plus;
  wc.nt = cfg.grid_nt;
  wc.centre = {cfg.centre[0], cfg.centre[1], cfg.centre[2], cfg.centre[3]};
  wc.interior_centre = cfg.interior_centre;
  wc.carleman.eps0 = cfg.eps0;
  wc.carleman.b0 = cfg.b0;
  wc.carleman.a = cfg.effective_a(cfg.wave_dims);
  wc.carleman.r0 = cfg.r0;
  wc.r0 = cfg.wave_r0;
  const lw::ControlProblem pb = lw::build_problem(wc);
  const lw::ObservabilityResult obs = lw::observability_probe(pb, 16, cfg.seed);
  report.add(row("observability_quotient", "trace-to-energy quotient",
                 obs.min_quotient_refined, 0.0, obs.min_quotient_refined > 0.0));
  {
    lw::VerificationRow r = row("observability_sampled", "sampled quotient",
                                obs.min_quotient_sampled, 0.0,
                                obs.min_quotient_sampled > 0.0, true);
    report.add(r);
  }
  report.rows.front().runtime_seconds = timer.seconds();
  return report;
}

lw::Report control_report(const lw::Config& cfg, const std::string& target) {
  Timer timer;
  lw::Report report;
  report.title = "control";
  lw::Config wcfg = cfg;
  wcfg.dim = cfg.wave_dims + 1;
  lw::WaveConfig wc;
  wc.model = model_of(wcfg);
  wc.spatial_dims = cfg.wave_dims;
  wc.x_lo[0] = cfg.box_lo[0];
  wc.x_hi[0] = cfg.box_hi[0];
  wc.nx[0] = cfg.grid_nx;
  wc.tau_minus = cfg.tau_minus;
  wc.tau_plus = cfg.tau_plus;
  wc.nt = cfg.grid_nt;
  wc.centre = {cfg.centre[0], cfg.centre[1], cfg.centre[2], cfg.centre[3]};
  wc.interior_centre = cfg.interior_centre;
  wc.carleman.eps0 = cfg.eps0;
  wc.carleman.b0 = cfg.b0;
  wc.carleman.a = cfg.effective_a(cfg.wave_dims);
  wc.carleman.r0 = cfg.r0;
  wc.r0 = cfg.wave_r0;
  const lw::ControlProblem pb = lw::build_problem(wc);

  std::vector<double> y0p, y1p;
  if (target == "bump") {
    lw::bump_target(pb, 0.5 * (wc.x_lo[0] + wc.x_hi[0]), 0.12 * (wc.x_hi[0] - wc.x_lo[0]),
                    y0p, y1p);
  } else {
    throw lw::ConfigError("unknown control target '" + target + "'");
  }
  const int nn = int(y0p.size());
  std::vector<double> zeros(nn, 0.0);
  const lw::HumResult hum = lw::hum_control(pb, zeros, zeros, y0p, y1p, 1e-2, 200);

  // data-only artifacts: CG residual history (CSV), controlled trajectory
  // snapshots (CSV), terminal-state comparison (JSON)
  {
    std::ofstream cg(cfg.out_dir + "/control_cg_residuals.csv");
    cg << "iteration,relative_residual\n";
    for (std::size_t i = 0; i < hum.residual_history.size(); ++i)
      cg << i << ',' << lw::format_double(hum.residual_history[i]) << "\n";
  }
  const lw::StateTrajectory controlled =
      lw::forward_solve(pb, hum.control, zeros, zeros);
  {
    std::ofstream snap(cfg.out_dir + "/control_snapshots.csv");
    snap << "snapshot,node,x,value\n";
    for (std::size_t s = 0; s < controlled.snapshots.size(); ++s)
      for (int j = 0; j < nn; ++j)
        snap << s << ',' << j << ','
             << lw::format_double(pb.x_lo[0] + j * pb.dx[0]) << ','
             << lw::format_double(controlled.snapshots[s][j]) << "\n";
  }
  {
    std::ofstream ts(cfg.out_dir + "/control_terminal.json");
    ts << "{\n  \"relative_error_l2\": " << lw::format_double(hum.terminal_error_l2)
       << ",\n  \"relative_error_full\": "
       << lw::format_double(hum.terminal_error_full)
       << ",\n  \"control_norm\": " << lw::format_double(hum.control_norm)
       << ",\n  \"iterations\": " << hum.iterations << ",\n  \"target\": [";
    for (int j = 0; j < nn; ++j)
      ts << (j ? "," : "") << lw::format_double(y0p[j]);
    ts << "],\n  \"achieved\": [";
    for (int j = 0; j < nn; ++j)
      ts << (j ? "," : "") << lw::format_double(controlled.final_state[j]);
    ts << "]\n}\n";
  }
  report.add(row("terminal_error_l2", "boundary control run", hum.terminal_error_l2,
                 1e-2, hum.terminal_error_l2 < 1e-2));
  {
    lw::VerificationRow r = row("cg_iterations", "plumbing", hum.iterations, 200,
                                hum.iterations <= 200);
    r.fitted_constant = hum.control_norm;
    report.add(r);
  }
  report.rows.front().runtime_seconds = timer.seconds();
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lorwave: hyperquadric Carleman verification and wave boundary control"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, model_name, fmt, out_dir, target = "bump";
  double delta = -1, kfreq = -1, eps0 = -1, b0 = -1, a = -1, r0 = -1;
  std::vector<double> centre, span;
  std::vector<int> grid;
  std::uint64_t seed = 0;
  bool have_seed = false;

  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--model", model_name, "model name: minkowski | warped | conformal");
  app.add_option("--delta", delta, "perturbation amplitude");
  app.add_option("--k", kfreq, "perturbation frequency");
  app.add_option("--eps0", eps0, "shift parameter eps0");
  app.add_option("--b0", b0, "weight parameter b0");
  app.add_option("--a", a, "Carleman strength a");
  app.add_option("--r0", r0, "radius scale r0");
  app.add_option("--grid", grid, "grid sizes: nx [nt]")->expected(1, 2);
  app.add_option("--time-span", span, "tau_minus tau_plus")->expected(2);
  app.add_option("--centre", centre, "centre point coordinates")->expected(1, 4);
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", fmt, "report format: json | csv");
  app.add_option("--target", target, "control target (bump)");

  auto* sub_geom = app.add_subcommand("verify-geometry", "frame and transport checks");
  auto* sub_pc = app.add_subcommand("verify-pseudoconvexity", "level-set convexity checks");
  auto* sub_carl = app.add_subcommand("verify-carleman", "weighted estimate checks");
  auto* sub_obs = app.add_subcommand("observability", "empirical observability probe");
  auto* sub_ctrl = app.add_subcommand("control", "boundary control run");
  auto* sub_all = app.add_subcommand("all", "run every verification stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  have_seed = seed_opt->count() > 0;

  try {
    lw::Config cfg = config_path.empty() ? lw::Config{} : lw::load_config(config_path);
    if (!model_name.empty()) cfg.model = model_name;
    if (delta >= 0) cfg.delta = delta;
    if (kfreq >= 0) cfg.k = kfreq;
    if (eps0 >= 0) cfg.eps0 = eps0;
    if (b0 >= 0) cfg.b0 = b0;
    if (a >= 0) cfg.a = a;
    if (r0 >= 0) cfg.r0 = r0;
    if (!grid.empty()) {
      cfg.grid_nx = grid[0];
      if (grid.size() > 1) cfg.grid_nt = grid[1];
    }
    if (!span.empty()) {
      cfg.tau_minus = span[0];
      cfg.tau_plus = span[1];
    }
    for (std::size_t i = 0; i < centre.size(); ++i) cfg.centre[i] = centre[i];
    if (have_seed) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (const char* env_out = std::getenv("LORWAVE_OUT")) cfg.out_dir = env_out;
    if (!fmt.empty()) cfg.format = fmt;
    lw::validate(cfg);

    bool ok = true;
    auto run_stage = [&](lw::Report (*fn)(const lw::Config&)) {
      lw::Report rep = fn(cfg);
      emit(cfg, rep);
      ok = ok && rep.all_pass();
    };

    if (sub_geom->parsed()) run_stage(verify_geometry);
    if (sub_pc->parsed()) run_stage(verify_pseudoconvexity);
    if (sub_carl->parsed()) {
      lw::Config c2 = cfg;
      c2.dim = 2;
      lw::Report rep = verify_carleman(c2);
      emit(c2, rep);
      ok = ok && rep.all_pass();
    }
    if (sub_obs->parsed()) run_stage(observability_report);
    if (sub_ctrl->parsed()) {
      lw::Report rep = control_report(cfg, target);
      emit(cfg, rep);
      ok = ok && rep.all_pass();
    }
    if (sub_all->parsed()) {
      run_stage(verify_geometry);
      run_stage(verify_pseudoconvexity);
      {
        lw::Config c2 = cfg;
        c2.dim = 2;
        lw::Report rep = verify_carleman(c2);
        emit(c2, rep);
        ok = ok && rep.all_pass();
      }
      run_stage(observability_report);
      lw::Report rep = control_report(cfg, target);
      emit(cfg, rep);
      ok = ok && rep.all_pass();
    }
    if (!ok) {
      std::fprintf(stderr, "one or more checks failed\n");
      return 1;
    }
    return 0;
  } catch (const lw::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
