#include "doctest.h"

#include <cmath>

#include "lorwave/pseudoconvexity.hpp"

using namespace lorwave;

namespace {

ModelPtr minkowski(int dim) { return make_model("minkowski", {{"dim", double(dim)}}); }
ModelPtr warped(int dim, double delta, double k = 1.0) {
  return make_model("warped", {{"dim", double(dim)}, {"delta", delta}, {"k", k}});
}

GeomPoint point_on(const Geometry& geo, double omega0, double angle, double r) {
  Direction omega{omega0, Vec4{std::cos(angle), std::sin(angle), 0, 0}};
  const double radii[1] = {r};
  return geo.ray(omega, std::span<const double>(radii, 1))[0];
}

}  // namespace

TEST_CASE("eta, fbar, hbar: closed-form values") {
  const auto m = minkowski(2);
  Geometry geo(m, Vec4{0, 0, 0, 0});

  // t = 0: eta = 1, fbar = f, hbar = 1/2 - eps r^2 / 4
  {
    const FramePoint fp = geo.frame_point(Vec4{0.0, 1.2, 0, 0});
    const PcParams pc{0.05, 1.0};
    const auto v = eta_fbar_hbar(pc, fp);
    CHECK(v.eta == doctest::Approx(1.0));
    CHECK(v.fbar == doctest::Approx(fp.f));
    CHECK(v.hbar == doctest::Approx(0.5 - 0.25 * 0.05 * 1.44));
  }
  // eps = 0 limit through a tiny eps0
  {
    const FramePoint fp = geo.frame_point(Vec4{0.4, 1.0, 0, 0});
    const PcParams pc{1e-300, 1.0};
    const auto v = eta_fbar_hbar(pc, fp);
    CHECK(v.fbar == doctest::Approx(fp.f));
    CHECK(v.hbar == doctest::Approx(0.5));
  }
  // direct evaluation: eps0 = 0.05, r0 = 1, (t, r) = (0.5, 1)
  {
    const FramePoint fp = geo.frame_point(Vec4{0.5, 1.0, 0, 0});
    const PcParams pc{0.05, 1.0};
    const auto v = eta_fbar_hbar(pc, fp);
    CHECK(v.eta == doctest::Approx(0.9875).epsilon(1e-14));
    CHECK(v.fbar == doctest::Approx(0.1875 / 0.9875).epsilon(1e-14));
  }
}

TEST_CASE("tangency maps are inverse to each other") {
  const auto m = warped(3, 0.05);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  const PcParams pc{0.05, 1.0};
  CounterRng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const double omega0 = rng.uniform(-0.8, 0.8);
    const double angle = rng.uniform(0, 6.28);
    const double r = rng.uniform(0.2, 0.95);
    const GeomPoint gp = point_on(geo, omega0, angle, r);
    const PcPoint pt = pc_assemble(gp, pc);

    FrameVec X;
    X.d = pt.d;
    X.c[0] = 0.0;  // f-tangent: no radial component
    X.c[1] = rng.normal();
    X.c[2] = rng.normal();
    const FrameVec PX = p_map(pt, X);
    // PX annihilates fbar
    double pxf = 0.0;
    for (int k = 0; k < pt.d; ++k) pxf += PX.c[k] * pt.grad_fbar[k];
    CHECK(std::abs(pxf) < 1e-10);
    const FrameVec back = pbar_map(pt, PX);
    for (int k = 0; k < pt.d; ++k) CHECK(std::abs(back.c[k] - X.c[k]) < 1e-8);

    // opposite composition
    FrameVec Xb;
    Xb.d = pt.d;
    Xb.c[1] = rng.normal();
    Xb.c[2] = rng.normal();
    // make it fbar-tangent by removing the radial defect
    double xf = Xb.c[1] * pt.grad_fbar[1] + Xb.c[2] * pt.grad_fbar[2];
    Xb.c[0] = -xf / pt.grad_fbar[0];
    const FrameVec PbX = pbar_map(pt, Xb);
    const FrameVec fwd = p_map(pt, PbX);
    for (int k = 0; k < pt.d; ++k) CHECK(std::abs(fwd.c[k] - Xb.c[k]) < 1e-8);
  }
}

TEST_CASE("p_map rejects non-tangent input") {
  const auto m = minkowski(2);
  Geometry geo(m, Vec4{0, 0, 0, 0});
  const GeomPoint gp = point_on(geo, 0.2, 0.0, 1.0);
  const PcPoint pt = pc_assemble(gp, PcParams{0.05, 1.0});
  FrameVec X;
  X.d = 2;
  X.c[0] = 1.0;  // radial component: not f-tangent
  X.c[1] = 0.0;
  CHECK_THROWS_AS(p_map(pt, X), std::invalid_argument);
}

TEST_CASE("flat barred frames with eps = 0 coincide with the unbarred frames") {
  const auto m = minkowski(3);
  Geometry geo(m, Vec4{0, 0, 0, 0});
  const GeomPoint gp = point_on(geo, 0.4, 0.7, 1.1);
  const PcPoint pt = pc_assemble(gp, PcParams{1e-300, 1.0});
  CHECK(pt.Ebar_theta[0] == doctest::Approx(0.0));
  CHECK(pt.Ebar_theta[1] == doctest::Approx(1.0));
  CHECK(pt.Ebar_A[0][0] == doctest::Approx(0.0));
  CHECK(pt.Ebar_rho[0] == doctest::Approx(1.0));
}

TEST_CASE("barred metric components match the closed forms") {
  const auto m = minkowski(3);
  Geometry geo(m, Vec4{0, 0, 0, 0});
  const PcParams pc{0.05, 1.0};
  const GeomPoint gp = point_on(geo, 0.5, 0.3, 1.2);
  const PcPoint pt = pc_assemble(gp, pc);

  auto gdot = [&](const double* X, const double* Y) { return pt.g_vec(X, Y); };
  const double rr = pt.rho2 / (pt.r * pt.r);
  // E_theta eta = -2 eps t in flat space
  const double eth = pt.grad_eta[1];
  CHECK(eth == doctest::Approx(-2.0 * pc.eps() * pt.t).epsilon(1e-12));
  const double expected_tt = (-1.0 + std::pow(0.5 * pt.r * eth, 2)) * rr;
  CHECK(gdot(pt.Ebar_theta, pt.Ebar_theta) == doctest::Approx(expected_tt).epsilon(1e-12));
  // orthogonality of Ebar_rho against the tangent frames
  CHECK(std::abs(gdot(pt.Ebar_rho, pt.Ebar_theta)) < 1e-12);
  CHECK(std::abs(gdot(pt.Ebar_rho, pt.Ebar_A[0])) < 1e-12);
  // g(Ebar_rho, Ebar_rho) expansion: exact flat value is
  // eta^{-4} (rho^2/r^2)(1 - eps^2 t^2 r^2), within O(eps t^2) of the eta^{-3}
  // leading form with a universal constant of order one
  const double grr = gdot(pt.Ebar_rho, pt.Ebar_rho);
  const double exact = std::pow(pt.eta, -4.0) * rr *
                       (1.0 - pc.eps() * pc.eps() * pt.t * pt.t * pt.r * pt.r);
  CHECK(grr == doctest::Approx(exact).epsilon(1e-12));
  const double lead = rr * std::pow(pt.eta, -3.0);
  CHECK(std::abs(grr - lead) < 3.0 * pc.eps() * pt.t * pt.t * lead + 1e-9);
}

TEST_CASE("barred orthogonality on the warped model") {
  const auto m = warped(3, 0.05);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  const PcParams pc{0.05, 1.0};
  for (double omega0 : {-0.5, 0.3, 0.7}) {
    const GeomPoint gp = point_on(geo, omega0, 1.1, 0.9);
    const PcPoint pt = pc_assemble(gp, pc);
    CHECK(std::abs(pt.g_vec(pt.Ebar_rho, pt.Ebar_theta)) < 1e-7);
    CHECK(std::abs(pt.g_vec(pt.Ebar_rho, pt.Ebar_A[0])) < 1e-7);
  }
}

TEST_CASE("hessian relation between the two quadrics") {
  const auto m = warped(3, 0.05);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  const PcParams pc{0.05, 1.0};
  CounterRng rng(41);
  for (int i = 0; i < 50; ++i) {
    const GeomPoint gp =
        point_on(geo, rng.uniform(-0.7, 0.7), rng.uniform(0, 6.28), rng.uniform(0.3, 0.9));
    const PcPoint pt = pc_assemble(gp, pc);
    // random fbar-tangent pair from barred-frame coefficients
    double X[4] = {}, Y[4] = {};
    for (int k = 0; k < pt.d; ++k) {
      const double cx = rng.normal(), cy = rng.normal();
      if (k == 0) continue;
      const double* eb = (k == 1) ? pt.Ebar_theta : pt.Ebar_A[k - 2];
      for (int j = 0; j < pt.d; ++j) {
        X[j] += cx * eb[j];
        Y[j] += cy * eb[j];
      }
    }
    // LHS: (hess fbar - (1/2) eta^{-1} g + eta^{-1} fbar hess eta)(X, Y)
    double lhs = pt.bilinear(pt.hess_fbar, X, Y) + pt.bilinear(pt.hess_eta, X, Y) *
                 pt.fbar / pt.eta;
    for (int j = 0; j < pt.d; ++j) lhs -= 0.5 / pt.eta * pt.gF[j] * X[j] * Y[j];
    // RHS: eta^{-1} q(Pbar X, Pbar Y)
    FrameVec Xv, Yv;
    Xv.d = Yv.d = pt.d;
    for (int j = 0; j < pt.d; ++j) {
      Xv.c[j] = X[j];
      Yv.c[j] = Y[j];
    }
    const FrameVec Xt = pbar_map(pt, Xv, 1e-6);
    const FrameVec Yt = pbar_map(pt, Yv, 1e-6);
    double rhs = 0.0;
    for (int a = 1; a < pt.d; ++a)
      for (int b = 1; b < pt.d; ++b)
        rhs += gp.ts.q(a - 1, b - 1) * Xt.c[a] * Yt.c[b];
    rhs /= pt.eta;
    CHECK(std::abs(lhs - rhs) < 1e-6);
  }
}

TEST_CASE("gbar_plus frame formula and positivity") {
  const auto m = warped(3, 0.05);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  const PcParams pc{0.05, 1.0};
  CounterRng rng(43);
  for (int i = 0; i < 40; ++i) {
    const GeomPoint gp =
        point_on(geo, rng.uniform(-0.7, 0.7), rng.uniform(0, 6.28), rng.uniform(0.3, 0.9));
    const PcPoint pt = pc_assemble(gp, pc);
    // compare the formula with the direct composition g_+(Pbar., Pbar.)
    BlockVec Xc, Yc;
    Xc[0] = rng.normal();
    Xc[1] = rng.normal();
    Yc[0] = rng.normal();
    Yc[1] = rng.normal();
    double X[4] = {}, Y[4] = {};
    for (int a = 0; a < 2; ++a) {
      const double* eb = (a == 0) ? pt.Ebar_theta : pt.Ebar_A[0];
      for (int j = 0; j < pt.d; ++j) {
        X[j] += Xc[a] * eb[j];
        Y[j] += Yc[a] * eb[j];
      }
    }
    FrameVec Xv, Yv;
    Xv.d = Yv.d = pt.d;
    for (int j = 0; j < pt.d; ++j) {
      Xv.c[j] = X[j];
      Yv.c[j] = Y[j];
    }
    const FrameVec Xt = pbar_map(pt, Xv, 1e-6);
    const FrameVec Yt = pbar_map(pt, Yv, 1e-6);
    // g_+ = g + 2 (r^2/rho^2) E_theta-flat tensor in the unbarred frame
    double gplus = 0.0;
    for (int j = 0; j < pt.d; ++j) gplus += pt.gF[j] * Xt.c[j] * Yt.c[j];
    gplus += 2.0 * pt.kappa * (pt.gF[1] * Xt.c[1]) * (pt.gF[1] * Yt.c[1]);
    const double rr = pt.rho2 / (pt.r * pt.r);
    const double formula = rr * Xc[0] * Yc[0] + Xc[1] * Yc[1];
    CHECK(std::abs(gplus - formula) < 1e-8);
    // positivity on nonzero coefficients
    const double self = rr * Xc[0] * Xc[0] + Xc[1] * Xc[1];
    CHECK(self > 0.0);
  }
}

TEST_CASE("pi tensor: flat angular value is exactly eps r^2 / 4") {
  const auto m = minkowski(3);
  Geometry geo(m, Vec4{0, 0, 0, 0});
  const PcParams pc{0.05, 1.0};
  for (double omega0 : {-0.6, 0.0, 0.5}) {
    const GeomPoint gp = point_on(geo, omega0, 0.9, 1.1);
    const PiTensor pi = pi_tensor(pc, gp);
    const double expect = 0.25 * pc.eps() * gp.fp.r * gp.fp.r;
    CHECK(pi.pi_barred(1, 1) == doctest::Approx(expect).epsilon(1e-10));
    // radial-radial scale: (rho^2 / 4 r^2) O(eps r^2)
    const double rr = gp.fp.rho * gp.fp.rho / (gp.fp.r * gp.fp.r);
    CHECK(std::abs(pi.pi_rho_rho) < 5.0 * rr * pc.eps() * gp.fp.r * gp.fp.r);
  }
}

TEST_CASE("pi mixed radial components respect their envelopes") {
  const auto m = warped(3, 0.02);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  const PcParams pc{0.05, 1.0};
  double fitted = 0.0;
  CounterRng rng(61);
  for (int i = 0; i < 80; ++i) {
    const GeomPoint gp =
        point_on(geo, rng.uniform(-0.75, 0.75), rng.uniform(0, 6.28), rng.uniform(0.25, 0.9));
    const PiTensor pi = pi_tensor(pc, gp);
    const double rr = gp.fp.rho * gp.fp.rho / (gp.fp.r * gp.fp.r);
    const double env = rr * pc.eps() * gp.fp.r * gp.fp.r;
    for (int a = 0; a < 2; ++a)
      fitted = std::max(fitted, std::abs(pi.pi_rho_a[a]) / env);
    fitted = std::max(fitted, std::abs(pi.pi_rho_rho) / (0.25 * env));
  }
  CHECK(fitted < 20.0);
}

TEST_CASE("assembled pi matches the finite-difference Hessian of fbar") {
  const auto m = warped(3, 0.05);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-12);
  const PcParams pc{0.05, 1.0};
  const double eps = pc.eps();
  for (double omega0 : {-0.4, 0.55}) {
    const GeomPoint gp = point_on(geo, omega0, 0.7, 0.85);
    const PcPoint pt = pc_assemble(gp, pc);
    auto fbar_func = [eps](double t, double r) {
      return 0.25 * (r * r - t * t) / (1.0 - eps * t * t);
    };
    // contract the FD Hessian with the barred frames (as chart vectors)
    const Frame& fr = gp.fp.frame;
    auto chart_vec = [&](const double* coeff) {
      Vec4 v = zero_vec();
      for (int j = 0; j < 3; ++j) {
        const Vec4& e = (j == 0) ? fr.E_rho : (j == 1 ? fr.E_theta : fr.E_A[0]);
        v = add(v, scale(coeff[j], e));
      }
      return v;
    };
    const Vec4 Eb_t = chart_vec(pt.Ebar_theta);
    const Vec4 Eb_A = chart_vec(pt.Ebar_A[0]);
    const double h_tt = scalar_fd_hessian(geo, gp.fp, fbar_func, Eb_t, Eb_t);
    const double h_tA = scalar_fd_hessian(geo, gp.fp, fbar_func, Eb_t, Eb_A);
    const double h_AA = scalar_fd_hessian(geo, gp.fp, fbar_func, Eb_A, Eb_A);
    const double a_tt = pt.bilinear(pt.hess_fbar, pt.Ebar_theta, pt.Ebar_theta);
    const double a_tA = pt.bilinear(pt.hess_fbar, pt.Ebar_theta, pt.Ebar_A[0]);
    const double a_AA = pt.bilinear(pt.hess_fbar, pt.Ebar_A[0], pt.Ebar_A[0]);
    CHECK(std::abs(h_tt - a_tt) < 1e-5);
    CHECK(std::abs(h_tA - a_tA) < 1e-5);
    CHECK(std::abs(h_AA - a_AA) < 1e-5);
  }
}

TEST_CASE("closed-form radial components of the shifted Hessian") {
  const auto m = warped(3, 0.05);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  const PcParams pc{0.05, 1.0};
  const GeomPoint gp = point_on(geo, 0.45, 1.3, 0.8);
  const PcPoint pt = pc_assemble(gp, pc);
  const double rr = pt.rho2 / (pt.r * pt.r);
  const double et2 = pt.eps * pt.t * pt.t;
  const double expect_rr = (1.0 + 3.0 * et2) * 0.5 * std::pow(pt.eta, -3.0) * rr;
  CHECK(pt.hess_fbar[0][0] == doctest::Approx(expect_rr).epsilon(1e-10));
  // (rho, barred-theta) component
  const double lhs = pt.bilinear(pt.hess_fbar, pt.Ebar_rho, pt.Ebar_rho);
  const double expect_rbrb = 2.0 * std::pow(pt.eta, -4.0) * pt.fbar / (pt.r * pt.r);
  CHECK(lhs == doctest::Approx(expect_rbrb).epsilon(0.05));
}

TEST_CASE("shifted gauss residuals vanish in the exact limits") {
  const auto m = minkowski(2);
  Geometry geo(m, Vec4{0, 0, 0, 0});
  {
    // t = 0
    const GeomPoint gp = point_on(geo, 0.0, 0.0, 1.3);
    const auto sg = shifted_gauss_residuals(PcParams{0.05, 1.0}, gp);
    CHECK(std::abs(sg.e1) < 1e-12);
    CHECK(std::abs(sg.e2) < 1e-12);
  }
  {
    // eps -> 0
    const GeomPoint gp = point_on(geo, 0.5, 0.0, 1.3);
    const auto sg = shifted_gauss_residuals(PcParams{1e-300, 1.0}, gp);
    CHECK(std::abs(sg.e1) < 1e-12);
    CHECK(std::abs(sg.e2) < 1e-12);
  }
}

TEST_CASE("shifted gauss residuals obey the quadratic envelope on warped") {
  const auto m = warped(3, 0.05);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  const PcParams pc{0.05, 1.0};
  CounterRng rng(51);
  double fitted = 0.0;
  for (int i = 0; i < 100; ++i) {
    const GeomPoint gp =
        point_on(geo, rng.uniform(-0.8, 0.8), rng.uniform(0, 6.28), rng.uniform(0.3, 0.95));
    const auto sg = shifted_gauss_residuals(pc, gp);
    const double env = pc.eps() * pc.eps() * gp.fp.t * gp.fp.t * gp.fp.f;
    if (env > 1e-300) {
      fitted = std::max(fitted, std::abs(sg.e1) / env);
      fitted = std::max(fitted, std::abs(sg.e2) / env);
    }
  }
  CHECK(fitted < 50.0);
}

TEST_CASE("pseudoconvexity margin: flat minimum matches the closed-form gap") {
  const auto m = minkowski(3);
  Geometry geo(m, Vec4{0, 0, 0, 0});
  const PcParams pc{0.05, 1.0};
  const PcCheckResult res =
      pseudoconvexity_check(geo, pc, SweepSampling{8, 8, 8}, 16, 7);
  CHECK(res.min_margin >= 0.0);
  CHECK_FALSE(res.sign_flip);
  // exact angular value eps r^2/4 against the threshold eps r^2/8 leaves at
  // least ~0.09 eps r^2 once the t-dependent corrections are accounted for
  CHECK(res.min_margin_normalised >= 0.09);
}

TEST_CASE("pseudoconvexity margin: warped small delta stays nonnegative") {
  const auto m = warped(3, 0.01);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  const PcParams pc{0.05, 1.0};
  const PcCheckResult res =
      pseudoconvexity_check(geo, pc, SweepSampling{6, 6, 6}, 16, 7);
  CHECK(res.min_margin >= 0.0);
}

TEST_CASE("margin vanishes linearly as the shift is removed") {
  // the unshifted quadric is only marginally convex: the margin scales with
  // eps and the normalised margin stays pinned near the exact 1/8 gap
  const auto m = minkowski(3);
  Geometry geo(m, Vec4{0, 0, 0, 0});
  const SweepSampling sweep{6, 6, 6};
  double margins[2];
  int i = 0;
  for (double eps0 : {1e-6, 1e-9}) {
    const PcCheckResult res =
        pseudoconvexity_check(geo, PcParams{eps0, 1.0}, sweep, 16, 7);
    CHECK(res.min_margin >= 0.0);
    CHECK(res.min_margin_normalised > 0.05);
    CHECK(res.min_margin_normalised < 0.2);
    margins[i++] = res.min_margin;
  }
  CHECK(margins[0] / margins[1] == doctest::Approx(1e3).epsilon(0.05));
}

TEST_CASE("pseudoconvexity margin degrades monotonically and flips sign") {
  const auto m1 = warped(3, 0.01);
  const auto m2 = warped(3, 0.05);
  const auto m3 = warped(3, 0.6);
  const PcParams pc{0.05, 1.0};
  const SweepSampling sweep{6, 6, 6};
  Geometry g1(m1, Vec4{0, 0, 0, 0}, 1e-10);
  Geometry g2(m2, Vec4{0, 0, 0, 0}, 1e-10);
  Geometry g3(m3, Vec4{0, 0, 0, 0}, 1e-10);
  const double mg1 = pseudoconvexity_check(g1, pc, sweep, 16, 7).min_margin;
  const double mg2 = pseudoconvexity_check(g2, pc, sweep, 16, 7).min_margin;
  const PcCheckResult r3 = pseudoconvexity_check(g3, pc, sweep, 16, 7);
  CHECK(mg2 < mg1);
  CHECK(r3.sign_flip);  // large amplitude destroys the convexity
}

TEST_CASE("eta derivative report passes on the warped model") {
  const auto m = warped(3, 0.05);
  Geometry geo(m, Vec4{0, 0, 0, 0}, 1e-11);
  BudgetSampling bs;
  bs.n_omega0 = 6;
  bs.n_directions = 8;
  bs.n_radii = 6;
  const CurvatureBudget budget = curvature_budget(*m, Vec4{0, 0, 0, 0}, 1.0, bs, 0.1, 1.0);
  const auto rows =
      eta_derivative_report(geo, PcParams{0.05, 1.0}, SweepSampling{6, 6, 6}, budget);
  for (const auto& r : rows) {
    INFO(r.check_id, " measured=", r.measured);
    CHECK(r.pass);
  }
}

TEST_CASE("degenerate convexity sampling is rejected") {
  const auto m = minkowski(3);
  Geometry geo(m, Vec4{0, 0, 0, 0});
  CHECK_THROWS_AS(
      pseudoconvexity_check(geo, PcParams{0.05, 1.0}, SweepSampling{4, 4, 0}, 16, 7),
      EmptyRegionError);
}

TEST_CASE("assembly rejects points outside the eta regime") {
  const auto m = minkowski(2);
  Geometry geo(m, Vec4{0, 0, 0, 0});
  // eta = 1 - eps t^2 <= 0 requires eps t^2 >= 1; with r0 = 0.1, eps = 100 eps0
  const GeomPoint gp = point_on(geo, 0.9, 0.0, 10.0);  // t = 9
  const PcParams pc{0.025, 0.1};                       // eps = 2.5
  CHECK_THROWS_AS(pc_assemble(gp, pc), std::domain_error);
}
