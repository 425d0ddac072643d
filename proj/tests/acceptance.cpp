// End-to-end acceptance gate: one line per criterion, nonzero exit on failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "supgdlr/driver.hpp"

using namespace supgdlr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

int g_failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("[%s] %2d: %s (%s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  if (!ok) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

MatrixXd random_matrix(int rows, int cols, std::mt19937& rng) {
  std::normal_distribution<double> dist;
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

struct RunTally {
  double lemma3_max = 0.0;
  double prop1_max = 0.0;
  double c_lbi_max = 0.0;
  bool stability_ok = true;
  int runs = 0;
  void absorb(double l3, double p1, double clbi, bool stable) {
    lemma3_max = std::max(lemma3_max, l3);
    prop1_max = std::max(prop1_max, p1);
    c_lbi_max = std::max(c_lbi_max, clbi);
    stability_ok = stability_ok && stable;
    ++runs;
  }
};

}  // namespace

int main() {
  const ManufacturedProblem problem;
  RunTally tally;

  // ---- 1: convergence orders of the benchmark study --------------------
  {
    bool ok = true;
    std::string detail;
    for (int degree : {1, 2}) {
      ExperimentConfig cfg;
      cfg.degree = degree;
      cfg.rank = 6;
      cfg.n_collocation = 15;
      cfg.level_min = 3;
      cfg.level_max = 6;
      cfg.dt_coeff = 5.0;
      cfg.strict_stability = true;  // enforces the ledger at every prefix
      const auto t0 = std::chrono::steady_clock::now();
      StudyReport rep;
      try {
        rep = convergence_study(cfg, problem);
      } catch (const std::exception& e) {
        ok = false;
        detail += std::string(" k=") + std::to_string(degree) + " threw: " + e.what();
        continue;
      }
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const double floor_rate = 2.0 * (degree + 1) / 3.0 - 0.25;
      const bool levels_ok = rep.records.size() == 4;
      const bool rate_ok = rep.fit.meaningful && rep.fit.slope >= floor_rate;
      const bool time_ok = seconds < 300.0;
      ok = ok && levels_ok && rate_ok && time_ok;
      detail += " k=" + std::to_string(degree) + " slope=" + fmt(rep.fit.slope) +
                " floor=" + fmt(floor_rate) + " time=" + fmt(seconds) + "s";
      for (const auto& r : rep.records)
        tally.absorb(r.lemma3_max, r.prop1_max, r.c_lbi_max,
                     r.stab_lhs <= r.stab_rhs * (1.0 + 1e-12));
    }
    report(1, ok, "convergence orders, levels 3..6, rank 6", detail.substr(1));
  }

  // Shared small instance for criteria 2, 7, 9b.
  const LagrangeSpace small_space(Mesh1D(0.0, 1.0, 16), 1);
  const SpatialOperators small_spatial = assemble(small_space, problem.b);
  const DiscreteMeasure small_mu = DiscreteMeasure::uniform(5);
  const ProblemCoefficients coeffs = problem.coefficients();
  const double small_dt = 0.01;
  const SupgOperators small_ops =
      assemble_supg(small_space, small_spatial, coeffs,
                    select_delta(small_space.mesh.h, small_dt, coeffs,
                                 estimate_inverse_constant(small_space, small_spatial)),
                    small_mu);

  // ---- 2: full-rank equivalence with the dense reference solver --------
  double full_rank_discrepancy = 0.0;
  double orth_defect_max = 0.0;
  double reorth_change_max = 0.0;
  {
    const TimeGrid grid(small_dt * 10, 10);
    const MatrixXd u0 = project_field(small_space, small_spatial, coeffs.u0, small_mu);
    const auto trajectory = full_tensor_solve(small_ops, grid, u0);
    const auto svd = weighted_truncated_svd(u0, small_ops.mass, small_mu, 5);
    LowRankField state{svd.u, svd.y};
    const Stepper stepper(small_ops);
    for (int n = 1; n <= 10; ++n) {
      // Reorthonormalization invariance: the represented field before and
      // after the QR cleanup must agree (criterion 7).
      const auto g = small_ops.forcing(n * grid.dt);
      const MatrixXd u_tilde = stepper.step_physical(state, g, grid.dt);
      const MatrixXd y_tilde = stepper.step_stochastic(u_tilde, state.y, g, grid.dt);
      const MatrixXd before = u_tilde * y_tilde.transpose();

      auto [next, diag] = stepper.step(state, n * grid.dt, grid.dt);
      state = std::move(next);
      reorth_change_max =
          std::max(reorth_change_max, (state.expand() - before).cwiseAbs().maxCoeff() /
                                          before.cwiseAbs().maxCoeff());
      orth_defect_max = std::max(orth_defect_max, state.y.orthonormality_defect(small_mu));
      tally.absorb(diag.lemma3_residual, diag.prop1_residual, diag.c_lbi, true);

      const MatrixXd& ref = trajectory[n];
      full_rank_discrepancy =
          std::max(full_rank_discrepancy,
                   (state.expand() - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff());
    }
    report(2, full_rank_discrepancy <= 1e-9,
           "full-rank split update matches dense per-point solve",
           "max rel discrepancy=" + fmt(full_rank_discrepancy) + " tol=1e-09");
  }

  // ---- 3: energy-stability ledger -----------------------------------
  {
    bool ok = tally.stability_ok;
    std::string detail = "benchmark runs ok;";
    // 20 randomized admissible configurations.
    std::mt19937 rng(20240815);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int stable = 0;
    for (int trial = 0; trial < 20; ++trial) {
      ExperimentConfig cfg;
      cfg.degree = 1 + static_cast<int>(unif(rng) * 2.0) % 2;
      cfg.n_collocation = 4 + static_cast<int>(unif(rng) * 5.0);
      cfg.rank = 1 + static_cast<int>(unif(rng) * cfg.n_collocation) % cfg.n_collocation;
      cfg.dt_coeff = 1.0 + 7.0 * unif(rng);
      cfg.delta_safety = 0.5 + 0.5 * unif(rng);
      cfg.t_final = 0.1 + 0.2 * unif(rng);
      const int level = 3 + static_cast<int>(unif(rng) * 2.0) % 2;
      try {
        ProblemSetup s = build_setup(cfg, level, problem);
        const Stepper stepper(s.ops);
        const RunResult res =
            stepper.run(initial_condition(s, cfg, cfg.rank, problem), s.grid);
        if (res.stability_ok) ++stable;
        tally.absorb(res.lemma3_max, res.prop1_max, res.c_lbi_max, res.stability_ok);
      } catch (const std::exception& e) {
        detail += std::string(" trial ") + std::to_string(trial) + " threw: " + e.what() + ";";
      }
    }
    ok = ok && stable == 20;
    detail += " randomized stable " + std::to_string(stable) + "/20;";

    // Unforced decay.
    ProblemCoefficients quiet = coeffs;
    quiet.f = [](double, double, double) { return 0.0; };
    const SupgOperators quiet_ops =
        assemble_supg(small_space, small_spatial, quiet,
                      select_delta(small_space.mesh.h, 0.02, quiet,
                                   estimate_inverse_constant(small_space, small_spatial)),
                      small_mu);
    const MatrixXd q0 = project_field(small_space, small_spatial, quiet.u0, small_mu);
    const auto qsvd = weighted_truncated_svd(q0, quiet_ops.mass, small_mu, 3);
    const LowRankField qstate{qsvd.u, qsvd.y};
    const double norm0 = quiet_ops.l2_mu_norm(qstate.expand());
    const RunResult qres = Stepper(quiet_ops).run(qstate, TimeGrid(0.2, 10));
    const double normN = quiet_ops.l2_mu_norm(qres.state.expand());
    const bool decay_ok = normN <= norm0 && qres.stability_ok;
    ok = ok && decay_ok;
    detail += " f=0 decay " + fmt(normN) + " <= " + fmt(norm0);
    report(3, ok, "stability ledger at every prefix", detail);
  }

  // ---- 4: per-step identity residuals --------------------------------
  report(4, tally.lemma3_max <= 1e-8 && tally.prop1_max <= 1e-8,
         "factor-velocity and variational-form identities per step",
         "lemma-type residual max=" + fmt(tally.lemma3_max) +
             " tangent-basis residual max=" + fmt(tally.prop1_max) + " over " +
             std::to_string(tally.runs) + " runs, tol=1e-08");

  // ---- 5: tangent projector properties -------------------------------
  {
    std::mt19937 rng(5);
    const int n = small_space.n_interior;
    const int nc = small_mu.size();
    const auto svd = weighted_truncated_svd(
        project_field(small_space, small_spatial, coeffs.u0, small_mu), small_ops.mass,
        small_mu, 2);
    const LowRankField base{svd.u, svd.y};
    const TangentProjector orth(base, small_ops.mass, small_ops.mass, small_mu);
    const TangentProjector oblique(base, small_ops.mass, small_ops.skew_mass_adj, small_mu);

    double idem = 0.0, collapse = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const MatrixXd v = random_matrix(n, nc, rng);
      for (const TangentProjector* p : {&orth, &oblique}) {
        const MatrixXd pv = p->apply(v);
        idem = std::max(idem, (p->apply(pv) - pv).cwiseAbs().maxCoeff() /
                                  std::max(1.0, pv.cwiseAbs().maxCoeff()));
      }
      // delta = 0 collapse: the skewed pairing degenerates to the mass matrix.
      const TangentProjector degenerate(base, small_ops.mass,
                                        small_ops.mass + 0.0 * small_ops.skew_mass_adj,
                                        small_mu);
      collapse = std::max(collapse, (degenerate.apply(v) - orth.apply(v)).cwiseAbs().maxCoeff() /
                                        std::max(1.0, v.cwiseAbs().maxCoeff()));
    }
    const double bound = check_projector_bound(oblique, small_ops.mass, small_mu, 500);
    const bool ok = idem <= 1e-10 && bound <= 3.0 && collapse <= 1e-12;
    report(5, ok, "tangent projectors: idempotent, bounded by 3, delta=0 collapse",
           "idempotency=" + fmt(idem) + " bound=" + fmt(bound) + " collapse=" + fmt(collapse));
  }

  // ---- 6: coercivity, skew-test bound, continuity ----------------------
  {
    std::mt19937 rng(6);
    const MatrixXd a_dense = MatrixXd(small_spatial.stiffness);
    const MatrixXd b_dense = MatrixXd(small_spatial.convection);
    const MatrixXd sbb = MatrixXd(small_spatial.s_bb);
    const double delta = small_ops.params.delta;
    const double c_i = estimate_inverse_constant(small_space, small_spatial);
    const double c_p = 1.0 / std::numbers::pi;
    const double c1 = (c_i + 2.0) * std::abs(coeffs.b) + 2.0 * c_p * coeffs.c_sup;

    bool coercive = true, skew_bound = true, continuous = true;
    double worst_cont = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const MatrixXd v = random_matrix(small_space.n_interior, small_mu.size(), rng);
      const MatrixXd u = random_matrix(small_space.n_interior, small_mu.size(), rng);
      double energy = 0.0, form = 0.0, plain = 0.0, skew_sq = 0.0;
      double grad_u = 0.0, plain_v = 0.0;
      for (int l = 0; l < small_mu.size(); ++l) {
        const double m = small_mu.weight(l);
        energy += m * v.col(l).dot(small_ops.supg_gram[l] * v.col(l));
        form += m * v.col(l).dot(small_ops.a_tilde[l] * v.col(l));
        plain += m * v.col(l).dot(small_ops.mass * v.col(l));
        skew_sq += m * (v.col(l).dot(small_ops.mass * v.col(l)) +
                        2.0 * delta * v.col(l).dot(b_dense * v.col(l)) +
                        delta * delta * v.col(l).dot(sbb * v.col(l)));
        grad_u += m * u.col(l).dot(a_dense * u.col(l));
        plain_v += m * v.col(l).dot(small_ops.mass * v.col(l));
      }
      coercive = coercive && form >= 0.5 * energy * (1.0 - 1e-10);
      skew_bound = skew_bound && std::sqrt(skew_sq) <= 2.0 * std::sqrt(plain) * (1.0 + 1e-12);
      const double cont = std::abs(small_ops.a_supg(u, v)) /
                          (c1 * std::sqrt(grad_u) * std::sqrt(plain_v));
      worst_cont = std::max(worst_cont, cont);
      continuous = continuous && cont <= 1.0 + 1e-10;
    }
    report(6, coercive && skew_bound && continuous,
           "coercivity, skewed-test norm bound, continuity constant",
           "200 fields; continuity ratio max=" + fmt(worst_cont));
  }

  // ---- 7: orthonormality maintenance ----------------------------------
  report(7, orth_defect_max <= 1e-12 && reorth_change_max <= 1e-12,
         "stochastic modes orthonormal; reorthonormalization leaves the field unchanged",
         "defect max=" + fmt(orth_defect_max) + " field change max=" + fmt(reorth_change_max) +
             " tol=1e-12");

  // ---- 8: closed-form benchmark integrity -----------------------------
  {
    bool ok = true;
    std::string detail = "20x20x5 grid rel tol 1e-06";
    try {
      problem.validate_derivatives(20, 20, 5, 1.0, 1e-6);
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    double boundary = 0.0;
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      const double t = unif(rng), w = unif(rng);
      boundary = std::max({boundary, std::abs(ManufacturedProblem::u(t, 0.0, w)),
                           std::abs(ManufacturedProblem::u(t, 1.0, w))});
    }
    ok = ok && boundary <= 1e-13;
    report(8, ok, "closed-form derivatives and boundary values",
           detail + "; boundary max=" + fmt(boundary));
  }

  // ---- 9: rank study quasi-optimality ----------------------------------
  {
    ExperimentConfig cfg;
    cfg.degree = 1;
    cfg.n_collocation = 15;
    cfg.ranks = {1, 2, 3};
    cfg.level_min = 3;
    cfg.level_max = 6;
    bool ok = true;
    std::string detail;
    try {
      const RankStudyReport rep = rank_study(cfg, problem);
      ok = rep.records.size() == 12 && rep.annotations.empty();
      double worst_ratio = 0.0;
      for (size_t i = 0; i < rep.records.size(); ++i) {
        const auto& r = rep.records[i];
        // Quasi-optimality band: the low-rank error may not exceed ten times
        // the sum of the optimal truncation error at that rank and the dense
        // reference discretization error at that level.
        const ErrorMetrics& ref = rep.reference[i / cfg.ranks.size()];
        const double band = 10.0 * (r.trunc_err + ref.err_combined);
        worst_ratio = std::max(worst_ratio, r.err_combined / band);
        ok = ok && r.err_combined <= band;
        tally.absorb(r.lemma3_max, r.prop1_max, r.c_lbi_max,
                     r.stab_lhs <= r.stab_rhs * (1.0 + 1e-12));
      }
      detail = "levels 3..6, ranks 1..3; worst error/band=" + fmt(worst_ratio) +
               "; full-rank match rel=" + fmt(full_rank_discrepancy);
      ok = ok && full_rank_discrepancy <= 1e-9;
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    report(9, ok, "low-rank error within the quasi-optimality band", detail);
  }

  // ---- 10: inverse-constant diagnostic ---------------------------------
  {
    const LagrangeSpace fine(Mesh1D(0.0, 1.0, 256), 1);
    const double c_i = estimate_inverse_constant(fine, assemble(fine, 1.0));
    const double target = std::sqrt(12.0);
    const bool ok = std::abs(c_i - target) <= 0.01 * target;
    report(10, ok, "piecewise-linear inverse constant approaches sqrt(12)",
           "C_I=" + fmt(c_i) + " target=" + fmt(target) +
               "; basis inverse-inequality scale logged, max over runs=" + fmt(tally.c_lbi_max));
  }

  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
