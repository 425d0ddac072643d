#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "supgdlr/manufactured.hpp"
#include "supgdlr/reference.hpp"
#include "supgdlr/stepper.hpp"

namespace supgdlr {

using SpaceTimeFn = std::function<double(double t, double x, double omega)>;

/// Weighted L2 error of a full-tensor FEM field against a closed form at a
/// fixed time, by per-element Gauss quadrature.
inline double l2_mu_error(const LagrangeSpace& space, const Eigen::MatrixXd& tensor,
                          const DiscreteMeasure& mu, const SpaceTimeFn& exact, double t) {
  const GaussRule quad = GaussRule::on_unit(space.degree + 4);
  const ShapeEval shape = eval_shapes(space.degree, quad.points);
  const double h = space.mesh.h;
  double acc = 0.0;
  for (int e = 0; e < space.mesh.n_elements; ++e)
    for (int q = 0; q < quad.size(); ++q) {
      const double x = space.mesh.nodes[e] + h * quad.points[q];
      for (int l = 0; l < mu.size(); ++l) {
        double uh = 0.0;
        for (int il = 0; il < space.dofs_per_element(); ++il) {
          const int i = space.interior_index(space.global_dof(e, il));
          if (i >= 0) uh += tensor(i, l) * shape.value(il, q);
        }
        const double diff = uh - exact(t, x, mu.point(l));
        acc += mu.weight(l) * quad.weights[q] * h * diff * diff;
      }
    }
  return std::sqrt(acc);
}

/// Energy-norm error (diffusion + streamline + reaction pieces) of a tensor
/// field against a closed form with known spatial derivative.
inline double supg_mu_error(const LagrangeSpace& space, const Eigen::MatrixXd& tensor,
                            const DiscreteMeasure& mu, const ProblemCoefficients& coeffs,
                            double delta, const SpaceTimeFn& exact, const SpaceTimeFn& exact_dx,
                            double t) {
  const GaussRule quad = GaussRule::on_unit(space.degree + 4);
  const ShapeEval shape = eval_shapes(space.degree, quad.points);
  const double h = space.mesh.h;
  const double grad_weight = coeffs.epsilon + delta * coeffs.b * coeffs.b;
  double acc = 0.0;
  for (int e = 0; e < space.mesh.n_elements; ++e)
    for (int q = 0; q < quad.size(); ++q) {
      const double x = space.mesh.nodes[e] + h * quad.points[q];
      for (int l = 0; l < mu.size(); ++l) {
        const double w = mu.point(l);
        double uh = 0.0, duh = 0.0;
        for (int il = 0; il < space.dofs_per_element(); ++il) {
          const int i = space.interior_index(space.global_dof(e, il));
          if (i < 0) continue;
          uh += tensor(i, l) * shape.value(il, q);
          duh += tensor(i, l) * shape.d1(il, q) / h;
        }
        const double ev = uh - exact(t, x, w);
        const double ed = duh - exact_dx(t, x, w);
        acc += mu.weight(l) * quad.weights[q] * h *
               (grad_weight * ed * ed + coeffs.c(x, w) * ev * ev);
      }
    }
  return std::sqrt(acc);
}

struct ErrorMetrics {
  double err_l2_final = 0.0;
  double err_supg_accum = 0.0;
  double err_combined = 0.0;
};

/// Experiment configuration; defaults reproduce the benchmark setting.
struct ExperimentConfig {
  int degree = 1;
  int rank = 6;
  std::vector<int> ranks = {1, 2, 3};
  int level_min = 3;
  int level_max = 6;
  double t_final = 0.5;
  double dt_coeff = 5.0;
  double dt_exp = -1.0;  // <= 0 means the balanced default 2(k+1)/3
  double delta_safety = 1.0;
  int n_collocation = 15;
  std::string ic_mode = "svd";  // or "interp"
  bool strict_stability = false;
  bool inject_exact = false;  // skip the solver, sample the closed form
  bool estimate_nu = true;
  std::string out_path;

  double dt_exponent() const { return dt_exp > 0.0 ? dt_exp : 2.0 * (degree + 1) / 3.0; }

  void validate() const {
    if (degree != 1 && degree != 2) throw ConfigError("config: degree must be 1 or 2");
    if (rank < 1) throw ConfigError("config: rank must be positive");
    if (level_min < 1 || level_max < level_min) throw ConfigError("config: bad level range");
    if (t_final <= 0.0) throw ConfigError("config: tfinal must be positive");
    if (dt_coeff <= 0.0) throw ConfigError("config: dt-coeff must be positive");
    if (delta_safety <= 0.0 || delta_safety > 1.0)
      throw ConfigError("config: delta-safety must lie in (0, 1]");
    if (n_collocation < 1) throw ConfigError("config: nc must be positive");
    if (ic_mode != "svd" && ic_mode != "interp")
      throw ConfigError("config: ic must be 'svd' or 'interp'");
    if (rank > n_collocation) throw ConfigError("config: rank exceeds collocation count");
  }
};

/// One row of the study report / CSV.
struct LevelRecord {
  double h = 0, dt = 0, delta = 0;
  int rank = 0;
  double err_l2_final = 0, err_supg_accum = 0, err_combined = 0;
  double trunc_err = 0;
  double nu_hat_max = 0, c_lbi_max = 0;
  double stab_lhs = 0, stab_rhs = 0;
  double lemma3_max = 0, prop1_max = 0;
  double wall_time_s = 0;
};

inline constexpr const char* kCsvHeader =
    "h,dt,delta,rank,err_l2_final,err_supg_accum,err_combined,trunc_err,nu_hat_max,"
    "c_lbi_max,stab_lhs,stab_rhs,lemma3_max,prop1_max,wall_time_s";

inline void write_csv(std::ostream& os, const std::vector<LevelRecord>& records) {
  auto put = [&os](double v, bool last = false) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf << (last ? "\n" : ",");
  };
  os << kCsvHeader << "\n";
  for (const auto& r : records) {
    put(r.h);
    put(r.dt);
    put(r.delta);
    os << r.rank << ",";
    put(r.err_l2_final);
    put(r.err_supg_accum);
    put(r.err_combined);
    put(r.trunc_err);
    put(r.nu_hat_max);
    put(r.c_lbi_max);
    put(r.stab_lhs);
    put(r.stab_rhs);
    put(r.lemma3_max);
    put(r.prop1_max);
    put(r.wall_time_s, true);
  }
}

inline void write_csv(const std::string& path, const std::vector<LevelRecord>& records) {
  std::ofstream os(path);
  if (!os) throw ConfigError("write_csv: cannot open " + path);
  write_csv(os, records);
}

inline std::vector<LevelRecord> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw ConfigError("read_csv: unexpected header");
  std::vector<LevelRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 15) throw ConfigError("read_csv: malformed row");
    LevelRecord r;
    int c = 0;
    auto next = [&] { return std::stod(cells[c++]); };
    r.h = next();
    r.dt = next();
    r.delta = next();
    r.rank = std::stoi(cells[c++]);
    r.err_l2_final = next();
    r.err_supg_accum = next();
    r.err_combined = next();
    r.trunc_err = next();
    r.nu_hat_max = next();
    r.c_lbi_max = next();
    r.stab_lhs = next();
    r.stab_rhs = next();
    r.lemma3_max = next();
    r.prop1_max = next();
    r.wall_time_s = next();
    out.push_back(r);
  }
  return out;
}

inline std::vector<LevelRecord> read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("read_csv: cannot open " + path);
  return read_csv(is);
}

struct SlopeFit {
  double slope = 0.0;
  int first_index = 0;  // index of the coarsest level that entered the fit
  bool meaningful = true;
};

/// Least-squares slope of log(err) vs log(h). The coarsest level is dropped
/// when its error is within a factor 2 of the next one (pre-asymptotic guard).
inline SlopeFit fit_slope(const std::vector<double>& h, const std::vector<double>& err) {
  if (h.size() != err.size() || h.size() < 2) throw DimensionError("fit_slope: need >= 2 levels");
  SlopeFit fit;
  double err_max = 0.0;
  for (double e : err) err_max = std::max(err_max, e);
  if (err_max < 1e-10) {
    fit.meaningful = false;  // errors at quadrature noise, no rate to fit
    return fit;
  }
  if (h.size() > 2 && err[0] < 2.0 * err[1]) fit.first_index = 1;

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = fit.first_index; i < h.size(); ++i) {
    const double x = std::log(h[i]);
    const double y = std::log(std::max(err[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return fit;
}

/// Everything assembled for one (level, rank) run of the benchmark problem.
/// The space lives on the heap so that the pointer inside the operators stays
/// valid when the setup moves.
struct ProblemSetup {
  std::unique_ptr<LagrangeSpace> space;
  SpatialOperators spatial;
  DiscreteMeasure measure;
  double c_inverse = 0.0;
  StabilizationParams params;
  SupgOperators ops;
  TimeGrid grid;
};

inline ProblemSetup build_setup(const ExperimentConfig& cfg, int level,
                                const ManufacturedProblem& problem) {
  const int n_elements = 1 << level;
  auto space = std::make_unique<LagrangeSpace>(Mesh1D(0.0, 1.0, n_elements), cfg.degree);
  SpatialOperators spatial = assemble(*space, problem.b);
  const double c_inv = estimate_inverse_constant(*space, spatial);
  const double h = space->mesh.h;
  const double dt_target = cfg.dt_coeff * std::pow(h, cfg.dt_exponent());
  const int n_steps = std::max(1, static_cast<int>(std::ceil(cfg.t_final / dt_target)));
  TimeGrid grid(cfg.t_final, n_steps);

  const ProblemCoefficients coeffs = problem.coefficients();
  DiscreteMeasure mu = DiscreteMeasure::uniform(cfg.n_collocation);
  validate_coefa(coeffs, *space, mu);
  StabilizationParams params = select_delta(h, grid.dt, coeffs, c_inv, cfg.delta_safety);
  SupgOperators ops = assemble_supg(*space, spatial, coeffs, params, mu);
  return {std::move(space), std::move(spatial), std::move(mu), c_inv, params, std::move(ops),
          grid};
}

inline LowRankField initial_condition(const ProblemSetup& s, const ExperimentConfig& cfg,
                                      int rank, const ManufacturedProblem& problem) {
  auto u0 = [&problem](double x, double w) { return ManufacturedProblem::u(0.0, x, w); };
  const Eigen::MatrixXd c = cfg.ic_mode == "svd"
                                ? project_field(*s.space, s.spatial, u0, s.measure)
                                : interpolate_field(*s.space, u0, s.measure);
  TruncatedSvdResult svd = weighted_truncated_svd(c, Eigen::MatrixXd(s.spatial.mass), s.measure,
                                                  rank);
  return {std::move(svd.u), std::move(svd.y)};
}

/// Run one configuration and fill the full record. The energy-norm error is
/// accumulated over the trajectory as a weighted sum over the time steps.
inline LevelRecord run_single(const ExperimentConfig& cfg, int level, int rank,
                              const ManufacturedProblem& problem) {
  const auto t0 = std::chrono::steady_clock::now();
  ProblemSetup s = build_setup(cfg, level, problem);
  const SpaceTimeFn exact = [](double t, double x, double w) {
    return ManufacturedProblem::u(t, x, w);
  };
  const SpaceTimeFn exact_dx = [](double t, double x, double w) {
    return ManufacturedProblem::ux(t, x, w);
  };
  const ProblemCoefficients coeffs = problem.coefficients();

  LevelRecord rec;
  rec.h = (*s.space).mesh.h;
  rec.dt = s.grid.dt;
  rec.delta = s.params.delta;
  rec.rank = rank;

  double supg_sq = 0.0;
  double final_l2 = 0.0;
  if (cfg.inject_exact) {
    // Solver bypass: project the closed form and compare the snapshot against
    // a point evaluator of itself. Exercises the metric quadrature path; all
    // errors sit at floating-point noise by construction.
    for (int n = 0; n <= s.grid.n_steps; ++n) {
      const double t = n * s.grid.dt;
      const Eigen::MatrixXd snap = project_field(
          *s.space, s.spatial, [&](double x, double w) { return exact(t, x, w); }, s.measure);
      auto col = [&](double w) {
        for (int l = 0; l < s.measure.size(); ++l)
          if (s.measure.point(l) == w) return l;
        return 0;
      };
      const SpaceTimeFn self = [&](double, double x, double w) {
        return evaluate_fem(*s.space, snap.col(col(w)), x, 0);
      };
      const SpaceTimeFn self_dx = [&](double, double x, double w) {
        return evaluate_fem(*s.space, snap.col(col(w)), x, 1);
      };
      if (n > 0) {
        const double e =
            supg_mu_error(*s.space, snap, s.measure, coeffs, s.params.delta, self, self_dx, t);
        supg_sq += s.grid.dt * e * e;
      }
      if (n == s.grid.n_steps) final_l2 = l2_mu_error(*s.space, snap, s.measure, self, t);
    }
    rec.stab_lhs = 0.0;
    rec.stab_rhs = 0.0;
  } else {
    LowRankField u0 = initial_condition(s, cfg, rank, problem);
    Stepper stepper(s.ops, cfg.estimate_nu);
    RunResult res = stepper.run(
        u0, s.grid, cfg.strict_stability,
        [&](int n, double t, const LowRankField& state) {
          if (n == 0) return;
          const Eigen::MatrixXd tensor = state.expand();
          const double e = supg_mu_error(*s.space, tensor, s.measure, coeffs, s.params.delta,
                                         exact, exact_dx, t);
          supg_sq += s.grid.dt * e * e;
          if (n == s.grid.n_steps)
            final_l2 = l2_mu_error(*s.space, tensor, s.measure, exact, t);
        });
    rec.nu_hat_max = res.nu_hat_max;
    rec.c_lbi_max = res.c_lbi_max;
    rec.stab_lhs = res.stability_lhs;
    rec.stab_rhs = res.stability_rhs;
    rec.lemma3_max = res.lemma3_max;
    rec.prop1_max = res.prop1_max;
    if (!res.stability_ok && cfg.strict_stability)
      throw NumericalError("run_single: stability violated");
  }
  rec.err_l2_final = final_l2;
  rec.err_supg_accum = std::sqrt(supg_sq);
  rec.err_combined = rec.err_l2_final + rec.err_supg_accum;
  rec.trunc_err = best_truncation_error(
      *s.space, s.spatial,
      [&](double x, double w) { return exact(cfg.t_final, x, w); }, s.measure,
      std::min(rank, std::min<int>((*s.space).n_interior, s.measure.size())));
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

/// Reference errors from the dense per-point implicit solve at a level.
inline ErrorMetrics full_tensor_errors(const ExperimentConfig& cfg, int level,
                                       const ManufacturedProblem& problem) {
  ProblemSetup s = build_setup(cfg, level, problem);
  const ProblemCoefficients coeffs = problem.coefficients();
  const SpaceTimeFn exact = [](double t, double x, double w) {
    return ManufacturedProblem::u(t, x, w);
  };
  const SpaceTimeFn exact_dx = [](double t, double x, double w) {
    return ManufacturedProblem::ux(t, x, w);
  };
  const Eigen::MatrixXd u0 = project_field(
      *s.space, s.spatial, [](double x, double w) { return ManufacturedProblem::u(0.0, x, w); },
      s.measure);
  const std::vector<Eigen::MatrixXd> traj = full_tensor_solve(s.ops, s.grid, u0);
  ErrorMetrics m;
  double supg_sq = 0.0;
  for (int n = 1; n <= s.grid.n_steps; ++n) {
    const double t = n * s.grid.dt;
    const double e =
        supg_mu_error(*s.space, traj[n], s.measure, coeffs, s.params.delta, exact, exact_dx, t);
    supg_sq += s.grid.dt * e * e;
  }
  m.err_l2_final = l2_mu_error(*s.space, traj.back(), s.measure, exact, cfg.t_final);
  m.err_supg_accum = std::sqrt(supg_sq);
  m.err_combined = m.err_l2_final + m.err_supg_accum;
  return m;
}

struct StudyReport {
  std::vector<LevelRecord> records;
  SlopeFit fit;
  std::vector<std::string> annotations;
};

/// Mesh-refinement sweep with slope fitting on the combined error.
inline StudyReport convergence_study(const ExperimentConfig& cfg,
                                     const ManufacturedProblem& problem = {}) {
  cfg.validate();
  StudyReport report;
  for (int level = cfg.level_min; level <= cfg.level_max; ++level) {
    try {
      report.records.push_back(run_single(cfg, level, cfg.rank, problem));
    } catch (const std::exception& e) {
      report.annotations.push_back("level " + std::to_string(level) + " failed: " + e.what());
    }
  }
  if (report.records.size() >= 2) {
    std::vector<double> hs, errs;
    for (const auto& r : report.records) {
      hs.push_back(r.h);
      errs.push_back(r.err_combined);
    }
    report.fit = fit_slope(hs, errs);
    std::ostringstream note;
    note << "fit used levels " << cfg.level_min + report.fit.first_index << ".." << cfg.level_max;
    report.annotations.push_back(note.str());
  } else {
    report.fit.meaningful = false;
    report.annotations.push_back("too few successful levels for a slope fit");
  }
  if (!cfg.out_path.empty()) write_csv(cfg.out_path, report.records);
  return report;
}

struct RankStudyReport {
  std::vector<LevelRecord> records;          // one row per (level, rank)
  std::vector<ErrorMetrics> reference;       // full-tensor errors per level
  std::vector<std::string> annotations;
};

/// Same (h, dt) across a list of ranks, with the optimal-truncation error and
/// the dense reference error reported alongside for quasi-optimality plots.
inline RankStudyReport rank_study(const ExperimentConfig& cfg,
                                  const ManufacturedProblem& problem = {}) {
  cfg.validate();
  for (int r : cfg.ranks)
    if (r < 1 || r > cfg.n_collocation) throw ConfigError("rank_study: rank out of range");
  RankStudyReport report;
  for (int level = cfg.level_min; level <= cfg.level_max; ++level) {
    report.reference.push_back(full_tensor_errors(cfg, level, problem));
    for (int r : cfg.ranks) {
      try {
        report.records.push_back(run_single(cfg, level, r, problem));
      } catch (const std::exception& e) {
        report.annotations.push_back("level " + std::to_string(level) + " rank " +
                                     std::to_string(r) + " failed: " + e.what());
      }
    }
  }
  if (!cfg.out_path.empty()) write_csv(cfg.out_path, report.records);
  return report;
}

}  // namespace supgdlr
