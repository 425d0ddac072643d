#pragma once

#include <Eigen/Dense>
#include <cfloat>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "supgdlr/lowrank.hpp"
#include "supgdlr/supg.hpp"

namespace supgdlr {

struct TimeGrid {
  double t_final = 0.0;
  int n_steps = 0;
  double dt = 0.0;

  TimeGrid(double t_final_, int n_steps_) : t_final(t_final_), n_steps(n_steps_) {
    if (t_final_ <= 0.0 || n_steps_ < 1) throw ConfigError("TimeGrid: invalid horizon or step count");
    dt = t_final / n_steps;
  }
};

struct StepDiagnostics {
  double lemma3_residual = 0.0;  // defect of the factor-velocity identity
  double prop1_residual = 0.0;   // max tangent-basis residual of the variational form
  double udy_norm = 0.0;         // |Utilde (Ytilde - Y)^T|
  double supg_norm_state = 0.0;
  double nu_hat = 0.0;           // unresolved-dynamics estimate (0 unless enabled)
  double c_lbi = 0.0;            // basis inverse constant, norm scale
  double reorth_t_condition = 1.0;
};

struct RunResult {
  LowRankField state;
  std::vector<StepDiagnostics> diagnostics;
  double stability_lhs = 0.0;
  double stability_rhs = 0.0;
  bool stability_ok = true;
  double lemma3_max = 0.0;
  double prop1_max = 0.0;
  double nu_hat_max = 0.0;
  double c_lbi_max = 0.0;
};

namespace detail {

/// Dense solve with iterative refinement; returns the relative residual.
inline double refined_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs,
                            Eigen::VectorXd& x) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  x = lu.solve(rhs);
  for (int it = 0; it < 2; ++it) x += lu.solve(rhs - a * x);
  const double scale = rhs.norm() + a.cwiseAbs().rowwise().sum().maxCoeff() * x.norm();
  return scale > 0.0 ? (a * x - rhs).norm() / scale : 0.0;
}

}  // namespace detail

/// One-step implicit splitting update of the low-rank factors: physical modes
/// first against the frozen stochastic basis, then the stochastic increment in
/// the orthogonal complement, then reorthonormalization.
class Stepper {
 public:
  explicit Stepper(const SupgOperators& ops, bool estimate_nu = false)
      : ops_(ops), estimate_nu_(estimate_nu) {}

  /// Solve the coupled linear system for the updated physical modes.
  Eigen::MatrixXd step_physical(const LowRankField& state,
                                const std::vector<Eigen::VectorXd>& g, double dt) const {
    const int n = ops_.n_interior();
    const int r = state.rank();
    const int nc = ops_.n_collocation();
    const Eigen::MatrixXd& y = state.y.values;
    if (state.y.orthonormality_defect(ops_.measure) > 1e-10)
      throw ValidationError("step_physical: stochastic modes are not orthonormal");

    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n * r, n * r);
    Eigen::VectorXd rhs(n * r);
    for (int j = 0; j < r; ++j) {
      system.block(j * n, j * n, n, n) = ops_.skew_mass / dt;
      Eigen::VectorXd fj = ops_.skew_mass * state.u.col(j) / dt;
      for (int l = 0; l < nc; ++l) fj += ops_.measure.weight(l) * y(l, j) * g[l];
      rhs.segment(j * n, n) = fj;
      for (int k = 0; k < r; ++k) {
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n, n);
        for (int l = 0; l < nc; ++l)
          block += (ops_.measure.weight(l) * y(l, j) * y(l, k)) * ops_.a_tilde[l];
        system.block(j * n, k * n, n, n) += block;
      }
    }

    Eigen::VectorXd sol;
    const double res = detail::refined_solve(system, rhs, sol);
    if (!sol.allFinite()) throw NumericalError("step_physical: solution diverged (NaN/Inf)");
    if (res > 1e-10) throw NumericalError("step_physical: linear solve residual too large");
    return Eigen::Map<Eigen::MatrixXd>(sol.data(), n, r);
  }

  /// Solve for the stochastic increment in the complement of span(Y) and
  /// return the non-orthonormalized updated stochastic modes.
  Eigen::MatrixXd step_stochastic(const Eigen::MatrixXd& u_tilde, const StochasticModes& y,
                                  const std::vector<Eigen::VectorXd>& g, double dt) const {
    const int r = static_cast<int>(u_tilde.cols());
    const int nc = ops_.n_collocation();
    const int p = nc - r;
    if (p == 0) return y.values;  // complement is empty at full rank

    const Eigen::MatrixXd q = orthonormal_complement(y, ops_.measure);
    const Eigen::MatrixXd w_tilde = u_tilde.transpose() * ops_.skew_mass.transpose() * u_tilde;
    if (std::abs(Eigen::FullPivLU<Eigen::MatrixXd>(w_tilde).determinant()) == 0.0)
      throw RankDegeneracy("step_stochastic: factor pairing matrix is singular");

    // Per-point reductions of the stabilized operator onto the current modes.
    std::vector<Eigen::MatrixXd> g_red(nc);
    Eigen::MatrixXd rho(nc, r);  // residual at zero increment
    for (int l = 0; l < nc; ++l) {
      g_red[l] = u_tilde.transpose() * ops_.a_tilde[l] * u_tilde;
      rho.row(l) = (g_red[l] * y.values.row(l).transpose() - u_tilde.transpose() * g[l]).transpose();
    }

    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(p * r, p * r);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p * r);
    for (int a = 0; a < p; ++a)
      for (int j = 0; j < r; ++j) {
        const int row = a * r + j;
        for (int k = 0; k < r; ++k) system(row, a * r + k) += w_tilde(k, j) / dt;
        for (int l = 0; l < nc; ++l) {
          const double wq = ops_.measure.weight(l) * q(l, a);
          for (int b = 0; b < p; ++b)
            for (int k = 0; k < r; ++k) system(row, b * r + k) += wq * q(l, b) * g_red[l](j, k);
          rhs[row] -= wq * rho(l, j);
        }
      }

    Eigen::VectorXd sol;
    const double res = detail::refined_solve(system, rhs, sol);
    if (!sol.allFinite()) throw NumericalError("step_stochastic: solution diverged (NaN/Inf)");
    if (res > 1e-10) throw NumericalError("step_stochastic: linear solve residual too large");

    Eigen::MatrixXd theta(p, r);
    for (int a = 0; a < p; ++a)
      for (int j = 0; j < r; ++j) theta(a, j) = sol[a * r + j];
    return y.values + q * theta;
  }

  /// Full update with diagnostics.
  std::pair<LowRankField, StepDiagnostics> step(const LowRankField& state, double t_next,
                                                double dt) const {
    const std::vector<Eigen::VectorXd> g = ops_.forcing(t_next);
    const Eigen::MatrixXd u_tilde = step_physical(state, g, dt);
    const Eigen::MatrixXd y_tilde = step_stochastic(u_tilde, state.y, g, dt);

    OrthonormalizeResult orth = weighted_orthonormalize(y_tilde, ops_.measure);
    LowRankField next{u_tilde * orth.t.transpose(), std::move(orth.modes)};

    StepDiagnostics diag;
    {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(orth.t);
      diag.reorth_t_condition =
          svd.singularValues()[0] / svd.singularValues()[svd.singularValues().size() - 1];
    }
    fill_identity_diagnostics(state, u_tilde, y_tilde, g, dt, diag);
    diag.supg_norm_state = ops_.supg_norm(next.expand());
    diag.c_lbi = compute_c_lbi(u_tilde, stiffness_dense(), ops_.mass).norm_scale;
    if (estimate_nu_) {
      LowRankField intermediate{u_tilde, state.y};
      TangentProjector oblique(intermediate, ops_.mass, ops_.skew_mass_adj, ops_.measure);
      std::vector<Eigen::VectorXd> residuals(ops_.n_collocation());
      for (int l = 0; l < ops_.n_collocation(); ++l) {
        const Eigen::VectorXd uhat_l = u_tilde * state.y.values.row(l).transpose();
        residuals[l] = ops_.a_tilde[l] * uhat_l - g[l];
      }
      diag.nu_hat = estimate_model_error(oblique, residuals, ops_.mass, ops_.measure);
    }
    return {std::move(next), diag};
  }

  using Observer = std::function<void(int step, double t, const LowRankField&)>;

  /// Iterate over the grid, accumulate the energy-stability ledger
  ///   |u^N|^2 + sum dt |u^n|_SUPG^2  vs  |u^0|^2 + dt (4/c0 + 4 delta) sum |f^j|^2
  /// checked at every prefix, and collect all step diagnostics.
  RunResult run(const LowRankField& u0, const TimeGrid& grid, bool strict_stability = false,
                const Observer& observer = {}) const {
    if (ops_.params.delta > grid.dt / 4.0 + 1e-15)
      throw ConfigError("run: stability requires delta <= dt/4");

    RunResult out{u0, {}, 0, 0, true, 0, 0, 0, 0};
    const double u0_sq = squared_l2(u0.expand());
    double supg_accum = 0.0;
    double forcing_accum = 0.0;
    const double forcing_factor = grid.dt * (4.0 / ops_.coeffs.c0 + 4.0 * ops_.params.delta);

    if (observer) observer(0, 0.0, out.state);
    for (int n = 1; n <= grid.n_steps; ++n) {
      const double t = n * grid.dt;
      auto [next, diag] = step(out.state, t, grid.dt);
      out.state = std::move(next);
      supg_accum += grid.dt * diag.supg_norm_state * diag.supg_norm_state;
      forcing_accum += std::pow(forcing_l2_norm(t), 2);

      out.stability_lhs = squared_l2(out.state.expand()) + supg_accum;
      out.stability_rhs = u0_sq + forcing_factor * forcing_accum;
      if (out.stability_lhs > out.stability_rhs * (1.0 + 1e-12) + 1e-300) {
        out.stability_ok = false;
        if (strict_stability)
          throw NumericalError("run: stability estimate violated at step " + std::to_string(n));
      }

      out.lemma3_max = std::max(out.lemma3_max, diag.lemma3_residual);
      out.prop1_max = std::max(out.prop1_max, diag.prop1_residual);
      out.nu_hat_max = std::max(out.nu_hat_max, diag.nu_hat);
      out.c_lbi_max = std::max(out.c_lbi_max, diag.c_lbi);
      out.diagnostics.push_back(diag);
      if (observer) observer(n, t, out.state);
    }
    return out;
  }

 private:
  Eigen::MatrixXd stiffness_dense() const { return Eigen::MatrixXd(ops_.spatial.stiffness); }

  double squared_l2(const Eigen::MatrixXd& tensor) const {
    const double v = ops_.l2_mu_norm(tensor);
    return v * v;
  }

  /// L2-measure norm of the forcing at time t by quadrature of the closed form.
  double forcing_l2_norm(double t) const {
    const auto& sp = *ops_.space;
    const GaussRule quad = GaussRule::on_unit(sp.degree + 4);
    const double h = sp.mesh.h;
    double acc = 0.0;
    for (int e = 0; e < sp.mesh.n_elements; ++e)
      for (int q = 0; q < quad.size(); ++q) {
        const double x = sp.mesh.nodes[e] + h * quad.points[q];
        for (int l = 0; l < ops_.n_collocation(); ++l) {
          const double fv = ops_.coeffs.f(t, x, ops_.measure.point(l));
          acc += ops_.measure.weight(l) * quad.weights[q] * h * fv * fv;
        }
      }
    return std::sqrt(acc);
  }

  /// Residuals of the factor-velocity identity and of the variational form
  /// over a full tangent basis at the intermediate point.
  void fill_identity_diagnostics(const LowRankField& state, const Eigen::MatrixXd& u_tilde,
                                 const Eigen::MatrixXd& y_tilde,
                                 const std::vector<Eigen::VectorXd>& g, double dt,
                                 StepDiagnostics& diag) const {
    const int nc = ops_.n_collocation();
    const int r = static_cast<int>(u_tilde.cols());
    const Eigen::MatrixXd& y = state.y.values;
    const Eigen::MatrixXd dy = y_tilde - y;
    const Eigen::MatrixXd u_new = u_tilde * y_tilde.transpose();   // post-update field
    const Eigen::MatrixXd u_dy = u_tilde * dy.transpose();

    // Factor-velocity identity: dt^{-1} |U~ dY|^2 = -a(u*, U~ dY) + (f, H U~ dY),
    // a direct consequence of the stochastic-substep equations tested with dY.
    diag.udy_norm = tensor_norm(u_dy, ops_.mass, ops_.measure);
    const double lhs = diag.udy_norm * diag.udy_norm / dt;
    double rhs = -ops_.a_supg(u_new, u_dy);
    for (int l = 0; l < nc; ++l) rhs += ops_.measure.weight(l) * u_dy.col(l).dot(g[l]);
    const double scale =
        std::abs(lhs) + std::abs(rhs) + 1e-12 * (1.0 + squared_l2(u_new) / dt);
    diag.lemma3_residual = scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0;

    // Variational-form residual over the tangent basis at U~ (Y^n)^T.
    // Spatial-type tests v = phi_p Y_j pair against the pre-increment field;
    // stochastic-type tests v = U~_j q_a pair against the post-update field.
    const Eigen::MatrixXd u_hat = u_tilde * y.transpose();
    double worst = 0.0;
    {
      Eigen::MatrixXd resid = Eigen::MatrixXd::Zero(u_tilde.rows(), r);
      Eigen::MatrixXd term_time = ops_.skew_mass * (u_tilde - state.u) / dt;
      double term_scale = term_time.cwiseAbs().maxCoeff();
      resid = term_time;
      Eigen::MatrixXd term_form = Eigen::MatrixXd::Zero(u_tilde.rows(), r);
      Eigen::MatrixXd term_force = Eigen::MatrixXd::Zero(u_tilde.rows(), r);
      for (int l = 0; l < nc; ++l) {
        const Eigen::VectorXd au = ops_.a_tilde[l] * u_hat.col(l);
        for (int j = 0; j < r; ++j) {
          const double w = ops_.measure.weight(l) * y(l, j);
          term_form.col(j) += w * au;
          term_force.col(j) += w * g[l];
        }
      }
      resid += term_form - term_force;
      term_scale = std::max({term_scale, term_form.cwiseAbs().maxCoeff(),
                             term_force.cwiseAbs().maxCoeff(), DBL_MIN});
      worst = resid.cwiseAbs().maxCoeff() / term_scale;
    }
    if (r < nc) {
      const Eigen::MatrixXd q = orthonormal_complement(state.y, ops_.measure);
      const int p = nc - r;
      const Eigen::MatrixXd du_tensor = u_new - state.u * y.transpose();
      Eigen::MatrixXd resid = Eigen::MatrixXd::Zero(p, r);
      double term_scale = DBL_MIN;
      Eigen::MatrixXd t_time = Eigen::MatrixXd::Zero(p, r), t_form = t_time, t_force = t_time;
      for (int l = 0; l < nc; ++l) {
        const Eigen::VectorXd ht = ops_.skew_mass * du_tensor.col(l) / dt;
        const Eigen::VectorXd au = ops_.a_tilde[l] * u_new.col(l);
        for (int a = 0; a < p; ++a) {
          const double w = ops_.measure.weight(l) * q(l, a);
          for (int j = 0; j < r; ++j) {
            t_time(a, j) += w * u_tilde.col(j).dot(ht);
            t_form(a, j) += w * u_tilde.col(j).dot(au);
            t_force(a, j) += w * u_tilde.col(j).dot(g[l]);
          }
        }
      }
      resid = t_time + t_form - t_force;
      term_scale = std::max({t_time.cwiseAbs().maxCoeff(), t_form.cwiseAbs().maxCoeff(),
                             t_force.cwiseAbs().maxCoeff(), DBL_MIN});
      worst = std::max(worst, resid.cwiseAbs().maxCoeff() / term_scale);
    }
    diag.prop1_residual = worst;
  }

  const SupgOperators& ops_;
  bool estimate_nu_;
};

}  // namespace supgdlr
