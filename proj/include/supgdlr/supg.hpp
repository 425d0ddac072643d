#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "supgdlr/fem.hpp"
#include "supgdlr/measure.hpp"

namespace supgdlr {

/// Problem data for the random advection-diffusion-reaction equation.
/// The advection speed is a spatial constant, so the divergence-free
/// requirement is automatic.
struct ProblemCoefficients {
  double epsilon = 0.0;  // diffusion
  double b = 0.0;        // constant advection speed
  std::function<double(double x, double omega)> c;     // reaction
  double c0 = 0.0;                                     // lower bound on c
  double c_sup = 0.0;                                  // ess-sup of c
  std::function<double(double t, double x, double omega)> f;  // forcing
  std::function<double(double x, double omega)> u0;           // initial datum
};

/// Stabilization parameter together with the individual admissibility bounds,
/// kept for reporting.
struct StabilizationParams {
  double delta = 0.0;
  double dt = 0.0;
  double bound_reaction = 0.0;   // 1 / (2 c_sup)
  double bound_diffusion = 0.0;  // h^2 / (2 eps C_I^2)
  double bound_advection = 0.0;  // h / (|b| C_I)
  double bound_timestep = 0.0;   // dt / 4
};

/// Pick the uniform stabilization parameter as the minimum of the coercivity
/// bounds and the dt/4 stability bound, scaled by a safety factor in (0, 1].
inline StabilizationParams select_delta(double h, double dt, const ProblemCoefficients& coeffs,
                                        double c_inverse, double safety = 1.0) {
  if (safety <= 0.0 || safety > 1.0)
    throw ConfigError("select_delta: safety factor must lie in (0, 1]");
  if (!(std::abs(coeffs.b) * h > 2.0 * coeffs.epsilon)) {
    std::ostringstream msg;
    msg << "select_delta: advection-dominated check fails: |b| h = " << std::abs(coeffs.b) * h
        << " <= 2 eps = " << 2.0 * coeffs.epsilon;
    throw ConfigError(msg.str());
  }
  StabilizationParams p;
  p.dt = dt;
  p.bound_reaction = 1.0 / (2.0 * coeffs.c_sup);
  p.bound_diffusion = h * h / (2.0 * coeffs.epsilon * c_inverse * c_inverse);
  p.bound_advection = h / (std::abs(coeffs.b) * c_inverse);
  p.bound_timestep = dt / 4.0;
  p.delta = safety * std::min({p.bound_reaction, p.bound_diffusion, p.bound_advection,
                               p.bound_timestep});
  return p;
}

/// Per-collocation-point stabilized operator matrices
///   A~_l = eps A + B + C_l + delta (-eps S_db + S_bb + R_l)
/// together with the skewed mass pairing and the energy-norm Gram pieces.
/// Convention: v' A~_l u evaluates the stabilized bilinear form with trial u
/// and test v at the l-th collocation point.
struct SupgOperators {
  const LagrangeSpace* space = nullptr;
  SpatialOperators spatial;
  DiscreteMeasure measure;
  ProblemCoefficients coeffs;
  StabilizationParams params;

  std::vector<Eigen::MatrixXd> a_tilde;    // stabilized operator per point
  std::vector<Eigen::MatrixXd> reaction;   // (c u, v) per point
  std::vector<Eigen::MatrixXd> supg_gram;  // eps A + delta S_bb + C_l per point
  Eigen::MatrixXd skew_mass;               // (u, v + delta b v')
  Eigen::MatrixXd skew_mass_adj;           // (u, v - delta b v')
  Eigen::MatrixXd mass;                    // dense copy of the interior mass matrix

  int n_collocation() const { return measure.size(); }
  int n_interior() const { return space->n_interior; }

  /// Forcing vectors g_l[i] = (f(t), phi_i + delta b phi_i') per point.
  std::vector<Eigen::VectorXd> forcing(double t) const {
    const auto& sp = *space;
    const int n_quad = sp.degree + 4;
    const GaussRule quad = GaussRule::on_unit(n_quad);
    const ShapeEval shape = eval_shapes(sp.degree, quad.points);
    const double h = sp.mesh.h;
    const double delta_b = params.delta * coeffs.b;

    std::vector<Eigen::VectorXd> g(measure.size(),
                                   Eigen::VectorXd::Zero(sp.n_interior));
    for (int e = 0; e < sp.mesh.n_elements; ++e) {
      for (int q = 0; q < quad.size(); ++q) {
        const double x = sp.mesh.nodes[e] + h * quad.points[q];
        const double w = quad.weights[q] * h;
        for (int l = 0; l < measure.size(); ++l) {
          const double fw = w * coeffs.f(t, x, measure.point(l));
          for (int il = 0; il < sp.dofs_per_element(); ++il) {
            const int i = sp.interior_index(sp.global_dof(e, il));
            if (i < 0) continue;
            g[l][i] += fw * (shape.value(il, q) + delta_b * shape.d1(il, q) / h);
          }
        }
      }
    }
    return g;
  }

  /// L2-measure norm of a full-tensor field (interior dofs x points).
  double l2_mu_norm(const Eigen::MatrixXd& v) const {
    if (v.rows() != n_interior() || v.cols() != n_collocation())
      throw DimensionError("l2_mu_norm: tensor shape mismatch");
    double acc = 0.0;
    for (int l = 0; l < n_collocation(); ++l)
      acc += measure.weight(l) * v.col(l).dot(mass * v.col(l));
    return std::sqrt(std::max(0.0, acc));
  }

  /// Energy norm: sqrt(eps |grad u|^2 + delta sum_K |b grad u|^2 + |c^1/2 u|^2)
  /// with expectations over the collocation measure.
  double supg_norm(const Eigen::MatrixXd& v) const {
    if (v.rows() != n_interior() || v.cols() != n_collocation())
      throw DimensionError("supg_norm: tensor shape mismatch");
    double acc = 0.0;
    for (int l = 0; l < n_collocation(); ++l)
      acc += measure.weight(l) * v.col(l).dot(supg_gram[l] * v.col(l));
    return std::sqrt(std::max(0.0, acc));
  }

  /// Stabilized bilinear form over the measure: a(u, v) for full tensors.
  double a_supg(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) const {
    double acc = 0.0;
    for (int l = 0; l < n_collocation(); ++l)
      acc += measure.weight(l) * v.col(l).dot(a_tilde[l] * u.col(l));
    return acc;
  }

  /// Skewed pairing (u, H v) over the measure for full tensors.
  double h_pairing(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) const {
    double acc = 0.0;
    for (int l = 0; l < n_collocation(); ++l)
      acc += measure.weight(l) * v.col(l).dot(skew_mass * u.col(l));
    return acc;
  }
};

/// Assemble the per-point stabilized matrices. The residual term uses the
/// strong element-wise operator (-eps u'' + b u' + c u). Coercivity of every
/// A~_l against half the energy Gram is spot-checked on random vectors.
inline SupgOperators assemble_supg(const LagrangeSpace& space, const SpatialOperators& spatial,
                                   const ProblemCoefficients& coeffs,
                                   const StabilizationParams& params, const DiscreteMeasure& mu,
                                   int coercivity_samples = 8) {
  SupgOperators ops{&space, spatial, mu, coeffs, params, {}, {}, {}, {}, {}, {}};
  const int n = space.n_interior;
  const int nc = mu.size();
  const double delta = params.delta;
  const double b = coeffs.b;

  // Reaction blocks C_l = (c u, v) and R_l = (c u, b v') by quadrature.
  const GaussRule quad = GaussRule::on_unit(space.degree + 2);
  const ShapeEval shape = eval_shapes(space.degree, quad.points);
  const double h = space.mesh.h;
  std::vector<Eigen::MatrixXd> c_mat(nc, Eigen::MatrixXd::Zero(n, n));
  std::vector<Eigen::MatrixXd> r_mat(nc, Eigen::MatrixXd::Zero(n, n));
  for (int e = 0; e < space.mesh.n_elements; ++e) {
    for (int q = 0; q < quad.size(); ++q) {
      const double x = space.mesh.nodes[e] + h * quad.points[q];
      const double w = quad.weights[q] * h;
      for (int l = 0; l < nc; ++l) {
        const double cw = w * coeffs.c(x, mu.point(l));
        for (int il = 0; il < space.dofs_per_element(); ++il) {
          const int i = space.interior_index(space.global_dof(e, il));
          if (i < 0) continue;
          for (int jl = 0; jl < space.dofs_per_element(); ++jl) {
            const int j = space.interior_index(space.global_dof(e, jl));
            if (j < 0) continue;
            const double vj = shape.value(jl, q);
            c_mat[l](i, j) += cw * vj * shape.value(il, q);
            r_mat[l](i, j) += cw * vj * b * shape.d1(il, q) / h;
          }
        }
      }
    }
  }

  const Eigen::MatrixXd a_dense = Eigen::MatrixXd(spatial.stiffness);
  const Eigen::MatrixXd b_dense = Eigen::MatrixXd(spatial.convection);
  const Eigen::MatrixXd sbb_dense = Eigen::MatrixXd(spatial.s_bb);
  const Eigen::MatrixXd sdb_dense = Eigen::MatrixXd(spatial.s_db);
  ops.mass = Eigen::MatrixXd(spatial.mass);
  ops.skew_mass = ops.mass + delta * b_dense.transpose();
  ops.skew_mass_adj = ops.mass - delta * b_dense.transpose();

  const Eigen::MatrixXd det_part =
      coeffs.epsilon * a_dense + b_dense + delta * (-coeffs.epsilon * sdb_dense + sbb_dense);
  ops.a_tilde.resize(nc);
  ops.reaction.resize(nc);
  ops.supg_gram.resize(nc);
  for (int l = 0; l < nc; ++l) {
    ops.a_tilde[l] = det_part + c_mat[l] + delta * r_mat[l];
    ops.reaction[l] = std::move(c_mat[l]);
    ops.supg_gram[l] = coeffs.epsilon * a_dense + delta * sbb_dense + ops.reaction[l];
  }

  // Guard against assembly bugs: coercivity holds analytically whenever delta
  // is admissible.
  std::mt19937 rng(1234);
  std::normal_distribution<double> dist;
  for (int l = 0; l < nc; ++l) {
    for (int s = 0; s < coercivity_samples; ++s) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v[i] = dist(rng);
      const double energy = v.dot(ops.supg_gram[l] * v);
      const double form = v.dot(ops.a_tilde[l] * v);
      if (form < 0.5 * energy - 1e-10 * energy)
        throw ValidationError("assemble_supg: coercivity check failed at collocation index " +
                              std::to_string(l));
    }
  }
  return ops;
}

/// Report of the coefficient-assumption validation.
struct CoefaReport {
  double c0_margin = 0.0;  // smallest sampled reaction value
  double c_min_observed = 0.0;
  double c_sup_observed = 0.0;
  bool advection_dominated = false;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Sample c on all (quadrature point, collocation point) pairs and check the
/// coefficient assumptions plus advection dominance. Throws on violation.
inline CoefaReport validate_coefa(const ProblemCoefficients& coeffs, const LagrangeSpace& space,
                                  const DiscreteMeasure& mu, bool throw_on_violation = true) {
  CoefaReport rep;
  const GaussRule quad = GaussRule::on_unit(space.degree + 4);
  const double h = space.mesh.h;
  double cmin = std::numeric_limits<double>::infinity();
  double cmax = -std::numeric_limits<double>::infinity();
  for (int e = 0; e < space.mesh.n_elements; ++e) {
    for (int q = 0; q < quad.size(); ++q) {
      const double x = space.mesh.nodes[e] + h * quad.points[q];
      for (int l = 0; l < mu.size(); ++l) {
        const double cv = coeffs.c(x, mu.point(l));
        cmin = std::min(cmin, cv);
        cmax = std::max(cmax, cv);
      }
    }
  }
  rep.c_min_observed = cmin;
  rep.c_sup_observed = cmax;
  rep.c0_margin = cmin;
  rep.advection_dominated = std::abs(coeffs.b) * h > 2.0 * coeffs.epsilon;

  if (!(coeffs.epsilon > 0.0)) rep.violations.push_back("epsilon must be positive");
  if (!(cmin >= coeffs.c0) || !(coeffs.c0 > 0.0))
    rep.violations.push_back("reaction coefficient drops below the declared positive lower bound");
  if (cmax > coeffs.c_sup * (1.0 + 1e-12))
    rep.violations.push_back("reaction coefficient exceeds the declared sup bound");
  if (!rep.advection_dominated)
    rep.violations.push_back("advection-dominance |b| h > 2 eps fails");

  if (throw_on_violation && !rep.ok()) {
    std::string msg = "validate_coefa:";
    for (const auto& v : rep.violations) msg += " [" + v + "]";
    throw ValidationError(msg);
  }
  return rep;
}

}  // namespace supgdlr
