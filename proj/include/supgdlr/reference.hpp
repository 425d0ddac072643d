#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "supgdlr/lowrank.hpp"
#include "supgdlr/stepper.hpp"
#include "supgdlr/supg.hpp"

namespace supgdlr {

using RandomFieldFn = std::function<double(double x, double omega)>;

/// Per-collocation-point L2 projection of an analytic random field onto the
/// FEM space; columns index collocation points.
inline Eigen::MatrixXd project_field(const LagrangeSpace& space, const SpatialOperators& ops,
                                     const RandomFieldFn& field, const DiscreteMeasure& mu) {
  Eigen::MatrixXd c(space.n_interior, mu.size());
  Eigen::SimplicialLLT<SparseMat> chol(ops.mass);
  if (chol.info() != Eigen::Success)
    throw NumericalError("project_field: mass factorization failed");
  for (int l = 0; l < mu.size(); ++l) {
    const double w = mu.point(l);
    c.col(l) = chol.solve(load_vector(space, [&](double x) { return field(x, w); }));
  }
  return c;
}

/// Nodal interpolant variant (assumes homogeneous boundary values).
inline Eigen::MatrixXd interpolate_field(const LagrangeSpace& space, const RandomFieldFn& field,
                                         const DiscreteMeasure& mu) {
  Eigen::MatrixXd c(space.n_interior, mu.size());
  for (int l = 0; l < mu.size(); ++l) {
    const double w = mu.point(l);
    c.col(l) = interpolate(space, [&](double x) { return field(x, w); });
  }
  return c;
}

/// Reference discretization: independent backward-Euler solves with the same
/// stabilized matrices at every collocation point. Returns the trajectory
/// including the initial state.
inline std::vector<Eigen::MatrixXd> full_tensor_solve(const SupgOperators& ops,
                                                      const TimeGrid& grid,
                                                      const Eigen::MatrixXd& u0) {
  const int n = ops.n_interior();
  const int nc = ops.n_collocation();
  if (u0.rows() != n || u0.cols() != nc)
    throw DimensionError("full_tensor_solve: initial tensor shape mismatch");

  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lus;
  std::vector<Eigen::MatrixXd> mats;
  lus.reserve(nc);
  for (int l = 0; l < nc; ++l) {
    mats.push_back(ops.skew_mass / grid.dt + ops.a_tilde[l]);
    lus.emplace_back(mats.back());
  }

  std::vector<Eigen::MatrixXd> trajectory{u0};
  Eigen::MatrixXd state = u0;
  for (int step = 1; step <= grid.n_steps; ++step) {
    const double t = step * grid.dt;
    const std::vector<Eigen::VectorXd> g = ops.forcing(t);
    for (int l = 0; l < nc; ++l) {
      const Eigen::VectorXd rhs = ops.skew_mass * state.col(l) / grid.dt + g[l];
      Eigen::VectorXd x = lus[l].solve(rhs);
      x += lus[l].solve(rhs - mats[l] * x);
      const double scale = rhs.norm() + mats[l].norm() * x.norm();
      if (scale > 0.0 && (mats[l] * x - rhs).norm() > 1e-11 * scale)
        throw NumericalError("full_tensor_solve: linear solve residual too large");
      if (!x.allFinite()) throw NumericalError("full_tensor_solve: divergence");
      state.col(l) = x;
    }
    trajectory.push_back(state);
  }
  return trajectory;
}

/// Ritz projection: match gradients against every test function, per
/// collocation point. `gradient` supplies the analytic spatial derivative.
inline Eigen::MatrixXd elliptic_projection(const LagrangeSpace& space, const SpatialOperators& ops,
                                           const RandomFieldFn& gradient,
                                           const DiscreteMeasure& mu) {
  Eigen::SimplicialLLT<SparseMat> chol(ops.stiffness);
  if (chol.info() != Eigen::Success)
    throw NumericalError("elliptic_projection: stiffness factorization failed");
  const GaussRule quad = GaussRule::on_unit(space.degree + 4);
  const ShapeEval shape = eval_shapes(space.degree, quad.points);
  const double h = space.mesh.h;

  Eigen::MatrixXd out(space.n_interior, mu.size());
  for (int l = 0; l < mu.size(); ++l) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(space.n_interior);
    for (int e = 0; e < space.mesh.n_elements; ++e)
      for (int q = 0; q < quad.size(); ++q) {
        const double x = space.mesh.nodes[e] + h * quad.points[q];
        const double gw = gradient(x, mu.point(l)) * quad.weights[q] * h;
        for (int il = 0; il < space.dofs_per_element(); ++il) {
          const int i = space.interior_index(space.global_dof(e, il));
          if (i >= 0) rhs[i] += gw * shape.d1(il, q) / h;
        }
      }
    out.col(l) = chol.solve(rhs);
  }
  return out;
}

/// Error of the optimal rank-R truncation of a random field in the weighted
/// L2 norm, after projection onto the FEM space.
inline double best_truncation_error(const LagrangeSpace& space, const SpatialOperators& ops,
                                    const RandomFieldFn& field, const DiscreteMeasure& mu,
                                    int rank) {
  const Eigen::MatrixXd c = project_field(space, ops, field, mu);
  if (rank >= std::min(c.rows(), c.cols())) {
    // Full rank reproduces the projection exactly.
    if (rank > std::min(c.rows(), c.cols()))
      throw DimensionError("best_truncation_error: rank exceeds tensor dimensions");
  }
  return weighted_truncated_svd(c, Eigen::MatrixXd(ops.mass), mu, rank).truncation_error;
}

}  // namespace supgdlr
