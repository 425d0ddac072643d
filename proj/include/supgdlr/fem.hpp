#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "supgdlr/errors.hpp"

namespace supgdlr {

using SparseMat = Eigen::SparseMatrix<double>;
using ScalarFn = std::function<double(double)>;

/// Gauss-Legendre rule mapped to the reference element [0, 1].
struct GaussRule {
  Eigen::VectorXd points;
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(points.size()); }

  static GaussRule on_unit(int n) {
    if (n < 1) throw ConfigError("GaussRule: need at least one point");
    Eigen::VectorXd x(n), w(n);
    // Newton iteration on the Legendre polynomial, nodes on [-1, 1].
    for (int i = 0; i < n; ++i) {
      double t = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = t;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (t * p1 - p0) / (t * t - 1.0);
        const double dt = p1 / dp;
        t -= dt;
        if (std::abs(dt) < 1e-15) break;
      }
      x[n - 1 - i] = t;
      w[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    return {(x.array() + 1.0) / 2.0, w / 2.0};
  }
};

/// Lagrange shape function values and reference derivatives at given points.
struct ShapeEval {
  Eigen::MatrixXd value;  // (degree+1) x n_points
  Eigen::MatrixXd d1;
  Eigen::MatrixXd d2;
};

inline ShapeEval eval_shapes(int degree, const Eigen::VectorXd& xi) {
  if (degree != 1 && degree != 2)
    throw ConfigError("eval_shapes: unsupported degree " + std::to_string(degree) +
                      " (supported: 1, 2)");
  const Eigen::Index n = xi.size();
  ShapeEval s{Eigen::MatrixXd(degree + 1, n), Eigen::MatrixXd(degree + 1, n),
              Eigen::MatrixXd::Zero(degree + 1, n)};
  for (Eigen::Index q = 0; q < n; ++q) {
    const double t = xi[q];
    if (degree == 1) {
      s.value(0, q) = 1.0 - t;
      s.value(1, q) = t;
      s.d1(0, q) = -1.0;
      s.d1(1, q) = 1.0;
    } else {
      // Nodes at 0, 1/2, 1.
      s.value(0, q) = (1.0 - t) * (1.0 - 2.0 * t);
      s.value(1, q) = 4.0 * t * (1.0 - t);
      s.value(2, q) = t * (2.0 * t - 1.0);
      s.d1(0, q) = 4.0 * t - 3.0;
      s.d1(1, q) = 4.0 - 8.0 * t;
      s.d1(2, q) = 4.0 * t - 1.0;
      s.d2(0, q) = 4.0;
      s.d2(1, q) = -8.0;
      s.d2(2, q) = 4.0;
    }
  }
  return s;
}

/// Uniform 1D mesh on [a, b].
struct Mesh1D {
  double a = 0.0;
  double b = 1.0;
  int n_elements = 0;
  double h = 0.0;
  Eigen::VectorXd nodes;

  Mesh1D(double a_, double b_, int n) : a(a_), b(b_), n_elements(n) {
    if (n < 1 || b_ <= a_) throw ConfigError("Mesh1D: invalid interval or element count");
    h = (b - a) / n;
    nodes.resize(n + 1);
    for (int i = 0; i <= n; ++i) nodes[i] = a + i * h;
  }
};

/// Continuous Lagrange space of degree k on a uniform mesh, with homogeneous
/// Dirichlet conditions handled by interior-dof indexing.
struct LagrangeSpace {
  Mesh1D mesh;
  int degree;
  int n_dofs;      // total, boundary included
  int n_interior;  // unknowns after Dirichlet elimination
  Eigen::VectorXd dof_coords;

  LagrangeSpace(Mesh1D m, int k) : mesh(std::move(m)), degree(k) {
    if (k != 1 && k != 2)
      throw ConfigError("LagrangeSpace: unsupported degree " + std::to_string(k));
    n_dofs = k * mesh.n_elements + 1;
    n_interior = n_dofs - 2;
    dof_coords.resize(n_dofs);
    for (int g = 0; g < n_dofs; ++g)
      dof_coords[g] = mesh.a + g * mesh.h / k;
  }

  int dofs_per_element() const { return degree + 1; }
  int global_dof(int element, int local) const { return element * degree + local; }

  /// -1 for boundary dofs.
  int interior_index(int global) const {
    return (global >= 1 && global <= n_dofs - 2) ? global - 1 : -1;
  }
};

/// Deterministic assembled matrices, restricted to interior dofs.
/// The reaction blocks depend on the random parameter and live elsewhere.
struct SpatialOperators {
  double b_speed = 0.0;
  SparseMat mass;       // (u, v)
  SparseMat stiffness;  // (u', v')
  SparseMat convection; // (b u', v)
  SparseMat s_bb;       // sum_K (b u', b v')_K
  SparseMat s_mb;       // sum_K (u, b v')_K
  SparseMat s_db;       // sum_K (u'', b v')_K, zero for degree 1

  /// (u, v + delta b v') as a sparse matrix: mass + delta * convection^T.
  SparseMat skew_mass(double delta) const {
    return mass + delta * SparseMat(convection.transpose());
  }
};

/// Assemble all deterministic interior-dof matrices with Gauss quadrature of
/// degree+2 points per element (exact for every polynomial integrand here).
inline SpatialOperators assemble(const LagrangeSpace& space, double b_speed) {
  const int k = space.degree;
  const int ndl = space.dofs_per_element();
  const double h = space.mesh.h;
  const GaussRule quad = GaussRule::on_unit(k + 2);
  const ShapeEval shape = eval_shapes(k, quad.points);

  using T = Eigen::Triplet<double>;
  std::vector<T> tm, ta, tb, tbb, tmb, tdb;
  for (int e = 0; e < space.mesh.n_elements; ++e) {
    for (int il = 0; il < ndl; ++il) {
      const int i = space.interior_index(space.global_dof(e, il));
      if (i < 0) continue;
      for (int jl = 0; jl < ndl; ++jl) {
        const int j = space.interior_index(space.global_dof(e, jl));
        if (j < 0) continue;
        double m = 0, a = 0, b = 0, bb = 0, mb = 0, db = 0;
        for (int q = 0; q < quad.size(); ++q) {
          const double w = quad.weights[q] * h;
          const double vi = shape.value(il, q), vj = shape.value(jl, q);
          const double di = shape.d1(il, q) / h, dj = shape.d1(jl, q) / h;
          const double d2j = shape.d2(jl, q) / (h * h);
          m += w * vj * vi;
          a += w * dj * di;
          b += w * b_speed * dj * vi;
          bb += w * b_speed * b_speed * dj * di;
          mb += w * vj * b_speed * di;
          db += w * d2j * b_speed * di;
        }
        tm.emplace_back(i, j, m);
        ta.emplace_back(i, j, a);
        tb.emplace_back(i, j, b);
        tbb.emplace_back(i, j, bb);
        tmb.emplace_back(i, j, mb);
        tdb.emplace_back(i, j, db);
      }
    }
  }

  const int n = space.n_interior;
  SpatialOperators ops;
  ops.b_speed = b_speed;
  auto build = [n](std::vector<T>& tr) {
    SparseMat s(n, n);
    s.setFromTriplets(tr.begin(), tr.end());
    return s;
  };
  ops.mass = build(tm);
  ops.stiffness = build(ta);
  ops.convection = build(tb);
  ops.s_bb = build(tbb);
  ops.s_mb = build(tmb);
  ops.s_db = build(tdb);
  return ops;
}

/// Largest generalized eigenvalue of (stiffness, mass) by power iteration on
/// M^{-1} A, reported as the mesh-scaled inverse-inequality constant
/// C_I = h * sqrt(lambda_max).
inline double estimate_inverse_constant(const LagrangeSpace& space, const SpatialOperators& ops,
                                        double tol = 1e-13, int max_iterations = 200000) {
  Eigen::SimplicialLLT<SparseMat> mass_chol(ops.mass);
  if (mass_chol.info() != Eigen::Success)
    throw NumericalError("estimate_inverse_constant: mass matrix factorization failed");

  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(space.n_interior, 1.0, 2.0);
  x.normalize();
  double lambda = 0.0;
  bool converged = false;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd y = mass_chol.solve(ops.stiffness * x);
    y.normalize();
    const double lambda_new = y.dot(ops.stiffness * y) / y.dot(ops.mass * y);
    x = y;
    if (it > 0 && std::abs(lambda_new - lambda) <= tol * std::abs(lambda_new)) {
      lambda = lambda_new;
      converged = true;
      break;
    }
    lambda = lambda_new;
  }
  if (!converged)
    throw NumericalError("estimate_inverse_constant: power iteration did not converge");
  return space.mesh.h * std::sqrt(lambda);
}

/// sqrt(v' G v) for an arbitrary SPD Gram matrix.
inline double gram_norm(const SparseMat& g, const Eigen::VectorXd& v) {
  if (g.rows() != v.size()) throw DimensionError("gram_norm: dimension mismatch");
  return std::sqrt(std::max(0.0, v.dot(g * v)));
}
inline double gram_norm(const Eigen::MatrixXd& g, const Eigen::VectorXd& v) {
  if (g.rows() != v.size()) throw DimensionError("gram_norm: dimension mismatch");
  return std::sqrt(std::max(0.0, v.dot(g * v)));
}

inline double l2_norm(const SpatialOperators& ops, const Eigen::VectorXd& v) {
  return gram_norm(ops.mass, v);
}
inline double h1_seminorm(const SpatialOperators& ops, const Eigen::VectorXd& v) {
  return gram_norm(ops.stiffness, v);
}

/// Evaluate the FEM function (or its first derivative) given by interior-dof
/// coefficients at quadrature points against an analytic function and return
/// the L2 norm of the mismatch. Quadrature: degree+4 Gauss points.
inline double evaluate_against_analytic(const LagrangeSpace& space, const Eigen::VectorXd& coeffs,
                                        const ScalarFn& analytic, int derivative_order = 0,
                                        int n_quad = -1) {
  if (coeffs.size() != space.n_interior)
    throw DimensionError("evaluate_against_analytic: coefficient count mismatch");
  if (derivative_order != 0 && derivative_order != 1)
    throw ConfigError("evaluate_against_analytic: derivative order must be 0 or 1");
  if (n_quad < 0) n_quad = space.degree + 4;
  const GaussRule quad = GaussRule::on_unit(n_quad);
  const ShapeEval shape = eval_shapes(space.degree, quad.points);
  const double h = space.mesh.h;

  double acc = 0.0;
  for (int e = 0; e < space.mesh.n_elements; ++e) {
    for (int q = 0; q < quad.size(); ++q) {
      const double x = space.mesh.nodes[e] + h * quad.points[q];
      double uh = 0.0;
      for (int il = 0; il < space.dofs_per_element(); ++il) {
        const int i = space.interior_index(space.global_dof(e, il));
        if (i < 0) continue;
        uh += coeffs[i] * (derivative_order == 0 ? shape.value(il, q) : shape.d1(il, q) / h);
      }
      const double diff = uh - analytic(x);
      acc += quad.weights[q] * h * diff * diff;
    }
  }
  return std::sqrt(acc);
}

/// Point evaluation of the FEM function (derivative order 0 or 1) given by
/// interior-dof coefficients.
inline double evaluate_fem(const LagrangeSpace& space, const Eigen::VectorXd& coeffs, double x,
                           int derivative_order = 0) {
  if (coeffs.size() != space.n_interior)
    throw DimensionError("evaluate_fem: coefficient count mismatch");
  const double h = space.mesh.h;
  int e = static_cast<int>((x - space.mesh.a) / h);
  e = std::max(0, std::min(e, space.mesh.n_elements - 1));
  const double xi = (x - space.mesh.nodes[e]) / h;
  Eigen::VectorXd pt(1);
  pt[0] = xi;
  const ShapeEval shape = eval_shapes(space.degree, pt);
  double out = 0.0;
  for (int il = 0; il < space.dofs_per_element(); ++il) {
    const int i = space.interior_index(space.global_dof(e, il));
    if (i < 0) continue;
    out += coeffs[i] * (derivative_order == 0 ? shape.value(il, 0) : shape.d1(il, 0) / h);
  }
  return out;
}

/// Load vector (f, phi_i) over interior dofs.
inline Eigen::VectorXd load_vector(const LagrangeSpace& space, const ScalarFn& f, int n_quad = -1) {
  if (n_quad < 0) n_quad = space.degree + 4;
  const GaussRule quad = GaussRule::on_unit(n_quad);
  const ShapeEval shape = eval_shapes(space.degree, quad.points);
  const double h = space.mesh.h;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(space.n_interior);
  for (int e = 0; e < space.mesh.n_elements; ++e) {
    for (int q = 0; q < quad.size(); ++q) {
      const double x = space.mesh.nodes[e] + h * quad.points[q];
      const double fw = f(x) * quad.weights[q] * h;
      for (int il = 0; il < space.dofs_per_element(); ++il) {
        const int i = space.interior_index(space.global_dof(e, il));
        if (i >= 0) rhs[i] += fw * shape.value(il, q);
      }
    }
  }
  return rhs;
}

/// L2 projection of an analytic function onto the space (interior dofs).
inline Eigen::VectorXd l2_project(const LagrangeSpace& space, const SpatialOperators& ops,
                                  const ScalarFn& f) {
  Eigen::SimplicialLLT<SparseMat> chol(ops.mass);
  if (chol.info() != Eigen::Success)
    throw NumericalError("l2_project: mass matrix factorization failed");
  return chol.solve(load_vector(space, f));
}

/// Nodal interpolant (interior dofs); assumes f vanishes on the boundary.
inline Eigen::VectorXd interpolate(const LagrangeSpace& space, const ScalarFn& f) {
  Eigen::VectorXd v(space.n_interior);
  for (int g = 1; g < space.n_dofs - 1; ++g) v[g - 1] = f(space.dof_coords[g]);
  return v;
}

}  // namespace supgdlr
