#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "supgdlr/fem.hpp"

using namespace supgdlr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

VectorXd random_vector(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("Gauss rule on the unit interval") {
  for (int n = 1; n <= 8; ++n) {
    const GaussRule quad = GaussRule::on_unit(n);
    REQUIRE(quad.size() == n);
    CHECK(quad.weights.sum() == Catch::Approx(1.0).margin(1e-14));
    // Exact for polynomials up to degree 2n - 1: integral of x^p is 1/(p+1).
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double integral = 0.0;
      for (int q = 0; q < n; ++q) integral += quad.weights[q] * std::pow(quad.points[q], p);
      CHECK(integral == Catch::Approx(1.0 / (p + 1)).margin(1e-14));
    }
  }
  REQUIRE_THROWS_AS(GaussRule::on_unit(0), ConfigError);
}

TEST_CASE("shape functions") {
  const GaussRule quad = GaussRule::on_unit(5);
  for (int k : {1, 2}) {
    const ShapeEval shape = eval_shapes(k, quad.points);
    for (int q = 0; q < quad.size(); ++q) {
      CHECK(shape.value.col(q).sum() == Catch::Approx(1.0).margin(1e-14));  // partition of unity
      CHECK(shape.d1.col(q).sum() == Catch::Approx(0.0).margin(1e-13));
    }
    // Kronecker property at the nodes.
    VectorXd nodes = k == 1 ? (VectorXd(2) << 0.0, 1.0).finished()
                            : (VectorXd(3) << 0.0, 0.5, 1.0).finished();
    const ShapeEval at_nodes = eval_shapes(k, nodes);
    for (int i = 0; i <= k; ++i)
      for (int j = 0; j <= k; ++j)
        CHECK(at_nodes.value(i, j) == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-14));
  }
  REQUIRE_THROWS_AS(eval_shapes(3, quad.points), ConfigError);
}

TEST_CASE("mesh and space bookkeeping") {
  const Mesh1D mesh(0.0, 1.0, 8);
  CHECK(mesh.h == Catch::Approx(0.125).margin(1e-16));
  CHECK(mesh.nodes.size() == 9);
  REQUIRE_THROWS_AS(Mesh1D(0.0, 1.0, 0), ConfigError);
  REQUIRE_THROWS_AS(Mesh1D(1.0, 0.0, 4), ConfigError);

  for (int k : {1, 2}) {
    const LagrangeSpace space(mesh, k);
    CHECK(space.n_dofs == k * 8 + 1);
    CHECK(space.n_interior == k * 8 - 1);
    CHECK(space.interior_index(0) == -1);
    CHECK(space.interior_index(space.n_dofs - 1) == -1);
    CHECK(space.interior_index(1) == 0);
    for (int g = 0; g < space.n_dofs; ++g)
      CHECK(space.dof_coords[g] == Catch::Approx(g * mesh.h / k).margin(1e-15));
  }
  REQUIRE_THROWS_AS(LagrangeSpace(mesh, 3), ConfigError);
}

TEST_CASE("degree-1 assembly matches hat-function closed forms") {
  const LagrangeSpace space(Mesh1D(0.0, 1.0, 6), 1);
  const SpatialOperators ops = assemble(space, 2.5);
  const double h = space.mesh.h;
  const MatrixXd mass(ops.mass), stiff(ops.stiffness), conv(ops.convection);

  // Element mass (h/6)[[2,1],[1,2]] and stiffness (1/h)[[1,-1],[-1,1]]
  // accumulate into tridiagonal global matrices on interior dofs.
  for (int i = 0; i < space.n_interior; ++i) {
    CHECK(mass(i, i) == Catch::Approx(4.0 * h / 6.0).margin(1e-15));
    CHECK(stiff(i, i) == Catch::Approx(2.0 / h).margin(1e-12));
    if (i + 1 < space.n_interior) {
      CHECK(mass(i, i + 1) == Catch::Approx(h / 6.0).margin(1e-15));
      CHECK(stiff(i, i + 1) == Catch::Approx(-1.0 / h).margin(1e-12));
    }
  }

  SECTION("convection is skew-symmetric on interior dofs") {
    CHECK((conv + conv.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * conv.cwiseAbs().maxCoeff());
  }
  SECTION("streamline block is b^2 times the stiffness") {
    CHECK((MatrixXd(ops.s_bb) - 2.5 * 2.5 * stiff).cwiseAbs().maxCoeff() <= 1e-12 / h);
  }
  SECTION("second-derivative block vanishes for affine elements") {
    CHECK(MatrixXd(ops.s_db).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("skew-mass helper") {
    const double delta = 0.03;
    const MatrixXd mh(ops.skew_mass(delta));
    CHECK((mh - (mass + delta * conv.transpose())).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("degree-2 assembly matches an over-integrated quadrature oracle") {
  const double b = 1.7;
  const LagrangeSpace space(Mesh1D(0.0, 1.0, 3), 2);
  const SpatialOperators ops = assemble(space, b);

  const GaussRule quad = GaussRule::on_unit(12);
  const ShapeEval shape = eval_shapes(2, quad.points);
  const double h = space.mesh.h;
  const int n = space.n_interior;
  MatrixXd mass = MatrixXd::Zero(n, n), stiff = mass, conv = mass, sbb = mass, smb = mass,
           sdb = mass;
  for (int e = 0; e < space.mesh.n_elements; ++e)
    for (int q = 0; q < quad.size(); ++q) {
      const double w = quad.weights[q] * h;
      for (int il = 0; il < 3; ++il) {
        const int i = space.interior_index(space.global_dof(e, il));
        if (i < 0) continue;
        const double vi = shape.value(il, q), di = shape.d1(il, q) / h;
        for (int jl = 0; jl < 3; ++jl) {
          const int j = space.interior_index(space.global_dof(e, jl));
          if (j < 0) continue;
          const double vj = shape.value(jl, q), dj = shape.d1(jl, q) / h;
          const double d2j = shape.d2(jl, q) / (h * h);
          mass(i, j) += w * vj * vi;
          stiff(i, j) += w * dj * di;
          conv(i, j) += w * b * dj * vi;
          sbb(i, j) += w * b * b * dj * di;
          smb(i, j) += w * vj * b * di;
          sdb(i, j) += w * d2j * b * di;
        }
      }
    }
  CHECK((MatrixXd(ops.mass) - mass).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((MatrixXd(ops.stiffness) - stiff).cwiseAbs().maxCoeff() <= 1e-11);
  CHECK((MatrixXd(ops.convection) - conv).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((MatrixXd(ops.s_bb) - sbb).cwiseAbs().maxCoeff() <= 1e-11);
  CHECK((MatrixXd(ops.s_mb) - smb).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((MatrixXd(ops.s_db) - sdb).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("inverse-inequality constant") {
  SECTION("degree 1 approaches sqrt(12) under refinement") {
    const LagrangeSpace space(Mesh1D(0.0, 1.0, 256), 1);
    const double ci = estimate_inverse_constant(space, assemble(space, 1.0));
    CHECK(ci == Catch::Approx(std::sqrt(12.0)).epsilon(0.01));
  }
  SECTION("h-independence") {
    const LagrangeSpace coarse(Mesh1D(0.0, 1.0, 64), 1);
    const LagrangeSpace fine(Mesh1D(0.0, 1.0, 128), 1);
    const double c1 = estimate_inverse_constant(coarse, assemble(coarse, 1.0));
    const double c2 = estimate_inverse_constant(fine, assemble(fine, 1.0));
    CHECK(std::abs(c2 - c1) / c1 < 0.01);
  }
  SECTION("degree 2 constant exceeds degree 1 on the same mesh") {
    const Mesh1D mesh(0.0, 1.0, 32);
    const LagrangeSpace p1(mesh, 1), p2(mesh, 2);
    const double c1 = estimate_inverse_constant(p1, assemble(p1, 1.0));
    const double c2 = estimate_inverse_constant(p2, assemble(p2, 1.0));
    CHECK(c2 > c1);
    // Dense generalized eigensolve oracle for the degree-2 value.
    const SpatialOperators ops = assemble(p2, 1.0);
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(MatrixXd(ops.stiffness),
                                                          MatrixXd(ops.mass));
    CHECK(c2 == Catch::Approx(mesh.h * std::sqrt(es.eigenvalues().maxCoeff())).epsilon(1e-8));
  }
}

TEST_CASE("norms and point evaluation") {
  const LagrangeSpace space(Mesh1D(0.0, 1.0, 64), 1);
  const SpatialOperators ops = assemble(space, 1.0);

  SECTION("zero vector") {
    CHECK(l2_norm(ops, VectorXd::Zero(space.n_interior)) == 0.0);
  }
  SECTION("loop oracle for the Gram norm") {
    const VectorXd v = random_vector(space.n_interior, 51);
    const MatrixXd m(ops.mass);
    double acc = 0.0;
    for (int i = 0; i < v.size(); ++i)
      for (int j = 0; j < v.size(); ++j) acc += v[i] * m(i, j) * v[j];
    CHECK(l2_norm(ops, v) == Catch::Approx(std::sqrt(acc)).epsilon(1e-12));
  }
  SECTION("interpolant of sin(2 pi x) has L2 norm sqrt(1/2) up to O(h^2)") {
    const VectorXd v = interpolate(space, [](double x) { return std::sin(2.0 * kPi * x); });
    CHECK(l2_norm(ops, v) == Catch::Approx(std::sqrt(0.5)).margin(5.0 * space.mesh.h * space.mesh.h));
  }
  SECTION("dimension mismatch") {
    REQUIRE_THROWS_AS(l2_norm(ops, VectorXd::Zero(3)), DimensionError);
  }
  SECTION("evaluate_fem agrees with the interpolated function at nodes and midpoints") {
    auto f = [](double x) { return std::sin(2.0 * kPi * x); };
    const VectorXd v = interpolate(space, f);
    for (int g = 1; g < space.n_dofs - 1; ++g)
      CHECK(evaluate_fem(space, v, space.dof_coords[g]) ==
            Catch::Approx(f(space.dof_coords[g])).margin(1e-14));
    CHECK(evaluate_fem(space, v, 0.0) == Catch::Approx(0.0).margin(1e-14));
  }
}

TEST_CASE("evaluate_against_analytic") {
  SECTION("degree-k polynomial is represented exactly") {
    const LagrangeSpace space(Mesh1D(0.0, 1.0, 4), 2);
    auto poly = [](double x) { return x * (1.0 - x); };
    const VectorXd v = interpolate(space, poly);
    CHECK(evaluate_against_analytic(space, v, poly, 0) <= 1e-12);
    CHECK(evaluate_against_analytic(space, v, [](double x) { return 1.0 - 2.0 * x; }, 1) <= 1e-12);
  }
  SECTION("FEM function vs its own evaluator") {
    const LagrangeSpace space(Mesh1D(0.0, 1.0, 8), 1);
    const VectorXd v = random_vector(space.n_interior, 52);
    CHECK(evaluate_against_analytic(space, v, [&](double x) { return evaluate_fem(space, v, x); },
                                    0) <= 1e-13);
  }
  SECTION("against zero returns the plain L2 norm") {
    const LagrangeSpace space(Mesh1D(0.0, 1.0, 16), 1);
    const SpatialOperators ops = assemble(space, 1.0);
    const VectorXd v = random_vector(space.n_interior, 53);
    CHECK(evaluate_against_analytic(space, v, [](double) { return 0.0; }, 0) ==
          Catch::Approx(l2_norm(ops, v)).epsilon(1e-12));
  }
  SECTION("hat interpolation error quarters when h halves") {
    auto f = [](double x) { return std::sin(2.0 * kPi * x); };
    std::vector<double> errs;
    for (int n : {16, 32, 64}) {
      const LagrangeSpace space(Mesh1D(0.0, 1.0, n), 1);
      errs.push_back(evaluate_against_analytic(space, interpolate(space, f), f, 0));
    }
    CHECK(errs[0] / errs[1] == Catch::Approx(4.0).epsilon(0.05));
    CHECK(errs[1] / errs[2] == Catch::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("projection and interpolation plumbing") {
  const LagrangeSpace space(Mesh1D(0.0, 1.0, 32), 1);
  const SpatialOperators ops = assemble(space, 1.0);
  auto f = [](double x) { return std::sin(kPi * x); };

  SECTION("L2 projection satisfies the normal equations") {
    const VectorXd p = l2_project(space, ops, f);
    const VectorXd rhs = load_vector(space, f);
    CHECK((ops.mass * p - rhs).cwiseAbs().maxCoeff() <= 1e-13);
  }
  SECTION("projection error is no larger than interpolation error") {
    const double proj = evaluate_against_analytic(space, l2_project(space, ops, f), f, 0);
    const double interp = evaluate_against_analytic(space, interpolate(space, f), f, 0);
    CHECK(proj <= interp * (1.0 + 1e-10));
  }
}

TEST_CASE("inverse and Poincare inequalities on random fields") {
  const LagrangeSpace space(Mesh1D(0.0, 1.0, 32), 1);
  const SpatialOperators ops = assemble(space, 1.0);
  const double ci = estimate_inverse_constant(space, ops);
  std::mt19937 rng(54);
  std::normal_distribution<double> dist;
  for (int s = 0; s < 100; ++s) {
    VectorXd v(space.n_interior);
    for (int i = 0; i < v.size(); ++i) v[i] = dist(rng);
    const double l2 = l2_norm(ops, v);
    const double h1 = h1_seminorm(ops, v);
    CHECK(h1 <= ci / space.mesh.h * l2 * (1.0 + 1e-10));
    CHECK(l2 <= (1.0 / kPi) * h1 * 1.05);
  }
}
