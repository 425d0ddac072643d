#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <utility>

#include "supgdlr/errors.hpp"
#include "supgdlr/measure.hpp"

namespace supgdlr {

/// Rank-R state U Y^T: interior-dof coefficients of the physical modes and
/// measure-orthonormal stochastic modes.
struct LowRankField {
  Eigen::MatrixXd u;  // N_int x R
  StochasticModes y;  // N_C x R

  int rank() const { return static_cast<int>(u.cols()); }

  Eigen::MatrixXd expand() const { return u * y.values.transpose(); }
};

/// Tangent perturbation dU Y^T + U dY^T in dual coordinates; columns of dY
/// are orthogonal to span(Y) in the weighted inner product.
struct TangentVector {
  Eigen::MatrixXd du;
  Eigen::MatrixXd dy;

  Eigen::MatrixXd as_tensor(const LowRankField& base) const {
    return du * base.y.values.transpose() + base.u * dy.transpose();
  }
};

/// Weighted inner product of two full tensors: sum_l m_l w_l' M v_l.
inline double tensor_inner(const Eigen::MatrixXd& v, const Eigen::MatrixXd& w,
                           const Eigen::MatrixXd& m_space, const DiscreteMeasure& mu) {
  if (v.rows() != w.rows() || v.cols() != w.cols() || v.cols() != mu.size())
    throw DimensionError("tensor_inner: shape mismatch");
  double acc = 0.0;
  for (int l = 0; l < mu.size(); ++l)
    acc += mu.weight(l) * w.col(l).dot(m_space * v.col(l));
  return acc;
}

inline double tensor_norm(const Eigen::MatrixXd& v, const Eigen::MatrixXd& m_space,
                          const DiscreteMeasure& mu) {
  return std::sqrt(std::max(0.0, tensor_inner(v, v, m_space, mu)));
}

/// Measure-orthonormal basis of the complement of span(Y), N_C x (N_C - R).
inline Eigen::MatrixXd orthonormal_complement(const StochasticModes& y,
                                              const DiscreteMeasure& mu) {
  const int nc = mu.size();
  const int r = y.rank();
  const Eigen::VectorXd sqrt_m = mu.weights().cwiseSqrt();
  Eigen::MatrixXd scaled = sqrt_m.asDiagonal() * y.values;  // Euclidean-orthonormal
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(scaled);
  Eigen::MatrixXd full_q = qr.householderQ() * Eigen::MatrixXd::Identity(nc, nc);
  // The leading R columns of Q span the same space as the (orthonormal) input,
  // so the trailing block is the complement.
  return sqrt_m.cwiseInverse().asDiagonal() * full_q.rightCols(nc - r);
}

/// Projector onto the tangent space of the rank-R manifold at a given field.
/// The test pairing is (., G .) in space with the weighted measure in the
/// stochastic direction; G = M gives the orthogonal projector, G = M - delta
/// b (grad)^T-pairing gives the skew-adapted oblique projector. Both reduce
/// to two small decoupled solves in dual coordinates.
class TangentProjector {
 public:
  TangentProjector(const LowRankField& field, Eigen::MatrixXd m_space, Eigen::MatrixXd pairing,
                   const DiscreteMeasure& mu)
      : field_(field),
        m_space_(std::move(m_space)),
        pairing_(std::move(pairing)),
        mu_(mu),
        complement_(orthonormal_complement(field.y, mu)) {
    if (field_.y.orthonormality_defect(mu_) > 1e-10)
      throw ValidationError("TangentProjector: stochastic modes are not orthonormal");
    const Eigen::MatrixXd w = field_.u.transpose() * pairing_ * field_.u;
    lu_.compute(w);
    const double pivot_max = lu_.matrixLU().diagonal().cwiseAbs().maxCoeff();
    const double pivot_min = lu_.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!lu_.isInvertible() || pivot_min < 1e-14 * pivot_max)
      throw RankDegeneracy("TangentProjector: mode Gram matrix is singular");
    mass_llt_.compute(m_space_);
    if (mass_llt_.info() != Eigen::Success)
      throw NumericalError("TangentProjector: spatial Gram factorization failed");
  }

  /// Tangent components of the projection of a full tensor.
  TangentVector project(const Eigen::MatrixXd& v) const {
    check(v);
    const Eigen::MatrixXd du = v * mu_.weights().asDiagonal() * field_.y.values;
    const Eigen::MatrixXd theta_t =
        lu_.solve(field_.u.transpose() * pairing_ * v * mu_.weights().asDiagonal() * complement_);
    return {du, complement_ * theta_t.transpose()};
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& v) const {
    return project(v).as_tensor(field_);
  }

  /// Adjoint of apply() with respect to the weighted tensor inner product.
  Eigen::MatrixXd apply_adjoint(const Eigen::MatrixXd& v) const {
    check(v);
    const Eigen::MatrixXd wy =
        mu_.weights().asDiagonal() * field_.y.values * field_.y.values.transpose();
    const Eigen::MatrixXd part_y = v * wy;
    // S* = M^{-1} G' U (U' G U)^{-T} U' M applied on the left, complement
    // projector on the right.
    const Eigen::MatrixXd tmp = lu_.transpose().solve(field_.u.transpose() * m_space_ * v);
    const Eigen::MatrixXd s_adj = mass_llt_.solve(pairing_.transpose() * field_.u * tmp);
    return part_y + s_adj - s_adj * wy;
  }

  const LowRankField& field() const { return field_; }
  const Eigen::MatrixXd& complement() const { return complement_; }

 private:
  void check(const Eigen::MatrixXd& v) const {
    if (v.rows() != field_.u.rows() || v.cols() != mu_.size())
      throw DimensionError("TangentProjector: tensor shape mismatch");
  }

  LowRankField field_;
  Eigen::MatrixXd m_space_;
  Eigen::MatrixXd pairing_;
  DiscreteMeasure mu_;
  Eigen::MatrixXd complement_;
  Eigen::FullPivLU<Eigen::MatrixXd> lu_;
  Eigen::LLT<Eigen::MatrixXd> mass_llt_;
};

inline TangentVector project_tangent_orthogonal(const LowRankField& field,
                                                const Eigen::MatrixXd& v,
                                                const Eigen::MatrixXd& m_space,
                                                const DiscreteMeasure& mu) {
  return TangentProjector(field, m_space, m_space, mu).project(v);
}

/// Oblique tangent projection defined by orthogonality against the
/// skew-adjoint pairing; `pairing` is the matrix of (u, v - delta b v').
inline TangentVector project_tangent_oblique(const LowRankField& field, const Eigen::MatrixXd& v,
                                             const Eigen::MatrixXd& m_space,
                                             const Eigen::MatrixXd& pairing,
                                             const DiscreteMeasure& mu) {
  return TangentProjector(field, m_space, pairing, mu).project(v);
}

/// Max norm ratio of the projector over random tensors.
inline double check_projector_bound(const TangentProjector& proj, const Eigen::MatrixXd& m_space,
                                    const DiscreteMeasure& mu, int n_samples,
                                    unsigned seed = 2024) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist;
  const int n = static_cast<int>(proj.field().u.rows());
  double worst = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    Eigen::MatrixXd v(n, mu.size());
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < mu.size(); ++l) v(i, l) = dist(rng);
    const double nv = tensor_norm(v, m_space, mu);
    if (nv == 0.0) continue;
    worst = std::max(worst, tensor_norm(proj.apply(v), m_space, mu) / nv);
  }
  return worst;
}

/// Largest generalized eigenvalue of the mode stiffness/mass Gram pencil.
/// lambda_max bounds the Rayleigh quotient; its square root is the constant
/// at norm scale in |grad (U Z')| <= C |U Z'|.
struct BasisInverseConstant {
  double lambda_max = 0.0;
  double norm_scale = 0.0;  // sqrt(lambda_max)
};

inline BasisInverseConstant compute_c_lbi(const Eigen::MatrixXd& u,
                                          const Eigen::MatrixXd& stiffness,
                                          const Eigen::MatrixXd& mass) {
  const Eigen::MatrixXd s = u.transpose() * stiffness * u;
  const Eigen::MatrixXd m = u.transpose() * mass * u;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw RankDegeneracy("compute_c_lbi: mode mass Gram is singular");
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(s, m);
  if (es.info() != Eigen::Success)
    throw NumericalError("compute_c_lbi: generalized eigensolve failed");
  const double lambda = es.eigenvalues().maxCoeff();
  return {lambda, std::sqrt(std::max(0.0, lambda))};
}

/// Size of the residual functional restricted to the complement of the
/// oblique tangent image: the dynamics the manifold cannot represent.
/// residuals[l] = A~_l u_hat_l - g_l (the strong algebraic residual of the
/// stabilized form at collocation point l).
inline double estimate_model_error(const TangentProjector& oblique,
                                   const std::vector<Eigen::VectorXd>& residuals,
                                   const Eigen::MatrixXd& m_space, const DiscreteMeasure& mu) {
  const int n = static_cast<int>(m_space.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(m_space);
  if (llt.info() != Eigen::Success)
    throw NumericalError("estimate_model_error: spatial Gram factorization failed");
  Eigen::MatrixXd riesz(n, mu.size());
  for (int l = 0; l < mu.size(); ++l) riesz.col(l) = llt.solve(residuals[l]);
  const Eigen::MatrixXd unresolved = riesz - oblique.apply_adjoint(riesz);
  return tensor_norm(unresolved, m_space, mu);
}

}  // namespace supgdlr
