#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <string>
#include <utility>

#include "supgdlr/errors.hpp"

namespace supgdlr {

/// Discrete probability measure on a set of collocation points.
/// All expectations over the stochastic direction reduce to weighted sums
/// against this measure.
class DiscreteMeasure {
 public:
  DiscreteMeasure(Eigen::VectorXd points, Eigen::VectorXd weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.size() != weights_.size())
      throw DimensionError("DiscreteMeasure: points/weights length mismatch");
    if (points_.size() == 0)
      throw ValidationError("DiscreteMeasure: empty point set");
    if ((weights_.array() <= 0.0).any())
      throw ValidationError("DiscreteMeasure: weights must be positive");
    if (std::abs(weights_.sum() - 1.0) > 1e-14)
      throw ValidationError("DiscreteMeasure: weights must sum to one");
    for (Eigen::Index i = 0; i < points_.size(); ++i)
      for (Eigen::Index j = i + 1; j < points_.size(); ++j)
        if (points_[i] == points_[j])
          throw ValidationError("DiscreteMeasure: points must be pairwise distinct");
  }

  /// Uniform measure on {i/n : i = 1..n}.
  static DiscreteMeasure uniform(int n) {
    Eigen::VectorXd pts(n), w(n);
    for (int i = 0; i < n; ++i) {
      pts[i] = static_cast<double>(i + 1) / n;
      w[i] = 1.0 / n;
    }
    // Renormalize exactly; 1/n need not sum to 1 in floating point.
    w /= w.sum();
    return DiscreteMeasure(std::move(pts), std::move(w));
  }

  int size() const { return static_cast<int>(points_.size()); }
  const Eigen::VectorXd& points() const { return points_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double point(int i) const { return points_[i]; }
  double weight(int i) const { return weights_[i]; }

  /// diag(m) as a vector, for weighted matrix products.
  Eigen::VectorXd weight_diagonal() const { return weights_; }

 private:
  Eigen::VectorXd points_;
  Eigen::VectorXd weights_;
};

/// Weighted scalar product of two random vectors sampled at the collocation
/// points: sum_i m_i Y_i Z_i.
inline double expectation(const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                          const DiscreteMeasure& mu) {
  if (y.size() != mu.size() || z.size() != mu.size())
    throw DimensionError("expectation: vector length must equal the number of collocation points");
  return (mu.weights().array() * y.array() * z.array()).sum();
}

/// Columns of a factor matrix sampled at the collocation points. When
/// constructed through weighted_orthonormalize the columns are orthonormal
/// in the measure-weighted inner product.
struct StochasticModes {
  Eigen::MatrixXd values;  // N_C x R, column j = Y_j at all points

  int rank() const { return static_cast<int>(values.cols()); }

  Eigen::MatrixXd gram(const DiscreteMeasure& mu) const {
    return values.transpose() * mu.weights().asDiagonal() * values;
  }

  double orthonormality_defect(const DiscreteMeasure& mu) const {
    const Eigen::MatrixXd g = gram(mu);
    return (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
  }
};

struct OrthonormalizeResult {
  StochasticModes modes;
  Eigen::MatrixXd t;  // upper triangular with positive diagonal, input = modes * t
};

/// Weighted QR factorization Ytilde = Y * T with Y measure-orthonormal and T
/// upper triangular. The positive-diagonal sign convention makes the
/// factorization unique.
inline OrthonormalizeResult weighted_orthonormalize(const Eigen::MatrixXd& ytilde,
                                                    const DiscreteMeasure& mu,
                                                    double cond_threshold = 1e12) {
  if (ytilde.rows() != mu.size())
    throw DimensionError("weighted_orthonormalize: row count must equal the number of collocation points");
  const Eigen::Index r = ytilde.cols();
  if (r > ytilde.rows())
    throw DimensionError("weighted_orthonormalize: more columns than collocation points");

  const Eigen::VectorXd sqrt_m = mu.weights().cwiseSqrt();
  const Eigen::MatrixXd scaled = sqrt_m.asDiagonal() * ytilde;

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(scaled);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(ytilde.rows(), r);
  Eigen::MatrixXd t = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();

  // Sign fix: positive diagonal of T.
  for (Eigen::Index j = 0; j < r; ++j) {
    if (t(j, j) < 0.0) {
      t.row(j) *= -1.0;
      q.col(j) *= -1.0;
    }
  }

  // Rank check via the diagonal of T (singular values of the scaled Gram
  // factor are bracketed by the pivot magnitudes for this purpose).
  const double dmax = t.diagonal().cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < r; ++j) {
    const double djj = std::abs(t(j, j));
    if (djj == 0.0 || (dmax / djj) * (dmax / djj) > cond_threshold)
      throw RankDegeneracy("weighted_orthonormalize: column " + std::to_string(j) +
                           " is degenerate in the weighted inner product");
  }

  StochasticModes modes{sqrt_m.cwiseInverse().asDiagonal() * q};
  return {std::move(modes), std::move(t)};
}

struct TruncatedSvdResult {
  Eigen::MatrixXd u;        // N_h x R spatial factor
  StochasticModes y;        // N_C x R, measure-orthonormal
  double truncation_error;  // norm of the discarded tail
  Eigen::VectorXd singular_values;
};

/// Best rank-R approximation of C in the norm induced by M_space (spatial
/// direction) and the measure weights (stochastic direction). Realized via
/// Cholesky transforms of both Gram matrices and a standard dense SVD.
inline TruncatedSvdResult weighted_truncated_svd(const Eigen::MatrixXd& c,
                                                 const Eigen::MatrixXd& m_space,
                                                 const DiscreteMeasure& mu, int rank) {
  if (c.cols() != mu.size())
    throw DimensionError("weighted_truncated_svd: column count must equal the number of collocation points");
  if (m_space.rows() != c.rows() || m_space.cols() != c.rows())
    throw DimensionError("weighted_truncated_svd: spatial Gram matrix size mismatch");
  if (rank < 1 || rank > std::min(c.rows(), c.cols()))
    throw DimensionError("weighted_truncated_svd: rank out of range");

  Eigen::LLT<Eigen::MatrixXd> llt(m_space);
  if (llt.info() != Eigen::Success)
    throw NumericalError("weighted_truncated_svd: spatial Gram matrix is not SPD");
  const Eigen::MatrixXd l = llt.matrixL();

  const Eigen::VectorXd sqrt_m = mu.weights().cwiseSqrt();
  const Eigen::MatrixXd transformed = l.transpose() * c * sqrt_m.asDiagonal();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(transformed, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();

  double tail_sq = 0.0;
  for (Eigen::Index j = rank; j < sigma.size(); ++j) tail_sq += sigma[j] * sigma[j];

  // u = L^{-T} U_R Sigma_R carries the magnitudes; y stays orthonormal.
  Eigen::MatrixXd u_hat = svd.matrixU().leftCols(rank) * sigma.head(rank).asDiagonal();
  Eigen::MatrixXd u = llt.matrixU().solve(u_hat);
  StochasticModes y{sqrt_m.cwiseInverse().asDiagonal() * svd.matrixV().leftCols(rank)};

  return {std::move(u), std::move(y), std::sqrt(tail_sq), sigma};
}

}  // namespace supgdlr
