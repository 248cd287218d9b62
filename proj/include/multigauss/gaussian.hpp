#ifndef MULTIGAUSS_GAUSSIAN_HPP
#define MULTIGAUSS_GAUSSIAN_HPP

// Multivariate Gaussian value types and the exact transforms used by the
// regression head: packed lower-triangular parameterization with a softplus
// diagonal, affine maps, log-density, marginals, correlations and sampling.
//
// Everything is templated on the scalar type and accepts Eigen expressions.
// Tolerances documented here assume double precision.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multigauss/errors.hpp"

namespace multigauss {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Number of quality dimensions (MOS, NOI, COL, DIS, LOUD).
inline constexpr Index kQualityDims = 5;

/// Lower bound applied to every diagonal entry of the Cholesky factor after
/// softplus, so that the covariance never becomes numerically singular.
inline constexpr double kDiagonalFloor = 1e-6;

constexpr Index triangle_size(Index n) { return n * (n + 1) / 2; }

/// Inverse of triangle_size; throws when `packed` is not a triangular number.
inline Index triangle_dim(Index packed) {
  Index n = 0;
  while (triangle_size(n) < packed) ++n;
  if (triangle_size(n) != packed || n == 0) {
    throw InvalidInput("packed triangle length " + std::to_string(packed) +
                       " is not n(n+1)/2 for any n >= 1");
  }
  return n;
}

/// Position of entry (row, col), col <= row, in the row-major lower packing
/// (0,0), (1,0), (1,1), (2,0), ...
constexpr Index packed_index(Index row, Index col) { return row * (row + 1) / 2 + col; }

template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::abs, std::exp, std::log1p;
  return std::max(x, Scalar(0)) + log1p(exp(-abs(x)));
}

/// Derivative of softplus, the logistic function.
template <typename Scalar>
Scalar logistic(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

/// ln(e^y - 1) for y > 0.
template <typename Scalar>
Scalar softplus_inverse(Scalar y) {
  using std::expm1, std::log;
  if (!(y > Scalar(0))) throw InvalidInput("softplus_inverse requires a positive argument");
  return y + log(-expm1(-y));
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& values) {
  return values.allFinite();
}

template <typename Derived>
Matrix<typename Derived::Scalar> unpack_lower(const Eigen::MatrixBase<Derived>& packed) {
  using Scalar = typename Derived::Scalar;
  const Index n = triangle_dim(packed.size());
  Matrix<Scalar> lower = Matrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) lower(i, j) = packed(packed_index(i, j));
  }
  return lower;
}

template <typename Derived>
Vector<typename Derived::Scalar> pack_lower(const Eigen::MatrixBase<Derived>& matrix) {
  using Scalar = typename Derived::Scalar;
  if (matrix.rows() != matrix.cols()) throw InvalidInput("pack_lower expects a square matrix");
  const Index n = matrix.rows();
  Vector<Scalar> packed(triangle_size(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) packed(packed_index(i, j)) = matrix(i, j);
  }
  return packed;
}

namespace detail {

template <typename Derived>
Matrix<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& m) {
  return (m + m.transpose()) / typename Derived::Scalar(2);
}

}  // namespace detail

/// Mean and covariance of a multivariate Gaussian, with the lower Cholesky
/// factor of the covariance cached. Immutable once constructed.
template <typename Scalar>
class GaussianParams {
 public:
  using VectorType = Vector<Scalar>;
  using MatrixType = Matrix<Scalar>;

  /// Factorizes `cov`. Rejects non-finite values, asymmetry beyond 1e-12
  /// (relative to the largest entry when that exceeds one) and matrices that
  /// are not positive definite. The stored covariance is exactly symmetric.
  GaussianParams(VectorType mean, const MatrixType& cov) : mean_(std::move(mean)) {
    const Index n = mean_.size();
    if (n == 0) throw InvalidInput("Gaussian dimension must be positive");
    if (cov.rows() != n || cov.cols() != n) {
      throw InvalidInput("covariance is " + std::to_string(cov.rows()) + "x" +
                         std::to_string(cov.cols()) + ", mean has length " + std::to_string(n));
    }
    if (!all_finite(mean_) || !all_finite(cov)) throw InvalidInput("non-finite Gaussian parameters");
    const Scalar scale = std::max(Scalar(1), cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale) {
      throw InvalidInput("covariance is not symmetric");
    }
    cov_ = detail::symmetrized(cov);
    Eigen::LLT<MatrixType> llt(cov_);
    if (llt.info() != Eigen::Success) throw InvalidInput("covariance is not positive definite");
    chol_ = llt.matrixL();
    if (!all_finite(chol_) || (chol_.diagonal().array() <= Scalar(0)).any()) {
      throw InvalidInput("covariance is not positive definite");
    }
    const Scalar rel = (chol_ * chol_.transpose() - cov_).norm() / cov_.norm();
    if (!(rel <= Scalar(1e-10))) throw InvalidInput("covariance is too ill-conditioned to factor");
  }

  /// Builds the Gaussian N(mean, L Lᵀ) from a lower-triangular factor with a
  /// positive diagonal; `lower` becomes the cached factor as-is.
  static GaussianParams from_factor(VectorType mean, MatrixType lower) {
    const Index n = mean.size();
    if (n == 0) throw InvalidInput("Gaussian dimension must be positive");
    if (lower.rows() != n || lower.cols() != n) throw InvalidInput("factor shape does not match mean");
    if (!all_finite(mean) || !all_finite(lower)) throw InvalidInput("non-finite Gaussian parameters");
    if (!lower.template triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero(0)) {
      throw InvalidInput("factor is not lower triangular");
    }
    if ((lower.diagonal().array() <= Scalar(0)).any()) {
      throw InvalidInput("factor diagonal must be positive");
    }
    GaussianParams g;
    g.mean_ = std::move(mean);
    g.cov_ = detail::symmetrized(lower * lower.transpose());
    g.chol_ = std::move(lower);
    return g;
  }

  Index dim() const { return mean_.size(); }
  const VectorType& mean() const { return mean_; }
  const MatrixType& cov() const { return cov_; }
  const MatrixType& chol() const { return chol_; }

  Scalar log_det() const { return Scalar(2) * chol_.diagonal().array().log().sum(); }

  /// L⁻¹ r by forward substitution.
  template <typename Derived>
  VectorType whiten(const Eigen::MatrixBase<Derived>& r) const {
    return chol_.template triangularView<Eigen::Lower>().solve(r);
  }

  /// Σ⁻¹ r through two triangular solves.
  template <typename Derived>
  VectorType precision_times(const Eigen::MatrixBase<Derived>& r) const {
    const VectorType z = whiten(r);
    return chol_.transpose().template triangularView<Eigen::Upper>().solve(z);
  }

 private:
  GaussianParams() = default;

  VectorType mean_;
  MatrixType cov_;
  MatrixType chol_;
};

template <typename Scalar>
struct CholeskyOutput {
  Matrix<Scalar> cov;
  Matrix<Scalar> factor;
};

/// Unpacks the raw triangle, softplus on the diagonal (floored at
/// kDiagonalFloor) and returns Λ = L̃L̃ᵀ together with L̃.
template <typename Derived>
CholeskyOutput<typename Derived::Scalar> cholesky_transform(const Eigen::MatrixBase<Derived>& raw) {
  using Scalar = typename Derived::Scalar;
  if (!all_finite(raw)) throw InvalidInput("cholesky_transform: non-finite raw entry");
  Matrix<Scalar> factor = unpack_lower(raw);
  for (Index i = 0; i < factor.rows(); ++i) {
    factor(i, i) = std::max(softplus(factor(i, i)), Scalar(kDiagonalFloor));
  }
  Matrix<Scalar> cov = detail::symmetrized(factor * factor.transpose());
  return {std::move(cov), std::move(factor)};
}

/// y ↦ A y + b. A is square and |det A| > 1e-12.
template <typename Scalar>
class AffineMap {
 public:
  AffineMap(Matrix<Scalar> a, Vector<Scalar> b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows() != a_.cols() || a_.rows() != b_.size() || b_.size() == 0) {
      throw InvalidInput("affine map needs a square A matching b");
    }
    if (!all_finite(a_) || !all_finite(b_)) throw InvalidInput("non-finite affine map");
    const Eigen::PartialPivLU<Matrix<Scalar>> lu(a_);
    const Scalar det = lu.determinant();
    if (!(std::abs(det) > Scalar(1e-12))) throw InvalidInput("affine map A is singular");
    log_abs_det_ = lu.matrixLU().diagonal().array().abs().log().sum();
  }

  static AffineMap identity(Index n) {
    return AffineMap(Matrix<Scalar>::Identity(n, n), Vector<Scalar>::Zero(n));
  }

  /// A = 2I, b = 3: maps [-1, 1] onto the 1..5 quality scale.
  static AffineMap label_scale(Index n = kQualityDims) {
    return AffineMap(Scalar(2) * Matrix<Scalar>::Identity(n, n), Vector<Scalar>::Constant(n, Scalar(3)));
  }

  Index dim() const { return b_.size(); }
  const Matrix<Scalar>& a() const { return a_; }
  const Vector<Scalar>& b() const { return b_; }
  Scalar log_abs_det() const { return log_abs_det_; }

  template <typename Derived>
  Vector<Scalar> operator()(const Eigen::MatrixBase<Derived>& y) const {
    return a_ * y + b_;
  }

  bool operator==(const AffineMap& other) const { return a_ == other.a_ && b_ == other.b_; }

 private:
  Matrix<Scalar> a_;
  Vector<Scalar> b_;
  Scalar log_abs_det_{};
};

/// (Aμ + b, AΛAᵀ).
template <typename Scalar>
GaussianParams<Scalar> affine_transform(const GaussianParams<Scalar>& g, const AffineMap<Scalar>& map) {
  if (g.dim() != map.dim()) throw InvalidInput("affine_transform: dimension mismatch");
  const Matrix<Scalar> a_chol = map.a() * g.chol();
  return GaussianParams<Scalar>(map(g.mean()), detail::symmetrized(a_chol * a_chol.transpose()));
}

/// ln N(y; μ, Λ), including the (2π)^{n/2} normalizer.
template <typename Scalar, typename Derived>
Scalar log_density(const GaussianParams<Scalar>& g, const Eigen::MatrixBase<Derived>& y) {
  if (y.size() != g.dim()) throw InvalidInput("log_density: dimension mismatch");
  const Vector<Scalar> z = g.whiten(y - g.mean());
  const Scalar log_two_pi = std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  return Scalar(-0.5) * (z.squaredNorm() + g.log_det() + Scalar(g.dim()) * log_two_pi);
}

/// Marginal over `dims` (strictly increasing indices).
template <typename Scalar>
GaussianParams<Scalar> marginalize(const GaussianParams<Scalar>& g, std::span<const Index> dims) {
  if (dims.empty()) throw InvalidInput("marginalize: empty index set");
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (dims[k] < 0 || dims[k] >= g.dim()) {
      throw InvalidInput("marginalize: index " + std::to_string(dims[k]) + " out of range");
    }
    if (k > 0 && dims[k] <= dims[k - 1]) throw InvalidInput("marginalize: indices must be strictly increasing");
  }
  const std::vector<Index> idx(dims.begin(), dims.end());
  return GaussianParams<Scalar>(g.mean()(idx), g.cov()(idx, idx));
}

template <typename Scalar>
GaussianParams<Scalar> marginalize(const GaussianParams<Scalar>& g, std::initializer_list<Index> dims) {
  return marginalize(g, std::span<const Index>(dims.begin(), dims.size()));
}

/// Λᵢⱼ / √(ΛᵢᵢΛⱼⱼ), clamped to [-1, 1] against rounding.
template <typename Derived>
typename Derived::Scalar correlation(const Eigen::MatrixBase<Derived>& cov, Index i, Index j) {
  using Scalar = typename Derived::Scalar;
  if (cov.rows() != cov.cols()) throw InvalidInput("correlation: covariance must be square");
  if (i < 0 || j < 0 || i >= cov.rows() || j >= cov.rows()) throw InvalidInput("correlation: index out of range");
  if (i == j) return Scalar(1);
  const Scalar rho = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
  return std::clamp(rho, Scalar(-1), Scalar(1));
}

/// `count` draws of μ + L̃z, one per row, with z from a 64-bit Mersenne
/// Twister seeded by `seed`. Identical arguments give identical output.
template <typename Scalar>
Matrix<Scalar> sample(const GaussianParams<Scalar>& g, Index count, std::uint64_t seed) {
  if (count < 1) throw InvalidInput("sample: count must be positive");
  std::mt19937_64 gen(seed);
  std::normal_distribution<Scalar> normal;
  Matrix<Scalar> z(count, g.dim());
  for (Index r = 0; r < count; ++r) {
    for (Index c = 0; c < g.dim(); ++c) z(r, c) = normal(gen);
  }
  Matrix<Scalar> draws = z * g.chol().transpose();
  draws.rowwise() += g.mean().transpose();
  return draws;
}

using Gaussian = GaussianParams<double>;
using Affine = AffineMap<double>;

}  // namespace multigauss

#endif  // MULTIGAUSS_GAUSSIAN_HPP
