#ifndef MULTIGAUSS_LOSS_HPP
#define MULTIGAUSS_LOSS_HPP

// Training losses and their closed-form gradients with respect to the raw
// head output.
//
// gnll_loss is 0.5 [ln|Λ̂| + rᵀΛ̂⁻¹r] with r = y − μ̂. It omits the constant
// (n/2) ln 2π, so gnll_loss(g, y) = -log_density(g, y) - (n/2) ln 2π.
//
// Backward pass for the full pipeline (μ̂ = Aμ + b, Λ̂ = A L̃ L̃ᵀ Aᵀ):
//   β = Aᵀ Λ̂⁻¹ r
//   ∂ℓ/∂μ = −β
//   ∂ℓ/∂L̃ = lower( diag(1/L̃ᵢᵢ) − β (L̃ᵀβ)ᵀ )
// where the log-determinant term contributes only to the diagonal because
// ln|Λ̂| = 2 ln|det A| + 2 Σ ln L̃ᵢᵢ. Diagonal entries then pick up the
// softplus derivative, or zero where the floor is active.

#include <string>

#include "multigauss/errors.hpp"
#include "multigauss/gaussian.hpp"
#include "multigauss/variant.hpp"

namespace multigauss {

template <typename Scalar>
struct RawGradient {
  Vector<Scalar> d_mean;
  Vector<Scalar> d_tri;  // packed triangle (full) or per-dimension diagonal (independent); empty for mse

  Vector<Scalar> flat() const {
    Vector<Scalar> out(d_mean.size() + d_tri.size());
    out << d_mean, d_tri;
    return out;
  }
};

template <typename Scalar>
struct LossAndGradient {
  Scalar value{};
  RawGradient<Scalar> grad;
};

template <typename Scalar, typename Derived>
Scalar gnll_loss(const GaussianParams<Scalar>& g, const Eigen::MatrixBase<Derived>& y) {
  if (y.size() != g.dim()) throw InvalidInput("gnll_loss: dimension mismatch");
  const Vector<Scalar> z = g.whiten(y - g.mean());
  return Scalar(0.5) * (g.log_det() + z.squaredNorm());
}

/// ∂ gnll / ∂μ̂ = −Λ̂⁻¹ (y − μ̂).
template <typename Scalar, typename Derived>
Vector<Scalar> gnll_mean_gradient(const GaussianParams<Scalar>& g, const Eigen::MatrixBase<Derived>& y) {
  if (y.size() != g.dim()) throw InvalidInput("gnll_mean_gradient: dimension mismatch");
  return -g.precision_times(y - g.mean());
}

template <typename DerivedP, typename DerivedY>
typename DerivedP::Scalar mse_loss(const Eigen::MatrixBase<DerivedP>& mean_pred, const Eigen::MatrixBase<DerivedY>& y) {
  if (mean_pred.size() != y.size() || y.size() == 0) throw InvalidInput("mse_loss: dimension mismatch");
  return (y - mean_pred).squaredNorm() / typename DerivedP::Scalar(y.size());
}

/// (2/n)(μ̂ − y).
template <typename DerivedP, typename DerivedY>
Vector<typename DerivedP::Scalar> mse_gradient(const Eigen::MatrixBase<DerivedP>& mean_pred,
                                               const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedP::Scalar;
  if (mean_pred.size() != y.size() || y.size() == 0) throw InvalidInput("mse_gradient: dimension mismatch");
  return (Scalar(2) / Scalar(y.size())) * (mean_pred - y);
}

namespace detail {

template <typename Scalar>
void require_finite(const Vector<Scalar>& v, const char* block) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v(i))) {
      throw NumericFailure(std::string("non-finite gradient entry ") + block + "[" + std::to_string(i) + "]");
    }
  }
}

// Finite raw input whose covariance still overflows is a numeric failure,
// not a caller error.
template <typename F>
auto guarded(F&& build) {
  try {
    return build();
  } catch (const InvalidInput& e) {
    throw NumericFailure(std::string("non-finite or degenerate covariance intermediate: ") + e.what());
  }
}

template <typename Scalar>
Scalar floored_softplus_derivative(Scalar raw) {
  return softplus(raw) > Scalar(kDiagonalFloor) ? logistic(raw) : Scalar(0);
}

template <typename Scalar>
Matrix<Scalar> diagonal_factor(const Vector<Scalar>& sd_raw) {
  Matrix<Scalar> factor = Matrix<Scalar>::Zero(sd_raw.size(), sd_raw.size());
  for (Index i = 0; i < sd_raw.size(); ++i) factor(i, i) = std::max(softplus(sd_raw(i)), Scalar(kDiagonalFloor));
  return factor;
}

}  // namespace detail

/// N(Aμ + b, A L̃L̃ᵀ Aᵀ) from the raw mean and packed triangle.
template <typename Scalar>
GaussianParams<Scalar> full_pipeline(const Vector<Scalar>& mean_raw, const Vector<Scalar>& tri_raw,
                                     const AffineMap<Scalar>& map) {
  if (triangle_size(mean_raw.size()) != tri_raw.size()) throw InvalidInput("raw mean and triangle sizes disagree");
  auto chol = cholesky_transform(tri_raw);
  return affine_transform(GaussianParams<Scalar>::from_factor(mean_raw, std::move(chol.factor)), map);
}

/// Diagonal counterpart of full_pipeline: σᵢ = softplus(sd_rawᵢ), floored.
template <typename Scalar>
GaussianParams<Scalar> diagonal_pipeline(const Vector<Scalar>& mean_raw, const Vector<Scalar>& sd_raw,
                                         const AffineMap<Scalar>& map) {
  if (mean_raw.size() != sd_raw.size()) throw InvalidInput("raw mean and deviation sizes disagree");
  if (!all_finite(sd_raw)) throw InvalidInput("non-finite raw deviation");
  return affine_transform(GaussianParams<Scalar>::from_factor(mean_raw, detail::diagonal_factor(sd_raw)), map);
}

template <typename Scalar>
LossAndGradient<Scalar> gnll_loss_and_grad(const Vector<Scalar>& mean_raw, const Vector<Scalar>& tri_raw,
                                           const Vector<Scalar>& y, const AffineMap<Scalar>& map) {
  const Index n = mean_raw.size();
  if (y.size() != n || map.dim() != n) throw InvalidInput("gnll_grad_raw: dimension mismatch");
  if (!all_finite(mean_raw) || !all_finite(tri_raw)) throw InvalidInput("gnll_grad_raw: non-finite raw entry");
  const auto chol = cholesky_transform(tri_raw);
  const auto g = detail::guarded([&] {
    return affine_transform(GaussianParams<Scalar>::from_factor(mean_raw, chol.factor), map);
  });

  const Vector<Scalar> residual = y - g.mean();
  const Vector<Scalar> beta = map.a().transpose() * g.precision_times(residual);
  const Vector<Scalar> lt_beta = chol.factor.transpose() * beta;

  LossAndGradient<Scalar> out;
  out.value = gnll_loss(g, y);
  out.grad.d_mean = -beta;
  out.grad.d_tri.resize(triangle_size(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) {
      Scalar d = -beta(i) * lt_beta(j);
      if (i == j) {
        d += Scalar(1) / chol.factor(i, i);
        d *= detail::floored_softplus_derivative(tri_raw(packed_index(i, i)));
      }
      out.grad.d_tri(packed_index(i, j)) = d;
    }
  }
  if (!std::isfinite(out.value)) throw NumericFailure("non-finite GNLL value");
  detail::require_finite(out.grad.d_mean, "d_mean");
  detail::require_finite(out.grad.d_tri, "d_tri");
  return out;
}

/// Gradient of gnll_loss(affine_transform(cholesky_transform(raw)), y) with
/// respect to the raw head output (mean block first, then packed triangle).
template <typename Scalar>
RawGradient<Scalar> gnll_grad_raw(const Vector<Scalar>& raw, const Vector<Scalar>& y, const AffineMap<Scalar>& map) {
  const Index n = y.size();
  if (raw.size() != raw_output_dim(Variant::full, n)) throw InvalidInput("gnll_grad_raw: raw length does not match labels");
  return gnll_loss_and_grad<Scalar>(raw.head(n), raw.tail(triangle_size(n)), y, map).grad;
}

template <typename Scalar>
Scalar diag_gnll_loss(const Vector<Scalar>& means, const Vector<Scalar>& sd_raw, const Vector<Scalar>& y,
                      const AffineMap<Scalar>& map) {
  if (y.size() != means.size()) throw InvalidInput("diag_gnll_loss: dimension mismatch");
  return gnll_loss(diagonal_pipeline(means, sd_raw, map), y);
}

template <typename Scalar>
LossAndGradient<Scalar> diag_gnll_loss_and_grad(const Vector<Scalar>& mean_raw, const Vector<Scalar>& sd_raw,
                                                const Vector<Scalar>& y, const AffineMap<Scalar>& map) {
  const Index n = mean_raw.size();
  if (y.size() != n || sd_raw.size() != n || map.dim() != n) throw InvalidInput("diag_gnll: dimension mismatch");
  if (!all_finite(mean_raw) || !all_finite(sd_raw)) throw InvalidInput("diag_gnll: non-finite raw entry");
  const auto g = detail::guarded([&] { return diagonal_pipeline(mean_raw, sd_raw, map); });
  const Vector<Scalar> beta = map.a().transpose() * g.precision_times(y - g.mean());

  LossAndGradient<Scalar> out;
  out.value = gnll_loss(g, y);
  out.grad.d_mean = -beta;
  out.grad.d_tri.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar sigma = std::max(softplus(sd_raw(i)), Scalar(kDiagonalFloor));
    out.grad.d_tri(i) = (Scalar(1) / sigma - beta(i) * beta(i) * sigma) * detail::floored_softplus_derivative(sd_raw(i));
  }
  if (!std::isfinite(out.value)) throw NumericFailure("non-finite GNLL value");
  detail::require_finite(out.grad.d_mean, "d_mean");
  detail::require_finite(out.grad.d_tri, "d_sd");
  return out;
}

/// MSE on the label scale, μ̂ = Aμ + b; gradient is with respect to raw μ.
template <typename Scalar>
LossAndGradient<Scalar> mse_loss_and_grad(const Vector<Scalar>& mean_raw, const Vector<Scalar>& y,
                                          const AffineMap<Scalar>& map) {
  if (y.size() != mean_raw.size() || map.dim() != y.size()) throw InvalidInput("mse: dimension mismatch");
  const Vector<Scalar> pred = map(mean_raw);
  LossAndGradient<Scalar> out;
  out.value = mse_loss(pred, y);
  out.grad.d_mean = map.a().transpose() * mse_gradient(pred, y);
  if (!std::isfinite(out.value)) throw NumericFailure("non-finite MSE value");
  detail::require_finite(out.grad.d_mean, "d_mean");
  return out;
}

/// Per-sample training loss for `variant` evaluated on a raw head output.
template <typename Scalar>
LossAndGradient<Scalar> head_loss(Variant variant, const Vector<Scalar>& raw, const Vector<Scalar>& y,
                                  const AffineMap<Scalar>& map) {
  const Index n = y.size();
  if (raw.size() != raw_output_dim(variant, n)) {
    throw InvalidInput("raw output has length " + std::to_string(raw.size()) + ", variant " +
                       std::string(to_string(variant)) + " expects " + std::to_string(raw_output_dim(variant, n)));
  }
  switch (variant) {
    case Variant::full: return gnll_loss_and_grad<Scalar>(raw.head(n), raw.tail(triangle_size(n)), y, map);
    case Variant::independent: return diag_gnll_loss_and_grad<Scalar>(raw.head(n), raw.tail(n), y, map);
    case Variant::mse: return mse_loss_and_grad<Scalar>(raw, y, map);
  }
  throw InvalidInput("unknown variant");
}

}  // namespace multigauss

#endif  // MULTIGAUSS_LOSS_HPP
