#pragma once

// Gaussian distributions with four covariance representations, sampling via
// the stability transform, affine pushforwards, linear conditioning and the
// closed-form means of quadratic forms.

#include <utility>
#include <variant>

#include "bcg/linalg.hpp"
#include "bcg/random.hpp"

namespace bcg {

struct DenseCov {
  Matrix sigma;
};

/// Sigma = F F^T.
struct FactoredCov {
  Matrix factor;
};

/// Sigma = V diag(phi) V^T with A-orthonormal columns V.
struct KrylovCov {
  Matrix basis;
  Vector phi;
  SpdMatrix op;
};

/// Sigma = 0.
struct DiracCov {};

using Covariance = std::variant<DenseCov, FactoredCov, KrylovCov, DiracCov>;

class Gaussian {
 public:
  /// Dense covariance; rejects matrices with an eigenvalue below -1e-8 ||Sigma||_2.
  static Gaussian dense(Vector mean, Matrix sigma) {
    detail::require_dim(sigma.rows(), mean.size(), "Gaussian::dense");
    detail::require_dim(sigma.cols(), mean.size(), "Gaussian::dense");
    if (mean.size() > 0 && mean.size() <= kMaxDenseOrder) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrized(sigma), Eigen::EigenvaluesOnly);
      const Vector& lambda = eig.eigenvalues();
      if (lambda.minCoeff() < -1e-8 * lambda.cwiseAbs().maxCoeff())
        throw NotPsdError("Gaussian::dense: covariance is not positive semi-definite");
    }
    return Gaussian(std::move(mean), DenseCov{std::move(sigma)});
  }

  /// Dense covariance without the eigenvalue check, for solver outputs whose
  /// semi-definiteness holds by construction up to rounding.
  static Gaussian dense_unchecked(Vector mean, Matrix sigma) {
    detail::require_dim(sigma.rows(), mean.size(), "Gaussian::dense_unchecked");
    detail::require_dim(sigma.cols(), mean.size(), "Gaussian::dense_unchecked");
    return Gaussian(std::move(mean), DenseCov{std::move(sigma)});
  }

  static Gaussian factored(Vector mean, Matrix factor) {
    detail::require_dim(factor.rows(), mean.size(), "Gaussian::factored");
    return Gaussian(std::move(mean), FactoredCov{std::move(factor)});
  }

  /// Krylov-factor covariance. Requires phi > 0 and matching shapes; the
  /// A-orthonormality of the basis is the producer's invariant and can be
  /// inspected with krylov_orthonormality_defect().
  static Gaussian krylov(Vector mean, Matrix basis, Vector phi, SpdMatrix op) {
    detail::require_dim(basis.rows(), mean.size(), "Gaussian::krylov");
    detail::require_dim(op.order(), mean.size(), "Gaussian::krylov");
    detail::require_dim(phi.size(), basis.cols(), "Gaussian::krylov");
    if (phi.size() > 0 && phi.minCoeff() <= 0.0) throw InputError("Gaussian::krylov: step sizes must be positive");
    return Gaussian(std::move(mean), KrylovCov{std::move(basis), std::move(phi), std::move(op)});
  }

  static Gaussian dirac(Vector mean) { return Gaussian(std::move(mean), DiracCov{}); }

  const Vector& mean() const { return mean_; }
  Index dim() const { return mean_.size(); }
  const Covariance& covariance() const { return cov_; }
  bool is_dirac() const { return std::holds_alternative<DiracCov>(cov_); }

  Matrix dense_covariance() const {
    const Index n = dim();
    return std::visit(
        [n](const auto& c) -> Matrix {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, DenseCov>) {
            return c.sigma;
          } else if constexpr (std::is_same_v<T, FactoredCov>) {
            return c.factor * c.factor.transpose();
          } else if constexpr (std::is_same_v<T, KrylovCov>) {
            return c.basis * c.phi.asDiagonal() * c.basis.transpose();
          } else {
            return Matrix::Zero(n, n);
          }
        },
        cov_);
  }

  /// Some F with F F^T = Sigma. Dense covariances go through sym_sqrt.
  Matrix square_root_factor() const {
    const Index n = dim();
    return std::visit(
        [n](const auto& c) -> Matrix {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, DenseCov>) {
            return sym_sqrt(c.sigma);
          } else if constexpr (std::is_same_v<T, FactoredCov>) {
            return c.factor;
          } else if constexpr (std::is_same_v<T, KrylovCov>) {
            return c.basis * c.phi.cwiseSqrt().asDiagonal();
          } else {
            return Matrix::Zero(n, 0);
          }
        },
        cov_);
  }

  /// trace(B Sigma).
  double weighted_trace(const SpdMatrix& b) const {
    detail::require_dim(b.order(), dim(), "Gaussian::weighted_trace");
    return std::visit(
        [&b](const auto& c) -> double {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, DenseCov>) {
            return b.trace_product(c.sigma);
          } else if constexpr (std::is_same_v<T, FactoredCov>) {
            return c.factor.cwiseProduct(b.apply(c.factor)).sum();
          } else if constexpr (std::is_same_v<T, KrylovCov>) {
            Matrix bv = b.apply(c.basis);
            return (c.basis.cwiseProduct(bv).colwise().sum().transpose().cwiseProduct(c.phi)).sum();
          } else {
            return 0.0;
          }
        },
        cov_);
  }

  /// The same distribution with a Dense covariance.
  Gaussian materialized() const { return Gaussian(mean_, DenseCov{dense_covariance()}); }

  /// ||V^T A V - I||_F for KrylovFactors covariances; 0 otherwise.
  double krylov_orthonormality_defect() const {
    const auto* k = std::get_if<KrylovCov>(&cov_);
    if (!k) return 0.0;
    Matrix g = k->basis.transpose() * k->op.apply(k->basis);
    return (g - Matrix::Identity(g.rows(), g.cols())).norm();
  }

 private:
  Gaussian(Vector mean, Covariance cov) : mean_(std::move(mean)), cov_(std::move(cov)) {}

  Vector mean_;
  Covariance cov_;
};

/// Draws F z + x with z standard normal and F a square-root factor of Sigma.
inline Vector sample(const Gaussian& g, RandomSource& rng) {
  if (g.is_dirac()) return g.mean();
  Matrix f = g.square_root_factor();
  return g.mean() + f * rng.normal_vector(f.cols());
}

/// Pushforward of g under x -> y + F x.
///
/// Dense and Krylov covariances produce a Dense result; Factored input keeps
/// the factored form F F_g; Dirac stays Dirac.
inline Gaussian affine_push(const Gaussian& g, const Matrix& f, const Vector& y) {
  detail::require_dim(f.cols(), g.dim(), "affine_push");
  detail::require_dim(y.size(), f.rows(), "affine_push");
  Vector mean = y + f * g.mean();
  if (g.is_dirac()) return Gaussian::dirac(std::move(mean));
  if (const auto* fc = std::get_if<FactoredCov>(&g.covariance()))
    return Gaussian::factored(std::move(mean), f * fc->factor);
  Matrix sigma = f * g.dense_covariance() * f.transpose();
  return Gaussian::dense(std::move(mean), detail::symmetrized(sigma));
}

/// Distribution of X ~ g conditioned on L X = value.
///
/// Mean x + S_xy S_y^+ (value - L x), covariance Sigma - S_xy S_y^+ S_xy^T with
/// S_xy = Sigma L^T and S_y = L Sigma L^T.
///
/// Evaluated in square-root form: with Sigma = F F^T and LF = U S W^T, the mean
/// update is F (LF)^+ (value - L x) and the covariance is (F W_0)(F W_0)^T, W_0
/// spanning the numerical kernel of LF. An L without rows leaves g unchanged.
inline Gaussian condition_on_linear(const Gaussian& g, const Matrix& l, const Vector& value) {
  detail::require_dim(l.cols(), g.dim(), "condition_on_linear");
  detail::require_dim(value.size(), l.rows(), "condition_on_linear");
  if (l.rows() > g.dim()) throw InputError("condition_on_linear: more observations than unknowns");
  if (l.rows() == 0 || g.is_dirac()) return g;
  const Matrix f = g.square_root_factor();
  const Matrix lf = l * f;
  Eigen::BDCSVD<Matrix> svd(lf, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double cut = rank_threshold(std::max(lf.rows(), lf.cols()), sv.size() > 0 ? sv(0) : 0.0);
  Index r = 0;
  while (r < sv.size() && sv(r) > cut) ++r;
  const Vector innovation = value - l * g.mean();
  const Vector coeffs = svd.matrixU().leftCols(r).transpose() * innovation;
  Vector mean = g.mean() + f * (svd.matrixV().leftCols(r) * coeffs.cwiseQuotient(sv.head(r)));
  Matrix factor = f * svd.matrixV().rightCols(lf.cols() - r);
  if (factor.cols() == 0) return Gaussian::dirac(std::move(mean));
  return Gaussian::factored(std::move(mean), std::move(factor));
}

/// E[Z^T B Z] = trace(B Sigma) + x^T B x.
inline double quadratic_form_mean(const Gaussian& g, const SpdMatrix& b) {
  detail::require_dim(b.order(), g.dim(), "quadratic_form_mean");
  return g.weighted_trace(b) + b.quadratic_form(g.mean());
}

/// E||M - N||_B^2 for independent M ~ g1, N ~ g2.
inline double expected_sq_distance(const Gaussian& g1, const Gaussian& g2, const SpdMatrix& b) {
  detail::require_dim(g2.dim(), g1.dim(), "expected_sq_distance");
  detail::require_dim(b.order(), g1.dim(), "expected_sq_distance");
  const Vector diff = g1.mean() - g2.mean();
  return b.quadratic_form(diff) + g1.weighted_trace(b) + g2.weighted_trace(b);
}

}  // namespace bcg
