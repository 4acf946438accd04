#pragma once

// Symmetric linear algebra primitives shared by the solvers and the
// calibration statistics: the SPD operator type, weighted norms, symmetric
// square roots, pseudoinverses and numerical rank.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/Sparse>

#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include "bcg/errors.hpp"

namespace bcg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Largest order for which dense eigendecompositions are attempted.
inline constexpr Index kMaxDenseOrder = 2048;

namespace detail {

inline void require_dim(Index got, Index expected, const char* what) {
  if (got != expected) {
    throw InputError(std::string(what) + ": dimension mismatch (got " + std::to_string(got) +
                     ", expected " + std::to_string(expected) + ")");
  }
}

inline void require_dense_order(Index n, const char* what) {
  if (n > kMaxDenseOrder) {
    throw InputError(std::string(what) + ": order " + std::to_string(n) +
                     " exceeds the dense limit " + std::to_string(kMaxDenseOrder));
  }
}

inline Matrix symmetrized(const Matrix& s) { return 0.5 * (s + s.transpose()); }

}  // namespace detail

/// Numerical-rank cutoff `n * eps * ||S||_2` for a matrix of order n.
inline double rank_threshold(Index n, double norm2) {
  return static_cast<double>(n) * std::numeric_limits<double>::epsilon() * norm2;
}

/// Symmetric positive definite operator, stored dense or as compressed sparse rows.
///
/// Symmetry is validated exactly on construction. Positive definiteness is
/// assumed and checked only by validate_positive_definite(). Copies share the
/// immutable storage. Derived dense objects (materialisation, Cholesky factor,
/// inverse, square root) are built lazily, once, and are safe to request from
/// several threads.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix dense) : state_(std::make_shared<State>(std::move(dense))) {
    const auto& a = std::get<Matrix>(state_->storage);
    if (a.rows() != a.cols() || a.rows() == 0) throw InputError("SpdMatrix: matrix must be square and non-empty");
    for (Index j = 0; j < a.cols(); ++j)
      for (Index i = j + 1; i < a.rows(); ++i)
        if (a(i, j) != a(j, i)) throw InputError("SpdMatrix: matrix is not symmetric");
  }

  explicit SpdMatrix(SparseMatrix sparse) {
    sparse.makeCompressed();
    state_ = std::make_shared<State>(std::move(sparse));
    const auto& a = std::get<SparseMatrix>(state_->storage);
    if (a.rows() != a.cols() || a.rows() == 0) throw InputError("SpdMatrix: matrix must be square and non-empty");
    SparseMatrix diff = a - SparseMatrix(a.transpose());
    diff.prune(0.0);
    if (diff.nonZeros() != 0) throw InputError("SpdMatrix: matrix is not symmetric");
  }

  Index order() const {
    return std::visit([](const auto& a) { return a.rows(); }, storage_());
  }

  bool is_sparse() const { return std::holds_alternative<SparseMatrix>(storage_()); }

  /// Stored nonzeros (n*n for dense storage).
  Index stored_nonzeros() const {
    if (const auto* s = std::get_if<SparseMatrix>(&storage_())) return s->nonZeros();
    return order() * order();
  }

  Vector apply(const Vector& x) const {
    detail::require_dim(x.size(), order(), "SpdMatrix::apply");
    return std::visit([&](const auto& a) -> Vector { return a * x; }, storage_());
  }

  Matrix apply(const Matrix& x) const {
    detail::require_dim(x.rows(), order(), "SpdMatrix::apply");
    return std::visit([&](const auto& a) -> Matrix { return a * x; }, storage_());
  }

  double quadratic_form(const Vector& x) const { return x.dot(apply(x)); }

  double entry(Index i, Index j) const {
    if (const auto* d = std::get_if<Matrix>(&storage_())) return (*d)(i, j);
    return std::get<SparseMatrix>(storage_()).coeff(i, j);
  }

  Vector diagonal() const {
    return std::visit([](const auto& a) -> Vector { return a.diagonal(); }, storage_());
  }

  /// trace(A * S) for a square S of matching order.
  double trace_product(const Matrix& s) const {
    detail::require_dim(s.rows(), order(), "SpdMatrix::trace_product");
    detail::require_dim(s.cols(), order(), "SpdMatrix::trace_product");
    if (const auto* d = std::get_if<Matrix>(&storage_())) return d->cwiseProduct(s.transpose()).sum();
    const auto& a = std::get<SparseMatrix>(storage_());
    double t = 0.0;
    for (Index i = 0; i < a.outerSize(); ++i)
      for (SparseMatrix::InnerIterator it(a, i); it; ++it) t += it.value() * s(it.col(), it.row());
    return t;
  }

  const Matrix& dense() const {
    if (const auto* d = std::get_if<Matrix>(&storage_())) return *d;
    std::call_once(state_->dense_once, [&] { state_->dense = Matrix(std::get<SparseMatrix>(storage_())); });
    return state_->dense;
  }

  /// Solves A x = b with a cached dense Cholesky factorisation.
  Vector solve(const Vector& b) const {
    detail::require_dim(b.size(), order(), "SpdMatrix::solve");
    return cholesky().solve(b);
  }

  Matrix solve(const Matrix& b) const {
    detail::require_dim(b.rows(), order(), "SpdMatrix::solve");
    return cholesky().solve(b);
  }

  /// Dense A^{-1}, materialised once.
  const Matrix& inverse() const {
    std::call_once(state_->inverse_once, [&] {
      state_->inverse = detail::symmetrized(cholesky().solve(Matrix::Identity(order(), order())));
    });
    return state_->inverse;
  }

  /// Upper triangular F = L^{-T} with F F^T = A^{-1}, where A = L L^T.
  const Matrix& inverse_factor() const {
    std::call_once(state_->inverse_factor_once, [&] {
      Matrix lower = cholesky().matrixL();
      state_->inverse_factor = lower.transpose().triangularView<Eigen::Upper>().solve(
          Matrix::Identity(order(), order()));
    });
    return state_->inverse_factor;
  }

  /// Symmetric square root A^{1/2}.
  const Matrix& sqrt() const;

  /// Throws NotPsdError unless the smallest eigenvalue is positive (orders <= 2000).
  void validate_positive_definite() const {
    if (order() > 2000) throw InputError("validate_positive_definite: order above 2000");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(dense(), Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
      throw NotPsdError("matrix is not positive definite");
  }

  const std::variant<Matrix, SparseMatrix>& storage() const { return state_->storage; }

 private:
  struct State {
    explicit State(std::variant<Matrix, SparseMatrix> s) : storage(std::move(s)) {}
    std::variant<Matrix, SparseMatrix> storage;
    std::once_flag dense_once, llt_once, inverse_once, inverse_factor_once, sqrt_once;
    Matrix dense;
    Eigen::LLT<Matrix> llt;
    bool llt_ok = false;
    Matrix inverse;
    Matrix inverse_factor;
    Matrix sqrt;
  };

  const Eigen::LLT<Matrix>& cholesky() const {
    std::call_once(state_->llt_once, [&] {
      detail::require_dense_order(order(), "SpdMatrix::cholesky");
      state_->llt.compute(dense());
      state_->llt_ok = state_->llt.info() == Eigen::Success;
    });
    if (!state_->llt_ok) throw NotPsdError("Cholesky factorisation failed: matrix is not positive definite");
    return state_->llt;
  }

  const std::variant<Matrix, SparseMatrix>& storage_() const { return state_->storage; }

  std::shared_ptr<State> state_;
};

/// Factor F (n x l) of a covariance S = F F^T.
struct SymFactor {
  Matrix factor;

  Index order() const { return factor.rows(); }
  Index width() const { return factor.cols(); }
  Matrix covariance() const { return factor * factor.transpose(); }
};

/// ||x||_A = sqrt(x^T A x).
inline double a_norm(const SpdMatrix& a, const Vector& x) {
  detail::require_dim(x.size(), a.order(), "a_norm");
  return std::sqrt(std::max(0.0, a.quadratic_form(x)));
}

/// Symmetric psd square root via eigendecomposition of (S + S^T)/2.
///
/// Eigenvalues in [-tol_eig, 0) are clamped to zero; anything more negative
/// raises NotPsdError. The default tolerance is 1e-8 * ||S||_2.
inline Matrix sym_sqrt(const Matrix& s, std::optional<double> tol_eig = std::nullopt) {
  if (s.rows() != s.cols()) throw InputError("sym_sqrt: matrix must be square");
  detail::require_dense_order(s.rows(), "sym_sqrt");
  if (s.rows() == 0) return s;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrized(s));
  if (eig.info() != Eigen::Success) throw NotPsdError("sym_sqrt: eigendecomposition failed");
  Vector lambda = eig.eigenvalues();
  const double norm2 = lambda.cwiseAbs().maxCoeff();
  const double tol = tol_eig.value_or(1e-8 * norm2);
  if (lambda.minCoeff() < -tol) throw NotPsdError("sym_sqrt: matrix has a negative eigenvalue");
  Vector root = lambda.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

inline const Matrix& SpdMatrix::sqrt() const {
  std::call_once(state_->sqrt_once, [&] { state_->sqrt = sym_sqrt(dense()); });
  return state_->sqrt;
}

/// Number of singular values above `n * eps * ||S||_2`, n = max(rows, cols).
inline Index numerical_rank(const Matrix& s) {
  if (s.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(s);
  const Vector& sigma = svd.singularValues();
  const double cut = rank_threshold(std::max(s.rows(), s.cols()), sigma(0));
  return (sigma.array() > cut).count();
}

/// Eigendecomposition of a symmetric matrix kept around for repeated
/// pseudoinverse applications.
///
/// For symmetric S the singular values are |lambda_i|, so the numerical-rank
/// cutoff and the Moore-Penrose inverse follow directly from the spectrum.
class SymmetricPinv {
 public:
  explicit SymmetricPinv(const Matrix& s, std::optional<double> rank_tol = std::nullopt) {
    if (s.rows() != s.cols()) throw InputError("SymmetricPinv: matrix must be square");
    detail::require_dense_order(s.rows(), "SymmetricPinv");
    if (s.rows() == 0) return;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrized(s));
    if (eig.info() != Eigen::Success) throw Error("SymmetricPinv: eigendecomposition failed");
    const Vector& lambda = eig.eigenvalues();
    const double norm2 = lambda.cwiseAbs().maxCoeff();
    cutoff_ = rank_tol.value_or(rank_threshold(s.rows(), norm2));
    Index kept = (lambda.array().abs() > cutoff_).count();
    basis_.resize(s.rows(), kept);
    inv_values_.resize(kept);
    Index k = 0;
    for (Index i = 0; i < lambda.size(); ++i) {
      if (std::abs(lambda(i)) > cutoff_) {
        basis_.col(k) = eig.eigenvectors().col(i);
        inv_values_(k) = 1.0 / lambda(i);
        ++k;
      }
    }
  }

  Index rank() const { return basis_.cols(); }
  double cutoff() const { return cutoff_; }

  Vector apply(const Vector& y) const {
    detail::require_dim(y.size(), basis_.rows(), "SymmetricPinv::apply");
    if (rank() == 0) return Vector::Zero(y.size());
    Vector coeffs = basis_.transpose() * y;
    return basis_ * inv_values_.cwiseProduct(coeffs);
  }

  Matrix matrix() const { return basis_ * inv_values_.asDiagonal() * basis_.transpose(); }

 private:
  Matrix basis_;
  Vector inv_values_;
  double cutoff_ = 0.0;
};

/// Moore-Penrose inverse of a symmetric matrix, dropping singular values at or
/// below the numerical-rank threshold (or `rank_tol` when given).
inline Matrix pseudo_inverse(const Matrix& s, std::optional<double> rank_tol = std::nullopt) {
  if (s.rows() == 0) return s;
  return SymmetricPinv(s, rank_tol).matrix();
}

/// Minimum-norm least-squares solution q = S^+ y.
inline Vector min_norm_solve(const Matrix& s, const Vector& y) {
  detail::require_dim(y.size(), s.rows(), "min_norm_solve");
  return SymmetricPinv(s).apply(y);
}

}  // namespace bcg
