#pragma once

// CG, BayesCG under general priors, the direct posterior formulas, the
// factored-covariance and random-direction variants, the A-orthonormal Lanczos
// process and BayesCG under the Krylov prior (full and rank-d posteriors).

#include <algorithm>
#include <cmath>
#include <optional>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "bcg/gaussian.hpp"
#include "bcg/linalg.hpp"
#include "bcg/random.hpp"

namespace bcg {

/// Prior N(x0, Sigma0) handed to BayesCG.
///
/// The caller is responsible for x* - x0 lying in range(Sigma0). InverseOfA
/// applies Sigma0 through the operator's cached Cholesky factorisation and
/// never forms A^{-1}. Krylov priors are implicit and only accepted by the
/// Krylov solvers.
class PriorSpec {
 public:
  struct Identity {};
  struct InverseOfA {};
  struct Krylov {};
  using Choice = std::variant<Identity, InverseOfA, DenseCov, FactoredCov, Krylov>;

  static PriorSpec identity(Vector mean) { return PriorSpec(std::move(mean), Identity{}); }
  static PriorSpec inverse_of_a(Vector mean) { return PriorSpec(std::move(mean), InverseOfA{}); }
  static PriorSpec krylov(Vector mean) { return PriorSpec(std::move(mean), Krylov{}); }

  static PriorSpec dense(Vector mean, Matrix sigma) {
    detail::require_dim(sigma.rows(), mean.size(), "PriorSpec::dense");
    detail::require_dim(sigma.cols(), mean.size(), "PriorSpec::dense");
    return PriorSpec(std::move(mean), DenseCov{std::move(sigma)});
  }

  static PriorSpec factored(Vector mean, Matrix factor) {
    detail::require_dim(factor.rows(), mean.size(), "PriorSpec::factored");
    return PriorSpec(std::move(mean), FactoredCov{std::move(factor)});
  }

  const Vector& mean() const { return mean_; }
  const Choice& choice() const { return choice_; }
  bool is_krylov() const { return std::holds_alternative<Krylov>(choice_); }
  bool is_inverse_of_a() const { return std::holds_alternative<InverseOfA>(choice_); }

  /// Sigma0 * W for a vector or matrix W.
  template <class M>
  M apply_covariance(const SpdMatrix& a, const M& w) const {
    check(a);
    detail::require_dim(w.rows(), a.order(), "PriorSpec::apply_covariance");
    return std::visit(
        [&](const auto& c) -> M {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, Identity>) {
            return w;
          } else if constexpr (std::is_same_v<T, InverseOfA>) {
            return a.solve(w);
          } else if constexpr (std::is_same_v<T, DenseCov>) {
            return c.sigma * w;
          } else if constexpr (std::is_same_v<T, FactoredCov>) {
            return c.factor * (c.factor.transpose() * w);
          } else {
            throw InputError("PriorSpec: the Krylov prior has no explicit covariance");
          }
        },
        choice_);
  }

  /// Sigma0 * A * W. Exact (W itself) for the inverse prior.
  template <class M>
  M apply_covariance_a(const SpdMatrix& a, const M& w) const {
    if (is_inverse_of_a()) {
      detail::require_dim(w.rows(), a.order(), "PriorSpec::apply_covariance_a");
      return w;
    }
    return apply_covariance(a, M(a.apply(w)));
  }

  Matrix dense_covariance(const SpdMatrix& a) const {
    check(a);
    const Index n = a.order();
    return std::visit(
        [&](const auto& c) -> Matrix {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, Identity>) {
            return Matrix::Identity(n, n);
          } else if constexpr (std::is_same_v<T, InverseOfA>) {
            return a.inverse();
          } else if constexpr (std::is_same_v<T, DenseCov>) {
            return c.sigma;
          } else if constexpr (std::is_same_v<T, FactoredCov>) {
            return c.factor * c.factor.transpose();
          } else {
            throw InputError("PriorSpec: the Krylov prior has no explicit covariance");
          }
        },
        choice_);
  }

  /// Some F0 with F0 F0^T = Sigma0; L^{-T} for the inverse prior.
  Matrix factor(const SpdMatrix& a) const {
    check(a);
    const Index n = a.order();
    return std::visit(
        [&](const auto& c) -> Matrix {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, Identity>) {
            return Matrix::Identity(n, n);
          } else if constexpr (std::is_same_v<T, InverseOfA>) {
            return a.inverse_factor();
          } else if constexpr (std::is_same_v<T, DenseCov>) {
            return sym_sqrt(c.sigma);
          } else if constexpr (std::is_same_v<T, FactoredCov>) {
            return c.factor;
          } else {
            throw InputError("PriorSpec: the Krylov prior has no explicit covariance");
          }
        },
        choice_);
  }

  Gaussian gaussian(const SpdMatrix& a) const {
    check(a);
    return std::visit(
        [&](const auto& c) -> Gaussian {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, InverseOfA>) {
            return Gaussian::factored(mean_, a.inverse_factor());
          } else if constexpr (std::is_same_v<T, FactoredCov>) {
            return Gaussian::factored(mean_, c.factor);
          } else if constexpr (std::is_same_v<T, Krylov>) {
            throw InputError("PriorSpec: the Krylov prior has no explicit covariance");
          } else {
            return Gaussian::dense_unchecked(mean_, dense_covariance(a));
          }
        },
        choice_);
  }

 private:
  PriorSpec(Vector mean, Choice choice) : mean_(std::move(mean)), choice_(std::move(choice)) {}

  void check(const SpdMatrix& a) const { detail::require_dim(mean_.size(), a.order(), "PriorSpec"); }

  Vector mean_;
  Choice choice_;
};

struct StopCriteria {
  Index max_iters = 0;
  double res_tol = 0.0;
};

/// Iterates x_0..x_m, residual norms ||r_0||..||r_m|| and step sizes
/// (gamma_i for CG, alpha_i for BayesCG), i = 1..m.
struct SolveTrace {
  std::vector<Vector> iterates;
  std::vector<double> residual_norms;
  std::vector<double> step_sizes;

  Index iterations() const { return static_cast<Index>(step_sizes.size()); }
};

struct Posterior {
  Gaussian distribution;
  SolveTrace trace;
};

/// Posterior under the Krylov prior: mean x_m and the factors V, Phi of the
/// remaining (or the next d) directions.
struct KrylovPosterior {
  Vector mean;
  Matrix factor;
  Vector phi;
  /// Grade of r0 when it was detected, i.e. when the iteration ran into the
  /// end of the Krylov space.
  std::optional<Index> grade;
  /// Iterations actually applied to the mean (less than requested when the
  /// grade was reached first).
  Index iteration = 0;
  SpdMatrix op;

  double trace() const { return phi.sum(); }
  Index rank() const { return factor.cols(); }

  Gaussian gaussian() const {
    if (factor.cols() == 0) return Gaussian::dirac(mean);
    return Gaussian::krylov(mean, factor, phi, op);
  }
};

namespace detail {

inline void record(SolveTrace& t, const Vector& x, double res) {
  t.iterates.push_back(x);
  t.residual_norms.push_back(res);
}

}  // namespace detail

/// Conjugate gradients. Stops when ||r_m|| <= res_tol ||b||, on an exactly
/// zero residual, or after max_iters iterations.
inline SolveTrace cg(const SpdMatrix& a, const Vector& b, const Vector& x0, const StopCriteria& stop) {
  detail::require_dim(b.size(), a.order(), "cg");
  detail::require_dim(x0.size(), a.order(), "cg");
  SolveTrace t;
  Vector x = x0;
  Vector r = b - a.apply(x0);
  Vector w = r;
  double rr = r.squaredNorm();
  const double target = stop.res_tol * b.norm();
  detail::record(t, x, std::sqrt(rr));
  if (rr == 0.0 || std::sqrt(rr) <= target) return t;
  for (Index i = 0; i < stop.max_iters; ++i) {
    Vector aw = a.apply(w);
    const double waw = w.dot(aw);
    if (!(waw > 0.0)) throw BreakdownError("cg: w^T A w <= 0 at iteration " + std::to_string(i + 1));
    const double gamma = rr / waw;
    x += gamma * w;
    r -= gamma * aw;
    const double rr_new = r.squaredNorm();
    t.step_sizes.push_back(gamma);
    detail::record(t, x, std::sqrt(rr_new));
    if (rr_new == 0.0 || std::sqrt(rr_new) <= target) break;
    w = r + (rr_new / rr) * w;
    rr = rr_new;
  }
  return t;
}

/// BayesCG with rank-one covariance downdates and a Dense posterior.
///
/// Stops early only on an exactly zero residual. The search-direction
/// normaliser s^T A Sigma0 A s must exceed 1e-14 ||r0||^2.
inline Posterior bayescg(const SpdMatrix& a, const Vector& b, const PriorSpec& prior, Index m) {
  detail::require_dim(b.size(), a.order(), "bayescg");
  if (prior.is_krylov()) throw InputError("bayescg: use krylov_full or krylov_approx for the Krylov prior");
  if (m < 0) throw InputError("bayescg: negative iteration count");
  const Index n = a.order();
  detail::require_dense_order(n, "bayescg");
  SolveTrace t;
  Vector x = prior.mean();
  Vector r = b - a.apply(x);
  double rr = r.squaredNorm();
  const double tiny = 1e-14 * rr;
  detail::record(t, x, std::sqrt(rr));
  if (m == 0 || rr == 0.0) return {prior.gaussian(a), std::move(t)};
  Matrix sigma = prior.dense_covariance(a);
  Vector s = r;
  for (Index i = 0; i < m; ++i) {
    Vector q = prior.apply_covariance_a(a, s);
    Vector aq = a.apply(q);
    const double eta = s.dot(aq);
    if (!(eta > tiny))
      throw BreakdownError("bayescg: search direction in the kernel at iteration " + std::to_string(i + 1));
    const double alpha = rr / eta;
    x += alpha * q;
    sigma.noalias() -= (q / eta) * q.transpose();
    r -= alpha * aq;
    const double rr_new = r.squaredNorm();
    t.step_sizes.push_back(alpha);
    detail::record(t, x, std::sqrt(rr_new));
    if (rr_new == 0.0) break;
    s = r + (rr_new / rr) * s;
    rr = rr_new;
  }
  return {Gaussian::dense_unchecked(std::move(x), detail::symmetrized(sigma)), std::move(t)};
}

/// Posterior after observing S^T A x* = S^T b in closed form:
/// x_m = x0 + Sigma0 A S Lambda^{-1} S^T r0, Sigma_m = Sigma0 - Sigma0 A S Lambda^{-1} S^T A Sigma0,
/// Lambda = S^T A Sigma0 A S.
inline Gaussian bayescg_posterior_direct(const SpdMatrix& a, const Vector& b, const PriorSpec& prior,
                                         const Matrix& s) {
  detail::require_dim(b.size(), a.order(), "bayescg_posterior_direct");
  detail::require_dim(s.rows(), a.order(), "bayescg_posterior_direct");
  if (prior.is_krylov()) throw InputError("bayescg_posterior_direct: Krylov prior not supported");
  if (s.cols() == 0) return prior.gaussian(a);
  detail::require_dense_order(a.order(), "bayescg_posterior_direct");
  const Vector r0 = b - a.apply(prior.mean());
  const Matrix q = prior.apply_covariance_a(a, s);
  const Matrix lambda = detail::symmetrized(s.transpose() * a.apply(q));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(lambda);
  const Vector& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 0.0) || ev.maxCoeff() > 1e14 * ev.minCoeff())
    throw SingularInformationError("bayescg_posterior_direct: S^T A Sigma0 A S is numerically singular");
  const Matrix& u = eig.eigenvectors();
  const Matrix lambda_inv = u * ev.cwiseInverse().asDiagonal() * u.transpose();
  Vector mean = prior.mean() + q * (lambda_inv * (s.transpose() * r0));
  Matrix sigma = prior.dense_covariance(a) - q * lambda_inv * q.transpose();
  return Gaussian::dense_unchecked(std::move(mean), detail::symmetrized(sigma));
}

/// Basis V of the Krylov space of a weight operator B, orthonormal in the
/// B inner product, together with B V.
struct LanczosBasis {
  Matrix basis;
  Matrix weighted;
  /// True when the candidate's B-norm fell below eps before max_dim vectors.
  bool exhausted = false;

  Index size() const { return basis.cols(); }
};

/// A-orthonormal Lanczos with classical Gram-Schmidt applied twice.
///
/// `apply_b` is the weight operator; it also generates the Krylov space. Each
/// step costs one application. Stops when the B-norm of the next candidate is
/// below eps (absolute); every vector accepted before that is returned.
template <class Op>
  requires std::is_invocable_r_v<Vector, Op&, const Vector&>
LanczosBasis modified_lanczos(Op&& apply_b, const Vector& v1, Index max_dim, double eps = 1e-12) {
  const Index n = v1.size();
  if (max_dim < 1) throw InputError("modified_lanczos: max dimension must be positive");
  max_dim = std::min(max_dim, n);
  LanczosBasis out;
  out.basis.resize(n, max_dim);
  out.weighted.resize(n, max_dim);
  Vector bv = apply_b(v1);
  const double norm2 = v1.dot(bv);
  if (!(norm2 > 0.0)) throw BreakdownError("modified_lanczos: v1^T B v1 <= 0");
  double beta = std::sqrt(norm2);
  out.basis.col(0) = v1 / beta;
  out.weighted.col(0) = bv / beta;
  Index k = 1;
  while (k < max_dim) {
    const Index i = k - 1;
    Vector w = out.weighted.col(i);
    if (i > 0) w -= beta * out.basis.col(i - 1);
    const double alpha = w.dot(out.weighted.col(i));
    w -= alpha * out.basis.col(i);
    for (int pass = 0; pass < 2; ++pass) {
      Vector coeffs = out.weighted.leftCols(k).transpose() * w;
      w.noalias() -= out.basis.leftCols(k) * coeffs;
    }
    Vector bw = apply_b(w);
    beta = std::sqrt(std::max(0.0, w.dot(bw)));
    if (beta < eps) {
      out.exhausted = true;
      break;
    }
    out.basis.col(k) = w / beta;
    out.weighted.col(k) = bw / beta;
    ++k;
  }
  out.basis.conservativeResize(n, k);
  out.weighted.conservativeResize(n, k);
  return out;
}

inline LanczosBasis modified_lanczos(const SpdMatrix& a, const Vector& v1, Index max_dim, double eps = 1e-12) {
  detail::require_dim(v1.size(), a.order(), "modified_lanczos");
  return modified_lanczos([&a](const Vector& v) { return a.apply(v); }, v1, max_dim, eps);
}

/// Search directions of random-direction BayesCG: an A Sigma0 A-orthonormal
/// basis of the Krylov space of A Sigma0 A started from s1 ~ N(0, I).
inline LanczosBasis random_search_directions(const SpdMatrix& a, const PriorSpec& prior, Index m,
                                             RandomSource& rng, double eps = 1e-12) {
  if (prior.is_krylov()) throw InputError("random_search_directions: Krylov prior not supported");
  const Vector s1 = rng.normal_vector(a.order());
  auto weight = [&](const Vector& v) -> Vector { return a.apply(prior.apply_covariance_a(a, v)); };
  return modified_lanczos(weight, s1, m, eps);
}

/// BayesCG with random search directions. The posterior covariance does not
/// depend on b.
inline Gaussian bayescg_random_directions(const SpdMatrix& a, const Vector& b, const PriorSpec& prior, Index m,
                                          RandomSource& rng, double eps = 1e-12) {
  detail::require_dim(b.size(), a.order(), "bayescg_random_directions");
  if (m == 0) return prior.gaussian(a);
  const LanczosBasis dirs = random_search_directions(a, prior, m, rng, eps);
  Gaussian post = bayescg_posterior_direct(a, b, prior, dirs.basis);
  // n independent directions: the downdate removes all of Sigma0.
  if (dirs.size() == a.order()) return Gaussian::dirac(post.mean());
  return post;
}

/// Mean and projector columns of factored-covariance BayesCG.
struct FactoredPosterior {
  Vector mean;
  /// Orthonormal columns p_i = F0^T A s_i / sqrt(eta_i); F_k = F0 (I - P_k P_k^T).
  Matrix projector_basis;
  SolveTrace trace;

  /// F_k from the first k columns.
  SymFactor factor_at(const Matrix& f0, Index k) const {
    if (k < 0 || k > projector_basis.cols()) throw InputError("FactoredPosterior::factor_at: index out of range");
    const auto p = projector_basis.leftCols(k);
    return SymFactor{f0 - (f0 * p) * p.transpose()};
  }
};

/// BayesCG with Sigma0 = F0 F0^T and posterior factors F_m = F0 (I - P P^T).
///
/// Stops after m iterations or on an exactly zero residual.
inline FactoredPosterior bayescg_factored(const SpdMatrix& a, const Vector& b, const Vector& x0,
                                          const Matrix& f0, Index m) {
  detail::require_dim(b.size(), a.order(), "bayescg_factored");
  detail::require_dim(x0.size(), a.order(), "bayescg_factored");
  detail::require_dim(f0.rows(), a.order(), "bayescg_factored");
  if (m < 0) throw InputError("bayescg_factored: negative iteration count");
  FactoredPosterior out;
  out.projector_basis.resize(f0.cols(), std::min(m, f0.cols()));
  Vector x = x0;
  Vector r = b - a.apply(x0);
  double rr = r.squaredNorm();
  const double tiny = 1e-14 * rr;
  detail::record(out.trace, x, std::sqrt(rr));
  Vector s = r;
  Index k = 0;
  for (; k < m && rr > 0.0; ++k) {
    if (k == f0.cols()) throw BreakdownError("bayescg_factored: more iterations than factor columns");
    Vector p = f0.transpose() * a.apply(s);
    Vector q = f0 * p;
    Vector aq = a.apply(q);
    const double eta = s.dot(aq);
    if (!(eta > tiny))
      throw BreakdownError("bayescg_factored: search direction in the kernel at iteration " + std::to_string(k + 1));
    out.projector_basis.col(k) = p / std::sqrt(eta);
    const double alpha = rr / eta;
    x += alpha * q;
    r -= alpha * aq;
    const double rr_new = r.squaredNorm();
    out.trace.step_sizes.push_back(alpha);
    detail::record(out.trace, x, std::sqrt(rr_new));
    s = r + (rr_new / rr) * s;
    rr = rr_new;
  }
  out.projector_basis.conservativeResize(f0.cols(), k);
  out.mean = std::move(x);
  return out;
}

/// A-orthonormal basis of the Krylov space of (A, r0) up to the numerical
/// grade, with phi_i = (v_i^T r0)^2. The grade is the Lanczos breakdown or the
/// first i with ||r_i|| <= grade_tol ||r0||, whichever comes first.
struct KrylovBasis {
  Vector x0;
  Vector r0;
  Vector coeffs;
  Matrix basis;
  Vector phi;
  SpdMatrix op;

  Index grade() const { return basis.cols(); }
};

inline KrylovBasis krylov_basis(const SpdMatrix& a, const Vector& b, const Vector& x0, double eps = 1e-12,
                                double grade_tol = 1e-12) {
  detail::require_dim(b.size(), a.order(), "krylov_basis");
  detail::require_dim(x0.size(), a.order(), "krylov_basis");
  const Vector r0 = b - a.apply(x0);
  if (r0.squaredNorm() == 0.0) return {x0, r0, Vector(0), Matrix(a.order(), 0), Vector(0), a};
  LanczosBasis lb = modified_lanczos(a, r0, a.order(), eps);
  Vector c = lb.basis.transpose() * r0;
  // Past convergence phi is rounding noise (sometimes exactly 0); cut there.
  const double stop = grade_tol * r0.norm();
  Vector r = r0;
  Index g = 0;
  while (g < lb.basis.cols() && c(g) != 0.0) {
    r -= c(g) * a.apply(Vector(lb.basis.col(g)));
    ++g;
    if (r.norm() <= stop) break;
  }
  Vector phi = c.head(g).cwiseAbs2();
  return {x0, r0, c.head(g), lb.basis.leftCols(g), std::move(phi), a};
}

/// Full Krylov posterior after m iterations from a precomputed basis.
inline KrylovPosterior krylov_posterior_at(const KrylovBasis& kb, Index m, SolveTrace* trace = nullptr) {
  if (m < 0) throw InputError("krylov_posterior_at: negative iteration count");
  const Index g = kb.grade();
  const Index done = std::min(m, g);
  Vector x = kb.x0;
  if (trace) {
    Vector r = kb.r0;
    detail::record(*trace, x, r.norm());
    for (Index i = 0; i < done; ++i) {
      x += kb.coeffs(i) * kb.basis.col(i);
      r -= kb.coeffs(i) * kb.op.apply(Vector(kb.basis.col(i)));
      trace->step_sizes.push_back(kb.phi(i));
      detail::record(*trace, x, r.norm());
    }
  } else if (done > 0) {
    x += kb.basis.leftCols(done) * kb.coeffs.head(done);
  }
  return {std::move(x), kb.basis.rightCols(g - done), kb.phi.tail(g - done), g, done, kb.op};
}

/// BayesCG under the Krylov prior with full posteriors. When m exceeds the
/// numerical grade g the posterior after g iterations is returned (iteration
/// field < m).
inline std::pair<KrylovPosterior, SolveTrace> krylov_full(const SpdMatrix& a, const Vector& b, const Vector& x0,
                                                          Index m, double eps = 1e-12) {
  const KrylovBasis kb = krylov_basis(a, b, x0, eps);
  SolveTrace t;
  KrylovPosterior post = krylov_posterior_at(kb, m, &t);
  return {std::move(post), std::move(t)};
}

/// BayesCG under the Krylov prior with a rank-d posterior built from d extra
/// CG iterations.
///
/// The grade is detected when ||r_i|| <= grade_tol ||r0||; the rank is then
/// clipped to g - m. Mean arithmetic matches cg() step for step.
inline KrylovPosterior krylov_approx(const SpdMatrix& a, const Vector& b, const Vector& x0, Index m, Index d,
                                     double grade_tol = 1e-12) {
  detail::require_dim(b.size(), a.order(), "krylov_approx");
  detail::require_dim(x0.size(), a.order(), "krylov_approx");
  if (m < 0) throw InputError("krylov_approx: negative iteration count");
  if (d < 1) throw InputError("krylov_approx: posterior rank must be at least 1");
  const Index n = a.order();
  Vector x = x0;
  Vector r = b - a.apply(x0);
  Vector v = r;
  double rr = r.squaredNorm();
  const double stop = grade_tol * grade_tol * rr;
  std::optional<Index> grade;
  Index i = 0;
  auto step = [&](double& gamma, double& eta, Vector& av) {
    av = a.apply(v);
    eta = v.dot(av);
    if (!(eta > 0.0)) throw BreakdownError("krylov_approx: v^T A v <= 0 at iteration " + std::to_string(i + 1));
    gamma = rr / eta;
  };
  Vector av;
  double gamma = 0.0, eta = 0.0;
  while (i < m) {
    if (rr <= stop) {
      grade = i;
      break;
    }
    step(gamma, eta, av);
    x += gamma * v;
    r -= gamma * av;
    const double rr_new = r.squaredNorm();
    v = r + (rr_new / rr) * v;
    rr = rr_new;
    ++i;
  }
  const Index done = i;
  Matrix cols(n, d);
  Vector phi(d);
  Index k = 0;
  while (!grade && k < d) {
    if (rr <= stop) {
      grade = done + k;
      break;
    }
    step(gamma, eta, av);
    cols.col(k) = v / std::sqrt(eta);
    phi(k) = gamma * rr;
    r -= gamma * av;
    const double rr_new = r.squaredNorm();
    v = r + (rr_new / rr) * v;
    rr = rr_new;
    ++k;
  }
  if (!grade && rr <= stop) grade = done + k;
  cols.conservativeResize(n, k);
  phi.conservativeResize(k);
  return {std::move(x), std::move(cols), std::move(phi), grade, done, a};
}

}  // namespace bcg
