#pragma once

// Closed-form 2- and A-Wasserstein distances between Gaussians.

#include <algorithm>
#include <cmath>

#include "bcg/gaussian.hpp"
#include "bcg/linalg.hpp"

namespace bcg {

/// Squared distance = mean_term + trace_mu + trace_nu - 2 cross, clamped at 0.
struct WassersteinResult {
  double squared = 0.0;
  double mean_term = 0.0;
  double trace_mu = 0.0;
  double trace_nu = 0.0;
  double cross = 0.0;

  double distance() const { return std::sqrt(squared); }
};

namespace detail {

inline WassersteinResult assemble(double mean_term, double trace_mu, double trace_nu, double cross) {
  WassersteinResult r{0.0, mean_term, trace_mu, trace_nu, cross};
  r.squared = std::max(0.0, mean_term + trace_mu + trace_nu - 2.0 * cross);
  return r;
}

inline double nuclear_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

/// trace((S_mu^{1/2} S_nu S_mu^{1/2})^{1/2}) in the B geometry.
///
/// With S = F F^T the inner matrix is (S_mu^{1/2} F_nu)(S_mu^{1/2} F_nu)^T,
/// whose square root has the singular values of F_mu^T B F_nu as eigenvalues.
/// Working with the small cross product avoids square roots of rounding noise.
inline double cross_term(const Matrix& f_mu, const Matrix& b_f_nu) {
  if (f_mu.cols() == 0 || b_f_nu.cols() == 0) return 0.0;
  return nuclear_norm(f_mu.transpose() * b_f_nu);
}

}  // namespace detail

/// W2(mu, nu)^2 = ||x_mu - x_nu||^2 + tr S_mu + tr S_nu - 2 tr (S_mu^{1/2} S_nu S_mu^{1/2})^{1/2}.
inline WassersteinResult w2_gaussian(const Gaussian& mu, const Gaussian& nu) {
  detail::require_dim(nu.dim(), mu.dim(), "w2_gaussian");
  const Matrix f_mu = mu.square_root_factor();
  const Matrix f_nu = nu.square_root_factor();
  return detail::assemble((mu.mean() - nu.mean()).squaredNorm(), f_mu.squaredNorm(), f_nu.squaredNorm(),
                          detail::cross_term(f_mu, f_nu));
}

/// A-Wasserstein distance: W2 after pushing both distributions through A^{1/2}.
inline WassersteinResult wA_gaussian(const SpdMatrix& a, const Gaussian& mu, const Gaussian& nu) {
  detail::require_dim(mu.dim(), a.order(), "wA_gaussian");
  detail::require_dim(nu.dim(), a.order(), "wA_gaussian");
  const Matrix f_mu = mu.square_root_factor();
  const Matrix f_nu = nu.square_root_factor();
  const Matrix af_nu = f_nu.cols() > 0 ? a.apply(f_nu) : f_nu;
  const double t_mu = f_mu.cols() > 0 ? f_mu.cwiseProduct(a.apply(f_mu)).sum() : 0.0;
  const double t_nu = f_nu.cwiseProduct(af_nu).sum();
  return detail::assemble(a.quadratic_form(mu.mean() - nu.mean()), t_mu, t_nu,
                          detail::cross_term(f_mu, af_nu));
}

/// Squared A-Wasserstein distance to the Dirac at x*: ||x_m - x*||_A^2 + trace(A Sigma_m).
inline double wA_to_dirac(const SpdMatrix& a, const Gaussian& mu, const Vector& x_star) {
  detail::require_dim(x_star.size(), a.order(), "wA_to_dirac");
  detail::require_dim(mu.dim(), a.order(), "wA_to_dirac");
  return a.quadratic_form(mu.mean() - x_star) + mu.weighted_trace(a);
}

/// A-Wasserstein distance between the full Krylov posterior after m iterations
/// and its rank-d approximation: sqrt(phi_{m+d+1} + ... + phi_g).
///
/// d is clipped to g - m.
inline double krylov_truncation_wA(const Vector& phi, Index m, Index d) {
  const Index g = phi.size();
  if (m < 0 || m > g) throw InputError("krylov_truncation_wA: m outside [0, g]");
  if (d < 1) throw InputError("krylov_truncation_wA: d must be at least 1");
  const Index start = std::min(g, m + d);
  return std::sqrt(phi.tail(g - start).sum());
}

}  // namespace bcg
