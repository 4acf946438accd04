#pragma once

// Z- and S-statistics, the chi-squared reference, Kolmogorov-Smirnov
// comparison, the Monte Carlo calibration driver and verdicts.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bcg/gaussian.hpp"
#include "bcg/linalg.hpp"
#include "bcg/random.hpp"
#include "bcg/solvers.hpp"

namespace bcg {

/// P(f/2, x/2): the chi-squared CDF with f degrees of freedom.
inline double chi_square_cdf(double f, double x) {
  if (!(f > 0.0)) throw InputError("chi_square_cdf: degrees of freedom must be positive");
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * f, 0.5 * x);
}

inline double chi_square_pdf(double f, double x) {
  if (!(f > 0.0)) throw InputError("chi_square_pdf: degrees of freedom must be positive");
  if (x < 0.0) return 0.0;
  if (x == 0.0) return f < 2.0 ? std::numeric_limits<double>::infinity() : (f == 2.0 ? 0.5 : 0.0);
  return boost::math::pdf(boost::math::chi_squared_distribution<double>(f), x);
}

/// sup_x |F_N(x) - F(x)| for the right-continuous empirical CDF F_N, checked
/// at both one-sided limits of every sample.
template <class Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf) {
  if (samples.empty()) throw InputError("ks_statistic: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return std::clamp(d, 0.0, 1.0);
}

/// KS distance to chi-squared with `dof` degrees of freedom; dof = 0 means the
/// point mass at zero.
inline double ks_chi_square(const std::vector<double>& samples, Index dof) {
  if (dof == 0) return ks_statistic(samples, [](double x) { return x >= 0.0 ? 1.0 : 0.0; });
  const double f = static_cast<double>(dof);
  return ks_statistic(samples, [f](double x) { return chi_square_cdf(f, x); });
}

/// y -> V (V^T V)^{-1} Phi^{-1} (V^T V)^{-1} V^T y, the pseudoinverse of
/// V Phi V^T for V with full column rank.
inline Vector krylov_cov_pinv_apply(const KrylovCov& k, const Vector& y) {
  detail::require_dim(y.size(), k.basis.rows(), "krylov_cov_pinv_apply");
  if (k.basis.cols() == 0) return Vector::Zero(y.size());
  const Matrix gram = k.basis.transpose() * k.basis;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const Vector& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 0.0) || ev.maxCoeff() > 1e14 * ev.minCoeff())
    throw IllConditionedError("krylov_cov_pinv_apply: Gram matrix of the factors is ill-conditioned");
  Eigen::LLT<Matrix> llt(gram);
  Vector c = llt.solve(Vector(k.basis.transpose() * y));
  c = c.cwiseQuotient(k.phi);
  return k.basis * llt.solve(c);
}

/// Z-statistic together with the numerical rank of the covariance it used.
struct ZEvaluation {
  double z = 0.0;
  Index rank = 0;
};

/// (x* - x_m)^T Sigma_m^+ (x* - x_m), clamped at 0. Dense and factored
/// covariances go through a minimum-norm solve; Krylov factors use their
/// explicit pseudoinverse and report the factor width as rank.
inline ZEvaluation z_evaluation(const Vector& x_star, const Gaussian& posterior) {
  detail::require_dim(x_star.size(), posterior.dim(), "z_statistic");
  const Vector e = x_star - posterior.mean();
  if (posterior.is_dirac()) return {0.0, 0};
  if (const auto* k = std::get_if<KrylovCov>(&posterior.covariance()))
    return {std::max(0.0, e.dot(krylov_cov_pinv_apply(*k, e))), k->basis.cols()};
  const SymmetricPinv pinv(posterior.dense_covariance());
  return {std::max(0.0, e.dot(pinv.apply(e))), pinv.rank()};
}

inline double z_statistic(const Vector& x_star, const Gaussian& posterior) {
  return z_evaluation(x_star, posterior).z;
}

/// ||x* - x_m||_A^2.
inline double s_statistic(const SpdMatrix& a, const Vector& x_star, const Vector& x_m) {
  detail::require_dim(x_star.size(), a.order(), "s_statistic");
  detail::require_dim(x_m.size(), a.order(), "s_statistic");
  return a.quadratic_form(x_star - x_m);
}

enum class SolverKind { random_directions, inverse_prior, krylov_full, krylov_approx };

inline const char* to_string(SolverKind k) {
  switch (k) {
    case SolverKind::random_directions: return "random-directions";
    case SolverKind::inverse_prior: return "inverse-prior";
    case SolverKind::krylov_full: return "krylov-full";
    case SolverKind::krylov_approx: return "krylov-approx";
  }
  return "?";
}

inline std::optional<SolverKind> parse_solver_kind(const std::string& s) {
  for (auto k : {SolverKind::random_directions, SolverKind::inverse_prior, SolverKind::krylov_full,
                 SolverKind::krylov_approx})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Solver under test. inverse_prior runs factored-covariance BayesCG with the
/// supplied prior; the Krylov kinds ignore the prior covariance.
struct SolverVariant {
  SolverKind kind = SolverKind::random_directions;
  Index approx_rank = 50;
  double lanczos_eps = 1e-12;

  bool is_krylov() const { return kind == SolverKind::krylov_full || kind == SolverKind::krylov_approx; }
};

struct CalibrationOptions {
  /// Worker threads; 0 means KRYLOV_CALIBRATE_THREADS or the hardware count.
  unsigned threads = 0;
  bool compute_z = true;
  /// Record the relative A-norm error of every iterate up to the last checkpoint.
  bool convergence = false;
  /// Largest tolerated fraction of skipped problems.
  double skip_budget = 0.1;
};

/// Per-problem statistics at one checkpoint, ordered by problem index with
/// skipped problems removed.
struct CheckpointSamples {
  Index m = 0;
  std::vector<double> z;
  std::vector<Index> rank;
  std::vector<double> s;
  std::vector<double> t;
};

struct SkippedProblem {
  std::size_t index = 0;
  std::string reason;
};

struct CalibrationRun {
  std::vector<CheckpointSamples> checkpoints;
  std::vector<SkippedProblem> skipped;
  /// Mean over problems of ||x* - x_i||_A / ||x* - x_0||_A, i = 0..last checkpoint.
  std::vector<double> convergence;
  std::size_t n_test = 0;
};

inline unsigned worker_count(unsigned requested) {
  unsigned n = requested;
  if (n == 0) {
    n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("KRYLOV_CALIBRATE_THREADS")) {
      char* end = nullptr;
      const long cap = std::strtol(env, &end, 10);
      if (end != env && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
  }
  return std::max(1u, n);
}

namespace detail {

struct ProblemResult {
  bool skipped = false;
  std::string reason;
  std::vector<double> z, s, t;
  std::vector<Index> rank;
  std::vector<double> rel_error;
};

struct CheckpointStat {
  Vector mean;
  std::optional<Gaussian> posterior;
  double trace = 0.0;
};

inline std::vector<double> relative_errors(const SpdMatrix& a, const Vector& x_star, const std::vector<Vector>& xs,
                                           std::size_t length) {
  std::vector<double> out(length, 0.0);
  const double e0 = a_norm(a, x_star - xs.front());
  for (std::size_t i = 0; i < length; ++i) {
    const Vector& x = xs[std::min(i, xs.size() - 1)];
    out[i] = e0 > 0.0 ? a_norm(a, x_star - x) / e0 : 0.0;
  }
  return out;
}

/// Runs the solver once to the last checkpoint and evaluates every checkpoint.
inline ProblemResult run_problem(const SpdMatrix& a, const PriorSpec& prior, const Gaussian& reference,
                                 const SolverVariant& variant, const std::vector<Index>& checkpoints,
                                 const Matrix* f0, RandomSource rng, const CalibrationOptions& opt) {
  ProblemResult res;
  const Vector x_star = sample(reference, rng);
  const Vector b = a.apply(x_star);
  const Vector& x0 = prior.mean();
  const Index last = checkpoints.empty() ? 0 : checkpoints.back();
  const std::size_t curve_len = static_cast<std::size_t>(last) + 1;
  std::vector<CheckpointStat> stats;

  switch (variant.kind) {
    case SolverKind::random_directions: {
      const LanczosBasis dirs = random_search_directions(a, prior, std::max<Index>(last, 1), rng, variant.lanczos_eps);
      for (Index m : checkpoints) {
        Gaussian post = bayescg_posterior_direct(a, b, prior, dirs.basis.leftCols(std::min(m, dirs.size())));
        const double t = post.weighted_trace(a);
        stats.push_back({post.mean(), std::move(post), t});
      }
      if (opt.convergence) {
        const Vector r0 = b - a.apply(x0);
        const Matrix q = prior.apply_covariance_a(a, dirs.basis);
        std::vector<Vector> xs{x0};
        for (Index i = 0; i < dirs.size(); ++i) {
          const double lambda = dirs.basis.col(i).dot(dirs.weighted.col(i));
          xs.push_back(xs.back() + q.col(i) * (dirs.basis.col(i).dot(r0) / lambda));
        }
        res.rel_error = relative_errors(a, x_star, xs, curve_len);
      }
      break;
    }
    case SolverKind::inverse_prior: {
      const FactoredPosterior fp = bayescg_factored(a, b, x0, *f0, last);
      const auto& xs = fp.trace.iterates;
      for (Index m : checkpoints) {
        const Index k = std::min(m, fp.projector_basis.cols());
        SymFactor f = fp.factor_at(*f0, k);
        const double t = f.factor.cwiseProduct(a.apply(f.factor)).sum();
        Gaussian post = Gaussian::factored(xs[static_cast<std::size_t>(k)], std::move(f.factor));
        stats.push_back({post.mean(), std::move(post), t});
      }
      if (opt.convergence) res.rel_error = relative_errors(a, x_star, xs, curve_len);
      break;
    }
    case SolverKind::krylov_full: {
      const KrylovBasis kb = krylov_basis(a, b, x0, variant.lanczos_eps);
      for (Index m : checkpoints) {
        KrylovPosterior kp = krylov_posterior_at(kb, m);
        stats.push_back({kp.mean, kp.gaussian(), kp.trace()});
      }
      if (opt.convergence) {
        SolveTrace tr;
        krylov_posterior_at(kb, last, &tr);
        res.rel_error = relative_errors(a, x_star, tr.iterates, curve_len);
      }
      break;
    }
    case SolverKind::krylov_approx: {
      for (Index m : checkpoints) {
        KrylovPosterior kp = krylov_approx(a, b, x0, m, variant.approx_rank);
        stats.push_back({kp.mean, kp.gaussian(), kp.trace()});
      }
      if (opt.convergence) {
        const SolveTrace tr = cg(a, b, x0, {last, 0.0});
        res.rel_error = relative_errors(a, x_star, tr.iterates, curve_len);
      }
      break;
    }
  }

  for (auto& st : stats) {
    res.s.push_back(s_statistic(a, x_star, st.mean));
    res.t.push_back(st.trace);
    if (opt.compute_z) {
      const ZEvaluation ze = z_evaluation(x_star, *st.posterior);
      res.z.push_back(ze.z);
      res.rank.push_back(ze.rank);
    }
  }
  return res;
}

}  // namespace detail

/// Monte Carlo driver shared by the Z- and S-statistic samplers.
///
/// Problem i draws x* ~ reference from stream i of `rng`'s seed, sets
/// b = A x*, and runs the solver once to the last checkpoint. Results do not
/// depend on the worker count. Problems whose solver breaks down are skipped
/// and listed; exceeding the skip budget raises SkipBudgetError.
inline CalibrationRun run_calibration(const SpdMatrix& a, const PriorSpec& prior, const Gaussian& reference,
                                      const SolverVariant& variant, std::vector<Index> checkpoints,
                                      std::size_t n_test, const RandomSource& rng,
                                      const CalibrationOptions& opt = {}) {
  if (n_test < 1) throw InputError("run_calibration: need at least one test problem");
  detail::require_dim(reference.dim(), a.order(), "run_calibration");
  detail::require_dim(prior.mean().size(), a.order(), "run_calibration");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 0) throw InputError("run_calibration: negative checkpoint");
    if (i > 0 && checkpoints[i] <= checkpoints[i - 1])
      throw InputError("run_calibration: checkpoints must be strictly increasing");
  }
  if (variant.kind == SolverKind::krylov_approx && variant.approx_rank < 1)
    throw InputError("run_calibration: approximate rank must be at least 1");

  std::optional<Matrix> f0;
  if (variant.kind == SolverKind::inverse_prior) f0 = prior.factor(a);
  if (!variant.is_krylov() && prior.is_inverse_of_a()) a.inverse();  // warm the shared cache

  std::vector<detail::ProblemResult> results(n_test);
  std::vector<std::exception_ptr> failures(n_test);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n_test; i = next++) {
      try {
        results[i] = detail::run_problem(a, prior, reference, variant, checkpoints, f0 ? &*f0 : nullptr,
                                         rng.substream(i), opt);
      } catch (const BreakdownError& e) {
        results[i] = {true, e.what(), {}, {}, {}, {}, {}};
      } catch (const SingularInformationError& e) {
        results[i] = {true, e.what(), {}, {}, {}, {}, {}};
      } catch (const IllConditionedError& e) {
        results[i] = {true, e.what(), {}, {}, {}, {}, {}};
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = std::min<unsigned>(worker_count(opt.threads), static_cast<unsigned>(n_test));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < n_test; ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const Error& e) {
      throw Error("test problem " + std::to_string(i) + ": " + e.what());
    }
  }

  CalibrationRun run;
  run.n_test = n_test;
  for (Index m : checkpoints) run.checkpoints.push_back({m, {}, {}, {}, {}});
  std::vector<double> curve_sum;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n_test; ++i) {
    const auto& r = results[i];
    if (r.skipped) {
      run.skipped.push_back({i, r.reason});
      continue;
    }
    ++used;
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      auto& cp = run.checkpoints[c];
      cp.s.push_back(r.s[c]);
      cp.t.push_back(r.t[c]);
      if (opt.compute_z) {
        cp.z.push_back(r.z[c]);
        cp.rank.push_back(r.rank[c]);
      }
    }
    if (opt.convergence) {
      if (curve_sum.empty()) curve_sum.assign(r.rel_error.size(), 0.0);
      for (std::size_t k = 0; k < curve_sum.size(); ++k) curve_sum[k] += r.rel_error[k];
    }
  }
  if (static_cast<double>(run.skipped.size()) > opt.skip_budget * static_cast<double>(n_test)) {
    throw SkipBudgetError(std::to_string(run.skipped.size()) + " of " + std::to_string(n_test) +
                          " test problems broke down; first: " + run.skipped.front().reason);
  }
  for (double v : curve_sum) run.convergence.push_back(v / static_cast<double>(used));
  return run;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Population standard deviation.
inline double std_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mu = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

/// Lower median.
inline Index median_rank(std::vector<Index> ranks) {
  if (ranks.empty()) return 0;
  const std::size_t k = (ranks.size() - 1) / 2;
  std::nth_element(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(k), ranks.end());
  return ranks[k];
}

struct ZSampleSet {
  std::vector<double> samples;
  Index dof = 0;
  double ks = 0.0;
  double mean = 0.0;
  std::size_t skipped = 0;

  double chi2_mean() const { return static_cast<double>(dof); }
};

struct SSampleSet {
  std::vector<double> s;
  std::vector<double> t;
  double h = 0.0;
  double trace_mean = 0.0;
  double trace_std = 0.0;
  std::size_t skipped = 0;
};

inline ZSampleSet z_sample_set(const CheckpointSamples& cp, std::size_t skipped = 0) {
  if (cp.z.empty()) throw InputError("z_sample_set: no Z samples recorded");
  ZSampleSet out;
  out.samples = cp.z;
  out.dof = median_rank(cp.rank);
  out.ks = ks_chi_square(out.samples, out.dof);
  out.mean = mean_of(out.samples);
  out.skipped = skipped;
  return out;
}

inline SSampleSet s_sample_set(const CheckpointSamples& cp, std::size_t skipped = 0) {
  SSampleSet out;
  out.s = cp.s;
  out.t = cp.t;
  out.h = mean_of(out.s);
  out.trace_mean = mean_of(out.t);
  out.trace_std = std_of(out.t);
  out.skipped = skipped;
  return out;
}

/// Z-statistic samples at iteration m.
inline ZSampleSet sample_z(const SpdMatrix& a, const PriorSpec& prior, const Gaussian& reference,
                           const SolverVariant& variant, Index m, std::size_t n_test, const RandomSource& rng,
                           const CalibrationOptions& opt = {}) {
  CalibrationOptions o = opt;
  o.compute_z = true;
  const CalibrationRun run = run_calibration(a, prior, reference, variant, {m}, n_test, rng, o);
  return z_sample_set(run.checkpoints.front(), run.skipped.size());
}

/// S-statistic samples and traces at iteration m.
inline SSampleSet sample_s(const SpdMatrix& a, const PriorSpec& prior, const Gaussian& reference,
                           const SolverVariant& variant, Index m, std::size_t n_test, const RandomSource& rng,
                           const CalibrationOptions& opt = {}) {
  CalibrationOptions o = opt;
  o.compute_z = false;
  const CalibrationRun run = run_calibration(a, prior, reference, variant, {m}, n_test, rng, o);
  return s_sample_set(run.checkpoints.front(), run.skipped.size());
}

struct Thresholds {
  double ks_cal = 0.25;
  double rel_cal = 0.1;
};

enum class VerdictKind { calibrated, pessimistic, optimistic };

inline const char* to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::calibrated: return "Calibrated";
    case VerdictKind::pessimistic: return "Pessimistic";
    case VerdictKind::optimistic: return "Optimistic";
  }
  return "?";
}

/// Classification plus its evidence: the KS value for Z, the relative
/// difference of means for S. `leaning` is the side the sample mean falls on.
struct Verdict {
  VerdictKind kind = VerdictKind::calibrated;
  double evidence = 0.0;
  VerdictKind leaning = VerdictKind::calibrated;
};

inline Verdict verdict_from_z(const ZSampleSet& z, const Thresholds& th = {}) {
  Verdict v;
  v.evidence = z.ks;
  if (z.mean < z.chi2_mean()) v.leaning = VerdictKind::pessimistic;
  else if (z.mean > z.chi2_mean()) v.leaning = VerdictKind::optimistic;
  v.kind = z.ks <= th.ks_cal ? VerdictKind::calibrated : v.leaning;
  return v;
}

inline Verdict verdict_from_s(const SSampleSet& s, const Thresholds& th = {}) {
  Verdict v;
  v.evidence = std::abs(s.trace_mean - s.h) / std::max(s.h, std::numeric_limits<double>::min());
  if (s.h < s.trace_mean) v.leaning = VerdictKind::pessimistic;
  else if (s.h > s.trace_mean) v.leaning = VerdictKind::optimistic;
  v.kind = v.evidence <= th.rel_cal ? VerdictKind::calibrated : v.leaning;
  return v;
}

struct ProjectorCheck {
  Index rank = 0;
  double ks = 0.0;
  double mean = 0.0;
};

/// Squared norms of N samples of N(0, P) against chi-squared with rank(P) dof.
inline ProjectorCheck chi_sq_projector_check(const Matrix& p, std::size_t n, RandomSource& rng) {
  if (p.rows() != p.cols()) throw InputError("chi_sq_projector_check: P must be square");
  if (n < 1) throw InputError("chi_sq_projector_check: need at least one sample");
  const double scale = std::max(1.0, p.norm());
  if ((p - p.transpose()).norm() > 1e-10 * scale || (p * p - p).norm() > 1e-10 * scale)
    throw InputError("chi_sq_projector_check: P is not an orthogonal projector");
  const Gaussian g = Gaussian::factored(Vector::Zero(p.rows()), detail::symmetrized(p));
  std::vector<double> sq(n);
  for (auto& v : sq) v = sample(g, rng).squaredNorm();
  ProjectorCheck out;
  out.rank = numerical_rank(p);
  out.ks = ks_chi_square(sq, out.rank);
  out.mean = mean_of(sq);
  return out;
}

}  // namespace bcg
