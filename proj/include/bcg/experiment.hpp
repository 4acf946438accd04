#pragma once

// Matrix sources, Jacobi scaling, experiment configuration and the runner
// behind the krylov_calibrate CLI.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bcg/calibration.hpp"
#include "bcg/matrix_market.hpp"
#include "bcg/random.hpp"
#include "bcg/solvers.hpp"

namespace bcg {

/// D^{-1/2} B D^{-1/2} with D = diag(B).
inline SparseMatrix jacobi_precondition(const SparseMatrix& b) {
  if (b.rows() != b.cols()) throw InputError("jacobi_precondition: matrix must be square");
  const Vector d = b.diagonal();
  if (d.size() > 0 && !(d.minCoeff() > 0.0))
    throw InputError("jacobi_precondition: diagonal entries must be positive");
  const Vector s = d.cwiseSqrt().cwiseInverse();
  SparseMatrix scaled = s.asDiagonal() * b * s.asDiagonal();
  // The two triangles can differ in the last bit after scaling.
  SparseMatrix out = 0.5 * (scaled + SparseMatrix(scaled.transpose()));
  for (Index i = 0; i < out.rows(); ++i) out.coeffRef(i, i) = 1.0;
  out.makeCompressed();
  return out;
}

inline Matrix jacobi_precondition(const Matrix& b) {
  if (b.rows() != b.cols()) throw InputError("jacobi_precondition: matrix must be square");
  const Vector d = b.diagonal();
  if (d.size() > 0 && !(d.minCoeff() > 0.0))
    throw InputError("jacobi_precondition: diagonal entries must be positive");
  const Vector s = d.cwiseSqrt().cwiseInverse();
  Matrix out = s.asDiagonal() * b * s.asDiagonal();
  out = detail::symmetrized(out);
  out.diagonal().setOnes();
  return out;
}

inline SpdMatrix jacobi_precondition(const SpdMatrix& b) {
  if (const auto* s = std::get_if<SparseMatrix>(&b.storage())) return SpdMatrix(jacobi_precondition(*s));
  return SpdMatrix(jacobi_precondition(std::get<Matrix>(b.storage())));
}

/// Eigenvalues kappa^{i/(n-1)}, i = 0..n-1.
inline Vector logspace_spectrum(Index n, double kappa) {
  if (n < 1) throw InputError("logspace_spectrum: order must be positive");
  if (!(kappa >= 1.0)) throw InputError("logspace_spectrum: condition number must be at least 1");
  Vector lambda(n);
  for (Index i = 0; i < n; ++i)
    lambda(i) = n == 1 ? 1.0 : std::pow(kappa, static_cast<double>(i) / static_cast<double>(n - 1));
  return lambda;
}

/// Diagonal matrix with log-spaced eigenvalues over [1, kappa].
inline SpdMatrix generate_diag_logspace(Index n, double kappa) {
  const Vector lambda = logspace_spectrum(n, kappa);
  SparseMatrix m(n, n);
  m.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Index i = 0; i < n; ++i) m.insert(i, i) = lambda(i);
  m.makeCompressed();
  return SpdMatrix(std::move(m));
}

/// Q^T diag(lambda) Q with Q orthogonal, drawn from `seed`.
inline SpdMatrix generate_with_spectrum(const Vector& lambda, std::uint64_t seed) {
  const Index n = lambda.size();
  RandomSource rng(seed, 0x5eed);
  Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(n, n));
  const Matrix q = qr.householderQ();
  return SpdMatrix(detail::symmetrized(q.transpose() * lambda.asDiagonal() * q));
}

/// Dense SPD matrix with log-spaced eigenvalues over [1, kappa].
inline SpdMatrix generate_rand_spd(Index n, double kappa, std::uint64_t seed) {
  return generate_with_spectrum(logspace_spectrum(n, kappa), seed);
}

inline constexpr double kDefaultGeneratorKappa = 1e3;
inline constexpr std::uint64_t kDefaultGeneratorSeed = 20240601;

/// Matrix from a file path or `gen:<name>:<n>[:<kappa>]` with name
/// diag-logspace or rand-spd.
inline SpdMatrix load_matrix(const std::string& source) {
  if (source.rfind("gen:", 0) == 0) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : source.substr(4)) {
      if (c == ':') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    parts.push_back(cur);
    if (parts.size() < 2 || parts.size() > 3) throw ConfigError("matrix generator must be gen:<name>:<n>[:<kappa>]");
    Index n = 0;
    double kappa = kDefaultGeneratorKappa;
    try {
      std::size_t used = 0;
      n = static_cast<Index>(std::stoll(parts[1], &used));
      if (used != parts[1].size()) throw std::invalid_argument("n");
      if (parts.size() == 3) {
        kappa = std::stod(parts[2], &used);
        if (used != parts[2].size()) throw std::invalid_argument("kappa");
      }
    } catch (const std::exception&) {
      throw ConfigError("matrix generator: cannot parse '" + source + "'");
    }
    if (n < 1) throw ConfigError("matrix generator: order must be positive");
    if (!(kappa >= 1.0)) throw ConfigError("matrix generator: kappa must be at least 1");
    if (parts[0] == "diag-logspace") return generate_diag_logspace(n, kappa);
    if (parts[0] == "rand-spd") {
      if (n > kMaxDenseOrder) throw ConfigError("rand-spd: order above the dense limit");
      return generate_rand_spd(n, kappa, kDefaultGeneratorSeed);
    }
    throw ConfigError("unknown matrix generator '" + parts[0] + "'");
  }
  return SpdMatrix(read_matrix_market(source));
}

struct ExperimentConfig {
  std::string matrix;
  SolverVariant solver;
  std::vector<Index> checkpoints{10, 100, 300};
  std::size_t n_test = 100;
  std::uint64_t seed = 42;
  /// Jacobi-scale matrices read from files; generated matrices are used as is.
  bool jacobi = true;
  unsigned threads = 0;
  Thresholds thresholds;

  void validate() const {
    if (matrix.empty()) throw ConfigError("no matrix source given");
    if (n_test < 1) throw ConfigError("ntest must be at least 1");
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
      if (checkpoints[i] < 1) throw ConfigError("checkpoints must be positive");
      if (i > 0 && checkpoints[i] <= checkpoints[i - 1])
        throw ConfigError("checkpoints must be strictly increasing");
    }
    if (solver.kind == SolverKind::krylov_approx && solver.approx_rank < 1)
      throw ConfigError("approx-rank must be at least 1");
    if (!(solver.lanczos_eps > 0.0)) throw ConfigError("lanczos-eps must be positive");
  }
};

struct CheckpointRow {
  Index m = 0;
  ZSampleSet z;
  SSampleSet s;
  Verdict z_verdict;
  Verdict s_verdict;
};

struct ExperimentReport {
  ExperimentConfig config;
  Index order = 0;
  Index stored_nonzeros = 0;
  std::vector<CheckpointRow> rows;
  std::vector<SkippedProblem> skipped;
  std::vector<double> convergence;
  double seconds = 0.0;
};

/// Prior and reference of the paper's protocol: N(0, A^{-1}) for both
/// non-Krylov solvers; the Krylov solvers build their own prior and are judged
/// against N(0, A^{-1}) as reference.
inline PriorSpec protocol_prior(const SpdMatrix& a, const SolverVariant& v) {
  const Vector zero = Vector::Zero(a.order());
  return v.is_krylov() ? PriorSpec::krylov(zero) : PriorSpec::inverse_of_a(zero);
}

inline Gaussian protocol_reference(const SpdMatrix& a) {
  return Gaussian::factored(Vector::Zero(a.order()), a.inverse_factor());
}

/// Runs one calibration pass: Z and S share the same test problems.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const SpdMatrix& a) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport rep;
  rep.config = cfg;
  rep.order = a.order();
  rep.stored_nonzeros = a.stored_nonzeros();
  CalibrationOptions opt;
  opt.threads = cfg.threads;
  opt.compute_z = true;
  opt.convergence = true;
  const CalibrationRun run = run_calibration(a, protocol_prior(a, cfg.solver), protocol_reference(a), cfg.solver,
                                             cfg.checkpoints, cfg.n_test, RandomSource(cfg.seed), opt);
  for (const auto& cp : run.checkpoints) {
    CheckpointRow row;
    row.m = cp.m;
    row.z = z_sample_set(cp, run.skipped.size());
    row.s = s_sample_set(cp, run.skipped.size());
    row.z_verdict = verdict_from_z(row.z, cfg.thresholds);
    row.s_verdict = verdict_from_s(row.s, cfg.thresholds);
    rep.rows.push_back(std::move(row));
  }
  rep.skipped = run.skipped;
  rep.convergence = run.convergence;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  SpdMatrix a = load_matrix(cfg.matrix);
  if (cfg.jacobi && cfg.matrix.rfind("gen:", 0) != 0) a = jacobi_precondition(a);
  return run_experiment(cfg, a);
}

}  // namespace bcg
