#include <gtest/gtest.h>

#include <cmath>

#include "bcg/solvers.hpp"
#include "bcg/wasserstein.hpp"
#include "test_util.hpp"

using namespace bcg;
using test::vec;

namespace {

// Reference W2 via explicit matrix square roots (no factor shortcut).
double w2_oracle_sq(const Vector& m1, const Matrix& s1, const Vector& m2, const Matrix& s2) {
  const Matrix r1 = sym_sqrt(s1);
  const Matrix inner = r1 * s2 * r1;
  return (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * sym_sqrt(0.5 * (inner + inner.transpose())).trace();
}

Gaussian random_gaussian(Index n, Index rank, std::uint64_t seed) {
  RandomSource rng(seed, 21);
  return Gaussian::factored(rng.normal_vector(n), rng.normal_matrix(n, rank));
}

}  // namespace

TEST(W2, Examples) {
  const Gaussian g = Gaussian::dense(vec({1, 2}), Matrix::Identity(2, 2));
  EXPECT_NEAR(w2_gaussian(g, g).distance(), 0.0, 1e-7);
  const Gaussian h = Gaussian::dense(vec({3, 4}), Matrix::Identity(2, 2));
  EXPECT_NEAR(w2_gaussian(Gaussian::dense(Vector::Zero(2), Matrix::Identity(2, 2)), h).distance(), 5.0, 1e-12);
  Matrix four(1, 1), one(1, 1);
  four << 4;
  one << 1;
  EXPECT_NEAR(w2_gaussian(Gaussian::dense(Vector::Zero(1), four), Gaussian::dense(Vector::Zero(1), one)).distance(),
              1.0, 1e-12);
}

TEST(W2, ComponentsAddUp) {
  const Gaussian a = random_gaussian(6, 4, 1), b = random_gaussian(6, 3, 2);
  const WassersteinResult r = w2_gaussian(a, b);
  EXPECT_NEAR(r.squared, r.mean_term + r.trace_mu + r.trace_nu - 2.0 * r.cross, 1e-12 * r.squared);
  EXPECT_GE(r.squared, 0.0);
}

TEST(W2, MatchesSquareRootOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Gaussian a = random_gaussian(10, 10, seed), b = random_gaussian(10, 10, seed + 50);
    const double oracle = w2_oracle_sq(a.mean(), a.dense_covariance(), b.mean(), b.dense_covariance());
    EXPECT_NEAR(w2_gaussian(a, b).squared, oracle, 1e-8 * oracle);
  }
}

TEST(WA, IdentityWeightEqualsW2) {
  const SpdMatrix id(Matrix::Identity(7, 7));
  const Gaussian a = random_gaussian(7, 5, 3), b = random_gaussian(7, 7, 4);
  EXPECT_NEAR(wA_gaussian(id, a, b).squared, w2_gaussian(a, b).squared, 1e-10 * w2_gaussian(a, b).squared);
  EXPECT_NEAR(wA_gaussian(id, a, a).distance(), 0.0, 1e-6);
}

TEST(WA, CongruenceWithPushedW2) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Index n = 5 + static_cast<Index>(seed) * 5;
    const SpdMatrix a(test::random_spd(n, 100.0, seed));
    const Gaussian mu = random_gaussian(n, n / 2 + 1, seed + 7);
    const Gaussian nu = Gaussian::dense(RandomSource(seed, 8).normal_vector(n), test::random_psd(n, n, seed + 9));
    const Matrix r = a.sqrt();
    const double pushed = w2_gaussian(affine_push(mu, r, Vector::Zero(n)), affine_push(nu, r, Vector::Zero(n))).squared;
    EXPECT_NEAR(wA_gaussian(a, mu, nu).squared, pushed, 1e-8 * pushed) << n;
  }
}

TEST(WA, Symmetric) {
  const SpdMatrix a(test::random_spd(12, 50.0, 5));
  const Gaussian mu = random_gaussian(12, 6, 11), nu = random_gaussian(12, 9, 12);
  const double ab = wA_gaussian(a, mu, nu).squared, ba = wA_gaussian(a, nu, mu).squared;
  EXPECT_NEAR(ab, ba, 1e-10 * ab);
}

TEST(WA, CommutingCovariancesShortcut) {
  // A = I and both covariances diagonal in the same rotated basis.
  const Index n = 9;
  RandomSource rng(3);
  Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(n, n));
  const Matrix q = qr.householderQ();
  Vector d1(n), d2(n);
  for (Index i = 0; i < n; ++i) {
    d1(i) = 1.0 + static_cast<double>(i);
    d2(i) = 0.5 + 0.1 * static_cast<double>(i * i);
  }
  const Gaussian mu = Gaussian::dense(Vector::Zero(n), q * d1.asDiagonal() * q.transpose());
  const Gaussian nu = Gaussian::dense(Vector::Zero(n), q * d2.asDiagonal() * q.transpose());
  const double shortcut = d1.cwiseProduct(d2).cwiseSqrt().sum();
  EXPECT_NEAR(wA_gaussian(SpdMatrix(Matrix::Identity(n, n)), mu, nu).cross, shortcut, 1e-9 * shortcut);
}

TEST(WAToDirac, Examples) {
  const Index n = 6;
  const SpdMatrix a(test::random_spd(n, 20.0, 6));
  const Vector x = RandomSource(6).normal_vector(n);
  EXPECT_EQ(wA_to_dirac(a, Gaussian::dirac(x), x), 0.0);
  const Matrix s = test::random_psd(n, 3, 6);
  const Gaussian g = Gaussian::dense(x, s);
  EXPECT_NEAR(wA_to_dirac(a, g, x), a.trace_product(s), 1e-12 * a.trace_product(s));
  const Gaussian h = random_gaussian(n, 4, 13);
  const double general = wA_gaussian(a, h, Gaussian::dirac(x)).squared;
  EXPECT_NEAR(wA_to_dirac(a, h, x), general, 1e-10 * general);
}

TEST(KrylovTruncation, Examples) {
  const Vector phi = vec({4, 1, 0.25});
  EXPECT_EQ(krylov_truncation_wA(phi, 0, 3), 0.0);
  EXPECT_EQ(krylov_truncation_wA(phi, 1, 5), 0.0);
  EXPECT_NEAR(krylov_truncation_wA(phi, 0, 1), std::sqrt(1.25), 1e-15);
  EXPECT_THROW(krylov_truncation_wA(phi, 4, 1), InputError);
  EXPECT_THROW(krylov_truncation_wA(phi, 0, 0), InputError);
}

TEST(KrylovTruncation, ExampleAgainstMaterializedPosteriors) {
  // A = I, V = I_3: Gamma_0 = diag(4, 1, 0.25), rank-1 approximation diag(4, 0, 0).
  const SpdMatrix id(Matrix::Identity(3, 3));
  const Gaussian full = Gaussian::krylov(Vector::Zero(3), Matrix::Identity(3, 3), vec({4, 1, 0.25}), id);
  const Gaussian approx = Gaussian::krylov(Vector::Zero(3), Matrix::Identity(3, 1), vec({4}), id);
  EXPECT_NEAR(wA_gaussian(id, full, approx).distance(), std::sqrt(1.25), 1e-12);
}
