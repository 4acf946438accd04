#include <gtest/gtest.h>

#include <cmath>

#include "bcg/gaussian.hpp"
#include "bcg/solvers.hpp"
#include "test_util.hpp"

using namespace bcg;
using test::vec;

TEST(Gaussian, DenseRejectsIndefinite) {
  Matrix s(2, 2);
  s << 1, 0, 0, -0.5;
  EXPECT_THROW(Gaussian::dense(Vector::Zero(2), s), NotPsdError);
  s(1, 1) = -1e-12;
  EXPECT_NO_THROW(Gaussian::dense(Vector::Zero(2), s));
}

TEST(Gaussian, KrylovRequiresPositivePhi) {
  const SpdMatrix a(Matrix::Identity(3, 3));
  EXPECT_THROW(Gaussian::krylov(Vector::Zero(3), Matrix::Identity(3, 2), vec({1.0, 0.0}), a), InputError);
  EXPECT_THROW(Gaussian::krylov(Vector::Zero(3), Matrix::Identity(3, 2), vec({1.0}), a), InputError);
}

TEST(Sample, DiracReturnsMean) {
  RandomSource rng(1);
  const Gaussian g = Gaussian::dirac(vec({1, 2}));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(sample(g, rng), vec({1, 2}));
}

TEST(Sample, StandardNormalMean) {
  RandomSource rng(2);
  const Gaussian g = Gaussian::dense(Vector::Zero(2), Matrix::Identity(2, 2));
  Vector acc = Vector::Zero(2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += sample(g, rng);
  acc /= n;
  EXPECT_LT(acc.cwiseAbs().maxCoeff(), 0.02);
}

TEST(Sample, KernelDirectionIsExactlyZero) {
  RandomSource rng(3);
  Matrix s = Matrix::Zero(2, 2);
  s(0, 0) = 4;
  const Gaussian g = Gaussian::dense(Vector::Zero(2), s);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample(g, rng)(1), 0.0);
}

TEST(Sample, ReproducibleFromSeedAndStream) {
  RandomSource a(7, 3), b(7, 3), c(7, 4);
  const Vector x = a.normal_vector(10), y = b.normal_vector(10), z = c.normal_vector(10);
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
  EXPECT_EQ(RandomSource(7).substream(3).normal_vector(10), x);
}

TEST(AffinePush, Examples) {
  const Gaussian g = Gaussian::dense(vec({1, 0}), Matrix::Identity(2, 2));
  const Gaussian same = affine_push(g, Matrix::Identity(2, 2), Vector::Zero(2));
  EXPECT_EQ(same.mean(), g.mean());
  EXPECT_EQ(same.dense_covariance(), g.dense_covariance());

  Matrix perm(2, 2);
  perm << 0, 1, 1, 0;
  const Gaussian p = affine_push(g, perm, vec({1, 1}));
  EXPECT_EQ(p.mean(), vec({1, 2}));
  EXPECT_LT((p.dense_covariance() - Matrix::Identity(2, 2)).norm(), 1e-15);

  const Matrix a = test::random_spd(6, 10.0, 1);
  const Matrix r = sym_sqrt(a);
  const Gaussian q = affine_push(Gaussian::dense(Vector::Zero(6), Matrix::Identity(6, 6)), r, Vector::Zero(6));
  EXPECT_LT(test::rel_diff(q.dense_covariance(), a), 1e-12);
}

TEST(AffinePush, KeepsFactoredAndDirac) {
  RandomSource rng(5);
  const Matrix f = rng.normal_matrix(4, 2);
  const Matrix m = rng.normal_matrix(3, 4);
  const Gaussian g = affine_push(Gaussian::factored(Vector::Zero(4), f), m, Vector::Zero(3));
  ASSERT_TRUE(std::holds_alternative<FactoredCov>(g.covariance()));
  EXPECT_LT(test::rel_diff(g.dense_covariance(), m * f * f.transpose() * m.transpose()), 1e-13);
  EXPECT_TRUE(affine_push(Gaussian::dirac(Vector::Ones(4)), m, Vector::Zero(3)).is_dirac());
}

TEST(AffinePush, EmpiricalCovarianceOfPushedSamples) {
  RandomSource rng(6);
  const Matrix sigma = test::random_spd(4, 5.0, 2);
  const Matrix f = rng.normal_matrix(3, 4);
  const Gaussian g = Gaussian::dense(Vector::Zero(4), sigma);
  const Matrix target = affine_push(g, f, Vector::Zero(3)).dense_covariance();
  const int n = 100000;
  Matrix acc = Matrix::Zero(3, 3);
  for (int i = 0; i < n; ++i) {
    const Vector y = f * sample(g, rng);
    acc += y * y.transpose();
  }
  acc /= n;
  EXPECT_LT((acc - target).norm() / target.norm(), 0.05);
}

TEST(ConditionOnLinear, Examples) {
  const Gaussian g = Gaussian::dense(Vector::Zero(2), Matrix::Identity(2, 2));
  const Gaussian same = condition_on_linear(g, Matrix(0, 2), Vector(0));
  EXPECT_EQ(same.mean(), g.mean());

  Matrix l(1, 2);
  l << 1, 0;
  const Gaussian c = condition_on_linear(g, l, vec({3}));
  EXPECT_LT((c.mean() - vec({3, 0})).norm(), 1e-15);
  Matrix expect = Matrix::Zero(2, 2);
  expect(1, 1) = 1;
  EXPECT_LT((c.dense_covariance() - expect).norm(), 1e-15);
  EXPECT_THROW(condition_on_linear(g, Matrix::Identity(3, 2), Vector::Zero(3)), InputError);
}

TEST(ConditionOnLinear, MatchesSchurComplementOracle) {
  const Index n = 8, k = 3;
  const Matrix sigma = test::random_spd(n, 20.0, 3);
  RandomSource rng(8);
  const Vector x = rng.normal_vector(n);
  const Matrix l = rng.normal_matrix(k, n);
  const Vector y = rng.normal_vector(k);
  const Gaussian c = condition_on_linear(Gaussian::dense(x, sigma), l, y);
  const Matrix s_y = l * sigma * l.transpose();
  const Matrix gain = sigma * l.transpose() * s_y.inverse();
  EXPECT_LT((c.mean() - (x + gain * (y - l * x))).norm(), 1e-10 * x.norm());
  EXPECT_LT(test::rel_diff(c.dense_covariance(), sigma - gain * l * sigma), 1e-10);
}

// Conditioning the empirical Krylov prior N(x0, V_{1:m+d} Phi V_{1:m+d}^T) on
// V_{1:m}^T A X = V_{1:m}^T b reproduces the rank-d approximate posterior.
// The identity assumes exact arithmetic; pairs where plain CG has already lost
// A-orthogonality of its first m+d directions are outside its reach.
TEST(ConditionOnLinear, EmpiricalKrylovPriorReproducesApproximatePosterior) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Index n = 40;
    const SpdMatrix a(test::random_spd(n, 100.0, seed + 10));
    RandomSource rng(seed, 2);
    const Vector x_star = rng.normal_vector(n);
    const Vector b = a.apply(x_star);
    const Vector x0 = Vector::Zero(n);
    const KrylovBasis kb = krylov_basis(a, b, x0);
    ASSERT_EQ(kb.grade(), n);
    Index covered = 0;
    for (Index k = 2; k <= n; ++k) {
      if (krylov_approx(a, b, x0, 0, k).gaussian().krylov_orthonormality_defect() > 1e-8) break;
      covered = k;
    }
    EXPECT_GE(covered, 14) << seed;
    for (Index m = 1; m < covered; ++m) {
      for (Index d = 1; m + d <= covered; ++d) {
        const Matrix v = kb.basis.leftCols(m + d);
        const Gaussian prior = Gaussian::dense(x0, v * kb.phi.head(m + d).asDiagonal() * v.transpose());
        const Matrix l = kb.basis.leftCols(m).transpose() * a.dense();
        const Gaussian post = condition_on_linear(prior, l, l * x_star);
        const KrylovPosterior approx = krylov_approx(a, b, x0, m, d);
        const Matrix gamma = approx.gaussian().dense_covariance();
        EXPECT_LE((post.mean() - approx.mean).norm(), 1e-8) << m << "," << d;
        EXPECT_LE((post.dense_covariance() - gamma).norm(), 1e-8) << m << "," << d;
      }
    }
  }
}

TEST(QuadraticFormMean, Examples) {
  const SpdMatrix b(test::random_spd(3, 4.0, 1));
  const Vector x = vec({1, -1, 2});
  EXPECT_NEAR(quadratic_form_mean(Gaussian::dirac(x), b), b.quadratic_form(x), 1e-14);
  const SpdMatrix i5(Matrix::Identity(5, 5));
  EXPECT_NEAR(quadratic_form_mean(Gaussian::dense(Vector::Zero(5), Matrix::Identity(5, 5)), i5), 5.0, 1e-14);
  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() = vec({2, 3});
  EXPECT_NEAR(quadratic_form_mean(Gaussian::dense(vec({1, 0}), d), SpdMatrix(Matrix::Identity(2, 2))), 6.0, 1e-14);
}

TEST(ExpectedSqDistance, Examples) {
  const SpdMatrix b(test::random_spd(3, 4.0, 2));
  const Gaussian d = Gaussian::dirac(vec({1, 2, 3}));
  EXPECT_EQ(expected_sq_distance(d, d, b), 0.0);
  const Gaussian g = Gaussian::dense(Vector::Zero(4), Matrix::Identity(4, 4));
  EXPECT_NEAR(expected_sq_distance(g, g, SpdMatrix(Matrix::Identity(4, 4))), 8.0, 1e-14);
}

TEST(ExpectedSqDistance, MonteCarloWithinThreeStandardErrors) {
  const Index n = 5;
  const SpdMatrix b(test::random_spd(n, 10.0, 4));
  RandomSource rng(11);
  const Gaussian g1 = Gaussian::dense(rng.normal_vector(n), test::random_psd(n, 3, 1));
  const Gaussian g2 = Gaussian::factored(rng.normal_vector(n), rng.normal_matrix(n, 2));
  const int count = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < count; ++i) {
    const double v = b.quadratic_form(sample(g1, rng) - sample(g2, rng));
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / count;
  const double se = std::sqrt((sum2 / count - mean * mean) / count);
  EXPECT_LE(std::abs(mean - expected_sq_distance(g1, g2, b)), 3.0 * se);
}

TEST(Representations, MaterializedAgree) {
  const Index n = 12;
  const SpdMatrix a(test::random_spd(n, 50.0, 5));
  RandomSource rng(12);
  const Vector b = a.apply(rng.normal_vector(n));
  const KrylovPosterior kp = krylov_full(a, b, Vector::Zero(n), 4).first;
  const Gaussian k = kp.gaussian();
  const Gaussian f = Gaussian::factored(rng.normal_vector(n), rng.normal_matrix(n, 5));
  const SpdMatrix w(test::random_spd(n, 3.0, 6));
  for (const Gaussian* g : {&k, &f}) {
    const Gaussian d = g->materialized();
    EXPECT_LT(test::rel_diff(d.dense_covariance(), g->dense_covariance()), 1e-10);
    EXPECT_NEAR(quadratic_form_mean(d, w), quadratic_form_mean(*g, w), 1e-10 * quadratic_form_mean(d, w));
    EXPECT_NEAR(expected_sq_distance(d, f, w), expected_sq_distance(*g, f, w), 1e-10 * expected_sq_distance(d, f, w));
  }
  EXPECT_LT(k.krylov_orthonormality_defect(), 1e-8);
}
