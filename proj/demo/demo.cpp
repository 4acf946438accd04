// Solves one random SPD system with CG and three BayesCG variants and prints
// the posterior summaries side by side.

#include <cstdio>

#include "bcg/bcg.hpp"

int main() {
  using namespace bcg;
  const Index n = 100, m = 20;
  const SpdMatrix a = generate_rand_spd(n, 1e3, kDefaultGeneratorSeed);
  RandomSource rng(1);
  const Vector x_star = a.inverse_factor() * rng.normal_vector(n);
  const Vector b = a.apply(x_star);
  const Vector x0 = Vector::Zero(n);
  const double err0 = a.quadratic_form(x_star - x0);

  const SolveTrace cg_trace = cg(a, b, x0, {m, 0.0});
  std::printf("CG after %d steps: relative A-norm error %.3e\n", static_cast<int>(m),
              std::sqrt(a.quadratic_form(x_star - cg_trace.iterates.back()) / err0));

  const PriorSpec inv = PriorSpec::inverse_of_a(x0);
  RandomSource dir_rng(2);
  const Gaussian rd = bayescg_random_directions(a, b, inv, m, dir_rng);
  std::printf("random directions: error %.3e, trace(A Sigma) %.3e\n",
              a.quadratic_form(x_star - rd.mean()), rd.weighted_trace(a));

  const auto [kp, trace] = krylov_full(a, b, x0, m);
  const Gaussian kg = kp.gaussian();
  std::printf("Krylov posterior: error %.3e, trace(A Gamma) %.3e, Z %.3f (g - m = %lld)\n",
              a.quadratic_form(x_star - kp.mean), kg.weighted_trace(a), z_statistic(x_star, kg),
              static_cast<long long>(kp.rank()));

  const KrylovPosterior ka = krylov_approx(a, b, x0, m, 5);
  std::printf("rank-5 approximation: trace(A Gamma) %.3e, W_A to full %.3e\n", ka.gaussian().weighted_trace(a),
              wA_gaussian(a, kg, ka.gaussian()).distance());
  return 0;
}
