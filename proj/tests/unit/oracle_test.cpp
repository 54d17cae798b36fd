#include <doctest.h>

#include <cmath>

#include "condrisk/oracle.hpp"
#include "condrisk/shortfall_dual.hpp"
#include "support/instances.hpp"

using namespace condrisk;
using doctest::Approx;

namespace {

RiskSpec canonical() {
  RandomVector x(2, 2);
  x << 1, -1, 0, 0;
  return RiskSpec(ScenarioSpace::uniform(2), SigmaPartition::trivial(2), x, Aggregator::exponential(Eigen::Vector2d(1, 1)),
                  Eigen::Vector2d::Constant(-2), ClusterConstraint::full_sharing(2));
}

RiskSpec single_agent(double b) {
  return RiskSpec(ScenarioSpace::uniform(2), SigmaPartition::trivial(2), RandomVector::Zero(1, 2),
                  Aggregator::exponential(Eigen::VectorXd::Ones(1)), Eigen::Vector2d::Constant(b),
                  ClusterConstraint::full_sharing(1));
}

}  // namespace

TEST_CASE("grid rho") {
  CHECK(std::abs(grid_min_rho(single_agent(-1.0), -2, 2, 1e-3)(0)) <= 1e-3);
  CHECK(grid_min_rho(canonical(), -2, 2, 1e-3)(0) == Approx(0.2402).epsilon(0.002));
  CHECK(std::abs(grid_min_rho(canonical(), -2, 2, 1e-3)(0) - 0.240229013916555) <= 2e-3);
  const double lo = grid_min_rho(canonical(), -2, 2, 1e-2)(0);
  const double hi = grid_min_rho(canonical().with_b(Eigen::Vector2d::Constant(-1.5)), -2, 2, 1e-2)(0);
  CHECK(hi > lo);
  CHECK_THROWS_AS(grid_min_rho(canonical(), -0.1, 0.1, 1e-2), InvariantError);
}

TEST_CASE("grid penalty") {
  const auto s = single_agent(-std::exp(1.0));
  CHECK(std::abs(grid_max_alpha1(DensityVector::reference(s.space(), 1, s.sigma()), s, -5, 5, 1e-3)(0) - 1.0) <= 1e-3);
  const auto spec = canonical();
  const auto qhat = extract_dual_optimizer(solve_rho(spec), spec);
  CHECK(std::abs(grid_max_alpha1(qhat, spec, -5, 5, 1e-3)(0) - 0.221888143343455) <= 2e-3);
}

TEST_CASE("divergence signature grows with the bound") {
  const auto spec = canonical();
  Eigen::MatrixXd w(2, 2);
  w << 1.0, 1.0, 0.8, 1.2;
  const auto q = DensityVector(spec.space(), w, spec.sigma());
  const double g1 = grid_fairness_gap(q, spec, 1.0, 0.05)(0);
  const double g2 = grid_fairness_gap(q, spec, 2.0, 0.05)(0);
  const double g4 = grid_fairness_gap(q, spec, 4.0, 0.05)(0);
  CHECK(g1 > 0.0);
  CHECK(g2 > g1);
  CHECK(g4 > g2);
  const auto fair = DensityVector::reference(spec.space(), 2, spec.sigma());
  CHECK(std::abs(grid_fairness_gap(fair, spec, 4.0, 0.05)(0)) <= 1e-12);
}

TEST_CASE("static value") {
  CHECK(static_shortfall_value(canonical()) == Approx(0.240229013916555).epsilon(1e-10));
}

TEST_CASE("property: grid agrees with the solver on tiny instances") {
  testkit::Gen gen(9);
  for (int trial = 0; trial < 12; ++trial) {
    const Index n = gen.integer(1, 2);
    const Index k = gen.integer(1, 3);
    ScenarioSpace space = testkit::random_space(gen, k);
    SigmaPartition g = testkit::random_partition(gen, k);
    RandomVector x = testkit::random_x(gen, n, k, -1.0, 1.0);
    const Eigen::VectorXd alphas = testkit::random_alphas(gen, n);
    const RandomVariable b = testkit::random_measurable(gen, g, -1.5 * n, -0.5 * n);
    const auto clusters = trial % 2 ? ClusterConstraint::no_sharing(n) : ClusterConstraint::full_sharing(n);
    const RiskSpec spec(space, g, x, Aggregator::exponential(alphas), b, clusters);
    const auto sol = solve_rho(spec);
    CHECK(testkit::max_abs(grid_min_rho(spec, -4, 4, 1e-3) - sol.rho) <= 2e-3);
    const auto q = extract_dual_optimizer(sol, spec);
    CHECK(testkit::max_abs(grid_max_alpha1(q, spec, -6, 6, 1e-3) - penalty_alpha1(q, spec)) <= 2e-3);
  }
}
