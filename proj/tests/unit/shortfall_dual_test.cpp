#include <doctest.h>

#include <cmath>

#include "condrisk/exponential.hpp"
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

TEST_CASE("penalty examples") {
  const auto s1 = single_agent(-std::exp(1.0));
  CHECK(penalty_alpha1(DensityVector::reference(s1.space(), 1, s1.sigma()), s1)(0) == Approx(1.0).epsilon(1e-10));

  const auto spec = canonical();
  const auto qhat = extract_dual_optimizer(solve_rho(spec), spec);
  CHECK(qhat.q()(0, 0) == Approx(0.537882842739990).epsilon(1e-9));
  CHECK(qhat.q()(1, 1) == Approx(1.462117157260010).epsilon(1e-9));
  CHECK(penalty_alpha1(qhat, spec)(0) == Approx(0.221888143343455).epsilon(1e-9));
}

TEST_CASE("unequal densities inside a sharing group leave Q1") {
  const auto spec = canonical();
  Eigen::MatrixXd w(2, 2);
  w << 1.0, 1.0, 0.8, 1.2;
  const auto q = DensityVector(spec.space(), w, spec.sigma());
  CHECK(fairness_excess(q, spec) > 1e-8);
  CHECK_FALSE(in_q1(q, spec));
  CHECK_THROWS_AS(dual_value(q, spec), DivergenceError);
  // The same measure is admissible when nobody shares.
  const RiskSpec apart(spec.space(), spec.sigma(), spec.x(), spec.aggregator(), spec.b(),
                       ClusterConstraint::no_sharing(2));
  CHECK(in_q1(q, apart));
}

TEST_CASE("zero density: finite for bounded utilities, divergent otherwise") {
  const auto spec = canonical();
  Eigen::MatrixXd w(2, 2);
  w << 2.0, 0.0, 2.0, 0.0;
  const auto q = DensityVector(spec.space(), w, spec.sigma());
  // Raw exponentials are bounded by 0, so the unpriced atom adds at most sup U.
  CHECK(std::isfinite(penalty_alpha1(q, spec)(0)));
  CHECK(in_q1(q, spec));

  const auto unbounded = UnivariateUtility::custom([](double x) { return x - std::exp(-x); },
                                                   [](double x) { return 1.0 + std::exp(-x); },
                                                   [](double x) { return -std::exp(-x); });
  const RiskSpec open(spec.space(), spec.sigma(), spec.x(), Aggregator({unbounded, unbounded}), spec.b(),
                      spec.clusters());
  CHECK_THROWS_AS(penalty_alpha1(q, open), DivergenceError);
  CHECK_FALSE(in_q1(q, open));
}

TEST_CASE("dual value chain on the canonical instance") {
  const auto spec = canonical();
  const auto sol = solve_rho(spec);
  const auto qhat = extract_dual_optimizer(sol, spec);
  CHECK(dual_value(qhat, spec)(0) == Approx(0.240229013916555).epsilon(1e-9));
  const auto p = DensityVector::reference(spec.space(), 2, spec.sigma());
  CHECK(dual_value(p, spec)(0) <= sol.rho(0) + 5e-9);
  CHECK(rho_with_measure(qhat, spec)(0) == Approx(sol.rho(0)).epsilon(1e-9));

  const auto zero = single_agent(-1.0);
  const auto pz = DensityVector::reference(zero.space(), 1, zero.sigma());
  CHECK(std::abs(dual_value(pz, zero)(0)) <= 1e-10);
  CHECK(std::abs(rho_with_measure(pz, zero)(0)) <= 1e-10);
}

TEST_CASE("dual optimizer shapes") {
  const auto zero = canonical().with_x(RandomVector::Zero(2, 2));
  const auto q0 = extract_dual_optimizer(solve_rho(zero), zero);
  CHECK(testkit::max_abs(q0.q().array() - 1.0) <= 1e-9);

  const auto base = canonical();
  RandomVector x(2, 2);
  x << 1, -1, -0.5, 0.8;
  const RiskSpec apart(base.space(), base.sigma(), x, base.aggregator(), base.b(), ClusterConstraint::no_sharing(2));
  const auto sol = solve_rho(apart);
  const auto q = extract_dual_optimizer(sol, apart);
  CHECK(testkit::max_abs(q.q().row(0) - q.q().row(1)) > 1e-3);
  CHECK(normalization_defect(apart.space(), q.row(0), apart.sigma()) <= 1e-12);
  CHECK(std::abs(dual_report(q, apart, sol).gap(0)) <= 5e-9);
}

TEST_CASE("property: weak and strong duality, fairness, conjugate bound") {
  testkit::Gen gen(31);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = gen.integer(1, 4);
    const Index h = gen.integer(1, static_cast<int>(n));
    const auto spec = testkit::random_general_spec(gen, gen.integer(1, 6), n, h, false);
    const auto sol = solve_rho(spec);
    const auto qhat = extract_dual_optimizer(sol, spec);
    const auto rep = dual_report(qhat, spec, sol);
    CHECK(rep.in_q1);
    CHECK(rep.gap.cwiseAbs().maxCoeff() <= 5e-9);
    const auto fair = sum_cond_exp_under(spec.space(), qhat, sol.y_hat);
    CHECK(testkit::max_abs(fair - sol.rho) <= 5e-9);

    for (int r = 0; r < 5; ++r) {
      const auto q = testkit::random_fair_density(gen, spec);
      REQUIRE(in_q1(q, spec));
      CHECK((dual_value(q, spec) - sol.rho).maxCoeff() <= 5e-9);
      CHECK((rho_with_measure(q, spec) - sol.rho).maxCoeff() <= 5e-9);
    }
  }
}

TEST_CASE("property: conjugate bound for exponential utilities") {
  testkit::Gen gen(41);
  for (int trial = 0; trial < 30; ++trial) {
    const auto spec = testkit::random_exp_spec(gen, {8, 3});
    const auto q = testkit::random_fair_density(gen, spec);
    const auto a1 = penalty_alpha1(q, spec);
    for (int r = 0; r < 5; ++r) {
      const auto lambda = testkit::random_measurable(gen, spec.sigma(), 0.05, 5.0);
      CHECK((a1 - conjugate_penalty_bound(q, spec, lambda)).maxCoeff() <= 1e-9);
    }
    CHECK(testkit::max_abs(conjugate_penalty_min(q, spec) - a1) <= 1e-7);
  }
}

TEST_CASE("fairness spanning family against random feasible allocations") {
  testkit::Gen gen(57);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = gen.integer(2, 4);
    const auto spec = testkit::random_general_spec(gen, gen.integer(1, 6), n, gen.integer(1, static_cast<int>(n)), false);
    const auto q = testkit::random_fair_density(gen, spec);
    for (int r = 0; r < 10; ++r) {
      // Feasible Y: arbitrary inside each group, with G-measurable group totals.
      RandomVector y = testkit::random_x(gen, n, spec.atoms());
      for (const auto& grp : spec.clusters().groups()) {
        const auto tot = testkit::random_measurable(gen, spec.sigma(), -2, 2);
        RandomVariable cur = RandomVariable::Zero(spec.atoms());
        for (Index i : grp) cur += y.row(i).transpose();
        y.row(grp.front()) += (tot - cur).transpose();
      }
      REQUIRE(spec.clusters().admits(y, spec.sigma(), 1e-9));
      const auto lhs = sum_cond_exp_under(spec.space(), q, y);
      CHECK((lhs - y.colwise().sum().transpose()).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}
