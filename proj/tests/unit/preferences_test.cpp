#include <doctest.h>

#include <cmath>

#include "condrisk/preferences.hpp"
#include "support/instances.hpp"

using namespace condrisk;
using doctest::Approx;

TEST_CASE("aggregator values") {
  CHECK(Aggregator::exponential(Eigen::Vector2d(1, 1)).value(Eigen::Vector2d(0, 0)) == Approx(-2.0));
  CHECK(Aggregator::exponential(Eigen::Vector2d(1, 2)).value(Eigen::Vector2d(1, 0.5)) ==
        Approx(-2.0 * std::exp(-1.0)).epsilon(1e-14));
  Aggregator shifted({UnivariateUtility::exponential(1, true), UnivariateUtility::exponential(1, true)},
                     LambdaAggregator::composite(UnivariateUtility::exponential(1, true), Eigen::Vector2d(1, 1)));
  CHECK(shifted.value(Eigen::Vector2d(0, 0)) == Approx(0.0));
}

TEST_CASE("aggregator gradients") {
  const auto g1 = Aggregator::exponential(Eigen::Vector2d(1, 1)).gradient(Eigen::Vector2d(0, 0));
  CHECK(g1(0) == Approx(1.0));
  CHECK(g1(1) == Approx(1.0));
  const auto g2 = Aggregator::exponential(Eigen::Vector2d(2, 3)).gradient(Eigen::Vector2d(0, 0));
  CHECK(g2(0) == Approx(2.0));
  CHECK(g2(1) == Approx(3.0));
}

TEST_CASE("conjugate V") {
  CHECK(conjugate_V(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)) == Approx(-1.0));
  CHECK(conjugate_V(Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 1)) == Approx(-2.0));
  CHECK_THROWS(conjugate_V(Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 0)));
}

TEST_CASE("growth bound certification") {
  const auto raw = Aggregator::exponential(Eigen::Vector2d(1, 1));
  CHECK_FALSE(find_growth_violation(raw, 1.0, 0.0).has_value());
  const Aggregator shifted({UnivariateUtility::exponential(1, true)});
  CHECK_FALSE(find_growth_violation(shifted, 1.0, 0.0).has_value());
  const auto bad = find_growth_violation(shifted, 0.0, 0.0);
  REQUIRE(bad.has_value());
  CHECK(shifted.value(*bad) > 0.0);
  for (const auto& agg : {raw, shifted}) {
    const auto gb = growth_bound(agg);
    CHECK_FALSE(find_growth_violation(agg, gb.a_coef, gb.b_coef).has_value());
  }
}

TEST_CASE("inverse derivative round trip") {
  for (const auto& u : {UnivariateUtility::exponential(1.3), UnivariateUtility::rational_power(2.0),
                        UnivariateUtility::arctan_power(1.7)}) {
    for (double x : {-3.0, -0.5, 0.0, 0.4, 2.0, 7.0}) {
      CHECK(u.inverse_derivative(u.derivative(x)) == Approx(x).epsilon(1e-9));
    }
  }
}

TEST_CASE("custom utility self-test") {
  const auto u = UnivariateUtility::custom([](double x) { return -std::exp(-x); }, [](double x) { return std::exp(-x); });
  CHECK(u.second_derivative(0.3) == Approx(-std::exp(-0.3)).epsilon(1e-6));
  CHECK_THROWS_AS(UnivariateUtility::custom([](double x) { return x * x; }, [](double x) { return 2 * x; }),
                  InvariantError);
}

TEST_CASE("property: monotone, concave, bounded, finite differences") {
  testkit::Gen gen(23);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = gen.integer(1, 4);
    const auto spec = testkit::random_general_spec(gen, 2, n, 1, trial % 2 == 0);
    const Aggregator& u = spec.aggregator();
    Eigen::VectorXd x(n), y(n);
    for (Index j = 0; j < n; ++j) {
      x(j) = gen.uniform(-3, 3);
      y(j) = gen.uniform(-3, 3);
    }
    const Index j = gen.integer(0, static_cast<int>(n) - 1);
    Eigen::VectorXd up = x;
    up(j) += gen.uniform(0.01, 1.0);
    CHECK(u.value(up) > u.value(x));
    if ((x - y).norm() > 1e-3) CHECK(u.value(0.5 * (x + y)) > 0.5 * (u.value(x) + u.value(y)));
    CHECK(u.value(y) <= u.value(x) + u.gradient(x).dot(y - x) + 1e-12);
    CHECK(u.value(x) <= u.supremum());
    const Eigen::VectorXd g = u.gradient(x);
    CHECK(g.minCoeff() > 0.0);
    for (Index i = 0; i < n; ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e(i) = 1e-6;
      const double fd = (u.value(x + e) - u.value(x - e)) / 2e-6;
      CHECK(fd == Approx(g(i)).epsilon(1e-6));
    }
    const Eigen::MatrixXd hess = u.hessian(x);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hess).eigenvalues().maxCoeff() < 0.0);
  }
}
