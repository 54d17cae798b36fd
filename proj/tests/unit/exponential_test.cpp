#include <doctest.h>

#include <cmath>

#include "condrisk/exponential.hpp"
#include "condrisk/shortfall_dual.hpp"
#include "support/instances.hpp"

using namespace condrisk;
using doctest::Approx;

TEST_CASE("constants") {
  const auto c1 = exp_constants(Eigen::VectorXd::Ones(1));
  CHECK(c1.beta == 1.0);
  CHECK(c1.a_total == 0.0);
  const auto c2 = exp_constants(Eigen::Vector2d(1, 1));
  CHECK(c2.beta == 2.0);
  const auto c3 = exp_constants(Eigen::Vector2d(1, 2));
  CHECK(c3.beta == 1.5);
  CHECK(c3.a_j(1) == Approx(-0.346573590279973).epsilon(1e-14));
  CHECK(c3.a_total == Approx(-0.346573590279973).epsilon(1e-14));
  CHECK_THROWS_AS(exp_constants(Eigen::Vector2d(1, 0)), InvariantError);
}

TEST_CASE("closed forms on small instances") {
  const auto s = ScenarioSpace::uniform(2);
  const auto g = SigmaPartition::trivial(2);
  const auto c1 = exp_constants(Eigen::VectorXd::Ones(1));
  CHECK(rho_closed(s, RandomVector::Zero(1, 2), Eigen::Vector2d::Constant(-std::exp(1.0)), g, c1)(0) ==
        Approx(-1.0).epsilon(1e-14));

  const auto c = exp_constants(Eigen::Vector2d(1, 1));
  CHECK(std::abs(rho_closed(s, RandomVector::Zero(2, 2), Eigen::Vector2d::Constant(-2), g, c)(0)) <= 1e-15);
  CHECK(testkit::max_abs(y_hat_closed(s, RandomVector::Zero(2, 2), Eigen::Vector2d::Constant(-2), g, c)) <= 1e-15);
  CHECK(testkit::max_abs(q_hat_closed(s, RandomVector::Zero(2, 2), g, c).q().array() - 1.0) <= 1e-15);
  CHECK(testkit::max_abs(a_hat_closed(s, RandomVector::Zero(2, 2), Eigen::Vector2d::Constant(-2), g, c)) <= 1e-15);

  RandomVector x(2, 2);
  x << 1, -1, 0, 0;
  const Eigen::Vector2d b = Eigen::Vector2d::Constant(-2);
  CHECK(rho_closed(s, x, b, g, c)(0) == Approx(0.240229013916555).epsilon(1e-13));
  const auto y = y_hat_closed(s, x, b, g, c);
  CHECK(y(0, 0) == Approx(-0.379885493041722).epsilon(1e-12));
  CHECK(y(1, 0) == Approx(0.620114506958278).epsilon(1e-12));
  CHECK(y(0, 1) == Approx(0.620114506958278).epsilon(1e-12));
  CHECK(y(1, 1) == Approx(-0.379885493041722).epsilon(1e-12));
  const auto q = q_hat_closed(s, x, g, c);
  CHECK(q.q()(0, 0) == Approx(0.537882842739990).epsilon(1e-13));
  CHECK(q.q()(1, 1) == Approx(1.462117157260010).epsilon(1e-13));
  const auto a = a_hat_closed(s, x, b, g, c);
  CHECK(a(0, 0) == Approx(0.351173085588282).epsilon(1e-12));
  CHECK(a(1, 0) == Approx(-0.110944071671727).epsilon(1e-12));
  CHECK(alpha1_entropic(s, q.row(0), b, g, c)(0) == Approx(0.221888143343455).epsilon(1e-12));
  CHECK(alpha1_entropic(s, Eigen::Vector2d::Ones(), Eigen::Vector2d::Constant(-std::exp(1.0)), g, c1)(0) ==
        Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(rho_closed(s, x, Eigen::Vector2d::Zero(), g, c), InvariantError);
}

TEST_CASE("large positions stay finite") {
  const auto s = ScenarioSpace::uniform(2);
  const auto c = exp_constants(Eigen::Vector2d(1, 1));
  RandomVector x(2, 2);
  x << 900, -900, 900, -900;
  const auto r = rho_closed(s, x, Eigen::Vector2d::Constant(-2), SigmaPartition::trivial(2), c);
  CHECK(std::isfinite(r(0)));
  CHECK(r(0) == Approx(1800.0 - 2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("property: closed-form identities") {
  testkit::Gen gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = testkit::random_exp_spec(gen);
    const auto& s = spec.space();
    const auto& g = spec.sigma();
    const auto c = exp_constants(*spec.aggregator().exponential_alphas());
    const auto r = rho_closed(s, spec.x(), spec.b(), g, c);
    CHECK(is_measurable(r, g));
    const auto y = y_hat_closed(s, spec.x(), spec.b(), g, c);
    CHECK(testkit::max_abs(y.colwise().sum().transpose() - r) <= 1e-12 * (1 + r.cwiseAbs().maxCoeff()));
    const auto q = q_hat_closed(s, spec.x(), g, c);
    CHECK(normalization_defect(s, q.row(0), g) <= 1e-13);
    const auto a = a_hat_closed(s, spec.x(), spec.b(), g, c);
    for (Index j = 0; j < a.rows(); ++j) CHECK(is_measurable(a.row(j).transpose(), g));
    CHECK(testkit::max_abs(a.colwise().sum().transpose() - r) <= 1e-12 * (1 + r.cwiseAbs().maxCoeff()));

    const RandomVector cash = spec.x().array() + 0.37;
    CHECK(testkit::max_abs(rho_closed(s, cash, spec.b(), g, c) - (r.array() - 0.37 * spec.agents()).matrix()) <= 1e-12 * (1 + r.cwiseAbs().maxCoeff()));

    const RandomVariable chain = sum_cond_exp_under(s, q, -spec.x()) - alpha1_entropic(s, q.row(0), spec.b(), g, c);
    CHECK(testkit::max_abs(chain - r) <= 1e-10 * (1 + r.cwiseAbs().maxCoeff()));

    const auto sol = solve_rho(spec);
    CHECK(testkit::max_abs(sol.rho - r) <= 1e-6 * (1 + r.cwiseAbs().maxCoeff()));
    const auto qs = extract_dual_optimizer(sol, spec);
    CHECK(testkit::max_abs(qs.q() - q.q()) <= 1e-6);
  }
}
