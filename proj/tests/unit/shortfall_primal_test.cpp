#include <doctest.h>

#include <cmath>

#include "condrisk/shortfall_primal.hpp"
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

}  // namespace

TEST_CASE("canonical two-atom instance") {
  const auto sol = solve_rho(canonical());
  CHECK(sol.rho(0) == Approx(2.0 * std::log(std::cosh(0.5))).epsilon(1e-12));
  CHECK(sol.rho(0) == Approx(0.240229013916555).epsilon(1e-12));
  CHECK(sol.y_hat(0, 0) == Approx(-0.379885493041722).epsilon(1e-10));
  CHECK(sol.y_hat(1, 0) == Approx(0.620114506958278).epsilon(1e-10));
  CHECK(sol.y_hat(0, 1) == Approx(0.620114506958278).epsilon(1e-10));
  CHECK(sol.y_hat(1, 1) == Approx(-0.379885493041722).epsilon(1e-10));
  CHECK(sol.y_hat.colwise().sum()(0) == Approx(sol.rho(0)));
  CHECK(sol.y_hat.colwise().sum()(1) == Approx(sol.rho(1)));
  CHECK(sol.kkt_residual.maxCoeff() <= 1e-9);
}

TEST_CASE("X = 0 and B = -beta gives zero") {
  const RiskSpec spec(ScenarioSpace::uniform(2), SigmaPartition::trivial(2), RandomVector::Zero(1, 2),
                      Aggregator::exponential(Eigen::VectorXd::Ones(1)), Eigen::Vector2d::Constant(-1),
                      ClusterConstraint::full_sharing(1));
  const auto sol = solve_rho(spec);
  CHECK(std::abs(sol.rho(0)) <= 1e-12);
  CHECK(testkit::max_abs(sol.y_hat) <= 1e-12);
}

TEST_CASE("spec invariants") {
  auto make = [](Eigen::Vector2d b, SigmaPartition g) {
    return RiskSpec(ScenarioSpace::uniform(2), std::move(g), RandomVector::Zero(1, 2),
                    Aggregator::exponential(Eigen::VectorXd::Ones(1)), b, ClusterConstraint::full_sharing(1));
  };
  CHECK_THROWS_AS(make(Eigen::Vector2d(1, 1), SigmaPartition::trivial(2)), InvariantError);
  CHECK_THROWS_AS(make(Eigen::Vector2d(0, 0), SigmaPartition::trivial(2)), InvariantError);
  CHECK_THROWS_AS(make(Eigen::Vector2d(-1, -2), SigmaPartition::trivial(2)), InvariantError);
  CHECK_NOTHROW(make(Eigen::Vector2d(-1, -2), SigmaPartition::discrete(2)));
  try {
    make(Eigen::Vector2d(1, 1), SigmaPartition::trivial(2));
  } catch (const InvariantError& e) {
    CHECK(std::string(e.what()).find("esssup(B) < sup U") != std::string::npos);
  }
}

TEST_CASE("feasible start") {
  const auto spec = canonical().with_x(RandomVector::Zero(2, 2));
  const auto m = feasible_start(spec);
  CHECK(m.minCoeff() > 0.0);
  CHECK(spec.aggregator().value(m.col(0)) > -2.0);

  const auto tight = canonical().with_b(Eigen::Vector2d::Constant(-2e-9));
  const auto mt = feasible_start(tight);
  CHECK(cond_expected_utility(tight.space(), tight.aggregator(), tight.x() + mt, tight.sigma())(0) >= -2e-9);
}

TEST_CASE("axioms on the canonical instance") {
  const auto spec = canonical();
  RandomVector z = spec.x().rowwise().reverse();
  const auto rep = check_axioms(spec, spec.with_x(z), Eigen::Vector2d::Constant(0.5));
  CHECK(rep.pass);
  const auto one = check_axioms(spec, spec.with_x(z), Eigen::Vector2d::Ones());
  CHECK(one.convexity <= one.tolerance);

  const double r0 = solve_rho(spec).rho(0);
  CHECK(solve_rho(spec.with_x(spec.x().array() + 0.7)).rho(0) == Approx(r0 - 1.4).epsilon(1e-10));
  CHECK(solve_rho(spec.with_x(spec.x().array() + 1.0)).rho(0) == Approx(r0 - 2.0).epsilon(1e-10));
}

TEST_CASE("property: activity, stationarity, block decomposition, uniqueness") {
  testkit::Gen gen(5);
  for (int trial = 0; trial < 60; ++trial) {
    const Index n = gen.integer(1, 4);
    const Index h = gen.integer(1, static_cast<int>(n));
    const auto spec = testkit::random_general_spec(gen, gen.integer(1, 8), n, h, trial % 3 == 0);
    const auto sol = solve_rho(spec);
    const double tol = spec.tol().kkt_tol;

    const auto eu = cond_expected_utility(spec.space(), spec.aggregator(), spec.x() + sol.y_hat, spec.sigma());
    CHECK(testkit::max_abs(eu - spec.b()) <= tol);
    CHECK(spec.clusters().admits(sol.y_hat, spec.sigma(), 1e-9));
    CHECK(testkit::max_abs(sol.y_hat.colwise().sum().transpose() - sol.rho) <= 1e-9 * (1 + sol.rho.cwiseAbs().maxCoeff()));

    for (Index k = 0; k < spec.atoms(); ++k) {
      const Eigen::VectorXd g = spec.aggregator().gradient(spec.x().col(k) + sol.y_hat.col(k));
      for (const auto& grp : spec.clusters().groups()) {
        for (Index i : grp) CHECK(std::abs(g(i) - g(grp.front())) <= 1e-7 * (1 + g.cwiseAbs().maxCoeff()));
      }
    }

    // Each block solved on its own reproduces the joint solution.
    const auto& g = spec.sigma();
    for (Index blk = g.num_blocks() - 1; blk >= 0; --blk) {
      const auto& atoms = g.block(blk);
      const Index kb = static_cast<Index>(atoms.size());
      Eigen::VectorXd p(kb);
      RandomVector xb(n, kb);
      std::vector<std::string> labels;
      for (Index i = 0; i < kb; ++i) {
        p(i) = spec.space().prob(atoms[static_cast<std::size_t>(i)]);
        xb.col(i) = spec.x().col(atoms[static_cast<std::size_t>(i)]);
        labels.push_back(std::to_string(i));
      }
      p /= p.sum();
      const RiskSpec sub(ScenarioSpace(labels, p), SigmaPartition::trivial(kb), xb, spec.aggregator(),
                         Eigen::VectorXd::Constant(kb, spec.b_on_block(blk)), spec.clusters());
      const auto ss = solve_rho(sub);
      CHECK(ss.rho(0) == Approx(sol.rho(atoms.front())).epsilon(1e-10));
      for (Index i = 0; i < kb; ++i)
        CHECK(testkit::max_abs(ss.y_hat.col(i) - sol.y_hat.col(atoms[static_cast<std::size_t>(i)])) <= 1e-8);
    }

    // A different feasible start lands on the same optimum.
    const RandomVector start = feasible_start(spec).array() + 1.5;
    const auto again = solve_rho(spec, start);
    CHECK(testkit::max_abs(again.y_hat - sol.y_hat) <= 1e-7);
  }
}

TEST_CASE("thread count does not change the result") {
  testkit::Gen gen(77);
  const auto spec = testkit::random_exp_spec(gen);
  SolverOptions opt = spec.tol();
  opt.threads = 4;
  const auto a = solve_rho(spec);
  const auto b = solve_rho(spec.with_options(opt));
  CHECK((a.y_hat.array() == b.y_hat.array()).all());
  CHECK((a.rho.array() == b.rho.array()).all());
}

TEST_CASE("cluster constraint") {
  const auto c = ClusterConstraint(3, {{0, 2}, {1}});
  CHECK(c.num_groups() == 2);
  CHECK(c.group_of()[2] == 0);
  CHECK(ClusterConstraint::no_sharing(3).num_groups() == 3);
  CHECK_THROWS_AS(ClusterConstraint(3, {{0, 1}}), SchemaError);
  RandomVector y(3, 2);
  y << 1, 2, 5, 5, -1, -2;
  CHECK(c.admits(y, SigmaPartition::trivial(2)));
  CHECK_FALSE(ClusterConstraint::no_sharing(3).admits(y, SigmaPartition::trivial(2)));
}

TEST_CASE("bisection fallback when Newton runs out of iterations") {
  testkit::Gen gen(404);
  int fallbacks = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = gen.integer(1, 4);
    const auto base = testkit::random_general_spec(gen, gen.integer(1, 6), n, gen.integer(1, static_cast<int>(n)), false);
    SolverOptions opt = base.tol();
    opt.max_iter = 2;
    const auto spec = base.with_options(opt);
    PrimalSolution sol;
    try {
      sol = solve_rho(spec);
    } catch (const ConvergenceError&) {
      continue;  // two polish steps may not reach the tolerance; that is reported, not hidden
    }
    const auto ref = solve_rho(base);
    bool any = false;
    for (bool f : sol.used_fallback) any = any || f;
    fallbacks += any;
    CHECK(testkit::max_abs(sol.rho - ref.rho) <= 1e-8);
    CHECK(testkit::max_abs(sol.y_hat - ref.y_hat) <= 1e-7);
  }
  CHECK(fallbacks >= 5);
}
