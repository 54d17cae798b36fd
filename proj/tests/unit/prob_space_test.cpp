#include <doctest.h>

#include "condrisk/prob_space.hpp"
#include "support/instances.hpp"

using namespace condrisk;
using doctest::Approx;

namespace {

ScenarioSpace two_atoms(double p1, double p2) { return ScenarioSpace({"w1", "w2"}, Eigen::Vector2d(p1, p2)); }

}  // namespace

TEST_CASE("cond_exp on small spaces") {
  {
    const auto s = two_atoms(0.25, 0.75);
    const auto e = cond_exp(s, Eigen::Vector2d(1, 3), SigmaPartition::trivial(2));
    CHECK(e(0) == Approx(2.5));
    CHECK(e(1) == Approx(2.5));
  }
  {
    const auto s = two_atoms(0.5, 0.5);
    const auto e = cond_exp(s, Eigen::Vector2d(1, 3), SigmaPartition::discrete(2));
    CHECK(e(0) == 1.0);
    CHECK(e(1) == 3.0);
  }
  {
    const auto s = ScenarioSpace::uniform(4);
    const SigmaPartition g(4, {{0, 1}, {2, 3}});
    const auto e = cond_exp(s, Eigen::Vector4d(1, 3, 5, 7), g);
    CHECK(e(0) == Approx(2));
    CHECK(e(1) == Approx(2));
    CHECK(e(2) == Approx(6));
    CHECK(e(3) == Approx(6));
  }
}

TEST_CASE("cond_exp_under_density") {
  const auto s = ScenarioSpace::uniform(2);
  const auto g = SigmaPartition::trivial(2);
  const Eigen::Vector2d x(-1, 1);
  const auto same = cond_exp_under_density(s, Eigen::Vector2d::Ones(), x, g);
  CHECK(same(0) == Approx(0.0));
  const Eigen::Vector2d q(0.537882842739990, 1.462117157260010);
  const auto e = cond_exp_under_density(s, q, x, g);
  CHECK(e(0) == Approx(0.462117157260010).epsilon(1e-12));
  CHECK(e(1) == Approx(0.462117157260010).epsilon(1e-12));
  const auto c = cond_exp_under_density(s, q, Eigen::Vector2d::Constant(3.5), g);
  CHECK(c(0) == Approx(3.5).epsilon(1e-14));
  CHECK_THROWS_AS(cond_exp_under_density(s, Eigen::Vector2d(1, 2), x, g), InvariantError);
}

TEST_CASE("is_measurable") {
  const SigmaPartition g(4, {{0, 1}, {2, 3}});
  CHECK(is_measurable(Eigen::Vector4d(2, 2, 6, 6), g));
  CHECK_FALSE(is_measurable(Eigen::Vector2d(1, 2), SigmaPartition::trivial(2)));
  CHECK(is_measurable(Eigen::Vector4d(1, 5, -2, 9), SigmaPartition::discrete(4)));
}

TEST_CASE("coarsens") {
  const SigmaPartition g(4, {{0, 1}, {2, 3}});
  CHECK(coarsens(SigmaPartition::trivial(4), g));
  CHECK(coarsens(g, SigmaPartition(4, {{0}, {1}, {2, 3}})));
  CHECK_FALSE(coarsens(SigmaPartition(4, {{0, 2}, {1, 3}}), g));
}

TEST_CASE("cond_relative_entropy") {
  const auto s = ScenarioSpace::uniform(2);
  const auto g = SigmaPartition::trivial(2);
  CHECK(cond_relative_entropy(s, Eigen::Vector2d::Ones(), g)(0) == Approx(0.0));
  const Eigen::Vector2d q(0.537882842739990, 1.462117157260010);
  CHECK(cond_relative_entropy(s, q, g)(1) == Approx(0.110944071671727).epsilon(1e-12));
  CHECK(cond_relative_entropy(s, Eigen::Vector2d(2, 0), g)(0) == Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("partition canonical form and validation") {
  const SigmaPartition a(3, {{2, 0}, {1}});
  const SigmaPartition b(3, {{1}, {0, 2}});
  CHECK(a == b);
  CHECK_THROWS_AS(SigmaPartition(3, {{0, 1}}), SchemaError);
  CHECK_THROWS_AS(SigmaPartition(3, {{0, 1}, {1, 2}}), SchemaError);
  CHECK_THROWS_AS(ScenarioSpace({"a", "b"}, Eigen::Vector2d(0.5, 0.6)), InvariantError);
  CHECK_THROWS_AS(ScenarioSpace({"a", "b"}, Eigen::Vector2d(1.0, 0.0)), InvariantError);
  CHECK_THROWS_AS(ScenarioSpace({"a", "a"}, Eigen::Vector2d(0.5, 0.5)), SchemaError);
}

TEST_CASE("property: tower, projection, normalization, Jensen") {
  testkit::Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Index k = gen.integer(1, 40);
    const auto s = testkit::random_space(gen, k);
    const auto g = testkit::random_partition(gen, k);
    const auto h = testkit::random_coarsening(gen, g);
    REQUIRE(coarsens(h, g));
    Eigen::VectorXd x(k);
    for (Index i = 0; i < k; ++i) x(i) = gen.uniform(-5, 5);
    const auto eg = cond_exp(s, x, g);
    CHECK(is_measurable(eg, g));
    CHECK(testkit::max_abs(cond_exp(s, eg, h) - cond_exp(s, x, h)) <= 1e-12);
    CHECK(testkit::max_abs(cond_exp(s, eg, g) - eg) <= 1e-12);

    const auto q = testkit::random_shared_density(gen, s, g, 1);
    const auto one = cond_exp_under_density(s, q.row(0), Eigen::VectorXd::Ones(k), g);
    CHECK(testkit::max_abs(one.array() - 1.0) <= 1e-10);
    const auto ent = cond_relative_entropy(s, q.row(0), g);
    CHECK(ent.minCoeff() >= -1e-15);
    CHECK(cond_relative_entropy(s, Eigen::VectorXd::Ones(k), g).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("templated over scalar") {
  const auto s = ScenarioSpace::uniform(4);
  const SigmaPartition g(4, {{0, 1}, {2, 3}});
  const Eigen::Matrix<long double, 4, 1> x(1, 3, 5, 7);
  const auto e = cond_exp(s, x, g);
  static_assert(std::is_same_v<decltype(e)::Scalar, long double>);
  CHECK(static_cast<double>(e(3)) == Approx(6.0));
}
