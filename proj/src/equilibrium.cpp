#include "condrisk/equilibrium.hpp"

#include <cmath>
#include <limits>

#include "condrisk/detail/block_programs.hpp"
#include "condrisk/detail/parallel.hpp"
#include "condrisk/errors.hpp"
#include "condrisk/shortfall_dual.hpp"

namespace condrisk {
namespace {

RandomVector fair_split(const ScenarioSpace& space, const DensityVector& q, const RandomVector& y) {
  RandomVector a(y.rows(), y.cols());
  for (Index j = 0; j < y.rows(); ++j) {
    a.row(j) = cond_exp_under_density(space, q.row(j), y.row(j).transpose(), q.sigma()).transpose();
  }
  return a;
}

}  // namespace

EquilibriumTriple build_equilibrium(const RiskSpec& spec) { return build_equilibrium(spec, solve_rho(spec)); }

EquilibriumTriple build_equilibrium(const RiskSpec& spec, const PrimalSolution& sol) {
  DensityVector q = extract_dual_optimizer(sol, spec);
  RandomVector alpha = fair_split(spec.space(), q, sol.y_hat);
  return EquilibriumTriple{sol.y_hat, std::move(q), std::move(alpha), sol.rho};
}

RandomVariable pi_problem(const DensityVector& q, const RandomVariable& budget_a, const RiskSpec& spec) {
  const auto& g = spec.sigma();
  if (q.agents() != spec.agents() || q.atoms() != spec.atoms() || !(q.sigma() == g)) {
    throw SchemaError("pi_problem: density vector does not match the spec");
  }
  if (budget_a.size() != spec.atoms() || !is_measurable(budget_a, g)) {
    throw InvariantError("pi_problem: budget must be G-measurable");
  }
  const Index nb = g.num_blocks();
  Eigen::VectorXd per_block(nb);
  detail::parallel_for(nb, spec.tol().threads, [&](Index blk) {
    const auto view = detail::restrict_to_block(spec.space(), g, blk, spec.x(), spec.b_on_block(blk));
    const Eigen::MatrixXd qb = detail::block_columns(g, blk, q.q());
    per_block(blk) =
        detail::solve_budget_block(spec.aggregator(), view, qb, budget_a(g.block(blk).front()), spec.tol()).value;
  });
  return expand_blocks(g, per_block);
}

MsorteReport verify_msorte(const EquilibriumTriple& t, const RiskSpec& spec, double tol) {
  const auto& g = spec.sigma();
  const auto& space = spec.space();
  if (t.y.rows() != spec.agents() || t.y.cols() != spec.atoms() || t.alpha.rows() != spec.agents() ||
      t.alpha.cols() != spec.atoms() || t.budget_a.size() != spec.atoms()) {
    throw SchemaError("verify_msorte: triple does not match the spec");
  }
  MsorteReport rep;
  rep.tolerance = tol;

  for (const auto& grp : spec.clusters().groups()) {
    RandomVariable total = RandomVariable::Zero(spec.atoms());
    for (Index i : grp) total += t.y.row(i).transpose();
    rep.cluster_feasibility = std::max(rep.cluster_feasibility, (total - cond_exp(space, total, g)).cwiseAbs().maxCoeff());
  }
  const RandomVariable ysum = t.y.colwise().sum().transpose();
  rep.budget_sum = (ysum - t.budget_a).cwiseAbs().maxCoeff();

  const RandomVariable eu = cond_expected_utility(space, spec.aggregator(), spec.x() + t.y, g);
  rep.utility_activity = (eu - spec.b()).cwiseAbs().maxCoeff();

  const RandomVector fair = fair_split(space, t.q, t.y);
  rep.priced_budget = (fair.colwise().sum().transpose() - t.budget_a).cwiseAbs().maxCoeff();
  rep.alpha_consistency = std::max((fair - t.alpha).cwiseAbs().maxCoeff(),
                                   (t.alpha.colwise().sum().transpose() - t.budget_a).cwiseAbs().maxCoeff());
  for (Index j = 0; j < t.alpha.rows(); ++j) {
    if (!is_measurable(t.alpha.row(j).transpose(), g, tol)) rep.alpha_consistency = std::numeric_limits<double>::infinity();
  }
  rep.fairness_excess = fairness_excess(t.q, spec);

  try {
    rep.optimality = (pi_problem(t.q, t.budget_a, spec) - eu).cwiseAbs().maxCoeff();
  } catch (const std::exception&) {
    rep.optimality = std::numeric_limits<double>::infinity();
  }

  if (spec.aggregator().separable()) {
    const RandomVector z = spec.x() + t.y;
    double spread = 0.0;
    for (Index j = 0; j < spec.agents(); ++j) {
      for (const auto& blk : g.blocks()) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (Index k : blk) {
          const double r = spec.aggregator().utility(j).derivative(z(j, k)) / t.q.q()(j, k);
          lo = std::min(lo, r);
          hi = std::max(hi, r);
        }
        spread = std::max(spread, (hi - lo) / std::max(std::abs(hi), 1e-300));
      }
    }
    rep.agent_optimality = spread;
  } else {
    rep.agent_optimality = std::numeric_limits<double>::quiet_NaN();
  }

  rep.pass = rep.cluster_feasibility <= tol && rep.budget_sum <= tol && rep.utility_activity <= tol &&
             rep.priced_budget <= tol && rep.optimality <= tol && rep.alpha_consistency <= tol &&
             rep.fairness_excess <= 1e-8;
  return rep;
}

}  // namespace condrisk
