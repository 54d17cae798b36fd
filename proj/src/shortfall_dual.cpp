#include "condrisk/shortfall_dual.hpp"

#include <cmath>

#include "condrisk/detail/block_programs.hpp"
#include "condrisk/detail/parallel.hpp"
#include "condrisk/errors.hpp"

namespace condrisk {
namespace {

void check_density(const DensityVector& q, const RiskSpec& spec) {
  if (q.agents() != spec.agents() || q.atoms() != spec.atoms()) {
    throw SchemaError("density vector shape differs from the position");
  }
  if (!(q.sigma() == spec.sigma())) throw SchemaError("density vector is normalized against a different partition");
}

// Blockwise minimum of sum_k w_k c_k . y_k subject to the utility
// constraint, for positions x; one value per atom.
RandomVariable priced_values(const DensityVector& q, const RiskSpec& spec, const RandomVector& x) {
  const auto& g = spec.sigma();
  const Index nb = g.num_blocks();
  Eigen::VectorXd per_block(nb);
  detail::parallel_for(nb, spec.tol().threads, [&](Index blk) {
    const auto view = detail::restrict_to_block(spec.space(), g, blk, x, spec.b_on_block(blk));
    const Eigen::MatrixXd cost = detail::block_columns(g, blk, q.q());
    per_block(blk) = detail::solve_priced_block(spec.aggregator(), view, cost, spec.tol()).value;
  });
  return expand_blocks(g, per_block);
}

RandomVariable q_value_of_loss(const DensityVector& q, const RiskSpec& spec) {
  return sum_cond_exp_under(spec.space(), q, -spec.x());
}

}  // namespace

RandomVariable penalty_alpha1(const DensityVector& q, const RiskSpec& spec) {
  check_density(q, spec);
  return -priced_values(q, spec, RandomVector::Zero(spec.agents(), spec.atoms()));
}

double fairness_excess(const DensityVector& q, const RiskSpec& spec) {
  check_density(q, spec);
  const auto& g = spec.sigma();
  double worst = 0.0;
  // Constant cash on one block: E_Q[1_b | G] - 1_b.
  for (Index j = 0; j < q.agents(); ++j) worst = std::max(worst, normalization_defect(spec.space(), q.row(j), g));
  // Swap vectors y^i = z, y^i' = -z with z the indicator of one atom scaled
  // to unit conditional mass; the fairness gap is then q^i - q^i' there.
  for (const auto& grp : spec.clusters().groups()) {
    for (std::size_t a = 0; a < grp.size(); ++a) {
      for (std::size_t b = a + 1; b < grp.size(); ++b) {
        const double d = (q.q().row(grp[a]) - q.q().row(grp[b])).cwiseAbs().maxCoeff();
        worst = std::max(worst, d);
      }
    }
  }
  return worst;
}

bool in_q1(const DensityVector& q, const RiskSpec& spec) {
  if (fairness_excess(q, spec) > 1e-8) return false;
  try {
    return penalty_alpha1(q, spec).allFinite();
  } catch (const DivergenceError&) {
    return false;
  }
}

RandomVariable dual_value(const DensityVector& q, const RiskSpec& spec) {
  const double excess = fairness_excess(q, spec);
  if (excess > 1e-8) {
    throw DivergenceError("dual_value: density violates the fairness condition (excess " + std::to_string(excess) +
                          ")");
  }
  return q_value_of_loss(q, spec) - penalty_alpha1(q, spec);
}

DensityVector extract_dual_optimizer(const PrimalSolution& sol, const RiskSpec& spec) {
  const RandomVector z = spec.x() + sol.y_hat;
  Eigen::MatrixXd w(spec.agents(), spec.atoms());
  for (Index k = 0; k < spec.atoms(); ++k) w.col(k) = spec.aggregator().gradient(z.col(k));
  return DensityVector::normalize(spec.space(), w, spec.sigma());
}

RandomVariable rho_with_measure(const DensityVector& q, const RiskSpec& spec) {
  check_density(q, spec);
  const RandomVariable via_penalty = q_value_of_loss(q, spec) - penalty_alpha1(q, spec);
  const RandomVariable direct = priced_values(q, spec, spec.x());
  const double mismatch = (via_penalty - direct).cwiseAbs().maxCoeff();
  if (mismatch > 5.0 * spec.tol().kkt_tol) {
    throw ConvergenceError("rho_with_measure: penalty route and direct minimization disagree", mismatch);
  }
  return via_penalty;
}

DualReport dual_report(const DensityVector& q, const RiskSpec& spec, const PrimalSolution& sol) {
  DualReport rep;
  rep.fairness_excess = fairness_excess(q, spec);
  rep.alpha1 = penalty_alpha1(q, spec);
  rep.in_q1 = rep.fairness_excess <= 1e-8 && rep.alpha1.allFinite();
  rep.dual_value = q_value_of_loss(q, spec) - rep.alpha1;
  rep.gap = sol.rho - rep.dual_value;
  return rep;
}

RandomVariable conjugate_penalty_bound(const DensityVector& q, const RiskSpec& spec, const RandomVariable& lambda) {
  check_density(q, spec);
  const auto alphas = spec.aggregator().exponential_alphas();
  if (!alphas) throw SchemaError("conjugate bound: requires raw exponential utilities without interaction");
  if (!(q.q().array() > 0.0).all()) throw InvariantError("conjugate bound: densities must be strictly positive");
  if (lambda.size() != spec.atoms() || !(lambda.array() > 0.0).all()) {
    throw InvariantError("conjugate bound: lambda must be positive on every atom");
  }
  RandomVariable v(spec.atoms());
  for (Index k = 0; k < spec.atoms(); ++k) v(k) = lambda(k) * conjugate_V(*alphas, q.q().col(k) / lambda(k));
  return cond_exp(spec.space(), v, spec.sigma()) - lambda.cwiseProduct(spec.b());
}

RandomVariable conjugate_penalty_min(const DensityVector& q, const RiskSpec& spec) {
  const auto& g = spec.sigma();
  RandomVariable out(spec.atoms());
  for (Index blk = 0; blk < g.num_blocks(); ++blk) {
    const Index first = g.block(blk).front();
    auto f = [&](double s) {
      RandomVariable lam = RandomVariable::Constant(spec.atoms(), std::exp(s));
      return conjugate_penalty_bound(q, spec, lam)(first);
    };
    // The bound is convex in lambda, hence unimodal in log lambda.
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = -30.0;
    double b = 30.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int i = 0; i < 200 && b - a > 1e-12; ++i) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - invphi * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + invphi * (b - a);
        fd = f(d);
      }
    }
    const double best = std::min({fc, fd, f(0.5 * (a + b))});
    for (Index k : g.block(blk)) out(k) = best;
  }
  return out;
}

}  // namespace condrisk
