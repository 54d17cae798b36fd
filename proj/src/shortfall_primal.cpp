#include "condrisk/shortfall_primal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "condrisk/detail/block_programs.hpp"
#include "condrisk/detail/parallel.hpp"
#include "condrisk/errors.hpp"

namespace condrisk {

ClusterConstraint::ClusterConstraint(Index agents, std::vector<std::vector<Index>> groups)
    : groups_(std::move(groups)), group_of_(static_cast<std::size_t>(agents), -1) {
  if (agents < 1) throw SchemaError("ClusterConstraint: at least one agent is required");
  for (auto& grp : groups_) {
    if (grp.empty()) throw SchemaError("ClusterConstraint: empty group");
    std::sort(grp.begin(), grp.end());
  }
  std::sort(groups_.begin(), groups_.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  for (std::size_t m = 0; m < groups_.size(); ++m) {
    for (Index i : groups_[m]) {
      if (i < 0 || i >= agents) throw SchemaError("ClusterConstraint: agent index out of range");
      auto& slot = group_of_[static_cast<std::size_t>(i)];
      if (slot != -1) throw SchemaError("ClusterConstraint: agent " + std::to_string(i) + " in two groups");
      slot = static_cast<Index>(m);
    }
  }
  for (std::size_t i = 0; i < group_of_.size(); ++i) {
    if (group_of_[i] == -1) throw SchemaError("ClusterConstraint: agent " + std::to_string(i) + " not covered");
  }
}

ClusterConstraint ClusterConstraint::full_sharing(Index agents) {
  std::vector<Index> all(static_cast<std::size_t>(agents));
  for (Index i = 0; i < agents; ++i) all[static_cast<std::size_t>(i)] = i;
  return ClusterConstraint(agents, {all});
}

ClusterConstraint ClusterConstraint::no_sharing(Index agents) {
  std::vector<std::vector<Index>> groups;
  for (Index i = 0; i < agents; ++i) groups.push_back({i});
  return ClusterConstraint(agents, std::move(groups));
}

bool ClusterConstraint::admits(const RandomVector& y, const SigmaPartition& g, double tol) const {
  if (y.rows() != agents() || y.cols() != g.atoms()) throw SchemaError("ClusterConstraint::admits: dimension mismatch");
  for (const auto& grp : groups_) {
    RandomVariable total = RandomVariable::Zero(y.cols());
    for (Index i : grp) total += y.row(i).transpose();
    if (!is_measurable(total, g, tol)) return false;
  }
  return true;
}

RiskSpec::RiskSpec(ScenarioSpace space, SigmaPartition sigma, RandomVector x, Aggregator aggregator, RandomVariable b,
                   ClusterConstraint clusters, SolverOptions tol)
    : space_(std::move(space)),
      sigma_(std::move(sigma)),
      x_(std::move(x)),
      aggregator_(std::move(aggregator)),
      b_(std::move(b)),
      clusters_(std::move(clusters)),
      tol_(tol) {
  const Index k = space_.size();
  if (sigma_.atoms() != k) throw SchemaError("RiskSpec: sigma partition has the wrong number of atoms");
  if (x_.rows() < 1 || x_.cols() != k) throw SchemaError("RiskSpec: x must be agents x atoms");
  if (x_.rows() != aggregator_.agents()) throw SchemaError("RiskSpec: x rows differ from the number of utilities");
  if (clusters_.agents() != x_.rows()) throw SchemaError("RiskSpec: clusters cover the wrong number of agents");
  if (b_.size() != k) throw SchemaError("RiskSpec: b must have one entry per atom");
  if (!x_.allFinite() || !b_.allFinite()) throw SchemaError("RiskSpec: x and b must be finite");
  if (!(tol_.kkt_tol > 0.0) || tol_.max_iter < 1) throw SchemaError("RiskSpec: invalid solver tolerances");
  if (!is_measurable(b_, sigma_)) throw InvariantError("RiskSpec: threshold B is not measurable with respect to G");
  const double sup_u = aggregator_.supremum();
  if (!(b_.maxCoeff() < sup_u - 1e-9)) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "RiskSpec: esssup(B) < sup U violated (max B = " << b_.maxCoeff() << ", sup U = " << sup_u << ")";
    throw InvariantError(msg.str());
  }
}

RiskSpec RiskSpec::with_x(RandomVector x) const {
  return RiskSpec(space_, sigma_, std::move(x), aggregator_, b_, clusters_, tol_);
}
RiskSpec RiskSpec::with_b(RandomVariable b) const {
  return RiskSpec(space_, sigma_, x_, aggregator_, std::move(b), clusters_, tol_);
}
RiskSpec RiskSpec::with_sigma(SigmaPartition sigma, RandomVariable b) const {
  return RiskSpec(space_, std::move(sigma), x_, aggregator_, std::move(b), clusters_, tol_);
}
RiskSpec RiskSpec::with_options(SolverOptions tol) const {
  return RiskSpec(space_, sigma_, x_, aggregator_, b_, clusters_, tol);
}

RandomVector feasible_start(const RiskSpec& spec) {
  const auto& u = spec.aggregator();
  const Index n = spec.agents();
  const double max_b = spec.b().maxCoeff();
  const double margin = std::min(1e-6, 0.5 * (u.supremum() - max_b));
  const double target = max_b + margin;
  double t = 0.0;
  for (int i = 0; u.value(Eigen::VectorXd::Constant(n, t)) < target; ++i) {
    if (i > 1100) throw InvariantError("feasible_start: utility never reaches the threshold");
    t = t == 0.0 ? 0.1 : 2.0 * t;
  }
  RandomVector m(n, spec.atoms());
  for (Index j = 0; j < n; ++j) m.row(j).setConstant(spec.x().row(j).cwiseAbs().maxCoeff() + t);
  return m;
}

PrimalSolution solve_rho(const RiskSpec& spec) { return solve_rho(spec, feasible_start(spec)); }

PrimalSolution solve_rho(const RiskSpec& spec, const RandomVector& start) {
  const auto& g = spec.sigma();
  const Index nb = g.num_blocks();
  if (start.rows() != spec.agents() || start.cols() != spec.atoms()) {
    throw SchemaError("solve_rho: start has the wrong shape");
  }
  std::vector<detail::BlockSolution> parts(static_cast<std::size_t>(nb));
  detail::parallel_for(nb, spec.tol().threads, [&](Index blk) {
    const auto view = detail::restrict_to_block(spec.space(), g, blk, spec.x(), spec.b_on_block(blk));
    const Eigen::MatrixXd s = detail::block_columns(g, blk, start);
    try {
      parts[static_cast<std::size_t>(blk)] =
          detail::solve_shortfall_block(spec.aggregator(), view, spec.clusters().groups(), s, spec.tol());
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("solve_rho: block " + std::to_string(blk) + ": " + e.what(), e.residual());
    }
  });

  PrimalSolution sol;
  sol.y_hat.resize(spec.agents(), spec.atoms());
  sol.rho.resize(spec.atoms());
  sol.mu.resize(nb);
  sol.kkt_residual.resize(nb);
  sol.iterations.resize(nb);
  sol.used_fallback.resize(static_cast<std::size_t>(nb));
  for (Index blk = 0; blk < nb; ++blk) {
    const auto& part = parts[static_cast<std::size_t>(blk)];
    const auto& atoms = g.block(blk);
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      sol.y_hat.col(atoms[k]) = part.y.col(static_cast<Index>(k));
      sol.rho(atoms[k]) = part.value;
    }
    sol.mu(blk) = part.multiplier;
    sol.kkt_residual(blk) = part.residual;
    sol.iterations(blk) = part.iterations;
    sol.used_fallback[static_cast<std::size_t>(blk)] = part.used_fallback;
  }
  return sol;
}

RandomVariable rho_value(const RiskSpec& spec) { return solve_rho(spec).rho; }

AxiomReport check_axioms(const RiskSpec& spec, const RiskSpec& spec2, const RandomVariable& lambda_g,
                         const std::optional<RandomVector>& shift) {
  const auto& g = spec.sigma();
  if (spec2.x().rows() != spec.x().rows() || spec2.x().cols() != spec.x().cols()) {
    throw SchemaError("check_axioms: the two positions differ in shape");
  }
  if (lambda_g.size() != spec.atoms() || !is_measurable(lambda_g, g)) {
    throw InvariantError("check_axioms: lambda must be G-measurable");
  }
  if ((lambda_g.array() < 0.0).any() || (lambda_g.array() > 1.0).any()) {
    throw InvariantError("check_axioms: lambda must lie in [0, 1]");
  }
  const RandomVector& x = spec.x();
  const RandomVector& z = spec2.x();
  const RandomVariable rx = rho_value(spec);
  const RandomVariable rz = rho_value(spec2);

  AxiomReport rep;
  rep.tolerance = 5.0 * spec.tol().kkt_tol;

  const RandomVariable rmax = rho_value(spec.with_x(x.cwiseMax(z)));
  rep.monotonicity = std::max((rmax - rx).maxCoeff(), (rmax - rz).maxCoeff());

  RandomVector mix(x.rows(), x.cols());
  for (Index k = 0; k < x.cols(); ++k) mix.col(k) = lambda_g(k) * x.col(k) + (1.0 - lambda_g(k)) * z.col(k);
  const RandomVariable rmix = rho_value(spec.with_x(mix));
  rep.convexity = (rmix.array() - lambda_g.array() * rx.array() - (1.0 - lambda_g.array()) * rz.array()).maxCoeff();

  const RandomVector yg = shift ? *shift : RandomVector::Constant(x.rows(), x.cols(), 0.7);
  for (Index j = 0; j < yg.rows(); ++j) {
    if (!is_measurable(yg.row(j).transpose(), g)) throw InvariantError("check_axioms: shift must be G-measurable");
  }
  const RandomVariable rshift = rho_value(spec.with_x(x + yg));
  const RandomVariable expected = rx - yg.colwise().sum().transpose();
  rep.additivity = (rshift - expected).cwiseAbs().maxCoeff();

  RandomVector glued = z;
  RandomVariable glued_rho = rz;
  for (Index blk = 0; blk < g.num_blocks(); blk += 2) {
    for (Index k : g.block(blk)) {
      glued.col(k) = x.col(k);
      glued_rho(k) = rx(k);
    }
  }
  rep.locality = (rho_value(spec.with_x(glued)) - glued_rho).cwiseAbs().maxCoeff();

  rep.pass = rep.monotonicity <= rep.tolerance && rep.convexity <= rep.tolerance &&
             rep.additivity <= rep.tolerance && rep.locality <= rep.tolerance;
  return rep;
}

}  // namespace condrisk
