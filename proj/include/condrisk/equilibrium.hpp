#pragma once

#include <Eigen/Dense>

#include "condrisk/prob_space.hpp"
#include "condrisk/shortfall_primal.hpp"

namespace condrisk {

/// Candidate equilibrium: allocation y, pricing densities q, G-measurable
/// budget split alpha (rows) and total budget A.
struct EquilibriumTriple {
  RandomVector y;
  DensityVector q;
  RandomVector alpha;
  RandomVariable budget_a;
};

/// (Y^, Q^, E_{Q^}[Y^ | G]) with A = rho_G(X), from solve_rho and
/// extract_dual_optimizer.
EquilibriumTriple build_equilibrium(const RiskSpec& spec);
EquilibriumTriple build_equilibrium(const RiskSpec& spec, const PrimalSolution& sol);

/// pi(X) = esssup { E[U(X + Y) | G] : sum_j E_{Q^j}[Y^j | G] <= A }, Y
/// otherwise unrestricted. Needs strictly positive q.
RandomVariable pi_problem(const DensityVector& q, const RandomVariable& budget_a, const RiskSpec& spec);

struct MsorteReport {
  double cluster_feasibility = 0.0;  ///< group sums off G-measurability
  double budget_sum = 0.0;           ///< |sum_j y^j - A|
  double utility_activity = 0.0;     ///< |E[U(X+y)|G] - B|
  double priced_budget = 0.0;        ///< |sum_j E_{q^j}[y^j|G] - A|
  double optimality = 0.0;           ///< |pi(q, A) - E[U(X+y)|G]|
  double alpha_consistency = 0.0;    ///< alpha rows vs E_{q^j}[y^j|G], and sum alpha vs A
  double fairness_excess = 0.0;      ///< q against Q^1_G; must stay <= 1e-8
  /// Per-agent check when U is separable: u_j'(X^j + y^j) / q^j constant
  /// on each block (relative spread). Reported, not asserted. NaN otherwise.
  double agent_optimality = 0.0;
  double tolerance = 1e-6;
  bool pass = false;
};

MsorteReport verify_msorte(const EquilibriumTriple& t, const RiskSpec& spec, double tol = 1e-6);

}  // namespace condrisk
