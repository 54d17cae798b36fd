#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

#include "condrisk/prob_space.hpp"
#include "condrisk/shortfall_primal.hpp"

namespace condrisk {

/// alpha^1(Q) = esssup { sum_j E_{Q^j}[-Z^j | G] : E[U(Z) | G] >= B }, per
/// block by direct concave maximization over unrestricted Z. Finite for
/// strictly positive q; throws DivergenceError when a zero density meets an
/// unbounded utility.
RandomVariable penalty_alpha1(const DensityVector& q, const RiskSpec& spec);

/// Largest fairness violation sum_j E_{Q^j}[Y^j | G] - sum_j Y^j over the
/// spanning family of feasible Y: within-group swap vectors (both signs) and
/// blockwise constants. Zero (up to rounding) iff the fairness condition holds.
double fairness_excess(const DensityVector& q, const RiskSpec& spec);

/// Membership in Q^1_G: normalized against spec.sigma, finite penalty on
/// every block and fairness_excess <= 1e-8.
bool in_q1(const DensityVector& q, const RiskSpec& spec);

/// sum_j E_{Q^j}[-X^j | G] - alpha^1(Q). Throws DivergenceError unless
/// in_q1 holds (outside Q^1_G the expression is not a lower bound).
RandomVariable dual_value(const DensityVector& q, const RiskSpec& spec);

/// q^j proportional to d_j U(X + Y^) on each block, normalized to blockwise
/// mean one.
DensityVector extract_dual_optimizer(const PrimalSolution& sol, const RiskSpec& spec);

/// rho^Q_G(X) = sum_j E_{Q^j}[-X^j | G] - alpha^1(Q), cross-checked against
/// min sum_j E_{Q^j}[Y^j | G] s.t. E[U(X + Y) | G] >= B solved directly.
/// Throws ConvergenceError when the two differ by more than 5 kkt_tol.
RandomVariable rho_with_measure(const DensityVector& q, const RiskSpec& spec);

struct DualReport {
  RandomVariable alpha1;
  RandomVariable dual_value;
  RandomVariable gap;  ///< rho - dual_value
  bool in_q1 = false;
  double fairness_excess = 0.0;
};

DualReport dual_report(const DensityVector& q, const RiskSpec& spec, const PrimalSolution& sol);

/// lambda E[V(q / lambda) | G] - lambda B for exponential utilities: an upper
/// bound on alpha^1(Q) for every lambda > 0.
RandomVariable conjugate_penalty_bound(const DensityVector& q, const RiskSpec& spec, const RandomVariable& lambda);

/// The same bound minimized over lambda on each block (golden section in
/// log lambda). Equal to alpha^1(Q) for exponential utilities.
RandomVariable conjugate_penalty_min(const DensityVector& q, const RiskSpec& spec);

}  // namespace condrisk
