#pragma once

#include <Eigen/Dense>

#include "condrisk/exponential.hpp"
#include "condrisk/prob_space.hpp"
#include "condrisk/shortfall_primal.hpp"

namespace condrisk {

/// Errors are max |lhs - rhs| / max(1, |rhs|) over agents and atoms.
struct ConsistencyReport {
  double max_abs_err_y = 0.0;
  double max_abs_err_q = 0.0;
  double max_abs_err_a = 0.0;
  double max_abs_err_rho_recursion = 0.0;

  /// Y(G,X) = Y(H,X) + (rho_G - rho_H) / (beta alpha_k). Closed form only.
  double y_transfer = 0.0;
  /// dQ(H, -a(G,X)) = E[e|G] / E[e|H], e = exp(-Xbar/beta). Closed form only.
  double q_ratio = 0.0;
  /// The four pieces a^k(H, -a(G,X)) splits into, each compared with its
  /// simplified expression. Closed form only.
  Eigen::Vector4d decomposition = Eigen::Vector4d::Zero();

  double tolerance = 1e-9;
  /// B is H-measurable. When false the identities are evaluated pointwise
  /// but not asserted.
  bool hypothesis_holds = true;
  bool identities_hold = false;
  bool pass = false;
};

double verify_y_consistency(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                            const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c);
double verify_q_consistency(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                            const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c);
double verify_a_consistency(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                            const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c);
double verify_rho_recursion(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                            const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c);

/// All four identities plus the intermediate diagnostics, closed form.
/// Throws InvariantError unless h coarsens g.
ConsistencyReport verify_consistency(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                                     const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c);

/// The same four identities with every optimum produced by solve_rho and
/// extract_dual_optimizer; spec.sigma() plays G. Tolerance 1e-6. Works for
/// any utility, although the identities are only known to hold for
/// exponential ones.
ConsistencyReport verify_consistency_solver(const RiskSpec& spec, const SigmaPartition& h);

}  // namespace condrisk
