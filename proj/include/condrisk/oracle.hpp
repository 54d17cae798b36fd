#pragma once

// Brute-force reference values for tiny instances. Nothing here calls the
// Newton machinery; only utility evaluation and conditional expectations are
// shared with the solvers.

#include <Eigen/Dense>

#include "condrisk/prob_space.hpp"
#include "condrisk/shortfall_primal.hpp"

namespace condrisk {

/// min sum_j Y^j over grid allocations (every coordinate in lo + step Z,
/// inside [lo, hi]) that are cluster-feasible and satisfy E[U(X+Y)|G] >= B.
/// Full sharing scans the block total d on the grid and, per atom, the best
/// split of d; no sharing scans the total of the G-measurable amounts and
/// their best split. Needs N <= 2 and blocks of at most 3 atoms. Throws
/// InvariantError when no grid point is feasible.
RandomVariable grid_min_rho(const RiskSpec& spec, double lo, double hi, double step);

/// alpha^1(Q) from its Lagrangian form
///   inf_{lambda > 0} sum_k w_k sup_{z on grid} (lambda U(z) - q_k . z) - lambda B,
/// with every one-dimensional supremum taken by scanning the whole grid.
/// Separable U only.
RandomVariable grid_max_alpha1(const DensityVector& q, const RiskSpec& spec, double lo, double hi, double step);

/// sup over cluster-feasible grid Y with |Y| <= bound of
/// sum_j E_{Q^j}[Y^j | G] - sum_j Y^j. Zero for every bound when Q is fair;
/// grows linearly in the bound otherwise. N <= 2, blocks of at most 3 atoms.
RandomVariable grid_fairness_gap(const DensityVector& q, const RiskSpec& spec, double bound, double step);

/// The static value (trivial G, full sharing, separable U) by direct scalar
/// optimization: the smallest total d with E[V(d)] = B, where V_k(d) is the
/// best utility that splitting d at atom k can reach.
double static_shortfall_value(const RiskSpec& spec);

}  // namespace condrisk
