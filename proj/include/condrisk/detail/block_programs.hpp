#pragma once

// Per-block programs shared by the primal, dual and equilibrium modules.
// Columns of every matrix are the atoms of one sigma-block, rows are agents,
// and `w` holds the conditional probabilities of those atoms.

#include <Eigen/Dense>

#include <vector>

#include "condrisk/preferences.hpp"
#include "condrisk/shortfall_primal.hpp"

namespace condrisk::detail {

struct BlockView {
  Eigen::MatrixXd x;
  Eigen::VectorXd w;
  double b = 0.0;
};

BlockView restrict_to_block(const ScenarioSpace& space, const SigmaPartition& g, Index blk, const RandomVector& x,
                            double b);
Eigen::MatrixXd block_columns(const SigmaPartition& g, Index blk, const Eigen::MatrixXd& m);

struct BlockSolution {
  Eigen::MatrixXd y;
  Eigen::VectorXd totals;  // group sums d_m (shortfall only)
  double multiplier = 0.0;
  double value = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool used_fallback = false;
};

/// min sum_m d_m over (y, d) with sum_{i in I_m} y_k^i = d_m at every atom
/// and sum_k w_k U(x_k + y_k) = b. Damped Newton on the KKT system from
/// `start`; for separable U a nested bisection on the multipliers takes over
/// when Newton stalls.
BlockSolution solve_shortfall_block(const Aggregator& u, const BlockView& in,
                                    const std::vector<std::vector<Index>>& groups, const Eigen::MatrixXd& start,
                                    const SolverOptions& opt);

/// min sum_k w_k c_k . y_k subject to sum_k w_k U(x_k + y_k) = b, y free.
/// Zero prices are allowed for separable U with bounded u_j (that coordinate
/// is sent to +infinity; y then holds +inf there). Throws DivergenceError
/// when the minimum is -infinity.
BlockSolution solve_priced_block(const Aggregator& u, const BlockView& in, const Eigen::MatrixXd& cost,
                                 const SolverOptions& opt);

/// max sum_k w_k U(x_k + y_k) subject to sum_k w_k q_k . y_k = budget, q > 0.
BlockSolution solve_budget_block(const Aggregator& u, const BlockView& in, const Eigen::MatrixXd& q, double budget,
                                 const SolverOptions& opt);

/// The z with grad U(z) = v for v > 0: closed form per coordinate when U is
/// separable, damped Newton on U(z) - v.z otherwise.
Eigen::VectorXd invert_gradient(const Aggregator& u, const Eigen::VectorXd& v);

}  // namespace condrisk::detail
