#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "condrisk/preferences.hpp"
#include "condrisk/prob_space.hpp"

namespace condrisk {

/// Partition (I_1, ..., I_h) of the agents: inside each group risk may be
/// exchanged scenario by scenario, but the group total must be known given G.
/// One group is full sharing; N singleton groups is no sharing.
class ClusterConstraint {
 public:
  ClusterConstraint(Index agents, std::vector<std::vector<Index>> groups);

  static ClusterConstraint full_sharing(Index agents);
  static ClusterConstraint no_sharing(Index agents);

  Index agents() const noexcept { return static_cast<Index>(group_of_.size()); }
  Index num_groups() const noexcept { return static_cast<Index>(groups_.size()); }
  const std::vector<std::vector<Index>>& groups() const noexcept { return groups_; }
  const std::vector<Index>& group(Index m) const { return groups_[static_cast<std::size_t>(m)]; }
  const std::vector<Index>& group_of() const noexcept { return group_of_; }
  bool is_full_sharing() const noexcept { return groups_.size() == 1; }

  /// Every group total sum_{i in I_m} y^i is measurable with respect to g.
  bool admits(const RandomVector& y, const SigmaPartition& g, double tol = kMeasurabilityTol) const;

 private:
  std::vector<std::vector<Index>> groups_;
  std::vector<Index> group_of_;
};

struct SolverOptions {
  double kkt_tol = 1e-9;
  int max_iter = 200;
  /// Upper bound on worker threads for per-block solves.
  int threads = 1;
};

/// Everything that defines one conditional shortfall problem.
class RiskSpec {
 public:
  RiskSpec(ScenarioSpace space, SigmaPartition sigma, RandomVector x, Aggregator aggregator, RandomVariable b,
           ClusterConstraint clusters, SolverOptions tol = {});

  const ScenarioSpace& space() const noexcept { return space_; }
  const SigmaPartition& sigma() const noexcept { return sigma_; }
  const RandomVector& x() const noexcept { return x_; }
  const Aggregator& aggregator() const noexcept { return aggregator_; }
  const RandomVariable& b() const noexcept { return b_; }
  const ClusterConstraint& clusters() const noexcept { return clusters_; }
  const SolverOptions& tol() const noexcept { return tol_; }

  Index agents() const noexcept { return x_.rows(); }
  Index atoms() const noexcept { return x_.cols(); }
  /// Threshold value on block `blk` (read from the block's first atom).
  double b_on_block(Index blk) const { return b_(sigma_.block(blk).front()); }

  RiskSpec with_x(RandomVector x) const;
  RiskSpec with_b(RandomVariable b) const;
  RiskSpec with_sigma(SigmaPartition sigma, RandomVariable b) const;
  RiskSpec with_options(SolverOptions tol) const;

 private:
  ScenarioSpace space_;
  SigmaPartition sigma_;
  RandomVector x_;
  Aggregator aggregator_;
  RandomVariable b_;
  ClusterConstraint clusters_;
  SolverOptions tol_;
};

struct PrimalSolution {
  RandomVector y_hat;
  /// G-measurable optimal value (one entry per atom).
  RandomVariable rho;
  /// Utility-constraint multiplier, one per block.
  Eigen::VectorXd mu;
  Eigen::VectorXd kkt_residual;
  Eigen::VectorXi iterations;
  /// Blocks finished by the separable fallback before the final Newton polish.
  std::vector<bool> used_fallback;
};

/// Constant-per-agent allocation m = ||X^j||_inf + t with U(t 1) at least
/// max(B) plus a margin of min(1e-6, (sup U - max B) / 2); t found by
/// doubling from 0.1.
RandomVector feasible_start(const RiskSpec& spec);

/// rho_G(X) = essinf { sum_j Y^j : Y cluster-feasible, E[U(X+Y)|G] >= B },
/// solved block by block as an equality-constrained concave program.
/// Throws ConvergenceError when a block does not reach kkt_tol.
PrimalSolution solve_rho(const RiskSpec& spec);
PrimalSolution solve_rho(const RiskSpec& spec, const RandomVector& start);

/// Cash-additive part: value of solve_rho only.
RandomVariable rho_value(const RiskSpec& spec);

struct AxiomReport {
  double monotonicity = 0.0;  ///< max of rho(max(X,Z)) - rho(X), rho(max(X,Z)) - rho(Z)
  double convexity = 0.0;     ///< max of rho(lX+(1-l)Z) - l rho(X) - (1-l) rho(Z)
  double additivity = 0.0;    ///< max |rho(X + Y_g) - rho(X) + sum_j Y_g^j|
  double locality = 0.0;      ///< max |rho(X 1_A + Z 1_A^c) - rho(X) 1_A - rho(Z) 1_A^c|
  double tolerance = 0.0;
  bool pass = false;
};

/// Checks monotonicity, conditional convexity, conditional cash additivity
/// and the local property of rho_G by solving the instances they involve.
/// `spec2` differs from `spec` only in X. `shift` is the G-measurable cash
/// vector used for additivity (defaults to 0.7 for every agent); the local
/// property uses A = union of the even-numbered blocks.
AxiomReport check_axioms(const RiskSpec& spec, const RiskSpec& spec2, const RandomVariable& lambda_g,
                         const std::optional<RandomVector>& shift = std::nullopt);

}  // namespace condrisk
