#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "condrisk/errors.hpp"

namespace condrisk {

using Index = Eigen::Index;

/// One value per atom.
using RandomVariable = Eigen::VectorXd;
/// Agents in rows, atoms in columns.
using RandomVector = Eigen::MatrixXd;

template <typename Scalar>
using RandomVariableT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RandomVectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kMeasurabilityTol = 1e-10;
inline constexpr double kNormalizationTol = 1e-10;
inline constexpr double kProbabilitySumTol = 1e-12;

/// Finite probability space: K labelled atoms with strictly positive mass.
class ScenarioSpace {
 public:
  ScenarioSpace(std::vector<std::string> labels, Eigen::VectorXd prob);

  static ScenarioSpace uniform(Index atoms);

  Index size() const noexcept { return prob_.size(); }
  const Eigen::VectorXd& prob() const noexcept { return prob_; }
  double prob(Index atom) const { return prob_(atom); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  /// Position of `label`; throws SchemaError when absent.
  Index index_of(std::string_view label) const;

 private:
  std::vector<std::string> labels_;
  Eigen::VectorXd prob_;
};

/// A sub-sigma-algebra on a finite space, stored as the partition generating
/// it. Blocks are sorted ascending and ordered by their smallest atom, so two
/// partitions generate the same sigma-algebra iff they compare equal.
class SigmaPartition {
 public:
  SigmaPartition(Index atoms, std::vector<std::vector<Index>> blocks);

  /// {emptyset, Omega}.
  static SigmaPartition trivial(Index atoms);
  /// The full power set.
  static SigmaPartition discrete(Index atoms);

  Index atoms() const noexcept { return static_cast<Index>(block_of_.size()); }
  Index num_blocks() const noexcept { return static_cast<Index>(blocks_.size()); }
  const std::vector<Index>& block(Index b) const { return blocks_[static_cast<std::size_t>(b)]; }
  const std::vector<std::vector<Index>>& blocks() const noexcept { return blocks_; }
  Index block_of(Index atom) const { return block_of_[static_cast<std::size_t>(atom)]; }

  bool operator==(const SigmaPartition& other) const { return blocks_ == other.blocks_; }

 private:
  std::vector<std::vector<Index>> blocks_;
  std::vector<Index> block_of_;
};

/// Probability of every block, in block order.
Eigen::VectorXd block_probabilities(const ScenarioSpace& space, const SigmaPartition& g);

/// True iff every block of `g` lies inside a single block of `h` (h is coarser).
bool coarsens(const SigmaPartition& h, const SigmaPartition& g);

namespace detail {
void check_same_space(const ScenarioSpace& space, const SigmaPartition& g, Index len);
}  // namespace detail

/// Blockwise P-weighted mean of `x`, one entry per block of `g`.
template <typename Derived>
RandomVariableT<typename Derived::Scalar> block_means(const ScenarioSpace& space,
                                                      const Eigen::MatrixBase<Derived>& x,
                                                      const SigmaPartition& g) {
  using Scalar = typename Derived::Scalar;
  detail::check_same_space(space, g, x.size());
  RandomVariableT<Scalar> out(g.num_blocks());
  for (Index b = 0; b < g.num_blocks(); ++b) {
    Scalar mass(0);
    Scalar acc(0);
    for (Index k : g.block(b)) {
      const Scalar p(space.prob(k));
      mass += p;
      acc += p * x(k);
    }
    out(b) = acc / mass;
  }
  return out;
}

/// Replicate per-block values across the atoms of each block.
template <typename Derived>
RandomVariableT<typename Derived::Scalar> expand_blocks(const SigmaPartition& g,
                                                        const Eigen::MatrixBase<Derived>& per_block) {
  if (per_block.size() != g.num_blocks()) {
    throw SchemaError("expand_blocks: expected one value per block");
  }
  RandomVariableT<typename Derived::Scalar> out(g.atoms());
  for (Index b = 0; b < g.num_blocks(); ++b) {
    for (Index k : g.block(b)) out(k) = per_block(b);
  }
  return out;
}

/// E_P[x | G].
template <typename Derived>
RandomVariableT<typename Derived::Scalar> cond_exp(const ScenarioSpace& space,
                                                   const Eigen::MatrixBase<Derived>& x,
                                                   const SigmaPartition& g) {
  return expand_blocks(g, block_means(space, x, g));
}

/// Row-by-row E_P[X^j | G] for an agents x atoms matrix.
template <typename Derived>
RandomVectorT<typename Derived::Scalar> cond_exp_rows(const ScenarioSpace& space,
                                                      const Eigen::MatrixBase<Derived>& x,
                                                      const SigmaPartition& g) {
  RandomVectorT<typename Derived::Scalar> out(x.rows(), x.cols());
  for (Index j = 0; j < x.rows(); ++j) {
    out.row(j) = cond_exp(space, x.row(j).transpose(), g).transpose();
  }
  return out;
}

/// Constant on every block of `g`, up to `tol` (scaled by the magnitude of
/// the block's first value when that exceeds one).
template <typename Derived>
bool is_measurable(const Eigen::MatrixBase<Derived>& x, const SigmaPartition& g,
                   double tol = kMeasurabilityTol) {
  if (x.size() != g.atoms()) throw SchemaError("is_measurable: dimension mismatch");
  for (const auto& blk : g.blocks()) {
    const double ref = static_cast<double>(x(blk.front()));
    const double scale = std::max(1.0, std::abs(ref));
    for (Index k : blk) {
      if (!(std::abs(static_cast<double>(x(k)) - ref) <= tol * scale)) return false;
    }
  }
  return true;
}

/// Blockwise E_P[q | G] - 1; max absolute value over blocks.
template <typename Derived>
double normalization_defect(const ScenarioSpace& space, const Eigen::MatrixBase<Derived>& q_row,
                            const SigmaPartition& g) {
  const auto means = block_means(space, q_row, g);
  double worst = 0.0;
  for (Index b = 0; b < means.size(); ++b) {
    worst = std::max(worst, std::abs(static_cast<double>(means(b)) - 1.0));
  }
  return worst;
}

/// E_Q[x | G] = E_P[(dQ/dP) x | G] for a single density row normalized
/// against `g`.
template <typename DerivedQ, typename DerivedX>
RandomVariableT<typename DerivedX::Scalar> cond_exp_under_density(
    const ScenarioSpace& space, const Eigen::MatrixBase<DerivedQ>& q_row,
    const Eigen::MatrixBase<DerivedX>& x, const SigmaPartition& g) {
  using Scalar = typename DerivedX::Scalar;
  if (q_row.size() != x.size()) throw SchemaError("cond_exp_under_density: dimension mismatch");
  if (normalization_defect(space, q_row, g) > 1e-8) {
    throw InvariantError("cond_exp_under_density: density row is not normalized against G");
  }
  RandomVariableT<Scalar> prod = q_row.template cast<Scalar>().cwiseProduct(x.derived());
  return cond_exp(space, prod, g);
}

/// I_G(Q, P) = E_P[q log q | G], with 0 log 0 = 0.
template <typename Derived>
RandomVariableT<typename Derived::Scalar> cond_relative_entropy(const ScenarioSpace& space,
                                                                const Eigen::MatrixBase<Derived>& q_row,
                                                                const SigmaPartition& g) {
  using Scalar = typename Derived::Scalar;
  using std::log;
  RandomVariableT<Scalar> ent(q_row.size());
  for (Index k = 0; k < q_row.size(); ++k) {
    const Scalar v = q_row(k);
    if (v < Scalar(0)) throw InvariantError("cond_relative_entropy: negative density entry");
    ent(k) = v > Scalar(0) ? Scalar(v * log(v)) : Scalar(0);
  }
  return cond_exp(space, ent, g);
}

/// Vector of Radon-Nikodym densities dQ^j/dP, one row per agent, each row
/// with conditional P-mean one on every block of its partition.
class DensityVector {
 public:
  DensityVector(const ScenarioSpace& space, Eigen::MatrixXd q, SigmaPartition sigma);

  /// Q^j = P for every agent.
  static DensityVector reference(const ScenarioSpace& space, Index agents, SigmaPartition sigma);

  /// Rescale nonnegative weights blockwise so each row has conditional mean one.
  static DensityVector normalize(const ScenarioSpace& space, const Eigen::MatrixXd& weights,
                                 SigmaPartition sigma);

  const Eigen::MatrixXd& q() const noexcept { return q_; }
  const SigmaPartition& sigma() const noexcept { return sigma_; }
  Index agents() const noexcept { return q_.rows(); }
  Index atoms() const noexcept { return q_.cols(); }
  auto row(Index j) const { return q_.row(j).transpose(); }

 private:
  Eigen::MatrixXd q_;
  SigmaPartition sigma_;
};

/// sum_j E_{Q^j}[Z^j | G] as a G-measurable variable.
RandomVariable sum_cond_exp_under(const ScenarioSpace& space, const DensityVector& q,
                                  const RandomVector& z);

}  // namespace condrisk
