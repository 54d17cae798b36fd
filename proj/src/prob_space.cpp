#include "condrisk/prob_space.hpp"

#include <algorithm>
#include <set>

namespace condrisk {

ScenarioSpace::ScenarioSpace(std::vector<std::string> labels, Eigen::VectorXd prob)
    : labels_(std::move(labels)), prob_(std::move(prob)) {
  if (prob_.size() < 1) throw SchemaError("ScenarioSpace: at least one atom is required");
  if (static_cast<Index>(labels_.size()) != prob_.size()) {
    throw SchemaError("ScenarioSpace: label count differs from probability count");
  }
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) throw SchemaError("ScenarioSpace: duplicate atom label '" + l + "'");
  }
  double total = 0.0;
  for (Index k = 0; k < prob_.size(); ++k) {
    if (!(prob_(k) > 0.0) || !std::isfinite(prob_(k))) {
      throw InvariantError("ScenarioSpace: atom '" + labels_[static_cast<std::size_t>(k)] +
                           "' has non-positive probability");
    }
    total += prob_(k);
  }
  if (std::abs(total - 1.0) > kProbabilitySumTol) {
    throw InvariantError("ScenarioSpace: probabilities do not sum to one");
  }
}

ScenarioSpace ScenarioSpace::uniform(Index atoms) {
  std::vector<std::string> labels;
  for (Index k = 0; k < atoms; ++k) labels.push_back("w" + std::to_string(k + 1));
  return ScenarioSpace(std::move(labels), Eigen::VectorXd::Constant(atoms, 1.0 / static_cast<double>(atoms)));
}

Index ScenarioSpace::index_of(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw SchemaError("unknown atom label '" + std::string(label) + "'");
  return static_cast<Index>(it - labels_.begin());
}

SigmaPartition::SigmaPartition(Index atoms, std::vector<std::vector<Index>> blocks)
    : blocks_(std::move(blocks)), block_of_(static_cast<std::size_t>(atoms), -1) {
  if (atoms < 1) throw SchemaError("SigmaPartition: at least one atom is required");
  for (auto& blk : blocks_) {
    if (blk.empty()) throw SchemaError("SigmaPartition: empty block");
    std::sort(blk.begin(), blk.end());
  }
  std::sort(blocks_.begin(), blocks_.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (Index k : blocks_[b]) {
      if (k < 0 || k >= atoms) throw SchemaError("SigmaPartition: atom index out of range");
      auto& slot = block_of_[static_cast<std::size_t>(k)];
      if (slot != -1) throw SchemaError("SigmaPartition: blocks overlap at atom " + std::to_string(k));
      slot = static_cast<Index>(b);
    }
  }
  for (std::size_t k = 0; k < block_of_.size(); ++k) {
    if (block_of_[k] == -1) throw SchemaError("SigmaPartition: atom " + std::to_string(k) + " not covered");
  }
}

SigmaPartition SigmaPartition::trivial(Index atoms) {
  std::vector<Index> all(static_cast<std::size_t>(atoms));
  for (Index k = 0; k < atoms; ++k) all[static_cast<std::size_t>(k)] = k;
  return SigmaPartition(atoms, {all});
}

SigmaPartition SigmaPartition::discrete(Index atoms) {
  std::vector<std::vector<Index>> blocks;
  for (Index k = 0; k < atoms; ++k) blocks.push_back({k});
  return SigmaPartition(atoms, std::move(blocks));
}

Eigen::VectorXd block_probabilities(const ScenarioSpace& space, const SigmaPartition& g) {
  detail::check_same_space(space, g, space.size());
  Eigen::VectorXd out(g.num_blocks());
  for (Index b = 0; b < g.num_blocks(); ++b) {
    double mass = 0.0;
    for (Index k : g.block(b)) mass += space.prob(k);
    out(b) = mass;
  }
  return out;
}

bool coarsens(const SigmaPartition& h, const SigmaPartition& g) {
  if (h.atoms() != g.atoms()) throw SchemaError("coarsens: partitions live on different spaces");
  for (const auto& blk : g.blocks()) {
    const Index target = h.block_of(blk.front());
    for (Index k : blk) {
      if (h.block_of(k) != target) return false;
    }
  }
  return true;
}

namespace detail {
void check_same_space(const ScenarioSpace& space, const SigmaPartition& g, Index len) {
  if (g.atoms() != space.size() || len != space.size()) {
    throw SchemaError("dimension mismatch between random variable, partition and space");
  }
}
}  // namespace detail

DensityVector::DensityVector(const ScenarioSpace& space, Eigen::MatrixXd q, SigmaPartition sigma)
    : q_(std::move(q)), sigma_(std::move(sigma)) {
  if (q_.rows() < 1 || q_.cols() != space.size() || sigma_.atoms() != space.size()) {
    throw SchemaError("DensityVector: dimension mismatch");
  }
  if (!q_.allFinite() || (q_.array() < 0.0).any()) {
    throw InvariantError("DensityVector: densities must be finite and nonnegative");
  }
  for (Index j = 0; j < q_.rows(); ++j) {
    for (Index b = 0; b < sigma_.num_blocks(); ++b) {
      double mass = 0.0;
      double weighted = 0.0;
      for (Index k : sigma_.block(b)) {
        mass += space.prob(k);
        weighted += space.prob(k) * q_(j, k);
      }
      if (std::abs(weighted - mass) > kNormalizationTol) {
        throw InvariantError("DensityVector: row " + std::to_string(j) +
                             " is not normalized on block " + std::to_string(b));
      }
    }
  }
}

DensityVector DensityVector::reference(const ScenarioSpace& space, Index agents, SigmaPartition sigma) {
  return DensityVector(space, Eigen::MatrixXd::Ones(agents, space.size()), std::move(sigma));
}

DensityVector DensityVector::normalize(const ScenarioSpace& space, const Eigen::MatrixXd& weights,
                                       SigmaPartition sigma) {
  Eigen::MatrixXd q = weights;
  for (Index j = 0; j < q.rows(); ++j) {
    const Eigen::VectorXd means = block_means(space, weights.row(j).transpose(), sigma);
    for (Index b = 0; b < sigma.num_blocks(); ++b) {
      if (!(means(b) > 0.0)) throw InvariantError("DensityVector::normalize: block with zero mass");
      for (Index k : sigma.block(b)) q(j, k) = weights(j, k) / means(b);
    }
  }
  return DensityVector(space, std::move(q), std::move(sigma));
}

RandomVariable sum_cond_exp_under(const ScenarioSpace& space, const DensityVector& q,
                                  const RandomVector& z) {
  if (z.rows() != q.agents() || z.cols() != q.atoms()) {
    throw SchemaError("sum_cond_exp_under: dimension mismatch");
  }
  RandomVariable total = RandomVariable::Zero(z.cols());
  for (Index j = 0; j < z.rows(); ++j) {
    total += cond_exp_under_density(space, q.row(j), z.row(j).transpose(), q.sigma());
  }
  return total;
}

}  // namespace condrisk
