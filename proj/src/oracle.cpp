#include "condrisk/oracle.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "condrisk/errors.hpp"

namespace condrisk {
namespace {

struct Block {
  Eigen::MatrixXd x;
  Eigen::VectorXd w;
  double b;
};

Block take_block(const RiskSpec& spec, Index blk) {
  const auto& atoms = spec.sigma().block(blk);
  Block out;
  out.x.resize(spec.agents(), static_cast<Index>(atoms.size()));
  out.w.resize(static_cast<Index>(atoms.size()));
  double mass = 0.0;
  for (Index a : atoms) mass += spec.space().prob(a);
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    out.x.col(static_cast<Index>(k)) = spec.x().col(atoms[k]);
    out.w(static_cast<Index>(k)) = spec.space().prob(atoms[k]) / mass;
  }
  out.b = spec.b_on_block(blk);
  return out;
}

void check_tiny(const RiskSpec& spec, const char* who) {
  if (spec.agents() > 2) throw InvariantError(std::string(who) + ": at most 2 agents");
  for (const auto& blk : spec.sigma().blocks()) {
    if (blk.size() > 3) throw InvariantError(std::string(who) + ": blocks of at most 3 atoms");
  }
}

Index grid_points(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi > lo)) throw SchemaError("oracle: need lo < hi and step > 0");
  return static_cast<Index>(std::floor((hi - lo) / step + 1e-9)) + 1;
}

// Largest value of a strictly unimodal f on the integers [a, b].
double unimodal_max(Index a, Index b, const std::function<double(Index)>& f) {
  while (b - a > 2) {
    const Index m1 = a + (b - a) / 3;
    const Index m2 = b - (b - a) / 3;
    if (f(m1) < f(m2)) a = m1 + 1; else b = m2 - 1;
  }
  double best = -std::numeric_limits<double>::infinity();
  for (Index i = a; i <= b; ++i) best = std::max(best, f(i));
  return best;
}

// Smallest increasing-function root by expanding then bisecting.
double scalar_root(const std::function<double(double)>& f) {
  double lo = -1.0;
  double hi = 1.0;
  for (int i = 0; f(lo) > 0.0; ++i) {
    if (i > 60) throw ConvergenceError("oracle: no lower bracket", 0.0);
    hi = lo;
    lo *= 2.0;
  }
  for (int i = 0; f(hi) < 0.0; ++i) {
    if (i > 60) throw ConvergenceError("oracle: no upper bracket", 0.0);
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

RandomVariable grid_min_rho(const RiskSpec& spec, double lo, double hi, double step) {
  check_tiny(spec, "grid_min_rho");
  const auto& cl = spec.clusters();
  const Index n = spec.agents();
  const bool shared = cl.is_full_sharing();
  if (!shared && cl.num_groups() != n) throw InvariantError("grid_min_rho: full sharing or no sharing only");
  const Index pts = grid_points(lo, hi, step);
  const auto& u = spec.aggregator();
  auto coord = [&](Index i) { return lo + static_cast<double>(i) * step; };

  const auto& g = spec.sigma();
  Eigen::VectorXd per_block(g.num_blocks());
  for (Index blk = 0; blk < g.num_blocks(); ++blk) {
    const Block bl = take_block(spec, blk);
    const Index nk = bl.x.cols();
    // Utility at atom k when agent 1 gets grid index i and the total is index t.
    auto at = [&](Index k, Index t, Index i) {
      Eigen::VectorXd z = bl.x.col(k);
      z(0) += coord(i);
      if (n == 2) z(1) += coord(t - i);
      return u.value(z);
    };
    const Index i_range = n == 2 ? pts - 1 : 0;
    auto feasible = [&](Index t) {
      const Index a = std::max<Index>(0, t - i_range);
      const Index b = std::min<Index>(pts - 1, t);
      if (n == 1) {
        double eu = 0.0;
        for (Index k = 0; k < nk; ++k) eu += bl.w(k) * at(k, t, t);
        return eu >= bl.b;
      }
      if (shared) {
        double eu = 0.0;
        for (Index k = 0; k < nk; ++k) eu += bl.w(k) * unimodal_max(a, b, [&](Index i) { return at(k, t, i); });
        return eu >= bl.b;
      }
      return unimodal_max(a, b, [&](Index i) {
               double eu = 0.0;
               for (Index k = 0; k < nk; ++k) eu += bl.w(k) * at(k, t, i);
               return eu;
             }) >= bl.b;
    };
    const Index t_max = n == 2 ? 2 * (pts - 1) : pts - 1;
    Index found = -1;
    for (Index t = 0; t <= t_max; ++t) {
      if (feasible(t)) {
        found = t;
        break;
      }
    }
    if (found < 0) throw InvariantError("grid_min_rho: empty feasible grid on block " + std::to_string(blk));
    per_block(blk) = static_cast<double>(n) * lo + static_cast<double>(found) * step;
  }
  return expand_blocks(g, per_block);
}

RandomVariable grid_max_alpha1(const DensityVector& q, const RiskSpec& spec, double lo, double hi, double step) {
  const auto& u = spec.aggregator();
  if (!u.separable()) throw InvariantError("grid_max_alpha1: separable utilities only");
  if (q.agents() != spec.agents() || q.atoms() != spec.atoms()) throw SchemaError("grid_max_alpha1: shape mismatch");
  const Index pts = grid_points(lo, hi, step);
  const Index n = spec.agents();
  const auto& g = spec.sigma();

  // Utility table on the grid, per agent.
  Eigen::MatrixXd table(n, pts);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < pts; ++i) table(j, i) = u.utility(j).value(lo + static_cast<double>(i) * step);
  }

  Eigen::VectorXd per_block(g.num_blocks());
  for (Index blk = 0; blk < g.num_blocks(); ++blk) {
    const auto& atoms = g.block(blk);
    double mass = 0.0;
    for (Index a : atoms) mass += spec.space().prob(a);
    const double b = spec.b_on_block(blk);
    auto lagrangian = [&](double s) {
      const double lam = std::exp(s);
      double total = -lam * b;
      for (Index a : atoms) {
        double inner = 0.0;
        for (Index j = 0; j < n; ++j) {
          double best = -std::numeric_limits<double>::infinity();
          for (Index i = 0; i < pts; ++i) {
            best = std::max(best, lam * table(j, i) - q.q()(j, a) * (lo + static_cast<double>(i) * step));
          }
          inner += best;
        }
        total += spec.space().prob(a) / mass * inner;
      }
      return total;
    };
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = -20.0;
    double c = 20.0;
    double m1 = c - invphi * (c - a);
    double m2 = a + invphi * (c - a);
    double f1 = lagrangian(m1);
    double f2 = lagrangian(m2);
    for (int it = 0; it < 80; ++it) {
      if (f1 < f2) {
        c = m2;
        m2 = m1;
        f2 = f1;
        m1 = c - invphi * (c - a);
        f1 = lagrangian(m1);
      } else {
        a = m1;
        m1 = m2;
        f1 = f2;
        m2 = a + invphi * (c - a);
        f2 = lagrangian(m2);
      }
    }
    per_block(blk) = std::min(f1, f2);
  }
  return expand_blocks(g, per_block);
}

RandomVariable grid_fairness_gap(const DensityVector& q, const RiskSpec& spec, double bound, double step) {
  check_tiny(spec, "grid_fairness_gap");
  const Index pts = grid_points(-bound, bound, step);
  const Index n = spec.agents();
  const bool shared = n == 2 && spec.clusters().is_full_sharing();
  const auto& g = spec.sigma();
  auto coord = [&](Index i) { return -bound + static_cast<double>(i) * step; };

  Eigen::VectorXd per_block(g.num_blocks());
  for (Index blk = 0; blk < g.num_blocks(); ++blk) {
    const auto& atoms = g.block(blk);
    const Index nk = static_cast<Index>(atoms.size());
    double mass = 0.0;
    for (Index a : atoms) mass += spec.space().prob(a);
    double best = -std::numeric_limits<double>::infinity();
    if (!shared) {
      // Feasible Y: each agent holds a G-measurable amount.
      for (Index j = 0; j < n; ++j) {
        double eq = 0.0;
        for (Index a : atoms) eq += spec.space().prob(a) / mass * q.q()(j, a);
        double agent_best = -std::numeric_limits<double>::infinity();
        for (Index i = 0; i < pts; ++i) agent_best = std::max(agent_best, coord(i) * (eq - 1.0));
        best = (j == 0 ? 0.0 : best) + agent_best;
      }
    } else {
      // Y^1 free atom by atom, Y^2 = d - Y^1 with d constant on the block.
      Index combos = 1;
      for (Index k = 0; k < nk; ++k) combos *= pts;
      for (Index c = 0; c < combos; ++c) {
        Eigen::VectorXd y1(nk);
        Index rest = c;
        for (Index k = 0; k < nk; ++k) {
          y1(k) = coord(rest % pts);
          rest /= pts;
        }
        for (Index t = 0; t < 2 * pts - 1; ++t) {
          const double d = -2.0 * bound + static_cast<double>(t) * step;
          double gap = -d;
          bool ok = true;
          for (Index k = 0; k < nk && ok; ++k) {
            const double y2 = d - y1(k);
            if (std::abs(y2) > bound + 1e-12) ok = false;
            const double wk = spec.space().prob(atoms[k]) / mass;
            gap += wk * (q.q()(0, atoms[k]) * y1(k) + q.q()(1, atoms[k]) * y2);
          }
          if (ok) best = std::max(best, gap);
        }
      }
    }
    per_block(blk) = best;
  }
  return expand_blocks(g, per_block);
}

double static_shortfall_value(const RiskSpec& spec) {
  if (spec.sigma().num_blocks() != 1) throw InvariantError("static_shortfall_value: needs the trivial partition");
  const auto& u = spec.aggregator();
  if (!u.separable()) throw InvariantError("static_shortfall_value: separable utilities only");
  const Index n = spec.agents();
  const Index nk = spec.atoms();
  const auto& p = spec.space().prob();
  const double b = spec.b()(0);
  const RandomVector& x = spec.x();

  if (spec.clusters().is_full_sharing()) {
    // Best split of total d at atom k: equal marginal utilities.
    auto v_k = [&](Index k, double d) {
      if (n == 1) return u.utility(0).value(x(0, k) + d);
      const double s = scalar_root([&](double t) {
        const double nu = std::exp(t);
        double total = 0.0;
        for (Index j = 0; j < n; ++j) total += u.utility(j).inverse_derivative(nu) - x(j, k);
        return d - total;
      });
      double val = 0.0;
      for (Index j = 0; j < n; ++j) val += u.utility(j).value(u.utility(j).inverse_derivative(std::exp(s)));
      return val;
    };
    return scalar_root([&](double d) {
      double eu = 0.0;
      for (Index k = 0; k < nk; ++k) eu += p(k) * v_k(k, d);
      return eu - b;
    });
  }
  if (spec.clusters().num_groups() != n) throw InvariantError("static_shortfall_value: full sharing or no sharing only");
  // Deterministic amounts: E[u_j'(X^j + y_j)] equal to a common nu.
  Eigen::VectorXd y(n);
  auto fill = [&](double nu) {
    double eu = 0.0;
    for (Index j = 0; j < n; ++j) {
      y(j) = scalar_root([&](double c) {
        double m = 0.0;
        for (Index k = 0; k < nk; ++k) m += p(k) * u.utility(j).derivative(x(j, k) + c);
        return nu - m;
      });
      for (Index k = 0; k < nk; ++k) eu += p(k) * u.utility(j).value(x(j, k) + y(j));
    }
    return eu;
  };
  const double s = scalar_root([&](double t) { return b - fill(std::exp(t)); });
  fill(std::exp(s));
  return y.sum();
}

}  // namespace condrisk
