#include "condrisk/detail/block_programs.hpp"

#include <cmath>
#include <limits>

#include "condrisk/detail/arrow_newton.hpp"
#include "condrisk/errors.hpp"

namespace condrisk::detail {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Root of a nondecreasing f, bracketed by stepping outward from t0 with
// doubling strides (capped at |t| <= cap), then bisected to the last bit.
template <class F>
double increasing_root(F&& f, double t0, double cap = 700.0) {
  double lo = t0 - 1.0;
  double hi = t0 + 1.0;
  double stride = 1.0;
  while (f(lo) > 0.0) {
    hi = lo;
    stride *= 2.0;
    lo -= stride;
    if (lo < t0 - cap) throw ConvergenceError("bisection: no lower bracket", kInf);
  }
  stride = 1.0;
  while (f(hi) < 0.0) {
    lo = hi;
    stride *= 2.0;
    hi += stride;
    if (hi > t0 + cap) throw ConvergenceError("bisection: no upper bracket", kInf);
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

Eigen::MatrixXd incidence(Index agents, const std::vector<std::vector<Index>>& groups) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(agents, static_cast<Index>(groups.size()));
  for (std::size_t m = 0; m < groups.size(); ++m) {
    for (Index i : groups[m]) e(i, static_cast<Index>(m)) = 1.0;
  }
  return e;
}

// KKT system of  min sum_k w_k c_k.y_k + sum_m d_m
//   s.t. E^T y_k = d (every atom),  sum_k w_k U(x_k + y_k) = b.
// Local unknowns per atom [y_k, l_k], shared [d, mu]. With l scaled by w_k
// the stationarity rows read c_k - mu grad U + E l_k = 0.
class KktProblem {
 public:
  KktProblem(const Aggregator& u, const BlockView& in, const Eigen::MatrixXd& cost, Eigen::MatrixXd e)
      : u_(u), in_(in), cost_(cost), e_(std::move(e)), n_(in.x.rows()), h_(e_.cols()) {}

  Index atoms() const { return in_.x.cols(); }

  bool residual(const ArrowState& s, ArrowResidual& r) const {
    const double mu = s.shared(h_);
    r.local.resize(static_cast<std::size_t>(atoms()));
    r.shared = Eigen::VectorXd::Zero(h_ + 1);
    double eu = 0.0;
    for (Index k = 0; k < atoms(); ++k) {
      const auto& loc = s.local[static_cast<std::size_t>(k)];
      const Eigen::VectorXd z = in_.x.col(k) + loc.head(n_);
      const Eigen::VectorXd g = u_.gradient(z);
      const double val = u_.value(z);
      if (!g.allFinite() || !std::isfinite(val)) return false;
      Eigen::VectorXd rk(n_ + h_);
      rk.head(n_) = -mu * g;
      if (cost_.size()) rk.head(n_) += cost_.col(k);
      if (h_ > 0) {
        rk.head(n_) += e_ * loc.tail(h_);
        rk.tail(h_) = e_.transpose() * loc.head(n_) - s.shared.head(h_);
        r.shared.head(h_) += in_.w(k) * loc.tail(h_);
      }
      eu += in_.w(k) * val;
      r.local[static_cast<std::size_t>(k)] = std::move(rk);
    }
    if (h_ > 0) r.shared.head(h_).array() -= 1.0;
    r.shared(h_) = eu - in_.b;
    return true;
  }

  void jacobian(const ArrowState& s, Index k, ArrowJacobianBlock& blk) const {
    const double mu = s.shared(h_);
    const auto& loc = s.local[static_cast<std::size_t>(k)];
    const Eigen::VectorXd z = in_.x.col(k) + loc.head(n_);
    const Eigen::VectorXd g = u_.gradient(z);
    const Index nl = n_ + h_;
    blk.jkk = Eigen::MatrixXd::Zero(nl, nl);
    blk.jkk.topLeftCorner(n_, n_) = -mu * u_.hessian(z);
    blk.ck = Eigen::MatrixXd::Zero(nl, h_ + 1);
    blk.ck.col(h_).head(n_) = -g;
    blk.dk = Eigen::MatrixXd::Zero(h_ + 1, nl);
    blk.dk.row(h_).head(n_) = in_.w(k) * g.transpose();
    if (h_ > 0) {
      blk.jkk.topRightCorner(n_, h_) = e_;
      blk.jkk.bottomLeftCorner(h_, n_) = e_.transpose();
      blk.ck.bottomLeftCorner(h_, h_) = -Eigen::MatrixXd::Identity(h_, h_);
      blk.dk.topRightCorner(h_, h_) = in_.w(k) * Eigen::MatrixXd::Identity(h_, h_);
    }
  }

  Eigen::MatrixXd shared_block(const ArrowState&) const { return Eigen::MatrixXd::Zero(h_ + 1, h_ + 1); }

  double max_step(const ArrowState& s, const ArrowState& dir) const {
    const double dmu = dir.shared(h_);
    return dmu < 0.0 ? 0.95 * s.shared(h_) / -dmu : 1.0;
  }

  ArrowState state(const Eigen::MatrixXd& y, const Eigen::MatrixXd& ell, const Eigen::VectorXd& d, double mu) const {
    ArrowState s;
    s.local.resize(static_cast<std::size_t>(atoms()));
    for (Index k = 0; k < atoms(); ++k) {
      Eigen::VectorXd loc(n_ + h_);
      loc.head(n_) = y.col(k);
      if (h_ > 0) loc.tail(h_) = ell.col(k);
      s.local[static_cast<std::size_t>(k)] = std::move(loc);
    }
    s.shared.resize(h_ + 1);
    if (h_ > 0) s.shared.head(h_) = d;
    s.shared(h_) = mu;
    return s;
  }

  Eigen::MatrixXd allocation(const ArrowState& s) const {
    Eigen::MatrixXd y(n_, atoms());
    for (Index k = 0; k < atoms(); ++k) y.col(k) = s.local[static_cast<std::size_t>(k)].head(n_);
    return y;
  }

 private:
  const Aggregator& u_;
  const BlockView& in_;
  const Eigen::MatrixXd& cost_;
  Eigen::MatrixXd e_;
  Index n_;
  Index h_;
};

// KKT system of  max sum_k w_k U(x_k + y_k)  s.t.  sum_k w_k q_k.y_k = budget.
class BudgetProblem {
 public:
  BudgetProblem(const Aggregator& u, const BlockView& in, const Eigen::MatrixXd& q, double budget)
      : u_(u), in_(in), q_(q), budget_(budget) {}

  Index atoms() const { return in_.x.cols(); }

  bool residual(const ArrowState& s, ArrowResidual& r) const {
    const double nu = s.shared(0);
    r.local.resize(static_cast<std::size_t>(atoms()));
    r.shared = Eigen::VectorXd::Constant(1, -budget_);
    for (Index k = 0; k < atoms(); ++k) {
      const auto& y = s.local[static_cast<std::size_t>(k)];
      const Eigen::VectorXd g = u_.gradient(in_.x.col(k) + y);
      if (!g.allFinite()) return false;
      r.local[static_cast<std::size_t>(k)] = g - nu * q_.col(k);
      r.shared(0) += in_.w(k) * q_.col(k).dot(y);
    }
    return true;
  }

  void jacobian(const ArrowState& s, Index k, ArrowJacobianBlock& blk) const {
    blk.jkk = u_.hessian(in_.x.col(k) + s.local[static_cast<std::size_t>(k)]);
    blk.ck = -q_.col(k);
    blk.dk = in_.w(k) * q_.col(k).transpose();
  }

  Eigen::MatrixXd shared_block(const ArrowState&) const { return Eigen::MatrixXd::Zero(1, 1); }

  double max_step(const ArrowState& s, const ArrowState& dir) const {
    return dir.shared(0) < 0.0 ? 0.95 * s.shared(0) / -dir.shared(0) : 1.0;
  }

 private:
  const Aggregator& u_;
  const BlockView& in_;
  const Eigen::MatrixXd& q_;
  double budget_;
};

// Nested bisection for separable U: outer on log mu, then for each group the
// total d_m with sum_k w_k nu_mk(d_m) = 1/mu, where nu_mk(d) is the common
// marginal utility inside group m at atom k that produces total d.
struct SeparableShortfall {
  const Aggregator& u;
  const BlockView& in;
  const std::vector<std::vector<Index>>& groups;

  double group_nu(const std::vector<Index>& grp, Index k, double d, Eigen::MatrixXd& y) const {
    if (grp.size() == 1) {
      const Index i = grp.front();
      y(i, k) = d;
      return u.utility(i).derivative(in.x(i, k) + d);
    }
    auto spread = [&](double t) {
      const double v = std::exp(t);
      double total = 0.0;
      for (Index i : grp) total += u.utility(i).inverse_derivative(v) - in.x(i, k);
      return total;
    };
    const double t = increasing_root([&](double s) { return d - spread(s); }, 0.0);
    const double v = std::exp(t);
    for (Index i : grp) y(i, k) = u.utility(i).inverse_derivative(v) - in.x(i, k);
    return v;
  }

  // Fills y, ell and d for multiplier mu; returns E U - b.
  double at_mu(double mu, Eigen::MatrixXd& y, Eigen::MatrixXd& ell, Eigen::VectorXd& d) const {
    for (std::size_t m = 0; m < groups.size(); ++m) {
      const auto& grp = groups[m];
      auto excess = [&](double dm) {
        double s = 0.0;
        for (Index k = 0; k < in.x.cols(); ++k) s += in.w(k) * group_nu(grp, k, dm, y);
        return 1.0 / mu - s;
      };
      const double dm = increasing_root(excess, 0.0, 1e6);
      d(static_cast<Index>(m)) = dm;
      for (Index k = 0; k < in.x.cols(); ++k) ell(static_cast<Index>(m), k) = mu * group_nu(grp, k, dm, y);
    }
    return expected_utility(u, in.x + y, in.w) - in.b;
  }
};

double kkt_residual(const KktProblem& prob, const ArrowState& s) {
  ArrowResidual r;
  return prob.residual(s, r) ? r.max_abs() : kInf;
}

}  // namespace

BlockView restrict_to_block(const ScenarioSpace& space, const SigmaPartition& g, Index blk, const RandomVector& x,
                            double b) {
  const auto& atoms = g.block(blk);
  BlockView v;
  v.x = block_columns(g, blk, x);
  v.w.resize(static_cast<Index>(atoms.size()));
  double mass = 0.0;
  for (Index a : atoms) mass += space.prob(a);
  for (std::size_t k = 0; k < atoms.size(); ++k) v.w(static_cast<Index>(k)) = space.prob(atoms[k]) / mass;
  v.b = b;
  return v;
}

Eigen::MatrixXd block_columns(const SigmaPartition& g, Index blk, const Eigen::MatrixXd& m) {
  const auto& atoms = g.block(blk);
  Eigen::MatrixXd out(m.rows(), static_cast<Index>(atoms.size()));
  for (std::size_t k = 0; k < atoms.size(); ++k) out.col(static_cast<Index>(k)) = m.col(atoms[k]);
  return out;
}

Eigen::VectorXd invert_gradient(const Aggregator& u, const Eigen::VectorXd& v) {
  const Index n = u.agents();
  Eigen::VectorXd z(n);
  for (Index i = 0; i < n; ++i) z(i) = u.utility(i).inverse_derivative(v(i));
  if (u.separable() || u.lambda().weights().maxCoeff() <= 0.0) return z;

  // With Lambda(z) = l(w.z), fixing s = w.z decouples the agents:
  // u_i'(z_i) = v_i - w_i l'(s). The map s -> w.z(s) - s is decreasing, and
  // s must exceed s_min where some right-hand side reaches zero.
  const UnivariateUtility& l = u.lambda().utility();
  const Eigen::VectorXd& w = u.lambda().weights();
  double cap = kInf;
  for (Index i = 0; i < n; ++i)
    if (w(i) > 0.0) cap = std::min(cap, v(i) / w(i));
  const double s_min = l.inverse_derivative(cap);
  auto at = [&](double s) {
    const double ls = l.derivative(s);
    for (Index i = 0; i < n; ++i) {
      const double rhs = v(i) - w(i) * ls;
      z(i) = rhs > 0.0 ? u.utility(i).inverse_derivative(rhs) : kInf;
    }
    return s - w.dot(z);
  };
  const double tau = increasing_root(
      [&](double t) {
        const double gap = at(s_min + std::exp(t));
        return std::isnan(gap) ? -kInf : gap;
      },
      0.0);
  at(s_min + std::exp(tau));
  const double res = (u.gradient(z) - v).cwiseAbs().maxCoeff();
  if (z.allFinite() && res <= 1e-9 * std::max(1.0, v.cwiseAbs().maxCoeff())) return z;
  throw ConvergenceError("invert_gradient: no stationary point", res);
}

BlockSolution solve_shortfall_block(const Aggregator& u, const BlockView& in,
                                    const std::vector<std::vector<Index>>& groups, const Eigen::MatrixXd& start,
                                    const SolverOptions& opt) {
  const Index n = in.x.rows();
  const Index nk = in.x.cols();
  const Index h = static_cast<Index>(groups.size());
  const Eigen::MatrixXd no_cost;
  KktProblem prob(u, in, no_cost, incidence(n, groups));
  const Eigen::MatrixXd e = incidence(n, groups);

  // Slide the start along the diagonal until the utility constraint is
  // active; far-out starts otherwise give tiny gradients and a huge mu.
  const double shift = increasing_root(
      [&](double c) { return expected_utility(u, in.x + (start.array() + c).matrix(), in.w) - in.b; }, 0.0);
  const Eigen::MatrixXd y0 = start.array() + shift;

  // Multipliers from least squares on the d-rows at the starting point.
  Eigen::MatrixXd ell(h, nk);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(h);
  for (Index k = 0; k < nk; ++k) {
    const Eigen::VectorXd g = u.gradient(in.x.col(k) + y0.col(k));
    for (Index m = 0; m < h; ++m) {
      const auto& grp = groups[static_cast<std::size_t>(m)];
      double avg = 0.0;
      for (Index i : grp) avg += g(i);
      ell(m, k) = avg / static_cast<double>(grp.size());
      s(m) += in.w(k) * ell(m, k);
    }
  }
  const double mu0 = s.sum() / s.squaredNorm();
  ell *= mu0;
  Eigen::VectorXd d0 = e.transpose() * y0.col(0);

  auto outcome = arrow_newton(prob, prob.state(y0, ell, d0, mu0), opt.kkt_tol, opt.max_iter);
  BlockSolution sol;
  sol.iterations = outcome.iterations;

  if (!outcome.converged && u.separable()) {
    SeparableShortfall sep{u, in, groups};
    Eigen::MatrixXd y(n, nk);
    Eigen::MatrixXd l(h, nk);
    Eigen::VectorXd d(h);
    const double t = increasing_root([&](double tt) { return sep.at_mu(std::exp(tt), y, l, d); }, std::log(mu0));
    const double mu = std::exp(t);
    sep.at_mu(mu, y, l, d);
    auto fallback_state = prob.state(y, l, d, mu);
    const double fallback_res = kkt_residual(prob, fallback_state);
    auto polished = arrow_newton(prob, fallback_state, opt.kkt_tol, opt.max_iter);
    sol.used_fallback = true;
    sol.iterations += polished.iterations;
    if (polished.converged || polished.residual < fallback_res) {
      outcome = std::move(polished);
    } else {
      outcome.state = std::move(fallback_state);
      outcome.residual = fallback_res;
    }
    outcome.converged = outcome.residual <= opt.kkt_tol;
  }
  if (!outcome.converged) {
    throw ConvergenceError("shortfall block did not reach kkt_tol after " + std::to_string(opt.max_iter) +
                               " iterations",
                           outcome.residual);
  }
  sol.y = prob.allocation(outcome.state);
  sol.totals = outcome.state.shared.head(h);
  sol.multiplier = outcome.state.shared(h);
  sol.value = sol.totals.sum();
  sol.residual = outcome.residual;
  return sol;
}

BlockSolution solve_priced_block(const Aggregator& u, const BlockView& in, const Eigen::MatrixXd& cost,
                                 const SolverOptions& opt) {
  const Index n = in.x.rows();
  const Index nk = in.x.cols();
  if ((cost.array() < 0.0).any() || !cost.allFinite()) {
    throw InvariantError("priced program: prices must be finite and nonnegative");
  }
  const bool has_zero = (cost.array() == 0.0).any();
  if (has_zero) {
    if (!u.separable()) {
      throw InvariantError("priced program: zero density with an interaction term is not supported");
    }
    for (Index i = 0; i < n; ++i) {
      if ((cost.row(i).array() == 0.0).any() && !std::isfinite(u.utility(i).supremum())) {
        throw DivergenceError("penalty is +infinity: zero density on an agent with unbounded utility");
      }
    }
  }

  // z_k(mu) maximizes mu U(z) - c_k.z; coordinates with zero price sit at +inf.
  Eigen::MatrixXd z(n, nk);
  auto fill = [&](double mu) {
    double eu = 0.0;
    for (Index k = 0; k < nk; ++k) {
      if (!has_zero) {
        z.col(k) = invert_gradient(u, cost.col(k) / mu);
        eu += in.w(k) * u.value(z.col(k));
        continue;
      }
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        const auto& ui = u.utility(i);
        if (cost(i, k) == 0.0) {
          z(i, k) = kInf;
          acc += ui.supremum();
        } else {
          z(i, k) = ui.inverse_derivative(cost(i, k) / mu);
          acc += ui.value(z(i, k));
        }
      }
      eu += in.w(k) * acc;
    }
    return eu - in.b;
  };

  BlockSolution sol;
  sol.used_fallback = true;
  if (has_zero && (cost.array() > 0.0).count() == 0) {
    // Every coordinate is free: the constraint holds at infinity at no cost.
    sol.y = Eigen::MatrixXd::Constant(n, nk, kInf);
    sol.value = 0.0;
    return sol;
  }
  const double t = increasing_root([&](double tt) { return fill(std::exp(tt)); }, 0.0);
  double mu = std::exp(t);
  const double gap = fill(mu);
  Eigen::MatrixXd y = z - in.x;

  if (has_zero) {
    sol.y = y;
    sol.multiplier = mu;
    double value = 0.0;
    for (Index k = 0; k < nk; ++k) {
      for (Index i = 0; i < n; ++i) {
        if (cost(i, k) > 0.0) value += in.w(k) * cost(i, k) * y(i, k);
      }
    }
    sol.value = value;
    sol.residual = std::abs(gap);
    return sol;
  }

  const std::vector<std::vector<Index>> none;
  KktProblem prob(u, in, cost, incidence(n, none));
  auto start = prob.state(y, Eigen::MatrixXd(0, nk), Eigen::VectorXd(0), mu);
  const double start_res = kkt_residual(prob, start);
  auto outcome = arrow_newton(prob, start, opt.kkt_tol, opt.max_iter);
  if (!(outcome.residual < start_res)) {
    outcome.state = std::move(start);
    outcome.residual = start_res;
  }
  if (outcome.residual > opt.kkt_tol) {
    throw ConvergenceError("priced block did not reach kkt_tol", outcome.residual);
  }
  sol.y = prob.allocation(outcome.state);
  sol.multiplier = outcome.state.shared(0);
  sol.value = 0.0;
  for (Index k = 0; k < nk; ++k) sol.value += in.w(k) * cost.col(k).dot(sol.y.col(k));
  sol.residual = outcome.residual;
  sol.iterations = outcome.iterations;
  return sol;
}

BlockSolution solve_budget_block(const Aggregator& u, const BlockView& in, const Eigen::MatrixXd& q, double budget,
                                 const SolverOptions& opt) {
  const Index n = in.x.rows();
  const Index nk = in.x.cols();
  if (!(q.array() > 0.0).all()) throw InvariantError("budget program: densities must be strictly positive");

  Eigen::MatrixXd y(n, nk);
  auto spend = [&](double nu) {
    double s = 0.0;
    for (Index k = 0; k < nk; ++k) {
      y.col(k) = invert_gradient(u, nu * q.col(k)) - in.x.col(k);
      s += in.w(k) * q.col(k).dot(y.col(k));
    }
    return s;
  };
  // Spending falls as the price of wealth nu rises.
  const double t = increasing_root([&](double tt) { return budget - spend(std::exp(tt)); }, 0.0);
  const double nu = std::exp(t);
  spend(nu);

  BudgetProblem prob(u, in, q, budget);
  ArrowState start;
  start.local.resize(static_cast<std::size_t>(nk));
  for (Index k = 0; k < nk; ++k) start.local[static_cast<std::size_t>(k)] = y.col(k);
  start.shared = Eigen::VectorXd::Constant(1, nu);
  ArrowResidual r0;
  const double start_res = prob.residual(start, r0) ? r0.max_abs() : kInf;
  auto outcome = arrow_newton(prob, start, opt.kkt_tol, opt.max_iter);
  if (!(outcome.residual < start_res)) {
    outcome.state = std::move(start);
    outcome.residual = start_res;
  }
  if (outcome.residual > opt.kkt_tol) {
    throw ConvergenceError("budget block did not reach kkt_tol", outcome.residual);
  }
  BlockSolution sol;
  sol.y.resize(n, nk);
  for (Index k = 0; k < nk; ++k) sol.y.col(k) = outcome.state.local[static_cast<std::size_t>(k)];
  sol.multiplier = outcome.state.shared(0);
  sol.value = expected_utility(u, in.x + sol.y, in.w);
  sol.residual = outcome.residual;
  sol.iterations = outcome.iterations;
  sol.used_fallback = true;
  return sol;
}

}  // namespace condrisk::detail
