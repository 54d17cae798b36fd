#pragma once

// Closed forms for N raw exponential utilities u_j(x) = -exp(-alpha_j x),
// no interaction term and full sharing. Everything is templated on the
// scalar so the formulas can be replayed in long double as a reference.

#include <Eigen/Dense>

#include <cmath>

#include "condrisk/prob_space.hpp"

namespace condrisk {

template <typename Scalar = double>
struct ExpConstants {
  RandomVariableT<Scalar> alphas;
  Scalar beta;                 ///< sum_j 1/alpha_j
  RandomVariableT<Scalar> a_j;  ///< (1/alpha_j) log(1/alpha_j)
  Scalar a_total;              ///< sum_j a_j, left to right
};

template <typename Derived>
ExpConstants<typename Derived::Scalar> exp_constants(const Eigen::MatrixBase<Derived>& alphas) {
  using Scalar = typename Derived::Scalar;
  using std::log;
  if (alphas.size() < 1) throw SchemaError("exp_constants: at least one agent is required");
  ExpConstants<Scalar> c;
  c.alphas = alphas;
  c.a_j.resize(alphas.size());
  c.beta = Scalar(0);
  c.a_total = Scalar(0);
  for (Index j = 0; j < alphas.size(); ++j) {
    const Scalar a = alphas(j);
    if (!(a > Scalar(0))) throw InvariantError("exp_constants: alphas must be positive");
    const Scalar inv = Scalar(1) / a;
    c.beta += inv;
    c.a_j(j) = inv * log(inv);
    c.a_total += c.a_j(j);
  }
  return c;
}

/// log E_P[exp(v) | G], blockwise max-shifted so large |v| neither
/// overflows nor underflows.
template <typename Derived>
RandomVariableT<typename Derived::Scalar> cond_log_mean_exp(const ScenarioSpace& space,
                                                            const Eigen::MatrixBase<Derived>& v,
                                                            const SigmaPartition& g) {
  using Scalar = typename Derived::Scalar;
  using std::exp;
  using std::log;
  detail::check_same_space(space, g, v.size());
  RandomVariableT<Scalar> out(v.size());
  for (const auto& blk : g.blocks()) {
    Scalar top = v(blk.front());
    for (Index k : blk) top = v(k) > top ? Scalar(v(k)) : top;
    Scalar mass(0);
    Scalar acc(0);
    for (Index k : blk) {
      const Scalar p(space.prob(k));
      mass += p;
      acc += p * exp(Scalar(v(k)) - top);
    }
    const Scalar val = top + log(acc / mass);
    for (Index k : blk) out(k) = val;
  }
  return out;
}

/// rho_G(X) = beta log(-(beta/B) E[exp(-Xbar/beta) | G]) - A, Xbar the
/// column sums of X. B is read atom by atom and must be negative.
template <typename DerivedX, typename DerivedB>
RandomVariableT<typename DerivedX::Scalar> rho_closed(const ScenarioSpace& space,
                                                      const Eigen::MatrixBase<DerivedX>& x,
                                                      const Eigen::MatrixBase<DerivedB>& b, const SigmaPartition& g,
                                                      const ExpConstants<typename DerivedX::Scalar>& c) {
  using Scalar = typename DerivedX::Scalar;
  using std::log;
  if (x.rows() != c.alphas.size() || b.size() != x.cols()) throw SchemaError("rho_closed: dimension mismatch");
  for (Index k = 0; k < b.size(); ++k) {
    if (!(b(k) < 0)) throw InvariantError("rho_closed: B must be negative for raw exponential utilities");
  }
  const RandomVariableT<Scalar> v = -x.colwise().sum().transpose() / c.beta;
  const RandomVariableT<Scalar> lme = cond_log_mean_exp(space, v, g);
  RandomVariableT<Scalar> rho(x.cols());
  for (Index k = 0; k < x.cols(); ++k) {
    rho(k) = c.beta * (log(-c.beta / Scalar(b(k))) + lme(k)) - c.a_total;
  }
  return rho;
}

/// Y^j = -X^j + (Xbar + rho + A) / (beta alpha_j) - A_j.
template <typename DerivedX, typename DerivedB>
RandomVectorT<typename DerivedX::Scalar> y_hat_closed(const ScenarioSpace& space,
                                                      const Eigen::MatrixBase<DerivedX>& x,
                                                      const Eigen::MatrixBase<DerivedB>& b, const SigmaPartition& g,
                                                      const ExpConstants<typename DerivedX::Scalar>& c) {
  using Scalar = typename DerivedX::Scalar;
  const RandomVariableT<Scalar> rho = rho_closed(space, x, b, g, c);
  const RandomVariableT<Scalar> common = x.colwise().sum().transpose() + rho +
                                         RandomVariableT<Scalar>::Constant(x.cols(), c.a_total);
  RandomVectorT<Scalar> y(x.rows(), x.cols());
  for (Index j = 0; j < x.rows(); ++j) {
    const Scalar scale = Scalar(1) / (c.beta * c.alphas(j));
    for (Index k = 0; k < x.cols(); ++k) y(j, k) = -x(j, k) + scale * common(k) - c.a_j(j);
  }
  return y;
}

/// exp(-Xbar/beta) / E[exp(-Xbar/beta) | G], the density shared by every agent.
template <typename DerivedX>
RandomVariableT<typename DerivedX::Scalar> q_hat_row(const ScenarioSpace& space,
                                                     const Eigen::MatrixBase<DerivedX>& x, const SigmaPartition& g,
                                                     const ExpConstants<typename DerivedX::Scalar>& c) {
  using Scalar = typename DerivedX::Scalar;
  using std::exp;
  const RandomVariableT<Scalar> v = -x.colwise().sum().transpose() / c.beta;
  const RandomVariableT<Scalar> lme = cond_log_mean_exp(space, v, g);
  RandomVariableT<Scalar> q(v.size());
  for (Index k = 0; k < v.size(); ++k) q(k) = exp(v(k) - lme(k));
  return q;
}

template <typename DerivedX>
DensityVector q_hat_closed(const ScenarioSpace& space, const Eigen::MatrixBase<DerivedX>& x, const SigmaPartition& g,
                           const ExpConstants<typename DerivedX::Scalar>& c) {
  const RandomVariable row = q_hat_row(space, x, g, c).template cast<double>();
  return DensityVector(space, row.transpose().replicate(x.rows(), 1), g);
}

/// a^j = E_{Q^}[Y^j | G]; every row G-measurable, rows sum to rho_G(X).
template <typename DerivedX, typename DerivedB>
RandomVectorT<typename DerivedX::Scalar> a_hat_closed(const ScenarioSpace& space,
                                                      const Eigen::MatrixBase<DerivedX>& x,
                                                      const Eigen::MatrixBase<DerivedB>& b, const SigmaPartition& g,
                                                      const ExpConstants<typename DerivedX::Scalar>& c) {
  using Scalar = typename DerivedX::Scalar;
  const RandomVectorT<Scalar> y = y_hat_closed(space, x, b, g, c);
  const RandomVariableT<Scalar> q = q_hat_row(space, x, g, c);
  RandomVectorT<Scalar> a(x.rows(), x.cols());
  for (Index j = 0; j < x.rows(); ++j) {
    const RandomVariableT<Scalar> prod = q.cwiseProduct(y.row(j).transpose());
    a.row(j) = cond_exp(space, prod, g).transpose();
  }
  return a;
}

/// alpha^1(Q) = A + beta I_G(Q, P) + beta log(-B/beta) for a density row
/// shared by all agents.
template <typename DerivedQ, typename DerivedB>
RandomVariableT<typename DerivedQ::Scalar> alpha1_entropic(const ScenarioSpace& space,
                                                           const Eigen::MatrixBase<DerivedQ>& q_row,
                                                           const Eigen::MatrixBase<DerivedB>& b,
                                                           const SigmaPartition& g,
                                                           const ExpConstants<typename DerivedQ::Scalar>& c) {
  using Scalar = typename DerivedQ::Scalar;
  using std::log;
  if (b.size() != q_row.size()) throw SchemaError("alpha1_entropic: dimension mismatch");
  const RandomVariableT<Scalar> ent = cond_relative_entropy(space, q_row, g);
  RandomVariableT<Scalar> out(q_row.size());
  for (Index k = 0; k < q_row.size(); ++k) {
    if (!(b(k) < 0)) throw InvariantError("alpha1_entropic: B must be negative");
    out(k) = c.a_total + c.beta * ent(k) + c.beta * log(-Scalar(b(k)) / c.beta);
  }
  return out;
}

}  // namespace condrisk
