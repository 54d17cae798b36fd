#pragma once

// Damped Newton for square nonlinear systems with "arrow" structure: one
// block of local unknowns per atom, coupled only through a small vector of
// shared unknowns. The Jacobian
//
//   [ J_1           C_1 ]
//   [     ...       ... ]
//   [         J_n   C_n ]
//   [ D_1 ... D_n   S_0 ]
//
// is solved by eliminating the local blocks (Schur complement on the shared
// unknowns), which keeps each iteration linear in the number of atoms.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace condrisk::detail {

struct ArrowState {
  std::vector<Eigen::VectorXd> local;
  Eigen::VectorXd shared;
};

struct ArrowResidual {
  std::vector<Eigen::VectorXd> local;
  Eigen::VectorXd shared;

  double max_abs() const {
    double m = shared.size() ? shared.cwiseAbs().maxCoeff() : 0.0;
    for (const auto& r : local) {
      if (r.size()) m = std::max(m, r.cwiseAbs().maxCoeff());
    }
    return m;
  }
  double half_squared_norm() const {
    double s = shared.squaredNorm();
    for (const auto& r : local) s += r.squaredNorm();
    return 0.5 * s;
  }
};

struct ArrowJacobianBlock {
  Eigen::MatrixXd jkk;  // local x local
  Eigen::MatrixXd ck;   // local x shared
  Eigen::MatrixXd dk;   // shared x local
};

struct ArrowNewtonOutcome {
  ArrowState state;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Problem concept:
///   Index atoms() const;
///   bool residual(const ArrowState&, ArrowResidual&) const;      // false if not finite/admissible
///   void jacobian(const ArrowState&, Index atom, ArrowJacobianBlock&) const;
///   Eigen::MatrixXd shared_block(const ArrowState&) const;        // S_0
///   double max_step(const ArrowState&, const ArrowState& dir) const;  // keeps iterates admissible
template <class Problem>
ArrowNewtonOutcome arrow_newton(const Problem& prob, ArrowState start, double tol, int max_iter) {
  ArrowNewtonOutcome out;
  out.state = std::move(start);
  ArrowResidual res;
  if (!prob.residual(out.state, res)) {
    out.residual = std::numeric_limits<double>::infinity();
    return out;
  }
  double merit = res.half_squared_norm();
  out.residual = res.max_abs();

  const auto n_atoms = static_cast<std::size_t>(prob.atoms());
  std::vector<Eigen::FullPivLU<Eigen::MatrixXd>> lus(n_atoms);
  std::vector<Eigen::MatrixXd> jinv_c(n_atoms);
  ArrowJacobianBlock blk;
  int polish = 0;

  for (int it = 0; it < max_iter; ++it) {
    if (out.residual <= tol) {
      // A couple of extra steps past the tolerance, accepted only if they help.
      if (++polish > 2 || out.residual == 0.0) break;
    }
    const Eigen::Index ns = out.state.shared.size();
    Eigen::MatrixXd schur = prob.shared_block(out.state);
    Eigen::VectorXd rhs = -res.shared;
    std::vector<Eigen::VectorXd> jinv_r(n_atoms);
    bool singular = false;
    for (std::size_t k = 0; k < n_atoms; ++k) {
      prob.jacobian(out.state, static_cast<Eigen::Index>(k), blk);
      lus[k].compute(blk.jkk);
      if (!lus[k].isInvertible()) {
        singular = true;
        break;
      }
      jinv_r[k] = lus[k].solve(res.local[k]);
      if (ns > 0) {
        jinv_c[k] = lus[k].solve(blk.ck);
        schur.noalias() -= blk.dk * jinv_c[k];
        rhs.noalias() += blk.dk * jinv_r[k];
      }
    }
    if (singular) break;

    ArrowState dir;
    dir.shared = ns > 0 ? Eigen::VectorXd(schur.fullPivLu().solve(rhs)) : Eigen::VectorXd();
    if (!dir.shared.allFinite()) break;
    dir.local.resize(n_atoms);
    for (std::size_t k = 0; k < n_atoms; ++k) {
      dir.local[k] = -jinv_r[k];
      if (ns > 0) dir.local[k].noalias() -= jinv_c[k] * dir.shared;
    }

    double step = std::min(1.0, prob.max_step(out.state, dir));
    bool accepted = false;
    ArrowState trial;
    ArrowResidual trial_res;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      trial.shared = out.state.shared + step * dir.shared;
      trial.local.resize(n_atoms);
      for (std::size_t k = 0; k < n_atoms; ++k) trial.local[k] = out.state.local[k] + step * dir.local[k];
      if (!prob.residual(trial, trial_res)) continue;
      const double trial_merit = trial_res.half_squared_norm();
      if (trial_merit <= (1.0 - 1e-4 * step) * merit || (polish > 0 && trial_merit < merit)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    out.state = std::move(trial);
    res = std::move(trial_res);
    merit = res.half_squared_norm();
    out.residual = res.max_abs();
    out.iterations = it + 1;
  }
  out.converged = out.residual <= tol;
  return out;
}

}  // namespace condrisk::detail
