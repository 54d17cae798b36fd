#include "condrisk/consistency.hpp"

#include <functional>

#include "condrisk/errors.hpp"
#include "condrisk/shortfall_dual.hpp"

namespace condrisk {
namespace {

// Optimum of one conditional problem: value, allocation, density and fair
// allocation, all as full agents x atoms arrays.
struct Pieces {
  RandomVariable rho;
  RandomVector y;
  Eigen::MatrixXd q;
  RandomVector a;
};

using Evaluator = std::function<Pieces(const SigmaPartition&, const RandomVector&)>;

double rel_err(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs) {
  const Eigen::ArrayXXd scale = rhs.array().abs().max(1.0);
  return ((lhs - rhs).array().abs() / scale).maxCoeff();
}

Pieces closed_pieces(const ScenarioSpace& space, const RandomVariable& b, const ExpConstants<double>& c,
                     const SigmaPartition& s, const RandomVector& x) {
  Pieces p;
  p.rho = rho_closed(space, x, b, s, c);
  p.y = y_hat_closed(space, x, b, s, c);
  p.q = q_hat_row(space, x, s, c).transpose().replicate(x.rows(), 1);
  p.a = a_hat_closed(space, x, b, s, c);
  return p;
}

void check_chain(const SigmaPartition& g, const SigmaPartition& h) {
  if (!coarsens(h, g)) throw InvariantError("consistency: H must be coarser than G");
}

double y_identity(const Evaluator& ev, const SigmaPartition& g, const SigmaPartition& h, const RandomVector& x) {
  const Pieces pg = ev(g, x);
  const RandomVector lhs = ev(h, -pg.y).y;
  const RandomVector rhs = ev(h, x).y + ev(h, RandomVector::Zero(x.rows(), x.cols())).y;
  return rel_err(lhs, rhs);
}

double q_identity(const Evaluator& ev, const SigmaPartition& g, const SigmaPartition& h, const RandomVector& x) {
  const Pieces pg = ev(g, x);
  const Eigen::MatrixXd target = ev(h, x).q;
  const Eigen::MatrixXd via_y = pg.q.cwiseProduct(ev(h, -pg.y).q);
  const Eigen::MatrixXd via_a = pg.q.cwiseProduct(ev(h, -pg.a).q);
  return std::max(rel_err(via_y, target), rel_err(via_a, target));
}

double a_identity(const Evaluator& ev, const SigmaPartition& g, const SigmaPartition& h, const RandomVector& x) {
  const Pieces pg = ev(g, x);
  const RandomVector lhs = ev(h, -pg.a).a;
  const RandomVector rhs = ev(h, x).a + ev(h, RandomVector::Zero(x.rows(), x.cols())).a;
  return rel_err(lhs, rhs);
}

double rho_identity(const Evaluator& ev, const SigmaPartition& g, const SigmaPartition& h, const RandomVector& x) {
  const Pieces pg = ev(g, x);
  const RandomVariable lhs = ev(h, -pg.y).rho;
  const RandomVariable rhs = ev(h, RandomVector::Zero(x.rows(), x.cols())).rho + ev(h, x).rho;
  return rel_err(lhs, rhs);
}

Evaluator closed_evaluator(const ScenarioSpace& space, const RandomVariable& b, const ExpConstants<double>& c) {
  return [&space, &b, &c](const SigmaPartition& s, const RandomVector& x) { return closed_pieces(space, b, c, s, x); };
}

void fill_main(ConsistencyReport& rep, const Evaluator& ev, const SigmaPartition& g, const SigmaPartition& h,
               const RandomVector& x) {
  rep.max_abs_err_y = y_identity(ev, g, h, x);
  rep.max_abs_err_q = q_identity(ev, g, h, x);
  rep.max_abs_err_a = a_identity(ev, g, h, x);
  rep.max_abs_err_rho_recursion = rho_identity(ev, g, h, x);
}

void finish(ConsistencyReport& rep) {
  rep.identities_hold = rep.max_abs_err_y <= rep.tolerance && rep.max_abs_err_q <= rep.tolerance &&
                        rep.max_abs_err_a <= rep.tolerance && rep.max_abs_err_rho_recursion <= rep.tolerance;
  rep.pass = rep.identities_hold || !rep.hypothesis_holds;
}

}  // namespace

double verify_y_consistency(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                            const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c) {
  check_chain(g, h);
  return y_identity(closed_evaluator(space, b_h, c), g, h, x);
}

double verify_q_consistency(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                            const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c) {
  check_chain(g, h);
  return q_identity(closed_evaluator(space, b_h, c), g, h, x);
}

double verify_a_consistency(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                            const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c) {
  check_chain(g, h);
  return a_identity(closed_evaluator(space, b_h, c), g, h, x);
}

double verify_rho_recursion(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                            const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c) {
  check_chain(g, h);
  return rho_identity(closed_evaluator(space, b_h, c), g, h, x);
}

ConsistencyReport verify_consistency(const ScenarioSpace& space, const RandomVector& x, const RandomVariable& b_h,
                                     const SigmaPartition& g, const SigmaPartition& h, const ExpConstants<double>& c) {
  check_chain(g, h);
  ConsistencyReport rep;
  rep.hypothesis_holds = is_measurable(b_h, h);
  const Evaluator ev = closed_evaluator(space, b_h, c);
  fill_main(rep, ev, g, h, x);

  const Index n = x.rows();
  const RandomVector zero = RandomVector::Zero(n, x.cols());
  const Pieces pg = ev(g, x);
  const Pieces ph = ev(h, x);
  const Pieces ph0 = ev(h, zero);
  const Pieces pha = ev(h, -pg.a);

  RandomVector transfer(n, x.cols());
  for (Index j = 0; j < n; ++j) {
    transfer.row(j) = ph.y.row(j) + ((pg.rho - ph.rho) / (c.beta * c.alphas(j))).transpose();
  }
  rep.y_transfer = rel_err(pg.y, transfer);

  const RandomVariable v = -x.colwise().sum().transpose() / c.beta;
  const RandomVariable ratio =
      (cond_log_mean_exp(space, v, g) - cond_log_mean_exp(space, v, h)).array().exp().matrix();
  const RandomVariable d = pha.q.row(0).transpose();
  rep.q_ratio = rel_err(d, ratio);

  // a^k(H, -a(G,X)) = E + F + G + H, each piece against its simplified form.
  const RandomVariable qh = ph.q.row(0).transpose();
  const RandomVariable rho_g_under_qh = cond_exp(space, RandomVariable(pg.rho.cwiseProduct(qh)), h);
  const RandomVariable rho_g_under_d = cond_exp(space, RandomVariable(pg.rho.cwiseProduct(d)), h);
  Eigen::Vector4d worst = Eigen::Vector4d::Zero();
  for (Index k = 0; k < n; ++k) {
    const double s = 1.0 / (c.beta * c.alphas(k));
    const RandomVariable e_def = cond_exp(space, RandomVariable(pg.a.row(k).transpose().cwiseProduct(d)), h);
    const RandomVariable e_cl = ph.a.row(k).transpose() + s * rho_g_under_qh - s * ph.rho;
    const RandomVariable f_def = -s * rho_g_under_d;
    const RandomVariable f_cl = -s * rho_g_under_qh;
    const RandomVariable g_def = cond_exp(space, RandomVariable(s * pha.rho.cwiseProduct(d)), h);
    const RandomVariable g_cl = s * (ph0.rho + ph.rho);
    const RandomVariable h_def =
        cond_exp(space, RandomVariable((s * c.a_total - c.a_j(k)) * d), h);
    const RandomVariable h_cl = ph0.a.row(k).transpose() - s * ph0.rho;
    worst(0) = std::max(worst(0), rel_err(e_def, e_cl));
    worst(1) = std::max(worst(1), rel_err(f_def, f_cl));
    worst(2) = std::max(worst(2), rel_err(g_def, g_cl));
    worst(3) = std::max(worst(3), rel_err(h_def, h_cl));
  }
  rep.decomposition = worst;
  finish(rep);
  return rep;
}

ConsistencyReport verify_consistency_solver(const RiskSpec& spec, const SigmaPartition& h) {
  const SigmaPartition& g = spec.sigma();
  check_chain(g, h);
  ConsistencyReport rep;
  rep.tolerance = 1e-6;
  rep.hypothesis_holds = is_measurable(spec.b(), h);
  if (!rep.hypothesis_holds) {
    throw InvariantError("consistency: the solver route needs B measurable with respect to H");
  }
  const Evaluator ev = [&spec](const SigmaPartition& s, const RandomVector& x) {
    const RiskSpec local = spec.with_sigma(s, spec.b()).with_x(x);
    const PrimalSolution sol = solve_rho(local);
    Pieces p;
    p.rho = sol.rho;
    p.y = sol.y_hat;
    p.q = extract_dual_optimizer(sol, local).q();
    p.a.resize(x.rows(), x.cols());
    for (Index j = 0; j < x.rows(); ++j) {
      p.a.row(j) = cond_exp(local.space(), RandomVariable(p.q.row(j).transpose().cwiseProduct(p.y.row(j).transpose())), s)
                       .transpose();
    }
    return p;
  };
  fill_main(rep, ev, g, h, spec.x());
  finish(rep);
  return rep;
}

}  // namespace condrisk
