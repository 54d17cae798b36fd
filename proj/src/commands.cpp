#include <cmath>
#include <functional>
#include <map>

#include <json.hpp>

#include "condrisk/consistency.hpp"
#include "condrisk/equilibrium.hpp"
#include "condrisk/errors.hpp"
#include "condrisk/exponential.hpp"
#include "condrisk/oracle.hpp"
#include "condrisk/scenario_io.hpp"
#include "condrisk/shortfall_dual.hpp"
#include "condrisk/shortfall_primal.hpp"

namespace condrisk {
namespace {

using ojson = nlohmann::ordered_json;

ojson num(double v) { return format_number(v); }

ojson per_block(const RandomVariable& v, const SigmaPartition& g) {
  ojson out = ojson::array();
  for (const auto& blk : g.blocks()) out.push_back(num(v(blk.front())));
  return out;
}

ojson per_block(const Eigen::VectorXd& v) {
  ojson out = ojson::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(num(v(i)));
  return out;
}

ojson rows(const Eigen::MatrixXd& m) {
  ojson out = ojson::array();
  for (Index j = 0; j < m.rows(); ++j) {
    ojson r = ojson::array();
    for (Index k = 0; k < m.cols(); ++k) r.push_back(num(m(j, k)));
    out.push_back(std::move(r));
  }
  return out;
}

// Per-block rows of a matrix whose rows are G-measurable.
ojson block_rows(const Eigen::MatrixXd& m, const SigmaPartition& g) {
  ojson out = ojson::array();
  for (Index j = 0; j < m.rows(); ++j) out.push_back(per_block(RandomVariable(m.row(j).transpose()), g));
  return out;
}

ojson header(const std::string& command, const RiskSpec& spec) {
  ojson rep;
  rep["command"] = command;
  rep["pass"] = false;
  rep["atoms"] = spec.space().labels();
  ojson blocks = ojson::array();
  for (const auto& blk : spec.sigma().blocks()) {
    ojson b = ojson::array();
    for (Index k : blk) b.push_back(spec.space().labels()[static_cast<std::size_t>(k)]);
    blocks.push_back(std::move(b));
  }
  rep["sigma_g"] = std::move(blocks);
  rep["kkt_tol"] = num(spec.tol().kkt_tol);
  return rep;
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

ExpConstants<double> require_exponential(const RiskSpec& spec, const char* who) {
  const auto alphas = spec.aggregator().exponential_alphas();
  if (!alphas || !spec.clusters().is_full_sharing()) {
    throw InvariantError(std::string(who) +
                         ": closed forms need raw exponential utilities, no interaction term and full sharing");
  }
  return exp_constants(*alphas);
}

ojson cmd_risk(const Scenario& sc) {
  const RiskSpec& spec = sc.spec;
  const auto& g = spec.sigma();
  const PrimalSolution sol = solve_rho(spec);
  ojson rep = header("risk", spec);
  rep["rho"] = per_block(sol.rho, g);
  rep["y_hat"] = rows(sol.y_hat);
  rep["mu"] = per_block(sol.mu);
  rep["kkt_residual"] = per_block(sol.kkt_residual);
  const RandomVariable eu = cond_expected_utility(spec.space(), spec.aggregator(), spec.x() + sol.y_hat, g);
  const double activity = max_abs(eu - spec.b());
  rep["constraint_residual"] = num(activity);
  rep["iterations"] = std::vector<int>(sol.iterations.data(), sol.iterations.data() + sol.iterations.size());
  rep["fallback"] = sol.used_fallback;
  const bool feasible = spec.clusters().admits(sol.y_hat, g, 1e-8);
  rep["cluster_feasible"] = feasible;

  // Axioms against the atom-reversed position with lambda = 1/2.
  RandomVector z = spec.x().rowwise().reverse();
  const AxiomReport ax = check_axioms(spec, spec.with_x(z), RandomVariable::Constant(spec.atoms(), 0.5));
  ojson axioms;
  axioms["monotonicity"] = num(ax.monotonicity);
  axioms["convexity"] = num(ax.convexity);
  axioms["additivity"] = num(ax.additivity);
  axioms["locality"] = num(ax.locality);
  axioms["tolerance"] = num(ax.tolerance);
  axioms["pass"] = ax.pass;
  rep["axioms"] = std::move(axioms);
  rep["pass"] = feasible && ax.pass && activity <= spec.tol().kkt_tol &&
                sol.kkt_residual.maxCoeff() <= spec.tol().kkt_tol;
  return rep;
}

ojson cmd_dual(const Scenario& sc) {
  const RiskSpec& spec = sc.spec;
  const auto& g = spec.sigma();
  const double tol5 = 5.0 * spec.tol().kkt_tol;
  const PrimalSolution sol = solve_rho(spec);
  const DensityVector q = extract_dual_optimizer(sol, spec);
  const DualReport dr = dual_report(q, spec, sol);
  ojson rep = header("dual", spec);
  rep["rho"] = per_block(sol.rho, g);
  rep["q_hat"] = rows(q.q());
  rep["alpha1"] = per_block(dr.alpha1, g);
  rep["dual_value"] = per_block(dr.dual_value, g);
  rep["gap"] = per_block(dr.gap, g);
  rep["in_q1"] = dr.in_q1;
  rep["fairness_excess"] = num(dr.fairness_excess);
  const RandomVariable rq = rho_with_measure(q, spec);
  rep["rho_with_measure"] = per_block(rq, g);

  const DensityVector p = DensityVector::reference(spec.space(), spec.agents(), g);
  const RandomVariable dp = dual_value(p, spec);
  rep["dual_value_at_p"] = per_block(dp, g);
  const bool weak = (dp - sol.rho).maxCoeff() <= tol5;
  rep["weak_duality"] = weak;
  if (const auto alphas = spec.aggregator().exponential_alphas()) {
    rep["conjugate_bound"] = per_block(conjugate_penalty_min(q, spec), g);
  }
  rep["pass"] = dr.in_q1 && max_abs(dr.gap) <= tol5 && weak && max_abs(rq - sol.rho) <= tol5;
  return rep;
}

ojson cmd_expcheck(const Scenario& sc) {
  const RiskSpec& spec = sc.spec;
  const auto& g = spec.sigma();
  const auto& space = spec.space();
  const ExpConstants<double> c = require_exponential(spec, "expcheck");
  const RandomVariable rho_c = rho_closed(space, spec.x(), spec.b(), g, c);
  const RandomVector y_c = y_hat_closed(space, spec.x(), spec.b(), g, c);
  const DensityVector q_c = q_hat_closed(space, spec.x(), g, c);
  const RandomVector a_c = a_hat_closed(space, spec.x(), spec.b(), g, c);
  const RandomVariable al_c = alpha1_entropic(space, q_c.row(0), spec.b(), g, c);

  const PrimalSolution sol = solve_rho(spec);
  const DensityVector q_s = extract_dual_optimizer(sol, spec);
  const RandomVariable al_s = penalty_alpha1(q_c, spec);

  const Eigen::ArrayXd scale = rho_c.array().abs().max(1.0);
  const double d_rho = ((sol.rho - rho_c).array().abs() / scale).maxCoeff();
  const double d_y = max_abs(sol.y_hat - y_c);
  const double d_q = max_abs(q_s.q() - q_c.q());
  const double d_alpha = max_abs(al_s - al_c);
  const double d_sum = max_abs(a_c.colwise().sum().transpose() - rho_c);

  ojson rep = header("expcheck", spec);
  ojson consts;
  consts["beta"] = num(c.beta);
  consts["a_j"] = per_block(c.a_j);
  consts["a_total"] = num(c.a_total);
  rep["constants"] = std::move(consts);
  rep["rho_closed"] = per_block(rho_c, g);
  rep["rho_solver"] = per_block(sol.rho, g);
  rep["y_hat_closed"] = rows(y_c);
  rep["q_hat_closed"] = rows(q_c.q());
  rep["a_hat_closed"] = block_rows(a_c, g);
  rep["alpha1_entropic"] = per_block(al_c, g);
  rep["alpha1_solver"] = per_block(al_s, g);
  ojson deltas;
  deltas["rho_relative"] = num(d_rho);
  deltas["y_hat"] = num(d_y);
  deltas["q_hat"] = num(d_q);
  deltas["alpha1"] = num(d_alpha);
  deltas["a_hat_sum"] = num(d_sum);
  rep["deltas"] = std::move(deltas);
  rep["pass"] = d_rho <= 1e-6 && d_y <= 1e-6 && d_q <= 1e-6 && d_alpha <= 1e-8 && d_sum <= 1e-10;
  return rep;
}

ojson consistency_json(const ConsistencyReport& r, bool closed) {
  ojson o;
  o["y"] = num(r.max_abs_err_y);
  o["q"] = num(r.max_abs_err_q);
  o["a"] = num(r.max_abs_err_a);
  o["rho_recursion"] = num(r.max_abs_err_rho_recursion);
  if (closed) {
    o["y_transfer"] = num(r.y_transfer);
    o["q_ratio"] = num(r.q_ratio);
    o["decomposition"] = per_block(Eigen::VectorXd(r.decomposition));
  }
  o["tolerance"] = num(r.tolerance);
  o["hypothesis_holds"] = r.hypothesis_holds;
  o["identities_hold"] = r.identities_hold;
  o["pass"] = r.pass;
  return o;
}

ojson cmd_consistency(const Scenario& sc) {
  const RiskSpec& spec = sc.spec;
  if (!sc.sigma_h) throw SchemaError("field /sigma_h: missing (required by consistency)");
  const SigmaPartition& h = *sc.sigma_h;
  if (!coarsens(h, spec.sigma())) throw InvariantError("consistency: sigma_h must be coarser than sigma_g");
  ojson rep = header("consistency", spec);
  ojson hb = ojson::array();
  for (const auto& blk : h.blocks()) {
    ojson b = ojson::array();
    for (Index k : blk) b.push_back(spec.space().labels()[static_cast<std::size_t>(k)]);
    hb.push_back(std::move(b));
  }
  rep["sigma_h"] = std::move(hb);
  const bool exponential = spec.aggregator().exponential_alphas() && spec.clusters().is_full_sharing();
  const bool b_in_h = is_measurable(spec.b(), h);
  rep["asserted"] = exponential;
  rep["hypothesis_holds"] = b_in_h;
  bool pass = true;
  if (exponential) {
    const auto c = require_exponential(spec, "consistency");
    const ConsistencyReport closed = verify_consistency(spec.space(), spec.x(), spec.b(), spec.sigma(), h, c);
    rep["closed_form"] = consistency_json(closed, true);
    pass = pass && closed.pass;
  } else {
    rep["closed_form"] = nullptr;
  }
  if (b_in_h) {
    const ConsistencyReport solver = verify_consistency_solver(spec, h);
    rep["solver"] = consistency_json(solver, false);
    if (exponential) pass = pass && solver.pass;
  } else {
    rep["solver"] = nullptr;
  }
  rep["pass"] = pass;
  return rep;
}

ojson cmd_msorte(const Scenario& sc) {
  const RiskSpec& spec = sc.spec;
  const auto& g = spec.sigma();
  const PrimalSolution sol = solve_rho(spec);
  const EquilibriumTriple t = build_equilibrium(spec, sol);
  const MsorteReport r = verify_msorte(t, spec);
  const RandomVariable pi = pi_problem(t.q, t.budget_a, spec);
  ojson rep = header("msorte", spec);
  rep["budget_a"] = per_block(t.budget_a, g);
  rep["alpha"] = block_rows(t.alpha, g);
  rep["y"] = rows(t.y);
  rep["q"] = rows(t.q.q());
  rep["pi"] = per_block(pi, g);
  rep["pi_minus_b"] = per_block(RandomVariable(pi - spec.b()), g);
  ojson res;
  res["cluster_feasibility"] = num(r.cluster_feasibility);
  res["budget_sum"] = num(r.budget_sum);
  res["utility_activity"] = num(r.utility_activity);
  res["priced_budget"] = num(r.priced_budget);
  res["optimality"] = num(r.optimality);
  res["alpha_consistency"] = num(r.alpha_consistency);
  res["fairness_excess"] = num(r.fairness_excess);
  res["agent_optimality"] = num(r.agent_optimality);
  res["tolerance"] = num(r.tolerance);
  rep["residuals"] = std::move(res);
  rep["pass"] = r.pass;
  return rep;
}

ojson cmd_oracle(const Scenario& sc, double step) {
  const RiskSpec& spec = sc.spec;
  const auto& g = spec.sigma();
  const PrimalSolution sol = solve_rho(spec);
  const RandomVariable grid = grid_min_rho(spec, sc.oracle_lo, sc.oracle_hi, step);
  ojson rep = header("oracle", spec);
  rep["step"] = num(step);
  rep["bounds"] = ojson::array({num(sc.oracle_lo), num(sc.oracle_hi)});
  rep["rho_solver"] = per_block(sol.rho, g);
  rep["rho_grid"] = per_block(grid, g);
  const double d_rho = max_abs(grid - sol.rho);
  rep["rho_delta"] = num(d_rho);
  bool pass = d_rho <= 2.0 * step;
  if (spec.aggregator().separable()) {
    const DensityVector q = extract_dual_optimizer(sol, spec);
    const RandomVariable a_grid = grid_max_alpha1(q, spec, sc.oracle_lo, sc.oracle_hi, step);
    const RandomVariable a_solver = penalty_alpha1(q, spec);
    rep["alpha1_solver"] = per_block(a_solver, g);
    rep["alpha1_grid"] = per_block(a_grid, g);
    const double d_a = max_abs(a_grid - a_solver);
    rep["alpha1_delta"] = num(d_a);
    pass = pass && d_a <= 2.0 * step;
    const auto& cl = spec.clusters();
    if (g.num_blocks() == 1 && (cl.is_full_sharing() || cl.num_groups() == spec.agents())) {
      const double st = static_shortfall_value(spec);
      rep["static_value"] = num(st);
      rep["static_delta"] = num(std::abs(st - sol.rho(0)));
      pass = pass && std::abs(st - sol.rho(0)) <= 1e-8;
    }
  }
  rep["pass"] = pass;
  return rep;
}

}  // namespace

CommandResult run_command(const std::string& command, const std::string& path, const CommandOptions& opt) {
  static const std::map<std::string, std::function<ojson(const Scenario&, const CommandOptions&)>> table = {
      {"risk", [](const Scenario& s, const CommandOptions&) { return cmd_risk(s); }},
      {"dual", [](const Scenario& s, const CommandOptions&) { return cmd_dual(s); }},
      {"expcheck", [](const Scenario& s, const CommandOptions&) { return cmd_expcheck(s); }},
      {"consistency", [](const Scenario& s, const CommandOptions&) { return cmd_consistency(s); }},
      {"msorte", [](const Scenario& s, const CommandOptions&) { return cmd_msorte(s); }},
      {"oracle", [](const Scenario& s, const CommandOptions& o) { return cmd_oracle(s, o.step); }},
  };
  CommandResult res;
  auto it = table.find(command);
  if (it == table.end()) {
    res.exit_code = 1;
    res.error = "unknown command '" + command + "'";
    return res;
  }
  try {
    Scenario sc = load_scenario(path);
    SolverOptions so = sc.spec.tol();
    if (opt.kkt_tol) {
      if (!(*opt.kkt_tol > 0.0)) throw SchemaError("--tol must be positive");
      so.kkt_tol = *opt.kkt_tol;
    }
    so.threads = std::max(1, opt.threads);
    sc.spec = sc.spec.with_options(so);
    if (!(opt.step > 0.0)) throw SchemaError("--step must be positive");
    res.report = it->second(sc, opt).dump(2) + "\n";
  } catch (const SchemaError& e) {
    res.exit_code = 1;
    res.error = std::string("schema error: ") + e.what();
  } catch (const InvariantError& e) {
    res.exit_code = 2;
    res.error = std::string("invariant violation: ") + e.what();
  } catch (const DivergenceError& e) {
    res.exit_code = 2;
    res.error = std::string("invariant violation: ") + e.what();
  } catch (const ConvergenceError& e) {
    res.exit_code = 3;
    res.error = std::string("convergence failure: ") + e.what() + " (residual " + format_number(e.residual()) + ")";
  }
  return res;
}

}  // namespace condrisk
