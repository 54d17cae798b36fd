#pragma once

#include <optional>
#include <string>

#include "condrisk/prob_space.hpp"
#include "condrisk/shortfall_primal.hpp"

namespace condrisk {

/// A parsed scenario file. See docs/report_schema.md for the layout.
struct Scenario {
  RiskSpec spec;
  std::optional<SigmaPartition> sigma_h;
  double oracle_lo = -5.0;
  double oracle_hi = 5.0;
};

/// Parses and validates a scenario document. Malformed JSON and schema
/// problems throw SchemaError naming the line (syntax) or the field path
/// (schema); model invariants surface as InvariantError from RiskSpec.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<input>");
Scenario load_scenario(const std::string& path);

/// 12 significant digits, fixed width mantissa ("%#.12g"), -0 printed as 0.
std::string format_number(double v);

struct CommandOptions {
  std::optional<double> kkt_tol;
  double step = 1e-3;
  int threads = 1;
};

struct CommandResult {
  int exit_code = 0;
  std::string report;  ///< JSON, newline terminated; empty on error
  std::string error;   ///< message for stderr when exit_code != 0
};

/// Runs one of risk, dual, expcheck, consistency, msorte, oracle on a
/// scenario file. Exit codes: 0 success (the report carries "pass"),
/// 1 schema error, 2 invariant violation, 3 convergence failure.
CommandResult run_command(const std::string& command, const std::string& path, const CommandOptions& opt);

}  // namespace condrisk
