// condrisk <risk|dual|expcheck|consistency|msorte|oracle> <file> [--tol T] [--step S] [--out PATH]

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "condrisk/scenario_io.hpp"

namespace {

// CONDRISK_THREADS caps the worker count; unset means one per core.
int thread_cap() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("CONDRISK_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1) n = std::min<long>(n, cap);
  }
  return n;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional shortfall systemic risk: solver, dual and closed-form checks"};
  std::string command;
  std::string file;
  double tol = 0.0;
  double step = 1e-3;
  std::string out;
  app.add_option("command", command, "risk, dual, expcheck, consistency, msorte or oracle")
      ->required()
      ->check(CLI::IsMember({"risk", "dual", "expcheck", "consistency", "msorte", "oracle"}));
  app.add_option("file", file, "scenario JSON file")->required();
  auto* tol_opt = app.add_option("--tol", tol, "KKT tolerance (overrides the file)");
  app.add_option("--step", step, "grid step for the oracle command");
  app.add_option("--out", out, "write the report here instead of stdout");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  condrisk::CommandOptions opt;
  if (tol_opt->count()) opt.kkt_tol = tol;
  opt.step = step;
  opt.threads = thread_cap();

  const auto res = condrisk::run_command(command, file, opt);
  if (res.exit_code != 0) {
    std::cerr << "condrisk: " << res.error << "\n";
    return res.exit_code;
  }
  if (out.empty()) {
    std::cout << res.report;
  } else {
    std::ofstream os(out, std::ios::binary);
    if (!os) {
      std::cerr << "condrisk: cannot write " << out << "\n";
      return 1;
    }
    os << res.report;
  }
  return 0;
}
