#pragma once

// Command front end. A RunConfig names one of four commands and its options;
// run() executes it against the given streams and returns the process exit
// code: 0 on success (analyze: certificate found), 2 when analyze proves
// nothing at the requested level (infeasible / uncertifiable), 1 on any
// error. Errors are reported as a single "error: ..." line on `err` so
// callers can parse failures mechanically. All randomness flows from the
// explicit seed; identical configs produce byte-identical output.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace posnet::cli {

struct RunConfig {
  std::string command;  // analyze | design | validate | demo-sis

  // analyze / validate
  std::string model_path;
  double lambda = 0.0;

  // analyze: exactly one of eps (feasibility at a target) and min_eps
  // (minimize the certified unreliability) must be set. mode empty means
  // "as stored"; "a2" lifts an independent-blocks model to block rows.
  std::optional<double> eps;
  bool min_eps = false;
  std::string mode;

  // design
  std::string family_path;
  std::optional<double> fixed_eps;  // pin eps instead of minimizing it

  // validate
  long long samples = 0;
  int threads = 1;
  bool exact = false;                       // add exhaustive enumeration
  std::string rate_convention = "lyapunov"; // or "state"

  // demo-sis
  int nodes = 0;
  double edge_prob = 0.0;
  bool fig1 = false;                // unreliability over an (r, lambda) grid
  bool fig2 = false;                // budgeted protection design
  std::vector<double> r_grid;       // fig1; default 0.1, 0.2, 0.3, 0.4
  std::vector<double> lambda_grid;  // fig1; default 0.02, 0.05, ..., 0.29
  double cost_bound = 0.0;          // fig2 budget for sum_i 1 / r_i
  double eps_bound = 0.2;           // fig2 unreliability target

  // shared
  std::uint64_t seed = 0;
  std::string out_path;  // design: result JSON (+ sibling .csv); demo: CSV
};

// Executes config, writing results to `out` and diagnostics to `err`.
// Never throws: every failure becomes an "error: ..." line and exit code 1.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace posnet::cli
