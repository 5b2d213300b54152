// posnet: certificates, distribution design, and Monte-Carlo validation for
// networks of positive linear systems with random coefficients.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "posnet/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "posnet: stability certificates for networks of positive linear "
      "systems with random coefficients"};
  app.require_subcommand(1);

  posnet::cli::RunConfig cfg;

  CLI::App* analyze = app.add_subcommand(
      "analyze", "Certify a model file at a decay rate (or minimize eps)");
  analyze->add_option("--model", cfg.model_path, "Model JSON file")
      ->required();
  analyze->add_option("--lambda", cfg.lambda, "Decay rate to certify")
      ->required();
  analyze->add_option("--eps", cfg.eps,
                      "Target unreliability for a feasibility check");
  analyze->add_flag("--min-eps", cfg.min_eps,
                    "Minimize the certified unreliability instead");
  analyze->add_option("--mode", cfg.mode,
                      "Analysis mode: a1 (independent blocks) or a2 "
                      "(independent block rows); default: as stored");

  CLI::App* design = app.add_subcommand(
      "design", "Solve a parametric design family for optimal parameters");
  design->add_option("--family", cfg.family_path, "Design family JSON file")
      ->required();
  design->add_option("--fixed-eps", cfg.fixed_eps,
                     "Pin the unreliability instead of minimizing it");
  design->add_option("--out", cfg.out_path,
                     "Write the result JSON here (and the parameter CSV to "
                     "the sibling .csv path) instead of stdout");

  CLI::App* validate = app.add_subcommand(
      "validate", "Monte-Carlo estimate of the instability probability");
  validate->add_option("--model", cfg.model_path, "Model JSON file")
      ->required();
  validate->add_option("--lambda", cfg.lambda, "Decay rate to test")
      ->required();
  validate->add_option("--samples", cfg.samples, "Number of samples")
      ->required();
  validate->add_option("--seed", cfg.seed, "Sampling seed");
  validate->add_option("--threads", cfg.threads, "Worker thread bound");
  validate->add_flag("--exact", cfg.exact,
                     "Also enumerate the exact probability (finite support)");
  validate->add_option("--rate-convention", cfg.rate_convention,
                       "Decay convention: lyapunov (default) or state");

  CLI::App* demo = app.add_subcommand(
      "demo-sis", "Epidemic case study on a random contact graph");
  demo->add_option("--nodes", cfg.nodes, "Number of nodes")->required();
  demo->add_option("--edge-prob", cfg.edge_prob, "Edge probability")
      ->required();
  demo->add_option("--seed", cfg.seed, "Graph seed");
  demo->add_flag("--fig1", cfg.fig1,
                 "Minimum unreliability over an (r, lambda) grid");
  demo->add_flag("--fig2", cfg.fig2, "Budgeted protection design");
  demo->add_option("--r-grid", cfg.r_grid,
                   "Comma-separated protection levels for --fig1")
      ->delimiter(',');
  demo->add_option("--lambda-grid", cfg.lambda_grid,
                   "Comma-separated decay rates for --fig1")
      ->delimiter(',');
  demo->add_option("--cost-bound", cfg.cost_bound,
                   "Budget for sum_i 1/r_i (required with --fig2)");
  demo->add_option("--eps-bound", cfg.eps_bound,
                   "Unreliability target for --fig2 (default 0.2)");
  demo->add_option("--out", cfg.out_path,
                   "Write the CSV table here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  for (CLI::App* sub : {analyze, design, validate, demo}) {
    if (sub->parsed()) cfg.command = sub->get_name();
  }
  return posnet::cli::run(cfg, std::cout, std::cerr);
}
