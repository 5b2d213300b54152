#include "posnet/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "posnet/certify.hpp"
#include "posnet/design.hpp"
#include "posnet/model.hpp"
#include "posnet/montecarlo.hpp"
#include "posnet/sis.hpp"

namespace posnet::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json cols_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(vec_json(m.col(c)));
  return a;
}

json certificate_json(const certify::CertificateParams& c) {
  return json{{"p", vec_json(c.p)},
              {"a", c.a},
              {"delta", c.delta},
              {"sigma", c.sigma},
              {"rho", c.rho},
              {"lambda", c.lambda},
              {"eps", c.eps},
              {"mode", c.mode == model::IndependenceMode::a1 ? "a1" : "a2"}};
}

json cert_result_json(const certify::CertResult& r) {
  json j{{"feasible", r.feasible},
         {"witness", r.witness ? certificate_json(*r.witness) : json()},
         {"slack",
          {{"a_slack", r.slack.a_slack},
           {"delta_slack", r.slack.delta_slack},
           {"sigma2_slack", r.slack.sigma2_slack},
           {"margin", r.slack.margin}}},
         {"binding", r.binding},
         {"diagnostic", r.diagnostic}};
  return j;
}

json design_json(const design::DesignResult& r) {
  return json{{"r_star", vec_json(r.r_star)},
              {"lambda_star", r.lambda_star},
              {"rho_star", r.rho_star},
              {"eps_star", r.eps_star},
              {"p_star", vec_json(r.p_star)},
              {"a", r.a},
              {"delta", r.delta},
              {"sigma", r.sigma},
              {"v", vec_json(r.v)},
              {"w", cols_json(r.w)},
              {"gp_status", gpsolve::to_string(r.gp_status)},
              {"certificate", certificate_json(r.certificate)},
              {"verification", cert_result_json(r.verification)}};
}

std::string r_star_csv(const Eigen::VectorXd& r) {
  std::string csv = "param,r_star\n";
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    csv += std::to_string(i + 1) + "," + num(r[i]) + "\n";
  }
  return csv;
}

void write_text(const std::string& path, const std::string& text,
                const char* who) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(std::string(who) + ": cannot open " + path);
  out << text;
  if (!out) throw std::runtime_error(std::string(who) + ": write failed for " + path);
}

// d.json -> d.csv; a dotless name simply gains the extension.
std::string sibling_csv_path(const std::string& json_path) {
  const auto slash = json_path.find_last_of('/');
  const auto dot = json_path.find_last_of('.');
  if (dot == std::string::npos ||
      (slash != std::string::npos && dot < slash)) {
    return json_path + ".csv";
  }
  return json_path.substr(0, dot) + ".csv";
}

void check_lambda(double lambda) {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    fail("--lambda must be finite and nonnegative, got " + num(lambda));
  }
}

int run_analyze(const RunConfig& cfg, std::ostream& out) {
  if (cfg.model_path.empty()) fail("analyze: --model is required");
  check_lambda(cfg.lambda);
  if (cfg.eps.has_value() == cfg.min_eps) {
    fail("analyze: exactly one of --eps and --min-eps is required");
  }

  model::NetworkModel m = model::load_model(cfg.model_path);
  if (!cfg.mode.empty() && cfg.mode != "a1" && cfg.mode != "a2") {
    fail("analyze: --mode must be a1 or a2, got " + cfg.mode);
  }
  if (cfg.mode == "a2" && m.mode() == model::IndependenceMode::a1) {
    m = model::to_a2(m);
  } else if (cfg.mode == "a1" && m.mode() == model::IndependenceMode::a2) {
    fail("analyze: a block-row model cannot be analyzed in a1 mode");
  }

  if (cfg.eps) {
    const certify::CertResult res =
        certify::search_certificate(m, cfg.lambda, *cfg.eps);
    out << cert_result_json(res).dump(2) << "\n";
    return res.feasible ? 0 : 2;
  }

  const certify::MinEpsResult res = certify::min_unreliability(m, cfg.lambda);
  json j{{"eps_star", res.eps_star},
         {"uncertifiable", res.uncertifiable},
         {"floor_clamped", res.floor_clamped},
         {"t_min", res.t_min},
         {"witness", res.witness ? certificate_json(*res.witness) : json()}};
  out << j.dump(2) << "\n";
  return res.uncertifiable ? 2 : 0;
}

int run_design(const RunConfig& cfg, std::ostream& out) {
  if (cfg.family_path.empty()) fail("design: --family is required");
  if (cfg.fixed_eps && !(*cfg.fixed_eps > 0.0 && *cfg.fixed_eps < 1.0)) {
    fail("design: --fixed-eps must lie in (0, 1), got " + num(*cfg.fixed_eps));
  }

  const design::DesignFamily family = design::load_family(cfg.family_path);
  const design::DesignResult res = design::solve_design(
      family, cfg.fixed_eps ? design::EpsMode::fixed_eps
                            : design::EpsMode::free_eps,
      cfg.fixed_eps.value_or(0.0));

  const std::string body = design_json(res).dump(2) + "\n";
  const std::string csv = r_star_csv(res.r_star);
  if (cfg.out_path.empty()) {
    out << body << csv;
  } else {
    write_text(cfg.out_path, body, "design");
    write_text(sibling_csv_path(cfg.out_path), csv, "design");
  }
  return 0;
}

int run_validate(const RunConfig& cfg, std::ostream& out) {
  if (cfg.model_path.empty()) fail("validate: --model is required");
  check_lambda(cfg.lambda);
  if (cfg.samples < 1) fail("validate: --samples must be at least 1");
  if (cfg.threads < 1) fail("validate: --threads must be at least 1");
  montecarlo::RateConvention conv = montecarlo::RateConvention::lyapunov;
  if (cfg.rate_convention == "state") {
    conv = montecarlo::RateConvention::state;
  } else if (cfg.rate_convention != "lyapunov") {
    fail("validate: --rate-convention must be lyapunov or state, got " +
         cfg.rate_convention);
  }

  const model::NetworkModel m = model::load_model(cfg.model_path);
  const montecarlo::McReport rep = montecarlo::estimate_instability_prob(
      m, cfg.lambda, cfg.samples, cfg.seed, cfg.threads, conv);
  json j = montecarlo::mc_report_json(rep);
  if (cfg.exact) {
    j["exact_prob"] =
        montecarlo::brute_force_prob(m, cfg.lambda, policy::kEnumCap, conv);
  }
  out << j.dump(2) << "\n";
  return 0;
}

int run_demo_sis(const RunConfig& cfg, std::ostream& out) {
  if (cfg.nodes < 1) fail("demo-sis: --nodes must be at least 1");
  if (!(cfg.edge_prob >= 0.0 && cfg.edge_prob <= 1.0)) {
    fail("demo-sis: --edge-prob must lie in [0, 1], got " + num(cfg.edge_prob));
  }
  if (cfg.fig1 == cfg.fig2) {
    fail("demo-sis: exactly one of --fig1 and --fig2 is required");
  }

  const Eigen::MatrixXd a_g =
      sis::erdos_renyi(cfg.nodes, cfg.edge_prob, cfg.seed);
  const sis::SisParams params = sis::calibrated_params(
      a_g, cfg.edge_prob, sis::Protection::uniform(0.5), cfg.seed);

  std::string csv;
  if (cfg.fig1) {
    std::vector<double> r = cfg.r_grid;
    if (r.empty()) r = {0.1, 0.2, 0.3, 0.4};
    std::vector<double> lambda = cfg.lambda_grid;
    if (lambda.empty()) {
      for (int k = 0; k < 10; ++k) lambda.push_back(0.02 + 0.03 * k);
    }
    csv = sis::fig1_csv(sis::fig1_sweep(a_g, params, lambda, r));
  } else {
    if (!(cfg.cost_bound > 0.0)) {
      fail("demo-sis: --fig2 requires --cost-bound > 0");
    }
    csv = sis::fig2_csv(
        sis::fig2_run(a_g, params, cfg.cost_bound, cfg.eps_bound).rows);
  }

  if (cfg.out_path.empty()) {
    out << csv;
  } else {
    write_text(cfg.out_path, csv, "demo-sis");
  }
  return 0;
}

}  // namespace

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (config.command == "analyze") return run_analyze(config, out);
    if (config.command == "design") return run_design(config, out);
    if (config.command == "validate") return run_validate(config, out);
    if (config.command == "demo-sis") return run_demo_sis(config, out);
    fail("unknown command: " +
         (config.command.empty() ? std::string("(none)") : config.command));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace posnet::cli
