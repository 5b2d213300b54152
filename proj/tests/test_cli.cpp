// Command front end: exit codes, JSON/CSV payloads, error lines, and
// agreement with the underlying modules. Exact-output checks rerun the
// library call the command wraps and demand identical bytes; numeric
// payloads are cross-checked against independently computed results.

#include <doctest.h>

#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "posnet/certify.hpp"
#include "posnet/cli.hpp"
#include "posnet/design.hpp"
#include "posnet/model.hpp"
#include "posnet/montecarlo.hpp"
#include "posnet/policy.hpp"
#include "posnet/sis.hpp"

using nlohmann::json;
using posnet::cli::RunConfig;
using posnet::model::FiniteMatrixDistribution;
using posnet::model::NetworkModel;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_cli(const RunConfig& cfg) {
  std::ostringstream out, err;
  Outcome res;
  res.code = posnet::cli::run(cfg, out, err);
  res.out = out.str();
  res.err = err.str();
  return res;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(static_cast<bool>(out));
  out << text;
}

Eigen::MatrixXd scalar(double v) {
  Eigen::MatrixXd m(1, 1);
  m << v;
  return m;
}

// Single stable deterministic node dx/dt = -x.
std::string deterministic_model_path() {
  const std::string path = "/tmp/posnet_cli_det.json";
  NetworkModel::BlockMap blocks;
  blocks.emplace(std::make_pair(0, 0),
                 FiniteMatrixDistribution::deterministic(scalar(-1.0)));
  posnet::model::save_model(NetworkModel::a1(1, 1, std::move(blocks)), path);
  return path;
}

// Single node with an uncertain but well-damped rate.
std::string bernoulli_model_path() {
  const std::string path = "/tmp/posnet_cli_bern.json";
  NetworkModel::BlockMap blocks;
  blocks.emplace(
      std::make_pair(0, 0),
      FiniteMatrixDistribution::two_point(0.5, scalar(-1.0), scalar(-1.2)));
  posnet::model::save_model(NetworkModel::a1(1, 1, std::move(blocks)), path);
  return path;
}

// Directed three-ring with Bernoulli edge rates; small enough to enumerate.
NetworkModel ring3_model() {
  const double r[3] = {0.1, 0.15, 0.2};
  NetworkModel::BlockMap blocks;
  for (int i = 0; i < 3; ++i) {
    blocks.emplace(std::make_pair(i, i),
                   FiniteMatrixDistribution::deterministic(scalar(-1.0)));
    blocks.emplace(std::make_pair(i, (i + 2) % 3),
                   FiniteMatrixDistribution::two_point(r[i], scalar(0.85),
                                                       scalar(0.05)));
  }
  return NetworkModel::a1(3, 1, std::move(blocks));
}

std::string ring3_model_path() {
  const std::string path = "/tmp/posnet_cli_ring3.json";
  posnet::model::save_model(ring3_model(), path);
  return path;
}

const char* kFamilyText = R"json({
    "N": 2, "n": 1, "m": 2, "mode": "a1",
    "mean_plus": [
      {"row": 1, "col": 2, "terms": [{"c": 0.05}, {"c": 0.55, "e": {"r1": 1}}]},
      {"row": 2, "col": 1, "terms": [{"c": 0.05}, {"c": 0.55, "e": {"r2": 1}}]}
    ],
    "mean_minus": [
      {"k": 1, "term": {"c": 1.0}},
      {"k": 2, "term": {"c": 1.0}}
    ],
    "eta": [
      {"i": 1, "j": 2, "terms": [{"c": 0.55}]},
      {"i": 2, "j": 1, "terms": [{"c": 0.55}]}
    ],
    "phi": [
      {"i": 1, "j": 2, "row": 1, "col": 1, "terms": [{"c": 0.3025, "e": {"r1": 1}}]},
      {"i": 2, "j": 1, "row": 1, "col": 1, "terms": [{"c": 0.3025, "e": {"r2": 1}}]}
    ],
    "psi": [
      {"i": 1, "j": 2, "row": 1, "col": 1, "terms": [{"c": 0.3025, "e": {"r1": 1}}]},
      {"i": 2, "j": 1, "row": 1, "col": 1, "terms": [{"c": 0.3025, "e": {"r2": 1}}]}
    ],
    "cost": [{"c": 1.0, "e": {"r1": -1}}, {"c": 1.0, "e": {"r2": -1}}],
    "cost_bound": 6.0,
    "realize": {"blocks": [
      {"i": 1, "j": 1, "kind": "deterministic", "m": [[-1.0]]},
      {"i": 2, "j": 2, "kind": "deterministic", "m": [[-1.0]]},
      {"i": 1, "j": 2, "kind": "two_point", "param": 1, "hi": [[0.6]], "lo": [[0.05]]},
      {"i": 2, "j": 1, "kind": "two_point", "param": 2, "hi": [[0.6]], "lo": [[0.05]]}
    ]}
  })json";

std::string family_path() {
  const std::string path = "/tmp/posnet_cli_family.json";
  write_file(path, kFamilyText);
  return path;
}

bool single_error_line(const Outcome& res) {
  return res.code == 1 && res.out.empty() && res.err.rfind("error: ", 0) == 0 &&
         res.err.back() == '\n' &&
         res.err.find('\n') == res.err.size() - 1;
}

}  // namespace

TEST_CASE("cli analyze: deterministic stable model reports the floor") {
  RunConfig cfg;
  cfg.command = "analyze";
  cfg.model_path = deterministic_model_path();
  cfg.lambda = 0.5;
  cfg.min_eps = true;

  const Outcome res = run_cli(cfg);
  CHECK(res.code == 0);
  CHECK(res.err.empty());
  const json j = json::parse(res.out);
  CHECK(j.at("eps_star").get<double>() == posnet::policy::kEpsFloor);
  CHECK(j.at("floor_clamped").get<bool>());
  CHECK_FALSE(j.at("uncertifiable").get<bool>());
  CHECK_FALSE(j.at("witness").is_null());
  CHECK(j.at("witness").at("lambda").get<double>() == 0.5);

  // Identical config twice: byte-identical output.
  CHECK(run_cli(cfg).out == res.out);
}

TEST_CASE("cli analyze: min-eps output matches the library search") {
  RunConfig cfg;
  cfg.command = "analyze";
  cfg.model_path = ring3_model_path();
  cfg.lambda = 0.5;
  cfg.min_eps = true;

  const Outcome res = run_cli(cfg);
  CHECK(res.code == 0);
  const json j = json::parse(res.out);
  const posnet::certify::MinEpsResult direct =
      posnet::certify::min_unreliability(ring3_model(), 0.5);
  CHECK(j.at("eps_star").get<double>() == direct.eps_star);
  CHECK(j.at("t_min").get<double>() == direct.t_min);
  CHECK(j.at("uncertifiable").get<bool>() == direct.uncertifiable);
}

TEST_CASE("cli analyze: feasibility exit codes distinguish yes and no") {
  const std::string path = bernoulli_model_path();
  RunConfig cfg;
  cfg.command = "analyze";
  cfg.model_path = path;
  cfg.lambda = 0.1;

  // Generous target: certifiable (eps* here is ~2e-11).
  cfg.eps = 1e-6;
  Outcome res = run_cli(cfg);
  CHECK(res.code == 0);
  CHECK(res.err.empty());
  json j = json::parse(res.out);
  CHECK(j.at("feasible").get<bool>());
  CHECK_FALSE(j.at("witness").is_null());
  CHECK(j.at("witness").at("eps").get<double>() == 1e-6);
  CHECK(j.at("slack").at("margin").get<double>() >= 0.0);

  // Unreachably tight target: clean infeasible verdict, not an error.
  cfg.eps = 1e-13;
  res = run_cli(cfg);
  CHECK(res.code == 2);
  CHECK(res.err.empty());
  j = json::parse(res.out);
  CHECK_FALSE(j.at("feasible").get<bool>());
  CHECK(j.at("binding").size() > 0);
}

TEST_CASE("cli analyze: mode lifting matches a direct conversion") {
  RunConfig cfg;
  cfg.command = "analyze";
  cfg.model_path = ring3_model_path();
  cfg.lambda = 0.3;
  cfg.min_eps = true;
  cfg.mode = "a2";

  const Outcome res = run_cli(cfg);
  REQUIRE(res.code != 1);
  const json j = json::parse(res.out);
  const posnet::certify::MinEpsResult direct =
      posnet::certify::min_unreliability(posnet::model::to_a2(ring3_model()),
                                         0.3);
  CHECK(j.at("eps_star").get<double>() == direct.eps_star);

  // A block-row model cannot be pushed back down to independent blocks.
  const std::string a2_path = "/tmp/posnet_cli_ring3_a2.json";
  posnet::model::save_model(posnet::model::to_a2(ring3_model()), a2_path);
  RunConfig back;
  back.command = "analyze";
  back.model_path = a2_path;
  back.lambda = 0.3;
  back.min_eps = true;
  back.mode = "a1";
  const Outcome bad = run_cli(back);
  CHECK(single_error_line(bad));
  CHECK(bad.err.find("a1 mode") != std::string::npos);
}

TEST_CASE("cli analyze: invalid configurations are single-line errors") {
  const std::string path = deterministic_model_path();

  RunConfig both;
  both.command = "analyze";
  both.model_path = path;
  both.lambda = 0.5;
  both.eps = 0.1;
  both.min_eps = true;
  CHECK(single_error_line(run_cli(both)));

  RunConfig neither;
  neither.command = "analyze";
  neither.model_path = path;
  neither.lambda = 0.5;
  CHECK(single_error_line(run_cli(neither)));

  RunConfig missing;
  missing.command = "analyze";
  missing.model_path = "/tmp/posnet_cli_missing_model.json";
  missing.lambda = 0.5;
  missing.min_eps = true;
  const Outcome miss = run_cli(missing);
  CHECK(single_error_line(miss));
  CHECK(miss.err.find("cannot open") != std::string::npos);

  RunConfig bad_mode;
  bad_mode.command = "analyze";
  bad_mode.model_path = path;
  bad_mode.lambda = 0.5;
  bad_mode.min_eps = true;
  bad_mode.mode = "a3";
  CHECK(single_error_line(run_cli(bad_mode)));

  RunConfig bad_lambda;
  bad_lambda.command = "analyze";
  bad_lambda.model_path = path;
  bad_lambda.lambda = -1.0;
  bad_lambda.min_eps = true;
  CHECK(single_error_line(run_cli(bad_lambda)));

  RunConfig bad_eps;
  bad_eps.command = "analyze";
  bad_eps.model_path = path;
  bad_eps.lambda = 0.5;
  bad_eps.eps = -0.5;
  CHECK(single_error_line(run_cli(bad_eps)));
}

TEST_CASE("cli design: JSON and parameter table, stdout and file modes") {
  const std::string path = family_path();
  RunConfig cfg;
  cfg.command = "design";
  cfg.family_path = path;

  const Outcome res = run_cli(cfg);
  CHECK(res.code == 0);
  CHECK(res.err.empty());

  // Stdout carries the JSON result followed by the parameter CSV.
  const auto split = res.out.find("\nparam,r_star\n");
  REQUIRE(split != std::string::npos);
  const json j = json::parse(res.out.substr(0, split + 1));
  const std::string csv = res.out.substr(split + 1);

  const posnet::design::DesignResult direct = posnet::design::solve_design(
      posnet::design::load_family(path), posnet::design::EpsMode::free_eps);
  REQUIRE(j.at("r_star").size() == 2);
  CHECK(j.at("r_star")[0].get<double>() == direct.r_star[0]);
  CHECK(j.at("r_star")[1].get<double>() == direct.r_star[1]);
  CHECK(j.at("eps_star").get<double>() == direct.eps_star);
  CHECK(j.at("gp_status").get<std::string>() == "optimal");
  CHECK(j.at("verification").at("feasible").get<bool>());

  // CSV lines are 1-based parameter indices with %.12g values.
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "param,r_star");
  std::getline(lines, line);
  char expect[64];
  std::snprintf(expect, sizeof(expect), "1,%.12g", direct.r_star[0]);
  CHECK(line == expect);
  std::getline(lines, line);
  std::snprintf(expect, sizeof(expect), "2,%.12g", direct.r_star[1]);
  CHECK(line == expect);

  // Byte-identical on rerun.
  CHECK(run_cli(cfg).out == res.out);

  // File mode: JSON to --out, CSV to the sibling .csv path, stdout quiet.
  cfg.out_path = "/tmp/posnet_cli_design.json";
  const Outcome filed = run_cli(cfg);
  CHECK(filed.code == 0);
  CHECK(filed.out.empty());
  std::ifstream jf("/tmp/posnet_cli_design.json", std::ios::binary);
  REQUIRE(static_cast<bool>(jf));
  std::stringstream jbuf;
  jbuf << jf.rdbuf();
  CHECK(jbuf.str() == res.out.substr(0, split + 1));
  std::ifstream cf("/tmp/posnet_cli_design.csv", std::ios::binary);
  REQUIRE(static_cast<bool>(cf));
  std::stringstream cbuf;
  cbuf << cf.rdbuf();
  CHECK(cbuf.str() == csv);
}

TEST_CASE("cli design: fixed eps pins the certificate level") {
  RunConfig cfg;
  cfg.command = "design";
  cfg.family_path = family_path();
  cfg.fixed_eps = 0.3;

  const Outcome res = run_cli(cfg);
  CHECK(res.code == 0);
  const auto split = res.out.find("\nparam,r_star\n");
  REQUIRE(split != std::string::npos);
  const json j = json::parse(res.out.substr(0, split + 1));
  CHECK(j.at("certificate").at("eps").get<double>() ==
        doctest::Approx(0.3).epsilon(1e-9));

  cfg.fixed_eps = 1.5;
  CHECK(single_error_line(run_cli(cfg)));

  RunConfig missing;
  missing.command = "design";
  missing.family_path = "/tmp/posnet_cli_missing_family.json";
  const Outcome miss = run_cli(missing);
  CHECK(single_error_line(miss));
  CHECK(miss.err.find("cannot open") != std::string::npos);
}

TEST_CASE("cli validate: report fields and exact enumeration agree") {
  const std::string path = ring3_model_path();
  RunConfig cfg;
  cfg.command = "validate";
  cfg.model_path = path;
  cfg.lambda = 0.5;
  cfg.samples = 400;
  cfg.seed = 9;
  cfg.exact = true;

  const Outcome res = run_cli(cfg);
  CHECK(res.code == 0);
  CHECK(res.err.empty());
  const json j = json::parse(res.out);
  CHECK(j.at("samples").get<long long>() == 400);
  CHECK(j.at("seed").get<std::uint64_t>() == 9);
  CHECK(j.at("lambda").get<double>() == 0.5);
  const auto failures = j.at("failures").get<long long>();
  CHECK(j.at("p_hat").get<double>() == static_cast<double>(failures) / 400.0);
  CHECK(j.at("ci_lower").get<double>() <= j.at("p_hat").get<double>());
  CHECK(j.at("p_hat").get<double>() <= j.at("ci_upper").get<double>());
  CHECK(j.at("exact_prob").get<double>() ==
        posnet::montecarlo::brute_force_prob(ring3_model(), 0.5));

  // Thread count must not change a single byte of the report.
  RunConfig threaded = cfg;
  threaded.threads = 3;
  CHECK(run_cli(threaded).out == res.out);

  // Without --exact the field is absent.
  RunConfig plain = cfg;
  plain.exact = false;
  CHECK_FALSE(json::parse(run_cli(plain).out).contains("exact_prob"));
}

TEST_CASE("cli validate: rate conventions and input validation") {
  const std::string path = deterministic_model_path();
  RunConfig cfg;
  cfg.command = "validate";
  cfg.model_path = path;
  cfg.lambda = 1.5;
  cfg.samples = 10;
  cfg.seed = 1;

  // Mean rate -1: margin passes at lambda/2 = 0.75 but not at 1.5.
  const json lyap = json::parse(run_cli(cfg).out);
  CHECK(lyap.at("p_hat").get<double>() == 0.0);
  cfg.rate_convention = "state";
  const json state = json::parse(run_cli(cfg).out);
  CHECK(state.at("p_hat").get<double>() == 1.0);

  cfg.rate_convention = "sideways";
  CHECK(single_error_line(run_cli(cfg)));

  cfg.rate_convention = "lyapunov";
  cfg.samples = 0;
  CHECK(single_error_line(run_cli(cfg)));

  cfg.samples = 10;
  cfg.threads = 0;
  CHECK(single_error_line(run_cli(cfg)));
}

TEST_CASE("cli demo-sis: fig1 grid table matches the module sweep") {
  RunConfig cfg;
  cfg.command = "demo-sis";
  cfg.nodes = 8;
  cfg.edge_prob = 0.6;
  cfg.seed = 3;
  cfg.fig1 = true;
  cfg.r_grid = {0.2, 0.1};
  cfg.lambda_grid = {0.1, 0.02};

  const Outcome res = run_cli(cfg);
  CHECK(res.code == 0);
  CHECK(res.err.empty());

  const Eigen::MatrixXd a_g = posnet::sis::erdos_renyi(8, 0.6, 3);
  const posnet::sis::SisParams params = posnet::sis::calibrated_params(
      a_g, 0.6, posnet::sis::Protection::uniform(0.5), 3);
  const std::string direct = posnet::sis::fig1_csv(
      posnet::sis::fig1_sweep(a_g, params, {0.1, 0.02}, {0.2, 0.1}));
  CHECK(res.out == direct);
  CHECK(res.out.rfind("r,lambda,eps_star\n", 0) == 0);

  // File mode writes the same bytes.
  cfg.out_path = "/tmp/posnet_cli_fig1.csv";
  const Outcome filed = run_cli(cfg);
  CHECK(filed.code == 0);
  CHECK(filed.out.empty());
  std::ifstream in("/tmp/posnet_cli_fig1.csv", std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == res.out);
}

TEST_CASE("cli demo-sis: fig2 design table and option validation") {
  RunConfig cfg;
  cfg.command = "demo-sis";
  cfg.nodes = 8;
  cfg.edge_prob = 0.6;
  cfg.seed = 3;
  cfg.fig2 = true;
  cfg.cost_bound = 48.0;
  cfg.eps_bound = 0.2;

  const Outcome res = run_cli(cfg);
  CHECK(res.code == 0);
  CHECK(res.out.rfind("node,in_degree,r_star\n", 0) == 0);
  int lines = 0;
  for (char c : res.out) lines += c == '\n';
  CHECK(lines == 9);  // header + one row per node

  RunConfig both = cfg;
  both.fig1 = true;
  CHECK(single_error_line(run_cli(both)));

  RunConfig neither = cfg;
  neither.fig2 = false;
  CHECK(single_error_line(run_cli(neither)));

  RunConfig no_budget = cfg;
  no_budget.cost_bound = 0.0;
  CHECK(single_error_line(run_cli(no_budget)));

  RunConfig bad_prob = cfg;
  bad_prob.edge_prob = 1.5;
  CHECK(single_error_line(run_cli(bad_prob)));

  RunConfig bad_nodes = cfg;
  bad_nodes.nodes = 0;
  CHECK(single_error_line(run_cli(bad_nodes)));
}

TEST_CASE("cli run: unknown commands are single-line errors") {
  RunConfig empty;
  const Outcome none = run_cli(empty);
  CHECK(single_error_line(none));
  CHECK(none.err == "error: unknown command: (none)\n");

  RunConfig bogus;
  bogus.command = "optimize";
  const Outcome res = run_cli(bogus);
  CHECK(single_error_line(res));
  CHECK(res.err == "error: unknown command: optimize\n");
}
