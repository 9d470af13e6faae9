#include <doctest.h>

#include <cstdio>
#include <random>
#include <string>
#include <sys/wait.h>

#include "edpbrl/io.hpp"
#include "edpbrl/service.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace edpbrl;
using testing::TempDir;

namespace {

struct Outcome {
  int status = -1;
  std::string output;
};

Outcome run_cli(const std::string& args) {
  const std::string cmd = std::string(EDPBRL_CLI_PATH) + " " + args + " 2>&1";
  Outcome out;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.output.append(buf, n);
  const int raw = pclose(pipe);
  out.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return out;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// T = 2, K = 2, H = 2 instance with an argmax oracle.
void write_tiny_run(const TempDir& dir, const std::string& extra = "") {
  std::mt19937_64 rng(3);
  write_mdp(dir / "mdp.json", oracle::random_mdp(3, 2, 2, rng));
  FeatureMap f;
  f.phi = oracle::random_phi(3, 2, rng);
  write_features(dir / "features.csv", f);
  write_text_file(dir / "config.json", R"({
    "mdp": "mdp.json", "features": "features.csv", "seed": 4,
    "design": {"num_policies": 2, "episodes": 2, "lambda": 1, "fw_iterations": 20},
    "oracle": {"theta_star": [0.6, -0.8], "mode": "argmax"})" + extra + "}");
}

}  // namespace

TEST_CASE("design writes artifacts with an ascending trace") {
  TempDir dir;
  write_tiny_run(dir);
  const auto r = run_cli("design -q -c " + q(dir / "config.json"));
  REQUIRE(r.status == 0);
  for (const char* name : {"policies.json", "visitations.json", "trace.jsonl"})
    CHECK(std::filesystem::exists(dir / "out" / name));
  std::istringstream in(read_text_file(dir / "out/trace.jsonl"));
  std::string line;
  double prev = -INFINITY;
  int lines = 0;
  while (std::getline(in, line)) {
    const double obj = Json::parse(line).at("objective").get<double>();
    CHECK(obj >= prev - 1e-10);
    prev = obj;
    ++lines;
  }
  CHECK(lines == 20);
}

TEST_CASE("rerunning the design gives a byte-identical trace") {
  TempDir dir;
  write_tiny_run(dir);
  REQUIRE(run_cli("design -q -c " + q(dir / "config.json") + " -o " + q(dir / "a")).status == 0);
  REQUIRE(run_cli("design -q -c " + q(dir / "config.json") + " -o " + q(dir / "b")).status == 0);
  CHECK(read_text_file(dir / "a/trace.jsonl") == read_text_file(dir / "b/trace.jsonl"));
  CHECK(read_text_file(dir / "a/policies.json") == read_text_file(dir / "b/policies.json"));
}

TEST_CASE("a missing feature file fails with its path") {
  TempDir dir;
  write_tiny_run(dir);
  std::filesystem::remove(dir / "features.csv");
  const auto r = run_cli("design -q -c " + q(dir / "config.json"));
  CHECK(r.status != 0);
  CHECK(r.output.find((dir / "features.csv").string()) != std::string::npos);
}

TEST_CASE("simulate produces one record per episode and step") {
  TempDir dir;
  write_tiny_run(dir);
  REQUIRE(run_cli("simulate -c " + q(dir / "config.json")).status == 0);
  const auto recs = read_records(dir / "out/records.jsonl");
  CHECK(recs.size() == 4);
}

TEST_CASE("simulate uses stored design policies when present") {
  TempDir dir;
  write_tiny_run(dir);
  REQUIRE(run_cli("design -q -c " + q(dir / "config.json")).status == 0);
  REQUIRE(run_cli("simulate -c " + q(dir / "config.json") + " --records " + q(dir / "a.jsonl")).status == 0);
  std::filesystem::remove(dir / "out/policies.json");
  REQUIRE(run_cli("simulate -c " + q(dir / "config.json") + " --records " + q(dir / "b.jsonl")).status == 0);
  CHECK(read_text_file(dir / "a.jsonl") == read_text_file(dir / "b.jsonl"));
}

TEST_CASE("estimate on an empty record file gives a zero estimate") {
  TempDir dir;
  write_text_file(dir / "empty.jsonl", "");
  const auto r = run_cli("estimate -r " + q(dir / "empty.jsonl") + " --lambda 1 --dim 3 --out " +
                         q(dir / "theta.json"));
  REQUIRE(r.status == 0);
  const auto est = read_theta(dir / "theta.json");
  CHECK(est.theta.size() == 3);
  CHECK(est.theta.isZero(0.0));
  CHECK(run_cli("estimate -r " + q(dir / "empty.jsonl") + " --out " + q(dir / "t2.json")).status != 0);
}

TEST_CASE("estimate reports malformed records with line numbers") {
  TempDir dir;
  write_text_file(dir / "bad.jsonl",
                  "{\"episode\":0,\"step\":0,\"chosen\":0,\"options\":[[1],[2]]}\n{oops}\n");
  const auto r = run_cli("estimate -r " + q(dir / "bad.jsonl") + " --out " + q(dir / "t.json"));
  CHECK(r.status != 0);
  CHECK(r.output.find("bad.jsonl:2:") != std::string::npos);
}

TEST_CASE("evaluate scores self-labeled argmax records perfectly with the true theta") {
  TempDir dir;
  write_tiny_run(dir);
  REQUIRE(run_cli("simulate -c " + q(dir / "config.json")).status == 0);
  ThetaEstimate star;
  star.theta = Eigen::Vector2d(0.6, -0.8);
  star.converged = true;
  write_theta(dir / "star.json", star, 1.0, 0);
  const auto r = run_cli("evaluate -r " + q(dir / "out/records.jsonl") + " --theta " +
                         q(dir / "star.json") + " -c " + q(dir / "config.json") + " -o " +
                         q(dir / "eval"));
  REQUIRE(r.status == 0);
  const auto doc = Json::parse(read_text_file(dir / "eval/evaluation.json"));
  CHECK(doc.at("holdout_accuracy").get<double>() == 1.0);
  CHECK(doc.at("cosine_error").get<double>() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(doc.at("preference_prediction_error").get<double>() == 0.0);
  CHECK(std::filesystem::exists(dir / "eval/evaluation.csv"));
}

TEST_CASE("evaluate runs cross-validation folds") {
  TempDir dir;
  write_tiny_run(dir);
  REQUIRE(run_cli("simulate -c " + q(dir / "config.json") + " -T 30").status == 0);
  REQUIRE(run_cli("estimate -r " + q(dir / "out/records.jsonl") + " --lambda 1 --out " +
                  q(dir / "theta.json")).status == 0);
  REQUIRE(run_cli("evaluate -r " + q(dir / "out/records.jsonl") + " --theta " +
                  q(dir / "theta.json") + " --folds 3 --window 10 -o " + q(dir / "eval"))
              .status == 0);
  const auto doc = Json::parse(read_text_file(dir / "eval/evaluation.json"));
  REQUIRE(doc.at("folds").size() == 3);
  CHECK(doc.at("folds")[0].at("test_begin").get<int>() == 20);
  CHECK(doc.at("folds")[2].at("test_end").get<int>() == 10);
}

TEST_CASE("cli estimate agrees with the session service on exported records") {
  TempDir dir;
  std::mt19937_64 rng(8);
  ServiceConfig cfg;
  cfg.spec = oracle::random_mdp(5, 3, 3, rng);
  cfg.features.phi = oracle::random_phi(5, 4, rng);
  for (int k = 0; k < 4; ++k) cfg.policies.push_back(oracle::random_policy(cfg.spec, rng));
  cfg.episodes = 2;
  cfg.lambda = 0.5;
  cfg.record_dir = dir / "sessions";
  SessionManager manager(cfg);
  const auto id = manager.create_session();
  int decisions = 0;
  while (manager.query(id).at("status") == "active") {
    Json body;
    body["chosen"] = static_cast<int>(rng() % 4);
    manager.submit_choice(id, body);
    ++decisions;
  }
  CHECK(decisions == 6);
  const auto online = vector_from_json(manager.estimate(id).at("theta"), "theta");
  REQUIRE(run_cli("estimate -r " + q(manager.record_path(id)) + " --lambda 0.5 --out " +
                  q(dir / "theta.json"))
              .status == 0);
  const auto offline = read_theta(dir / "theta.json");
  CHECK((offline.theta - online).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("synth writes a runnable benchmark") {
  TempDir dir;
  REQUIRE(run_cli("synth --instance-seed 2 -o " + q(dir / "bench")).status == 0);
  const auto cfg = read_run_config(dir / "bench/config.json");
  const auto spec = read_mdp(cfg.mdp_path);
  CHECK(spec.num_states == 24);
  CHECK(load_features(cfg, spec.num_states).dim() == 16);
}

TEST_CASE("unknown subcommands and flags fail") {
  CHECK(run_cli("frobnicate").status != 0);
  CHECK(run_cli("design --no-such-flag").status != 0);
}
