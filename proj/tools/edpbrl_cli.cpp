#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include "edpbrl/experiment.hpp"
#include "edpbrl/io.hpp"
#include "edpbrl/service.hpp"

namespace fs = std::filesystem;
using namespace edpbrl;

namespace {

struct Overrides {
  std::string config;
  std::string mdp;
  std::string features;
  std::string prefix_table;
  std::string vocabulary;
  std::string output_dir;
  std::string feedback;
  std::string policy_source;
  std::optional<int> episodes;
  std::optional<int> num_policies;
  std::optional<int> fw_iterations;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "run configuration (JSON)");
  cmd->add_option("--mdp", o.mdp, "MDP document");
  cmd->add_option("--features", o.features, "state feature table (CSV)");
  cmd->add_option("--prefix-table", o.prefix_table, "prefix feature table (CSV)");
  cmd->add_option("--vocabulary", o.vocabulary, "action tokens, one per line");
  cmd->add_option("-o,--output-dir", o.output_dir, "artifact directory");
  cmd->add_option("--feedback", o.feedback,
                  "state_based | truncated_additive | truncated_table");
  cmd->add_option("--policy-source", o.policy_source, "design | random");
  cmd->add_option("-T,--episodes", o.episodes, "episodes T");
  cmd->add_option("-K,--num-policies", o.num_policies, "policies K");
  cmd->add_option("-N,--fw-iterations", o.fw_iterations, "Frank-Wolfe iterations");
  cmd->add_option("--lambda", o.lambda, "regularization strength");
  cmd->add_option("--seed", o.seed, "random seed");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = read_run_config(o.config);
  } else {
    if (o.mdp.empty() || o.features.empty())
      throw std::invalid_argument("pass --config or both --mdp and --features");
    cfg.output_dir = "out";
  }
  if (!o.mdp.empty()) cfg.mdp_path = o.mdp;
  if (!o.features.empty()) cfg.features_path = o.features;
  if (!o.prefix_table.empty()) cfg.prefix_table_path = fs::path(o.prefix_table);
  if (!o.vocabulary.empty()) cfg.vocabulary_path = fs::path(o.vocabulary);
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (!o.feedback.empty()) cfg.feedback = parse_feedback_kind(o.feedback);
  if (!o.policy_source.empty()) cfg.policy_source = parse_policy_source(o.policy_source);
  if (o.episodes) cfg.design.episodes = *o.episodes;
  if (o.num_policies) cfg.design.num_policies = *o.num_policies;
  if (o.fw_iterations) cfg.design.fw_iterations = *o.fw_iterations;
  if (o.lambda) cfg.design.lambda = *o.lambda;
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.design.rng_seed = *o.seed;
  }
  for (const auto& p : {cfg.mdp_path, cfg.features_path})
    if (!fs::exists(p)) throw std::runtime_error("file not found: " + p.string());
  for (const auto& p : {cfg.prefix_table_path, cfg.vocabulary_path})
    if (p && !fs::exists(*p)) throw std::runtime_error("file not found: " + p->string());
  return cfg;
}

std::vector<Policy> policies_for(const RunConfig& cfg, const MdpSpec& spec,
                                 const FeatureMap& features) {
  if (cfg.policy_source == PolicySource::random)
    return random_baseline_policies(spec, cfg.design.num_policies, cfg.seed);
  const fs::path stored = cfg.output_dir / "policies.json";
  if (fs::exists(stored)) {
    auto policies = read_policies(stored);
    for (const auto& p : policies) {
      const auto problems = validate_policy(spec, p);
      if (!problems.empty()) throw FormatError(stored.string() + ": " + problems.front());
    }
    return policies;
  }
  std::cerr << "no " << stored.string() << "; solving the design first\n";
  return solve_design(spec, features, cfg.design).policies;
}

int cmd_design(const Overrides& o, bool quiet) {
  const RunConfig cfg = resolve_config(o);
  const MdpSpec spec = read_mdp(cfg.mdp_path);
  const FeatureMap features = load_features(cfg, spec.num_states);
  DesignObserver observer;
  if (!quiet)
    observer = [](int n, double value, double gap, double alpha) {
      std::cerr << "iter " << n << " objective " << value << " gap " << gap
                << " alpha " << alpha << "\n";
    };
  const DesignResult result = solve_design(spec, features, cfg.design, observer);
  write_design(cfg.output_dir, result);
  std::cout << "wrote design to " << cfg.output_dir.string() << " (objective "
            << result.objective_trace.back() << ", final gap " << result.final_gap
            << ")\n";
  return 0;
}

int cmd_simulate(const Overrides& o, const std::string& records_out) {
  const RunConfig cfg = resolve_config(o);
  if (!cfg.oracle)
    throw std::invalid_argument("simulate needs an 'oracle' section in the config");
  const MdpSpec spec = read_mdp(cfg.mdp_path);
  const FeatureMap features = load_features(cfg, spec.num_states);
  if (cfg.oracle->theta_star.size() != features.dim())
    throw std::invalid_argument("oracle theta_star has dimension " +
                                std::to_string(cfg.oracle->theta_star.size()) +
                                ", features have " + std::to_string(features.dim()));
  const auto policies = policies_for(cfg, spec, features);
  auto traj_rng = make_stream(cfg.seed, phase::kTrajectories);
  auto choice_rng = make_stream(cfg.oracle->rng_seed, phase::kChoices);
  const auto trajs = sample_episodes(spec, policies, cfg.design.episodes, traj_rng);
  const auto records =
      collect_records(trajs, features, cfg.feedback, *cfg.oracle, choice_rng);
  const fs::path out = records_out.empty() ? cfg.output_dir / "records.jsonl"
                                           : fs::path(records_out);
  write_records(out, records);
  std::cout << "wrote " << records.size() << " records to " << out.string() << "\n";
  return 0;
}

int cmd_estimate(const std::string& records_path, double lambda, int dim,
                 const std::string& config_path, const std::string& out_path) {
  const auto records = read_records(records_path);
  if (dim < 1 && !config_path.empty()) {
    const RunConfig cfg = read_run_config(config_path);
    dim = read_features(cfg.features_path).features.dim();
  }
  if (records.empty() && dim < 1)
    throw std::invalid_argument("the record file is empty; pass --dim or --config");
  const auto est = estimate_theta(records, lambda, {}, dim);
  write_theta(out_path, est, lambda, records.size());
  std::cout << "wrote estimate from " << records.size() << " records to "
            << out_path << "\n";
  return est.converged ? 0 : 2;
}

int cmd_evaluate(const std::string& records_path, const std::string& theta_path,
                 const std::string& config_path, const std::string& out_dir,
                 int folds, int window, int pairs) {
  const auto records = read_records(records_path);
  const auto est = read_theta(theta_path);
  std::vector<TraceRow> rows;
  Json report;
  const auto add = [&](const std::string& metric, double value) {
    rows.push_back({0, "evaluated", 0, 0.0, metric, value});
    report[metric] = value;
  };
  if (!records.empty()) add("holdout_accuracy", holdout_accuracy(est.theta, records));

  if (!config_path.empty()) {
    const RunConfig cfg = read_run_config(config_path);
    if (!cfg.oracle) throw std::invalid_argument("the config has no oracle theta_star");
    const MdpSpec spec = read_mdp(cfg.mdp_path);
    const FeatureMap features = load_features(cfg, spec.num_states);
    if (est.theta.norm() > 0.0)
      add("cosine_error", cosine_error(est.theta, cfg.oracle->theta_star));
    auto rng = make_stream(cfg.seed, phase::kEvalPairs);
    add("preference_prediction_error",
        preference_prediction_error(est.theta, cfg.oracle->theta_star,
                                    make_eval_pairs(features, pairs, rng)));
    for (auto& r : rows) {
      r.seed = cfg.seed;
      r.lambda = cfg.design.lambda;
      r.policy_source = to_string(cfg.policy_source);
    }
  }

  if (folds > 0) {
    int episodes = 0;
    for (const auto& r : records) episodes = std::max(episodes, r.episode + 1);
    const Json theta_doc = Json::parse(read_text_file(theta_path));
    const double lambda = theta_doc.value("lambda", 1.0);
    Json fold_docs = Json::array();
    for (const auto& f : cross_validate(records, episodes, folds, window, lambda)) {
      Json fd;
      fd["fold"] = f.fold;
      fd["test_begin"] = f.test_begin;
      fd["test_end"] = f.test_end;
      fd["train_records"] = f.train_records;
      fd["test_records"] = f.test_records;
      fd["holdout_accuracy"] = f.holdout_accuracy;
      fold_docs.push_back(fd);
      rows.push_back({0, "fold_" + std::to_string(f.fold), episodes, lambda,
                      "holdout_accuracy", f.holdout_accuracy});
    }
    report["folds"] = fold_docs;
  }

  write_text_file(fs::path(out_dir) / "evaluation.csv", trace_rows_csv(rows));
  write_text_file(fs::path(out_dir) / "evaluation.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

HttpService* g_service = nullptr;

int cmd_serve(const Overrides& o, std::string bind) {
  if (const char* env = std::getenv("EDPBRL_BIND"); env && *env) bind = env;
  const auto [host, port] = parse_bind_address(bind);
  const RunConfig cfg = resolve_config(o);
  SessionManager manager(service_config_from_run(cfg));
  HttpService service(manager);
  if (!service.bind(host, port))
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::cout << "serving on http://" << host << ":" << port << " (records under "
            << manager.config().record_dir.string() << ")" << std::endl;
  service.run();
  g_service = nullptr;
  return 0;
}

struct SweepFlags {
  int num_seeds = 25;
  std::uint64_t first_seed = 1;
  std::uint64_t instance_seed = 7;
  std::vector<int> budgets{10, 30, 70, 110};
  int fw_iterations = 100;
  int num_policies = 4;
  double lambda = 100.0;
  std::string feedback = "state_based";
  std::string oracle_mode = "sampled_softmax";
  std::string output_dir = "report";
  BenchmarkShape shape;
};

int cmd_report(const SweepFlags& f) {
  const auto instance = make_benchmark_instance(f.shape, f.instance_seed);
  SweepConfig sweep;
  for (int i = 0; i < f.num_seeds; ++i) sweep.seeds.push_back(f.first_seed + i);
  sweep.episode_budgets = f.budgets;
  sweep.design.fw_iterations = f.fw_iterations;
  sweep.design.num_policies = f.num_policies;
  sweep.design.lambda = f.lambda;
  sweep.feedback = parse_feedback_kind(f.feedback);
  sweep.oracle_mode = parse_oracle_mode(f.oracle_mode);
  const auto rows = run_sweep(instance, sweep);
  const fs::path dir = f.output_dir;
  write_text_file(dir / "results.csv", trace_rows_csv(rows));
  Json summary = sweep_summary(rows);
  summary["instance_seed"] = f.instance_seed;
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "T     design   random   (median cosine error)\n";
  for (int t : f.budgets) {
    std::printf("%-5d %.4f   %.4f\n", t, median_metric(rows, "design", t, "cosine_error"),
                median_metric(rows, "random", t, "cosine_error"));
  }
  return 0;
}

int cmd_synth(const SweepFlags& f, const std::string& dir_text) {
  const fs::path dir = dir_text;
  const auto instance = make_benchmark_instance(f.shape, f.instance_seed);
  write_mdp(dir / "mdp.json", instance.spec);
  write_features(dir / "features.csv", instance.features);
  auto rng = make_stream(f.instance_seed, phase::kTheta);
  Json cfg;
  cfg["mdp"] = "mdp.json";
  cfg["features"] = "features.csv";
  cfg["design"] = {{"num_policies", f.num_policies},
                   {"episodes", 30},
                   {"lambda", f.lambda},
                   {"fw_iterations", f.fw_iterations}};
  cfg["oracle"] = {{"theta_star", vector_to_json(random_unit_vector(f.shape.dim, rng))},
                   {"mode", f.oracle_mode}};
  cfg["feedback"] = f.feedback;
  cfg["output_dir"] = "out";
  cfg["seed"] = f.instance_seed;
  write_text_file(dir / "config.json", cfg.dump(2) + "\n");
  std::cout << "wrote mdp.json, features.csv and config.json to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experimental design for preference-based reward learning"};
  app.require_subcommand(1);

  Overrides design_o, sim_o, serve_o;
  bool quiet = false;
  auto* design = app.add_subcommand("design", "solve the exploration design");
  add_run_flags(design, design_o);
  design->add_flag("-q,--quiet", quiet, "suppress per-iteration progress");

  std::string sim_records;
  auto* simulate = app.add_subcommand("simulate", "collect records from the oracle");
  add_run_flags(simulate, sim_o);
  simulate->add_option("--records", sim_records, "output record file");

  std::string est_records, est_config, est_out = "theta.json";
  double est_lambda = 100.0;
  int est_dim = -1;
  auto* estimate = app.add_subcommand("estimate", "regularized MLE of theta");
  estimate->add_option("-r,--records", est_records, "record file (JSON lines)")
      ->required();
  estimate->add_option("--lambda", est_lambda, "regularization strength");
  estimate->add_option("--dim", est_dim, "feature dimension for empty inputs");
  estimate->add_option("-c,--config", est_config, "config whose features fix the dimension");
  estimate->add_option("--out", est_out, "output document");

  std::string ev_records, ev_theta, ev_config, ev_out = ".";
  int ev_folds = 0, ev_window = 10, ev_pairs = 5000;
  auto* evaluate = app.add_subcommand("evaluate", "score an estimate");
  evaluate->add_option("-r,--records", ev_records, "record file")->required();
  evaluate->add_option("--theta", ev_theta, "estimate document")->required();
  evaluate->add_option("-c,--config", ev_config, "config with oracle theta_star");
  evaluate->add_option("--folds", ev_folds, "cross-validation folds (0 = off)");
  evaluate->add_option("--window", ev_window, "episodes per test window");
  evaluate->add_option("--pairs", ev_pairs, "evaluation pairs");
  evaluate->add_option("-o,--output-dir", ev_out, "report directory");

  std::string bind = "127.0.0.1:8080";
  auto* serve = app.add_subcommand("serve", "run the live questionnaire service");
  add_run_flags(serve, serve_o);
  serve->add_option("--bind", bind, "host:port (EDPBRL_BIND overrides)");

  SweepFlags sweep;
  auto* report = app.add_subcommand("report", "benchmark sweep: design vs random");
  report->add_option("--seeds", sweep.num_seeds, "number of seeds");
  report->add_option("--first-seed", sweep.first_seed, "first seed");
  report->add_option("--instance-seed", sweep.instance_seed, "benchmark instance seed");
  report->add_option("--budgets", sweep.budgets, "episode budgets");
  report->add_option("-N,--fw-iterations", sweep.fw_iterations, "Frank-Wolfe iterations");
  report->add_option("-K,--num-policies", sweep.num_policies, "policies K");
  report->add_option("--lambda", sweep.lambda, "regularization strength");
  report->add_option("--feedback", sweep.feedback, "feedback kind");
  report->add_option("--oracle-mode", sweep.oracle_mode, "sampled_softmax | argmax");
  report->add_option("-o,--output-dir", sweep.output_dir, "result directory");

  std::string synth_dir = "instance";
  auto* synth = app.add_subcommand("synth", "write the benchmark instance to files");
  synth->add_option("--instance-seed", sweep.instance_seed, "instance seed");
  synth->add_option("-o,--output-dir", synth_dir, "target directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*design) return cmd_design(design_o, quiet);
    if (*simulate) return cmd_simulate(sim_o, sim_records);
    if (*estimate) return cmd_estimate(est_records, est_lambda, est_dim, est_config, est_out);
    if (*evaluate)
      return cmd_evaluate(ev_records, ev_theta, ev_config, ev_out, ev_folds, ev_window,
                          ev_pairs);
    if (*serve) return cmd_serve(serve_o, bind);
    if (*report) return cmd_report(sweep);
    if (*synth) return cmd_synth(sweep, synth_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
