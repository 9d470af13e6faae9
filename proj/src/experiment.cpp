#include "edpbrl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace edpbrl {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t phase) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(phase),
                    static_cast<std::uint32_t>(phase >> 32)};
  return std::mt19937_64(seq);
}

std::string to_string(OracleMode mode) {
  return mode == OracleMode::argmax ? "argmax" : "sampled_softmax";
}

std::string to_string(FeedbackKind kind) {
  switch (kind) {
    case FeedbackKind::state_based:
      return "state_based";
    case FeedbackKind::truncated_additive:
      return "truncated_additive";
    case FeedbackKind::truncated_table:
      return "truncated_table";
  }
  return "state_based";
}

std::string to_string(PolicySource source) {
  return source == PolicySource::random ? "random" : "design";
}

OracleMode parse_oracle_mode(const std::string& text) {
  if (text == "sampled_softmax") return OracleMode::sampled_softmax;
  if (text == "argmax") return OracleMode::argmax;
  throw std::invalid_argument("unknown oracle mode '" + text + "'");
}

FeedbackKind parse_feedback_kind(const std::string& text) {
  if (text == "state_based") return FeedbackKind::state_based;
  if (text == "truncated_additive") return FeedbackKind::truncated_additive;
  if (text == "truncated_table") return FeedbackKind::truncated_table;
  throw std::invalid_argument("unknown feedback kind '" + text + "'");
}

PolicySource parse_policy_source(const std::string& text) {
  if (text == "design") return PolicySource::design;
  if (text == "random") return PolicySource::random;
  throw std::invalid_argument("unknown policy source '" + text + "'");
}

ChoiceOptions feedback_features(FeedbackKind kind,
                                const std::vector<Trajectory>& trajs, int h,
                                const FeatureMap& features) {
  const int k = static_cast<int>(trajs.size());
  ChoiceOptions out{Eigen::MatrixXd::Zero(k, features.dim())};
  for (int q = 0; q < k; ++q) {
    const auto& tr = trajs[q];
    if (h < 0 || h >= static_cast<int>(tr.steps.size()))
      throw std::out_of_range("step " + std::to_string(h) +
                              " outside the trajectory");
    switch (kind) {
      case FeedbackKind::state_based:
        out.features.row(q) = features.phi.row(tr.state(h));
        break;
      case FeedbackKind::truncated_additive:
        for (int j = 0; j <= h; ++j)
          out.features.row(q) += features.phi.row(tr.state(j));
        break;
      case FeedbackKind::truncated_table: {
        auto states = tr.states();
        states.resize(h + 1);
        const std::string key = path_key(states);
        const auto it = features.prefix_table.find(key);
        if (it == features.prefix_table.end())
          throw std::out_of_range("prefix table has no entry for '" + key +
                                  "'");
        out.features.row(q) = it->second.transpose();
        break;
      }
    }
  }
  return out;
}

std::vector<std::string> option_keys(const std::vector<Trajectory>& trajs,
                                     int h) {
  std::vector<std::string> keys;
  keys.reserve(trajs.size());
  for (const auto& tr : trajs) {
    auto states = tr.states();
    states.resize(h + 1);
    keys.push_back(path_key(states));
  }
  return keys;
}

int oracle_choice(const OracleSpec& oracle, const ChoiceOptions& options,
                  std::mt19937_64& rng) {
  if (oracle.mode == OracleMode::argmax) {
    const Eigen::VectorXd scores = options.features * oracle.theta_star;
    int best = 0;
    for (int q = 1; q < scores.size(); ++q)
      if (scores[q] > scores[best]) best = q;
    return best;
  }
  return sample_choice(choice_probs(oracle.theta_star, options), rng);
}

std::vector<Policy> random_baseline_policies(const MdpSpec& spec, int k,
                                             std::uint64_t /*rng_seed*/) {
  return std::vector<Policy>(k, uniform_policy(spec));
}

TrajectorySet sample_episodes(const MdpSpec& spec,
                              const std::vector<Policy>& policies,
                              int episodes, std::mt19937_64& rng) {
  TrajectorySet out(episodes);
  for (auto& episode : out) {
    episode.reserve(policies.size());
    for (const auto& policy : policies)
      episode.push_back(sample_trajectory(spec, policy, rng));
  }
  return out;
}

std::vector<PreferenceRecord> collect_records(const TrajectorySet& trajs,
                                              const FeatureMap& features,
                                              FeedbackKind feedback,
                                              const OracleSpec& oracle,
                                              std::mt19937_64& rng,
                                              int first_episode) {
  std::vector<PreferenceRecord> records;
  for (std::size_t t = 0; t < trajs.size(); ++t) {
    const auto& episode = trajs[t];
    if (episode.empty()) continue;
    const int horizon = static_cast<int>(episode.front().steps.size());
    for (int h = 0; h < horizon; ++h) {
      PreferenceRecord rec;
      rec.episode = first_episode + static_cast<int>(t);
      rec.step = h;
      rec.options = feedback_features(feedback, episode, h, features);
      rec.option_keys = option_keys(episode, h);
      rec.chosen = oracle_choice(oracle, rec.options, rng);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

ProtocolResult run_protocol(const MdpSpec& spec, const FeatureMap& features,
                            const DesignConfig& cfg, const OracleSpec& oracle,
                            FeedbackKind feedback, PolicySource source,
                            const ProtocolOptions& opts,
                            const DesignResult* precomputed) {
  require_valid(spec);
  validate_features(features);
  if (oracle.theta_star.size() != features.dim())
    throw std::invalid_argument("theta_star dimension does not match features");
  if (!oracle.theta_star.allFinite())
    throw std::invalid_argument("theta_star must be finite");
  if (feedback == FeedbackKind::truncated_table && !features.has_prefix_table())
    throw std::invalid_argument("truncated_table feedback needs a prefix table");
  if (cfg.episodes < 0) throw std::invalid_argument("episodes must be >= 0");

  ProtocolResult result;
  if (source == PolicySource::design) {
    if (precomputed != nullptr) {
      result.design = *precomputed;
    } else {
      DesignConfig design_cfg = cfg;
      design_cfg.episodes = std::max(cfg.episodes, 1);
      result.design = solve_design(spec, features, design_cfg);
    }
    result.policies = result.design->policies;
  } else {
    result.policies =
        random_baseline_policies(spec, cfg.num_policies, cfg.rng_seed);
  }

  auto traj_rng = make_stream(cfg.rng_seed, phase::kTrajectories);
  auto choice_rng = make_stream(oracle.rng_seed, phase::kChoices);
  const int rounds = std::max(1, std::min(opts.rounds, std::max(cfg.episodes, 1)));
  int collected = 0;
  for (int r = 0; r < rounds; ++r) {
    const int target = static_cast<int>(
        (static_cast<long long>(cfg.episodes) * (r + 1)) / rounds);
    const int batch = target - collected;
    auto trajs = sample_episodes(spec, result.policies, batch, traj_rng);
    auto records = collect_records(trajs, features, feedback, oracle,
                                   choice_rng, collected);
    for (auto& ep : trajs) result.trajectories.push_back(std::move(ep));
    for (auto& rec : records) result.records.push_back(std::move(rec));
    collected = target;
    if (rounds > 1) {
      result.rounds.push_back(
          {collected, estimate_theta(result.records, cfg.lambda, opts.estimate,
                                     features.dim())});
    }
  }

  result.estimate = rounds > 1 ? result.rounds.back().estimate
                               : estimate_theta(result.records, cfg.lambda,
                                                opts.estimate, features.dim());
  return result;
}

double cosine_error(const Eigen::VectorXd& theta_hat,
                    const Eigen::VectorXd& theta_star) {
  if (theta_hat.size() != theta_star.size())
    throw std::invalid_argument("vectors differ in dimension");
  const double norms = theta_hat.norm() * theta_star.norm();
  if (norms == 0.0)
    throw std::domain_error("cosine error is undefined for a zero vector");
  const double cosine = std::clamp(theta_hat.dot(theta_star) / norms, -1.0, 1.0);
  return 1.0 - cosine;
}

double preference_prediction_error(
    const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_star,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("no evaluation pairs");
  std::size_t counted = 0;
  std::size_t errors = 0;
  for (const auto& [x, y] : pairs) {
    const Eigen::VectorXd diff = x - y;
    const double truth = theta_star.dot(diff);
    if (truth == 0.0) continue;
    ++counted;
    const double predicted = theta_hat.dot(diff);
    if (predicted == 0.0 || (predicted > 0.0) != (truth > 0.0)) ++errors;
  }
  if (counted == 0) return 0.0;
  return static_cast<double>(errors) / static_cast<double>(counted);
}

double holdout_accuracy(const Eigen::VectorXd& theta_hat,
                        const std::vector<PreferenceRecord>& held_out) {
  if (held_out.empty()) throw std::invalid_argument("no held-out records");
  std::size_t hits = 0;
  for (const auto& rec : held_out) {
    const Eigen::VectorXd scores = rec.options.features * theta_hat;
    int best = 0;
    for (int q = 1; q < scores.size(); ++q)
      if (scores[q] > scores[best]) best = q;
    if (best == rec.chosen) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(held_out.size());
}

std::vector<FoldReport> cross_validate(
    const std::vector<PreferenceRecord>& records, int num_episodes, int folds,
    int test_window, double lambda, const EstimateOptions& opts, int dim) {
  if (folds < 1 || test_window < 1)
    throw std::invalid_argument("folds and test window must be positive");
  if (num_episodes < folds * test_window)
    throw std::invalid_argument(
        "cross-validation needs at least folds * test_window = " +
        std::to_string(folds * test_window) + " episodes, got " +
        std::to_string(num_episodes));
  if (dim < 0 && !records.empty()) dim = records.front().options.dim();

  std::vector<FoldReport> reports;
  for (int f = 0; f < folds; ++f) {
    FoldReport rep;
    rep.fold = f;
    rep.test_end = num_episodes - f * test_window;
    rep.test_begin = rep.test_end - test_window;
    std::vector<PreferenceRecord> train;
    std::vector<PreferenceRecord> test;
    for (const auto& rec : records) {
      if (rec.episode >= rep.test_begin && rec.episode < rep.test_end)
        test.push_back(rec);
      else
        train.push_back(rec);
    }
    rep.train_records = train.size();
    rep.test_records = test.size();
    rep.estimate = estimate_theta(train, lambda, opts, dim);
    rep.holdout_accuracy =
        test.empty() ? 0.0 : holdout_accuracy(rep.estimate.theta, test);
    reports.push_back(std::move(rep));
  }
  return reports;
}

Eigen::VectorXd random_unit_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  } while (v.norm() == 0.0);
  return v.normalized();
}

BenchmarkInstance make_benchmark_instance(const BenchmarkShape& shape,
                                          std::uint64_t seed) {
  auto rng = make_stream(seed, phase::kInstance);
  BenchmarkInstance inst;
  auto& spec = inst.spec;
  spec.num_states = shape.num_states;
  spec.num_actions = shape.num_actions;
  spec.horizon = shape.horizon;
  spec.initial_dist =
      Eigen::VectorXd::Constant(shape.num_states, 1.0 / shape.num_states);

  // Zipf-like popularity over a random ordering of the states.
  std::vector<int> order(shape.num_states);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Eigen::VectorXd popularity(shape.num_states);
  for (int r = 0; r < shape.num_states; ++r)
    popularity[order[r]] = 1.0 / std::pow(r + 1.0, 1.5);
  popularity /= popularity.sum();

  spec.transition = Eigen::MatrixXd::Zero(shape.num_states * shape.num_actions,
                                          shape.num_states);
  const auto uniform_state = [&] {
    return static_cast<int>(uniform01(rng) * shape.num_states);
  };
  for (int s = 0; s < shape.num_states; ++s) {
    for (int a = 0; a < shape.num_actions; ++a) {
      // A quarter of the actions lead anywhere; the rest follow popularity.
      const bool exploratory = uniform01(rng) < 0.25;
      const int primary = exploratory ? uniform_state()
                                      : sample_index(popularity, rng);
      const int secondary = sample_index(popularity, rng);
      spec.transition(spec.row(s, a), primary) += 0.9;
      spec.transition(spec.row(s, a), secondary) += 0.1;
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  inst.features.phi.resize(shape.num_states, shape.dim);
  for (int s = 0; s < shape.num_states; ++s) {
    for (int j = 0; j < shape.dim; ++j) inst.features.phi(s, j) = normal(rng);
    inst.features.phi.row(s).normalize();
  }
  return inst;
}

std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> make_eval_pairs(
    const FeatureMap& features, int count, std::mt19937_64& rng) {
  const int n = features.num_states();
  if (n < 2) throw std::invalid_argument("need at least two states for pairs");
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
  pairs.reserve(count);
  while (static_cast<int>(pairs.size()) < count) {
    const int i = static_cast<int>(uniform01(rng) * n);
    const int j = static_cast<int>(uniform01(rng) * n);
    if (i == j) continue;
    pairs.emplace_back(features.phi.row(i).transpose(),
                       features.phi.row(j).transpose());
  }
  return pairs;
}

std::vector<TraceRow> run_sweep(const BenchmarkInstance& instance,
                                const SweepConfig& cfg) {
  std::map<int, DesignResult> designs;
  const auto design_for = [&](int budget) -> const DesignResult& {
    auto it = designs.find(budget);
    if (it == designs.end()) {
      DesignConfig dc = cfg.design;
      dc.episodes = std::max(budget, 1);
      it = designs
               .emplace(budget, solve_design(instance.spec, instance.features, dc))
               .first;
    }
    return it->second;
  };

  std::vector<TraceRow> rows;
  for (const auto seed : cfg.seeds) {
    auto theta_rng = make_stream(seed, phase::kTheta);
    OracleSpec oracle;
    oracle.theta_star = random_unit_vector(instance.features.dim(), theta_rng);
    oracle.mode = cfg.oracle_mode;
    auto pair_rng = make_stream(seed, phase::kEvalPairs);
    const auto pairs = make_eval_pairs(instance.features, cfg.eval_pairs, pair_rng);

    for (const auto source : cfg.sources) {
      for (const int budget : cfg.episode_budgets) {
        DesignConfig dc = cfg.design;
        dc.episodes = budget;
        // Distinct streams per cell keep cells independent of sweep order.
        dc.rng_seed = seed * 1000003ULL + static_cast<std::uint64_t>(budget) * 2 +
                      (source == PolicySource::random ? 1 : 0);
        oracle.rng_seed = dc.rng_seed;
        const DesignResult* design =
            source == PolicySource::design ? &design_for(budget) : nullptr;
        const auto run = run_protocol(instance.spec, instance.features, dc,
                                      oracle, cfg.feedback, source, {}, design);
        const auto& theta_hat = run.estimate.theta;
        const double cos_err = theta_hat.norm() == 0.0
                                   ? 1.0
                                   : cosine_error(theta_hat, oracle.theta_star);
        const double pred_err =
            preference_prediction_error(theta_hat, oracle.theta_star, pairs);
        const std::string src = to_string(source);
        rows.push_back({seed, src, budget, dc.lambda, "cosine_error", cos_err});
        rows.push_back({seed, src, budget, dc.lambda,
                        "preference_prediction_error", pred_err});
      }
    }
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_metric(const std::vector<TraceRow>& rows,
                     const std::string& source, int episodes,
                     const std::string& metric) {
  std::vector<double> values;
  for (const auto& row : rows)
    if (row.policy_source == source && row.episodes == episodes &&
        row.metric == metric)
      values.push_back(row.value);
  return median(values);
}

}  // namespace edpbrl
