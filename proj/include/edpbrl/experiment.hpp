#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "edpbrl/design.hpp"
#include "edpbrl/frank_wolfe.hpp"
#include "edpbrl/mdp.hpp"
#include "edpbrl/preference.hpp"

namespace edpbrl {

/// Independent random stream for one (seed, phase) pair.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t phase);

namespace phase {
inline constexpr std::uint64_t kTrajectories = 1;
inline constexpr std::uint64_t kChoices = 2;
inline constexpr std::uint64_t kTheta = 3;
inline constexpr std::uint64_t kEvalPairs = 4;
inline constexpr std::uint64_t kInstance = 5;
}  // namespace phase

enum class OracleMode { sampled_softmax, argmax };

/// Simulated rater: choices follow softmax (or argmax) of theta_star.
struct OracleSpec {
  Eigen::VectorXd theta_star;
  OracleMode mode = OracleMode::sampled_softmax;
  std::uint64_t rng_seed = 0;
};

enum class FeedbackKind { state_based, truncated_additive, truncated_table };

enum class PolicySource { design, random };

std::string to_string(OracleMode mode);
std::string to_string(FeedbackKind kind);
std::string to_string(PolicySource source);
OracleMode parse_oracle_mode(const std::string& text);
FeedbackKind parse_feedback_kind(const std::string& text);
PolicySource parse_policy_source(const std::string& text);

/// Options at step h (0-based) for K trajectories of one episode.
ChoiceOptions feedback_features(FeedbackKind kind,
                                const std::vector<Trajectory>& trajs, int h,
                                const FeatureMap& features);

/// Prefix keys of the K trajectories through step h.
std::vector<std::string> option_keys(const std::vector<Trajectory>& trajs,
                                     int h);

/// Index chosen by the oracle; argmax ties go to the lowest index.
int oracle_choice(const OracleSpec& oracle, const ChoiceOptions& options,
                  std::mt19937_64& rng);

/// K uniform-action policies. The seed does not influence the policies;
/// it only labels the run.
std::vector<Policy> random_baseline_policies(const MdpSpec& spec, int k,
                                             std::uint64_t rng_seed);

/// T episodes of K trajectories drawn from the given policies.
TrajectorySet sample_episodes(const MdpSpec& spec,
                              const std::vector<Policy>& policies,
                              int episodes, std::mt19937_64& rng);

struct RoundEstimate {
  int episodes = 0;
  ThetaEstimate estimate;
};

struct ProtocolOptions {
  EstimateOptions estimate;
  /// Split data collection into this many batches and re-estimate after each
  /// one. The design never consumes the intermediate estimates.
  int rounds = 1;
};

struct ProtocolResult {
  ThetaEstimate estimate;
  std::vector<PreferenceRecord> records;
  TrajectorySet trajectories;
  std::vector<Policy> policies;
  std::optional<DesignResult> design;
  std::vector<RoundEstimate> rounds;
};

/// Policy optimization, data collection and estimation in sequence.
/// With a precomputed design the solver step is skipped.
ProtocolResult run_protocol(const MdpSpec& spec, const FeatureMap& features,
                            const DesignConfig& cfg, const OracleSpec& oracle,
                            FeedbackKind feedback, PolicySource source,
                            const ProtocolOptions& opts = {},
                            const DesignResult* precomputed = nullptr);

/// Labels every decision of a trajectory set with the oracle.
std::vector<PreferenceRecord> collect_records(const TrajectorySet& trajs,
                                              const FeatureMap& features,
                                              FeedbackKind feedback,
                                              const OracleSpec& oracle,
                                              std::mt19937_64& rng,
                                              int first_episode = 0);

/// 1 - cos(theta_hat, theta_star). Throws std::domain_error on a zero vector.
double cosine_error(const Eigen::VectorXd& theta_hat,
                    const Eigen::VectorXd& theta_star);

/// Fraction of pairs where theta_hat orders (x, y) differently from
/// theta_star. Pairs tied under theta_star are skipped; ties under theta_hat
/// count as errors.
double preference_prediction_error(
    const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_star,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs);

/// Fraction of records whose argmax under theta_hat (lowest index on ties)
/// equals the recorded choice.
double holdout_accuracy(const Eigen::VectorXd& theta_hat,
                        const std::vector<PreferenceRecord>& held_out);

struct FoldReport {
  int fold = 0;
  int test_begin = 0;  // first test episode
  int test_end = 0;    // one past the last test episode
  std::size_t train_records = 0;
  std::size_t test_records = 0;
  ThetaEstimate estimate;
  double holdout_accuracy = 0.0;
};

/// Rotating tail windows: fold f tests on episodes
/// [E - (f+1) w, E - f w) and trains on every other episode.
std::vector<FoldReport> cross_validate(
    const std::vector<PreferenceRecord>& records, int num_episodes, int folds,
    int test_window, double lambda, const EstimateOptions& opts = {},
    int dim = -1);

struct TraceRow {
  std::uint64_t seed = 0;
  std::string policy_source;
  int episodes = 0;
  double lambda = 0.0;
  std::string metric;
  double value = 0.0;
};

struct ExperimentReport {
  double cosine_error = 0.0;
  double preference_prediction_error = 0.0;
  double holdout_accuracy = 0.0;
  std::vector<TraceRow> per_seed_traces;
};

/// Synthetic stand-in for an embedding-based benchmark.
struct BenchmarkInstance {
  MdpSpec spec;
  FeatureMap features;
};

struct BenchmarkShape {
  int num_states = 24;
  int num_actions = 40;
  int horizon = 6;
  int dim = 16;
};

/// Seeded instance: unit-norm Gaussian state features and a sparse random
/// transition tensor whose next-state targets are skewed toward a few
/// states, so uniform exploration covers the feature space unevenly.
BenchmarkInstance make_benchmark_instance(const BenchmarkShape& shape,
                                          std::uint64_t seed);

Eigen::VectorXd random_unit_vector(int dim, std::mt19937_64& rng);

/// Pairs of distinct state features drawn uniformly.
std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> make_eval_pairs(
    const FeatureMap& features, int count, std::mt19937_64& rng);

struct SweepConfig {
  std::vector<std::uint64_t> seeds;
  std::vector<int> episode_budgets{10, 30, 70, 110};
  std::vector<PolicySource> sources{PolicySource::design, PolicySource::random};
  DesignConfig design;  // episodes is overwritten per budget
  FeedbackKind feedback = FeedbackKind::state_based;
  OracleMode oracle_mode = OracleMode::sampled_softmax;
  int eval_pairs = 5000;
};

/// Runs every (seed, source, budget) combination and emits cosine_error and
/// preference_prediction_error rows. theta_star is drawn per seed.
std::vector<TraceRow> run_sweep(const BenchmarkInstance& instance,
                                const SweepConfig& cfg);

/// Median of a metric over seeds for one (source, budget) cell.
double median_metric(const std::vector<TraceRow>& rows,
                     const std::string& source, int episodes,
                     const std::string& metric);

double median(std::vector<double> values);

}  // namespace edpbrl
