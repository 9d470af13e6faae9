#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace edpbrl {

/// Tabular tensor indexed (h, s, a): one |S| x |A| matrix per timestep.
using StepTensor = std::vector<Eigen::MatrixXd>;

StepTensor zero_step_tensor(int horizon, int num_states, int num_actions);

/// Finite-horizon tabular MDP with stationary transitions.
///
/// Transitions are stored as a (|S|*|A|) x |S| matrix whose row s*|A| + a is
/// the next-state distribution P(. | s, a).
struct MdpSpec {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  Eigen::MatrixXd transition;
  Eigen::VectorXd initial_dist;

  int row(int s, int a) const { return s * num_actions + a; }
  double prob(int s, int a, int next) const {
    return transition(row(s, a), next);
  }
};

/// Non-stationary stochastic policy: probs[h](s, a) = pi_h(a | s).
struct Policy {
  StepTensor probs;

  int horizon() const { return static_cast<int>(probs.size()); }
};

/// Per-timestep state-action occupancy d(h, s, a).
struct VisitationMeasure {
  StepTensor d;

  int horizon() const { return static_cast<int>(d.size()); }
  /// State marginal sum_a d(h, s, a).
  Eigen::VectorXd state_marginal(int h) const { return d[h].rowwise().sum(); }
};

struct Trajectory {
  std::vector<std::pair<int, int>> steps;  // (state, action) per timestep

  int state(int h) const { return steps[h].first; }
  std::vector<int> states() const;
};

/// Uniform double in [0, 1) from 53 high bits; stable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Draws an index from a discrete distribution by inverse CDF.
int sample_index(const Eigen::Ref<const Eigen::VectorXd>& probs,
                 std::mt19937_64& rng);

/// Returns one message per violated invariant; empty when the MDP is valid.
std::vector<std::string> validate_mdp(const MdpSpec& spec);

/// Throws std::invalid_argument listing the report when validate_mdp fails.
void require_valid(const MdpSpec& spec);

std::vector<std::string> validate_policy(const MdpSpec& spec,
                                         const Policy& policy);

/// Flow-feasibility check. With allow_zero the all-zero measure is accepted.
std::vector<std::string> check_visitation(const MdpSpec& spec,
                                          const VisitationMeasure& d,
                                          double tol = 1e-8,
                                          bool allow_zero = false);

struct ValueIterationResult {
  Policy policy;  // deterministic, ties to the lowest action index
  double value = 0.0;
};

/// Backward induction maximizing sum_h <d_h, reward_h> for a
/// non-stationary reward tensor.
ValueIterationResult value_iteration(const MdpSpec& spec,
                                     const StepTensor& reward);

VisitationMeasure policy_to_visitation(const MdpSpec& spec,
                                       const Policy& policy);

/// pi_h(a|s) proportional to d(h,s,a); rows with marginal <= 1e-12 are uniform.
Policy extract_policy(const VisitationMeasure& d);

Trajectory sample_trajectory(const MdpSpec& spec, const Policy& policy,
                             std::mt19937_64& rng);
Trajectory sample_trajectory(const MdpSpec& spec, const Policy& policy,
                             std::uint64_t seed);

/// (1 - alpha) * d_old + alpha * d_new.
VisitationMeasure mix_visitations(double alpha, const VisitationMeasure& d_old,
                                  const VisitationMeasure& d_new);

/// <d, reward> summed over all (h, s, a).
double inner(const VisitationMeasure& d, const StepTensor& reward);

Policy uniform_policy(const MdpSpec& spec);

}  // namespace edpbrl
