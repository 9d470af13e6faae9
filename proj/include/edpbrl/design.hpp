#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "edpbrl/mdp.hpp"

namespace edpbrl {

/// State features Phi (row s = phi(s)) and an optional table of features for
/// trajectory prefixes keyed by hyphen-joined state paths ("0-3-2").
struct FeatureMap {
  Eigen::MatrixXd phi;
  std::map<std::string, Eigen::VectorXd> prefix_table;

  int num_states() const { return static_cast<int>(phi.rows()); }
  int dim() const { return static_cast<int>(phi.cols()); }
  bool has_prefix_table() const { return !prefix_table.empty(); }
};

void validate_features(const FeatureMap& features);

/// Hyphen-joined state path, the prefix-table key format.
std::string path_key(const std::vector<int>& states);

enum class ScalarizationKind { A_design, V_design };

/// Maps an information matrix A to -Tr(V A^{-1}); V is the identity for
/// A-design.
struct Scalarization {
  ScalarizationKind kind = ScalarizationKind::A_design;
  Eigen::MatrixXd v;  // required for V_design

  static Scalarization a_design() { return {}; }
  static Scalarization v_design(Eigen::MatrixXd v);

  /// Weight matrix for dimension d (identity for A-design).
  Eigen::MatrixXd weight(int dim) const;
};

/// Per-policy state marginals at one timestep: column q is d^h_q.
using StateMarginals = Eigen::MatrixXd;

/// Stacks column q = state marginal of measures[q] at step h.
StateMarginals marginals_at(const std::vector<VisitationMeasure>& measures,
                            int h);

/// Theta-agnostic per-step information
/// Phi^T (diag(dbar) - dbar dbar^T) Phi, where dbar is the mean marginal.
Eigen::MatrixXd approx_fim_step(const StateMarginals& marginals,
                                const Eigen::MatrixXd& phi);

/// Same quantity written as averaged per-policy covariance plus the pairwise
/// diversity term (1/K^2) sum_{i<j} (d_i - d_j)(d_i - d_j)^T.
Eigen::MatrixXd pairwise_decomposition_step(const StateMarginals& marginals,
                                            const Eigen::MatrixXd& phi);

/// Exact expected per-step information at a given theta: enumerates all
/// |S|^K state tuples under the product of step-h marginals and averages the
/// exact per-choice information. Throws std::length_error when |S|^K > 1e6.
Eigen::MatrixXd brute_force_expected_fim_step(
    const MdpSpec& spec, const std::vector<Policy>& policies,
    const Eigen::VectorXd& theta, int h, const Eigen::MatrixXd& phi);

/// Overload on precomputed marginals.
Eigen::MatrixXd brute_force_expected_fim_step(const StateMarginals& marginals,
                                              const Eigen::VectorXd& theta,
                                              const Eigen::MatrixXd& phi);

/// T * sum_h approx_fim_step + lambda I.
Eigen::MatrixXd total_information(const std::vector<VisitationMeasure>& d_all,
                                  const Eigen::MatrixXd& phi, double episodes,
                                  double lambda);

/// -Tr(V m^{-1}). Throws std::domain_error naming the minimum eigenvalue
/// when m is not positive definite.
double scalarize(const Scalarization& s, const Eigen::MatrixXd& m);

/// Gradient of scalarize(total_information(.)) with respect to each state
/// marginal coordinate d^h_q(s). Indexed [q][h](s).
using MarginalGradient = std::vector<std::vector<Eigen::VectorXd>>;

MarginalGradient scalarize_gradient(const Scalarization& s,
                                    const std::vector<VisitationMeasure>& d_all,
                                    const Eigen::MatrixXd& phi, double episodes,
                                    double lambda);

/// Convenience: scalarize(total_information(...)).
double design_objective(const Scalarization& s,
                        const std::vector<VisitationMeasure>& d_all,
                        const Eigen::MatrixXd& phi, double episodes,
                        double lambda);

/// Set of T episodes of K trajectories each: trajs[t][q].
using TrajectorySet = std::vector<std::vector<Trajectory>>;

/// Information of K feature vectors under uniform choice probabilities:
/// (1/K) sum x_q x_q^T - (1/K^2) sum_{q,q'} x_q x_q'^T.
Eigen::MatrixXd uniform_choice_fim(const Eigen::MatrixXd& options);

Eigen::MatrixXd state_fim_of_trajectories(const TrajectorySet& trajs,
                                          const Eigen::MatrixXd& phi);

enum class PrefixMode { additive, table };

/// Same functional as state_fim_of_trajectories over prefix features: prefix
/// sums of phi (additive) or prefix_table lookups (table).
Eigen::MatrixXd truncated_fim_of_trajectories(const TrajectorySet& trajs,
                                              const FeatureMap& features,
                                              PrefixMode mode);

/// Lower-triangular ones matrix S with S_ij = 1 for i >= j, and M = S^T S.
Eigen::MatrixXd cumulative_sum_matrix(int horizon);
Eigen::MatrixXd cumulative_gram_matrix(int horizon);

/// Closed-form eigenvalues 1 / (4 sin^2((2k-1) pi / (2(2H+1)))), k = 1..H.
Eigen::VectorXd cumulative_gram_eigenvalues(int horizon);

/// V = C^T C with rows c_k = x_i - x_j.
Eigen::MatrixXd build_v_matrix(
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Eigen::MatrixXd& m);

}  // namespace edpbrl
