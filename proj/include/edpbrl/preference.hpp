#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace edpbrl {

/// K options presented in one comparison; row q is the feature vector of
/// option q.
struct ChoiceOptions {
  Eigen::MatrixXd features;

  int count() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
};

/// Throws std::invalid_argument unless K >= 2 and all entries are finite.
void validate_options(const ChoiceOptions& options);

struct PreferenceRecord {
  int episode = 0;
  int step = 0;
  ChoiceOptions options;
  int chosen = 0;
  /// Optional per-option keys (hyphen-joined state paths); empty when unused.
  std::vector<std::string> option_keys;
};

struct ThetaEstimate {
  Eigen::VectorXd theta;
  double final_objective = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

struct EstimateOptions {
  double tolerance = 1e-8;
  int max_iter = 100;
};

/// Multinomial-logit choice probabilities, stabilized by max subtraction.
Eigen::VectorXd choice_probs(const Eigen::VectorXd& theta,
                             const ChoiceOptions& options);

int sample_choice(const Eigen::VectorXd& probs, std::mt19937_64& rng);
int sample_choice(const Eigen::VectorXd& probs, std::uint64_t seed);

/// sum_records log p(chosen) - (lambda / 2) ||theta||^2.
double regularized_loglik(const Eigen::VectorXd& theta,
                          const std::vector<PreferenceRecord>& records,
                          double lambda);

/// Score of the regularized log-likelihood:
/// sum_records sum_q (y_q - p_q) x_q - lambda * theta.
Eigen::VectorXd loglik_gradient(const Eigen::VectorXd& theta,
                                const std::vector<PreferenceRecord>& records,
                                double lambda);

/// Per-choice Fisher information sum_q p_q x_q x_q^T - xbar xbar^T.
Eigen::MatrixXd exact_choice_fim(const Eigen::VectorXd& theta,
                                 const ChoiceOptions& options);

/// Regularized maximum likelihood by damped Newton ascent.
///
/// The Hessian of the objective is -(sum_records exact_choice_fim + lambda I),
/// so each Newton step solves a positive definite system. Steps are halved
/// until the objective does not decrease. On non-convergence the best iterate
/// is returned with converged = false.
ThetaEstimate estimate_theta(const std::vector<PreferenceRecord>& records,
                             double lambda, const EstimateOptions& opts = {},
                             int dim = -1);

}  // namespace edpbrl
