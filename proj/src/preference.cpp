#include "edpbrl/preference.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "edpbrl/mdp.hpp"

namespace edpbrl {

namespace {

int record_dim(const std::vector<PreferenceRecord>& records, int dim) {
  if (dim >= 0) return dim;
  if (records.empty())
    throw std::invalid_argument(
        "feature dimension is unknown: no records and no explicit dimension");
  return records.front().options.dim();
}

void check_dims(const Eigen::VectorXd& theta, const ChoiceOptions& options) {
  if (theta.size() != options.dim())
    throw std::invalid_argument("theta has dimension " +
                                std::to_string(theta.size()) +
                                " but options have dimension " +
                                std::to_string(options.dim()));
}

void check_record(const PreferenceRecord& rec) {
  if (rec.chosen < 0 || rec.chosen >= rec.options.count())
    throw std::invalid_argument("record chosen index " +
                                std::to_string(rec.chosen) +
                                " is outside [0, " +
                                std::to_string(rec.options.count()) + ")");
}

}  // namespace

void validate_options(const ChoiceOptions& options) {
  if (options.count() < 2)
    throw std::invalid_argument("a choice needs at least two options");
  if (!options.features.allFinite())
    throw std::invalid_argument("option features must be finite");
}

Eigen::VectorXd choice_probs(const Eigen::VectorXd& theta,
                             const ChoiceOptions& options) {
  check_dims(theta, options);
  Eigen::VectorXd logits = options.features * theta;
  logits.array() -= logits.maxCoeff();
  Eigen::VectorXd p = logits.array().exp();
  return p / p.sum();
}

int sample_choice(const Eigen::VectorXd& probs, std::mt19937_64& rng) {
  return sample_index(probs, rng);
}

int sample_choice(const Eigen::VectorXd& probs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_choice(probs, rng);
}

double regularized_loglik(const Eigen::VectorXd& theta,
                          const std::vector<PreferenceRecord>& records,
                          double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  double total = -0.5 * lambda * theta.squaredNorm();
  for (const auto& rec : records) {
    check_dims(theta, rec.options);
    check_record(rec);
    const Eigen::VectorXd logits = rec.options.features * theta;
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    total += logits[rec.chosen] - lse;
  }
  return total;
}

Eigen::VectorXd loglik_gradient(const Eigen::VectorXd& theta,
                                const std::vector<PreferenceRecord>& records,
                                double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  Eigen::VectorXd grad = -lambda * theta;
  for (const auto& rec : records) {
    check_record(rec);
    const Eigen::VectorXd p = choice_probs(theta, rec.options);
    grad += rec.options.features.row(rec.chosen).transpose() -
            rec.options.features.transpose() * p;
  }
  return grad;
}

Eigen::MatrixXd exact_choice_fim(const Eigen::VectorXd& theta,
                                 const ChoiceOptions& options) {
  const Eigen::VectorXd p = choice_probs(theta, options);
  const Eigen::MatrixXd& x = options.features;
  const Eigen::VectorXd mean = x.transpose() * p;
  // Centered form sum_q p_q (x_q - xbar)(x_q - xbar)^T keeps the result PSD.
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  Eigen::MatrixXd fim =
      centered.transpose() * p.asDiagonal() * centered;
  return 0.5 * (fim + fim.transpose());
}

ThetaEstimate estimate_theta(const std::vector<PreferenceRecord>& records,
                             double lambda, const EstimateOptions& opts,
                             int dim) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  const int d = record_dim(records, dim);
  if (lambda == 0.0)
    std::cerr << "warning: lambda = 0, the likelihood may have no finite "
                 "maximizer\n";

  ThetaEstimate est;
  est.theta = Eigen::VectorXd::Zero(d);
  if (records.empty()) {
    est.final_objective = 0.0;
    est.converged = true;
    return est;
  }

  Eigen::VectorXd theta = est.theta;
  double objective = regularized_loglik(theta, records, lambda);
  Eigen::VectorXd grad = loglik_gradient(theta, records, lambda);
  int iter = 0;
  for (; iter < opts.max_iter && grad.norm() > opts.tolerance; ++iter) {
    Eigen::MatrixXd info = lambda * Eigen::MatrixXd::Identity(d, d);
    for (const auto& rec : records) info += exact_choice_fim(theta, rec.options);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    Eigen::VectorXd step = ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) step = grad;

    double scale = 1.0;
    Eigen::VectorXd candidate = theta + step;
    double cand_obj = regularized_loglik(candidate, records, lambda);
    while (cand_obj < objective && scale > 1e-12) {
      scale *= 0.5;
      candidate = theta + scale * step;
      cand_obj = regularized_loglik(candidate, records, lambda);
    }
    if (cand_obj < objective) break;  // no ascent possible at double precision
    theta = std::move(candidate);
    objective = cand_obj;
    grad = loglik_gradient(theta, records, lambda);
  }

  est.theta = theta;
  est.final_objective = objective;
  est.iterations = iter;
  est.gradient_norm = grad.norm();
  est.converged = est.gradient_norm <= opts.tolerance;
  return est;
}

}  // namespace edpbrl
