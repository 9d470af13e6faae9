#include "edpbrl/design.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "edpbrl/preference.hpp"

namespace edpbrl {

namespace {

constexpr double kMaxEnumeration = 1e6;

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

void check_marginals(const StateMarginals& marginals,
                     const Eigen::MatrixXd& phi) {
  if (marginals.rows() != phi.rows())
    throw std::invalid_argument("marginals cover " +
                                std::to_string(marginals.rows()) +
                                " states but features cover " +
                                std::to_string(phi.rows()));
  if (marginals.cols() < 1)
    throw std::invalid_argument("at least one policy marginal is required");
}

Eigen::MatrixXd stack_options(const Eigen::MatrixXd& phi,
                              const std::vector<int>& states) {
  Eigen::MatrixXd x(states.size(), phi.cols());
  for (std::size_t q = 0; q < states.size(); ++q) x.row(q) = phi.row(states[q]);
  return x;
}

}  // namespace

void validate_features(const FeatureMap& features) {
  if (features.dim() < 1) throw std::invalid_argument("feature dimension is 0");
  if (!features.phi.allFinite())
    throw std::invalid_argument("features must be finite");
  for (const auto& [key, v] : features.prefix_table) {
    if (v.size() != features.dim())
      throw std::invalid_argument("prefix feature '" + key +
                                  "' has wrong dimension");
    if (!v.allFinite())
      throw std::invalid_argument("prefix feature '" + key +
                                  "' is not finite");
  }
}

std::string path_key(const std::vector<int>& states) {
  std::string key;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (i) key += '-';
    key += std::to_string(states[i]);
  }
  return key;
}

Scalarization Scalarization::v_design(Eigen::MatrixXd v) {
  if (v.rows() != v.cols())
    throw std::invalid_argument("V must be square");
  if ((v - v.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("V must be symmetric");
  if (v.rows() > 0 && min_eigenvalue(v) < -1e-10)
    throw std::invalid_argument("V must be positive semidefinite");
  Scalarization s;
  s.kind = ScalarizationKind::V_design;
  s.v = symmetrized(v);
  return s;
}

Eigen::MatrixXd Scalarization::weight(int dim) const {
  if (kind == ScalarizationKind::A_design)
    return Eigen::MatrixXd::Identity(dim, dim);
  if (v.rows() != dim)
    throw std::invalid_argument("V has dimension " + std::to_string(v.rows()) +
                                ", expected " + std::to_string(dim));
  return v;
}

StateMarginals marginals_at(const std::vector<VisitationMeasure>& measures,
                            int h) {
  if (measures.empty()) throw std::invalid_argument("no visitation measures");
  StateMarginals out(measures.front().d[h].rows(), measures.size());
  for (std::size_t q = 0; q < measures.size(); ++q)
    out.col(q) = measures[q].state_marginal(h);
  return out;
}

Eigen::MatrixXd approx_fim_step(const StateMarginals& marginals,
                                const Eigen::MatrixXd& phi) {
  check_marginals(marginals, phi);
  const Eigen::VectorXd mean = marginals.rowwise().mean();
  const Eigen::VectorXd projected = phi.transpose() * mean;
  const Eigen::MatrixXd info = phi.transpose() * mean.asDiagonal() * phi -
                               projected * projected.transpose();
  return symmetrized(info);
}

Eigen::MatrixXd pairwise_decomposition_step(const StateMarginals& marginals,
                                            const Eigen::MatrixXd& phi) {
  check_marginals(marginals, phi);
  const int k = static_cast<int>(marginals.cols());
  const int dim = static_cast<int>(phi.cols());
  Eigen::MatrixXd covariance = Eigen::MatrixXd::Zero(dim, dim);
  for (int q = 0; q < k; ++q) {
    const Eigen::VectorXd proj = phi.transpose() * marginals.col(q);
    covariance += phi.transpose() * marginals.col(q).asDiagonal() * phi -
                  proj * proj.transpose();
  }
  Eigen::MatrixXd diversity = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const Eigen::VectorXd diff =
          phi.transpose() * (marginals.col(i) - marginals.col(j));
      diversity += diff * diff.transpose();
    }
  }
  return symmetrized(covariance / k + diversity / (double(k) * k));
}

Eigen::MatrixXd brute_force_expected_fim_step(const StateMarginals& marginals,
                                              const Eigen::VectorXd& theta,
                                              const Eigen::MatrixXd& phi) {
  check_marginals(marginals, phi);
  const int num_states = static_cast<int>(marginals.rows());
  const int k = static_cast<int>(marginals.cols());
  const int dim = static_cast<int>(phi.cols());
  if (theta.size() != dim)
    throw std::invalid_argument("theta dimension does not match features");
  const double tuples = std::pow(static_cast<double>(num_states), k);
  if (tuples > kMaxEnumeration) {
    std::ostringstream msg;
    msg << "enumeration of |S|^K = " << num_states << "^" << k << " = "
        << tuples << " state tuples exceeds the limit of " << kMaxEnumeration;
    throw std::length_error(msg.str());
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
  if (k < 2) return out;

  std::vector<int> tuple(k, 0);
  while (true) {
    double weight = 1.0;
    for (int q = 0; q < k && weight != 0.0; ++q)
      weight *= marginals(tuple[q], q);
    if (weight != 0.0) {
      ChoiceOptions options{stack_options(phi, tuple)};
      out += weight * exact_choice_fim(theta, options);
    }
    int pos = 0;
    while (pos < k && ++tuple[pos] == num_states) tuple[pos++] = 0;
    if (pos == k) break;
  }
  return symmetrized(out);
}

Eigen::MatrixXd brute_force_expected_fim_step(
    const MdpSpec& spec, const std::vector<Policy>& policies,
    const Eigen::VectorXd& theta, int h, const Eigen::MatrixXd& phi) {
  if (h < 0 || h >= spec.horizon)
    throw std::out_of_range("timestep outside the horizon");
  if (policies.size() < 2)
    return Eigen::MatrixXd::Zero(phi.cols(), phi.cols());
  std::vector<VisitationMeasure> measures;
  measures.reserve(policies.size());
  for (const auto& p : policies)
    measures.push_back(policy_to_visitation(spec, p));
  return brute_force_expected_fim_step(marginals_at(measures, h), theta, phi);
}

Eigen::MatrixXd total_information(const std::vector<VisitationMeasure>& d_all,
                                  const Eigen::MatrixXd& phi, double episodes,
                                  double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  const int dim = static_cast<int>(phi.cols());
  Eigen::MatrixXd info = lambda * Eigen::MatrixXd::Identity(dim, dim);
  if (d_all.empty()) return info;
  const int horizon = d_all.front().horizon();
  for (int h = 0; h < horizon; ++h)
    info += episodes * approx_fim_step(marginals_at(d_all, h), phi);
  return symmetrized(info);
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double scalarize(const Scalarization& s, const Eigen::MatrixXd& m) {
  const int dim = static_cast<int>(m.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "information matrix is not positive definite (min eigenvalue "
        << min_eigenvalue(m) << ")";
    throw std::domain_error(msg.str());
  }
  return -llt.solve(s.weight(dim)).trace();
}

double design_objective(const Scalarization& s,
                        const std::vector<VisitationMeasure>& d_all,
                        const Eigen::MatrixXd& phi, double episodes,
                        double lambda) {
  return scalarize(s, total_information(d_all, phi, episodes, lambda));
}

MarginalGradient scalarize_gradient(const Scalarization& s,
                                    const std::vector<VisitationMeasure>& d_all,
                                    const Eigen::MatrixXd& phi, double episodes,
                                    double lambda) {
  if (d_all.empty()) throw std::invalid_argument("no visitation measures");
  const int dim = static_cast<int>(phi.cols());
  const Eigen::MatrixXd info = total_information(d_all, phi, episodes, lambda);
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "information matrix is not positive definite (min eigenvalue "
        << min_eigenvalue(info) << ")";
    throw std::domain_error(msg.str());
  }
  // d(-Tr(V A^-1)) = Tr(A^-1 V A^-1 dA).
  const Eigen::MatrixXd inv_v = llt.solve(s.weight(dim));
  const Eigen::MatrixXd w = symmetrized(llt.solve(inv_v.transpose()));

  const int k = static_cast<int>(d_all.size());
  const int horizon = d_all.front().horizon();
  const Eigen::MatrixXd phi_w = phi * w;
  const Eigen::VectorXd quadratic = phi_w.cwiseProduct(phi).rowwise().sum();
  const double scale = episodes / k;

  std::vector<Eigen::VectorXd> per_step;
  per_step.reserve(horizon);
  for (int h = 0; h < horizon; ++h) {
    const Eigen::VectorXd mean = marginals_at(d_all, h).rowwise().mean();
    const Eigen::VectorXd cross = phi_w * (phi.transpose() * mean);
    per_step.push_back(scale * (quadratic - 2.0 * cross));
  }
  // The objective depends on the marginals only through their mean, so every
  // policy receives the same gradient.
  return MarginalGradient(k, per_step);
}

Eigen::MatrixXd uniform_choice_fim(const Eigen::MatrixXd& options) {
  const double k = static_cast<double>(options.rows());
  const Eigen::VectorXd total = options.colwise().sum().transpose();
  return symmetrized(options.transpose() * options / k -
                     total * total.transpose() / (k * k));
}

Eigen::MatrixXd state_fim_of_trajectories(const TrajectorySet& trajs,
                                          const Eigen::MatrixXd& phi) {
  const int dim = static_cast<int>(phi.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& episode : trajs) {
    if (episode.empty()) continue;
    const std::size_t horizon = episode.front().steps.size();
    for (const auto& tr : episode)
      if (tr.steps.size() != horizon)
        throw std::invalid_argument("trajectories have unequal lengths");
    for (std::size_t h = 0; h < horizon; ++h) {
      std::vector<int> states;
      for (const auto& tr : episode) states.push_back(tr.state(h));
      out += uniform_choice_fim(stack_options(phi, states));
    }
  }
  return out;
}

Eigen::MatrixXd truncated_fim_of_trajectories(const TrajectorySet& trajs,
                                              const FeatureMap& features,
                                              PrefixMode mode) {
  const int dim = features.dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& episode : trajs) {
    if (episode.empty()) continue;
    const std::size_t horizon = episode.front().steps.size();
    for (const auto& tr : episode)
      if (tr.steps.size() != horizon)
        throw std::invalid_argument("trajectories have unequal lengths");
    const int k = static_cast<int>(episode.size());
    Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(k, dim);
    for (std::size_t h = 0; h < horizon; ++h) {
      for (int q = 0; q < k; ++q) {
        if (mode == PrefixMode::additive) {
          prefix.row(q) += features.phi.row(episode[q].state(h));
        } else {
          auto states = episode[q].states();
          states.resize(h + 1);
          const std::string key = path_key(states);
          const auto it = features.prefix_table.find(key);
          if (it == features.prefix_table.end())
            throw std::out_of_range("prefix table has no entry for '" + key +
                                    "'");
          prefix.row(q) = it->second.transpose();
        }
      }
      out += uniform_choice_fim(prefix);
    }
  }
  return out;
}

Eigen::MatrixXd cumulative_sum_matrix(int horizon) {
  return Eigen::MatrixXd::Ones(horizon, horizon).triangularView<Eigen::Lower>();
}

Eigen::MatrixXd cumulative_gram_matrix(int horizon) {
  const Eigen::MatrixXd s = cumulative_sum_matrix(horizon);
  return s.transpose() * s;
}

Eigen::VectorXd cumulative_gram_eigenvalues(int horizon) {
  Eigen::VectorXd out(horizon);
  for (int k = 1; k <= horizon; ++k) {
    const double angle =
        (2.0 * k - 1.0) * std::numbers::pi / (2.0 * (2.0 * horizon + 1.0));
    const double sine = std::sin(angle);
    out[k - 1] = 1.0 / (4.0 * sine * sine);
  }
  return out;
}

Eigen::MatrixXd build_v_matrix(
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("V needs at least one pair");
  const auto dim = pairs.front().first.size();
  Eigen::MatrixXd c(pairs.size(), dim);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [x, y] = pairs[k];
    if (x.size() != dim || y.size() != dim)
      throw std::invalid_argument("V pair has inconsistent dimension");
    c.row(k) = (x - y).transpose();
  }
  return c.transpose() * c;
}

}  // namespace edpbrl
