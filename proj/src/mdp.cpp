#include "edpbrl/mdp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace edpbrl {

namespace {

constexpr double kStochasticTol = 1e-9;
constexpr double kZeroMarginal = 1e-12;

// State distribution at h+1 given the state-action mass at h.
Eigen::VectorXd push_forward(const MdpSpec& spec, const Eigen::MatrixXd& step) {
  Eigen::VectorXd flat(spec.num_states * spec.num_actions);
  for (int s = 0; s < spec.num_states; ++s)
    for (int a = 0; a < spec.num_actions; ++a) flat[spec.row(s, a)] = step(s, a);
  return spec.transition.transpose() * flat;
}

}  // namespace

StepTensor zero_step_tensor(int horizon, int num_states, int num_actions) {
  return StepTensor(horizon, Eigen::MatrixXd::Zero(num_states, num_actions));
}

std::vector<int> Trajectory::states() const {
  std::vector<int> out;
  out.reserve(steps.size());
  for (const auto& [s, a] : steps) out.push_back(s);
  return out;
}

int sample_index(const Eigen::Ref<const Eigen::VectorXd>& probs,
                 std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  int last_positive = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  // Rounding left u above the accumulated mass.
  return last_positive;
}

std::vector<std::string> validate_mdp(const MdpSpec& spec) {
  std::vector<std::string> report;
  if (spec.num_states <= 0) report.push_back("num_states must be positive");
  if (spec.num_actions <= 0) report.push_back("num_actions must be positive");
  if (spec.horizon <= 0) report.push_back("horizon must be positive");
  if (!report.empty()) return report;

  const int rows = spec.num_states * spec.num_actions;
  if (spec.transition.rows() != rows ||
      spec.transition.cols() != spec.num_states) {
    std::ostringstream msg;
    msg << "transition has shape " << spec.transition.rows() << "x"
        << spec.transition.cols() << ", expected " << rows << "x"
        << spec.num_states;
    report.push_back(msg.str());
  } else {
    for (int s = 0; s < spec.num_states; ++s) {
      for (int a = 0; a < spec.num_actions; ++a) {
        const auto row = spec.transition.row(spec.row(s, a));
        const bool finite = row.allFinite();
        const double total = row.sum();
        if (!finite || row.minCoeff() < 0.0 ||
            std::abs(total - 1.0) > kStochasticTol) {
          std::ostringstream msg;
          msg << "transition row (s=" << s << ", a=" << a
              << ") is not a distribution (sum " << total << ")";
          report.push_back(msg.str());
        }
      }
    }
  }

  if (spec.initial_dist.size() != spec.num_states) {
    report.push_back("initial_dist has wrong length");
  } else {
    const double total = spec.initial_dist.sum();
    if (!spec.initial_dist.allFinite() || spec.initial_dist.minCoeff() < 0.0 ||
        std::abs(total - 1.0) > kStochasticTol) {
      std::ostringstream msg;
      msg << "initial_dist is not a distribution (sum " << total << ")";
      report.push_back(msg.str());
    }
  }
  return report;
}

void require_valid(const MdpSpec& spec) {
  const auto report = validate_mdp(spec);
  if (report.empty()) return;
  std::string msg = "invalid MDP:";
  for (const auto& line : report) msg += "\n  " + line;
  throw std::invalid_argument(msg);
}

std::vector<std::string> validate_policy(const MdpSpec& spec,
                                         const Policy& policy) {
  std::vector<std::string> report;
  if (policy.horizon() != spec.horizon) {
    report.push_back("policy horizon does not match MDP");
    return report;
  }
  for (int h = 0; h < spec.horizon; ++h) {
    const auto& p = policy.probs[h];
    if (p.rows() != spec.num_states || p.cols() != spec.num_actions) {
      report.push_back("policy step " + std::to_string(h) + " has wrong shape");
      continue;
    }
    for (int s = 0; s < spec.num_states; ++s) {
      const double total = p.row(s).sum();
      if (!p.row(s).allFinite() || p.row(s).minCoeff() < 0.0 ||
          std::abs(total - 1.0) > kStochasticTol) {
        report.push_back("policy row (h=" + std::to_string(h) +
                         ", s=" + std::to_string(s) + ") is not a distribution");
      }
    }
  }
  return report;
}

std::vector<std::string> check_visitation(const MdpSpec& spec,
                                          const VisitationMeasure& d,
                                          double tol, bool allow_zero) {
  std::vector<std::string> report;
  if (d.horizon() != spec.horizon) {
    report.push_back("visitation horizon does not match MDP");
    return report;
  }
  bool all_zero = true;
  for (int h = 0; h < spec.horizon; ++h) {
    const auto& m = d.d[h];
    if (m.rows() != spec.num_states || m.cols() != spec.num_actions) {
      report.push_back("visitation step " + std::to_string(h) +
                       " has wrong shape");
      return report;
    }
    if (!m.allFinite() || m.minCoeff() < -tol) {
      report.push_back("visitation step " + std::to_string(h) +
                       " has negative or non-finite mass");
    }
    if (m.cwiseAbs().maxCoeff() != 0.0) all_zero = false;
  }
  if (allow_zero && all_zero) return report;

  for (int h = 0; h < spec.horizon; ++h) {
    const double total = d.d[h].sum();
    if (std::abs(total - 1.0) > tol) {
      std::ostringstream msg;
      msg << "visitation step " << h << " has total mass " << total;
      report.push_back(msg.str());
    }
    Eigen::VectorXd expected;
    if (h == 0) {
      expected = spec.initial_dist;
    } else {
      expected = push_forward(spec, d.d[h - 1]);
    }
    const double err = (d.state_marginal(h) - expected).cwiseAbs().maxCoeff();
    if (err > tol) {
      std::ostringstream msg;
      msg << "flow constraint violated at step " << h << " (max deviation "
          << err << ")";
      report.push_back(msg.str());
    }
  }
  return report;
}

ValueIterationResult value_iteration(const MdpSpec& spec,
                                     const StepTensor& reward) {
  if (static_cast<int>(reward.size()) != spec.horizon)
    throw std::invalid_argument("reward horizon does not match MDP");
  for (const auto& r : reward) {
    if (r.rows() != spec.num_states || r.cols() != spec.num_actions)
      throw std::invalid_argument("reward tensor has wrong shape");
    if (!r.allFinite())
      throw std::invalid_argument("reward tensor has non-finite entries");
  }

  ValueIterationResult out;
  out.policy.probs = zero_step_tensor(spec.horizon, spec.num_states,
                                      spec.num_actions);
  Eigen::VectorXd next_value = Eigen::VectorXd::Zero(spec.num_states);
  for (int h = spec.horizon - 1; h >= 0; --h) {
    const Eigen::VectorXd continuation = spec.transition * next_value;
    Eigen::VectorXd value(spec.num_states);
    for (int s = 0; s < spec.num_states; ++s) {
      int best = 0;
      double best_q = reward[h](s, 0) + continuation[spec.row(s, 0)];
      for (int a = 1; a < spec.num_actions; ++a) {
        const double q = reward[h](s, a) + continuation[spec.row(s, a)];
        if (q > best_q) {
          best_q = q;
          best = a;
        }
      }
      out.policy.probs[h](s, best) = 1.0;
      value[s] = best_q;
    }
    next_value = std::move(value);
  }
  out.value = spec.initial_dist.dot(next_value);
  return out;
}

VisitationMeasure policy_to_visitation(const MdpSpec& spec,
                                       const Policy& policy) {
  if (policy.horizon() != spec.horizon)
    throw std::invalid_argument("policy horizon does not match MDP");
  VisitationMeasure out;
  out.d.reserve(spec.horizon);
  Eigen::VectorXd marginal = spec.initial_dist;
  for (int h = 0; h < spec.horizon; ++h) {
    Eigen::MatrixXd step = marginal.asDiagonal() * policy.probs[h];
    if (h + 1 < spec.horizon) marginal = push_forward(spec, step);
    out.d.push_back(std::move(step));
  }
  return out;
}

Policy extract_policy(const VisitationMeasure& d) {
  Policy out;
  out.probs.reserve(d.d.size());
  for (const auto& step : d.d) {
    Eigen::MatrixXd probs(step.rows(), step.cols());
    for (int s = 0; s < step.rows(); ++s) {
      const double marginal = step.row(s).sum();
      if (marginal > kZeroMarginal) {
        probs.row(s) = step.row(s) / marginal;
      } else {
        probs.row(s).setConstant(1.0 / static_cast<double>(step.cols()));
      }
    }
    out.probs.push_back(std::move(probs));
  }
  return out;
}

Trajectory sample_trajectory(const MdpSpec& spec, const Policy& policy,
                             std::mt19937_64& rng) {
  Trajectory out;
  out.steps.reserve(spec.horizon);
  int s = sample_index(spec.initial_dist, rng);
  for (int h = 0; h < spec.horizon; ++h) {
    const int a = sample_index(policy.probs[h].row(s).transpose(), rng);
    out.steps.emplace_back(s, a);
    if (h + 1 < spec.horizon)
      s = sample_index(spec.transition.row(spec.row(s, a)).transpose(), rng);
  }
  return out;
}

Trajectory sample_trajectory(const MdpSpec& spec, const Policy& policy,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_trajectory(spec, policy, rng);
}

VisitationMeasure mix_visitations(double alpha, const VisitationMeasure& d_old,
                                  const VisitationMeasure& d_new) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("mixing weight must lie in [0, 1]");
  if (d_old.d.size() != d_new.d.size())
    throw std::invalid_argument("visitation horizons differ");
  if (alpha == 0.0) return d_old;
  if (alpha == 1.0) return d_new;
  VisitationMeasure out;
  out.d.reserve(d_old.d.size());
  for (std::size_t h = 0; h < d_old.d.size(); ++h) {
    if (d_old.d[h].rows() != d_new.d[h].rows() ||
        d_old.d[h].cols() != d_new.d[h].cols())
      throw std::invalid_argument("visitation shapes differ");
    out.d.push_back((1.0 - alpha) * d_old.d[h] + alpha * d_new.d[h]);
  }
  return out;
}

double inner(const VisitationMeasure& d, const StepTensor& reward) {
  double total = 0.0;
  for (std::size_t h = 0; h < d.d.size(); ++h)
    total += d.d[h].cwiseProduct(reward[h]).sum();
  return total;
}

Policy uniform_policy(const MdpSpec& spec) {
  Policy out;
  out.probs.assign(spec.horizon,
                   Eigen::MatrixXd::Constant(spec.num_states, spec.num_actions,
                                             1.0 / spec.num_actions));
  return out;
}

}  // namespace edpbrl
