#include "edpbrl/frank_wolfe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace edpbrl {

namespace {

const double kInvPhi = (std::sqrt(5.0) - 1.0) / 2.0;

std::vector<VisitationMeasure> mix_all(
    double alpha, const std::vector<VisitationMeasure>& current,
    const std::vector<VisitationMeasure>& vertices) {
  std::vector<VisitationMeasure> out;
  out.reserve(current.size());
  for (std::size_t q = 0; q < current.size(); ++q)
    out.push_back(mix_visitations(alpha, current[q], vertices[q]));
  return out;
}

struct Vertices {
  std::vector<VisitationMeasure> measures;
  MarginalGradient gradient;
};

// Linear maximization oracle: one value iteration per policy.
Vertices linear_oracle(const MdpSpec& spec, const FeatureMap& features,
                       const DesignConfig& cfg,
                       const std::vector<VisitationMeasure>& current) {
  Vertices out;
  out.gradient = scalarize_gradient(cfg.scalarization, current, features.phi,
                                    cfg.episodes, cfg.lambda);
  out.measures.reserve(current.size());
  for (const auto& grad_q : out.gradient) {
    const auto vi =
        value_iteration(spec, broadcast_reward(grad_q, spec.num_actions));
    out.measures.push_back(policy_to_visitation(spec, vi.policy));
  }
  return out;
}

}  // namespace

void validate_config(const DesignConfig& cfg) {
  if (cfg.num_policies < 2)
    throw std::invalid_argument("num_policies (K) must be at least 2");
  if (cfg.episodes < 1)
    throw std::invalid_argument("episodes (T) must be at least 1");
  if (cfg.fw_iterations < 1)
    throw std::invalid_argument("fw_iterations (N) must be at least 1");
  if (!(cfg.lambda > 0.0))
    throw std::invalid_argument("lambda must be positive");
  if (cfg.line_search.grid_points < 2)
    throw std::invalid_argument("line search needs at least 2 grid points");
  if (!(cfg.line_search.refine_tolerance > 0.0))
    throw std::invalid_argument("line search tolerance must be positive");
}

double line_search(const std::function<double(double)>& objective_at,
                   const LineSearchOptions& opts) {
  const int n = std::max(opts.grid_points, 2);
  int best_i = 0;
  double best_val = objective_at(0.0);
  for (int i = 1; i < n; ++i) {
    const double val = objective_at(static_cast<double>(i) / (n - 1));
    if (val > best_val) {
      best_val = val;
      best_i = i;
    }
  }
  double best_alpha = static_cast<double>(best_i) / (n - 1);

  double lo = static_cast<double>(std::max(best_i - 1, 0)) / (n - 1);
  double hi = static_cast<double>(std::min(best_i + 1, n - 1)) / (n - 1);
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = objective_at(x1);
  double f2 = objective_at(x2);
  while (hi - lo > opts.refine_tolerance) {
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = objective_at(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = objective_at(x2);
    }
  }
  const double mid = 0.5 * (lo + hi);
  const double f_mid = objective_at(mid);
  for (const auto& [x, f] : {std::pair{x1, f1}, {x2, f2}, {mid, f_mid}}) {
    if (f > best_val) {
      best_val = f;
      best_alpha = x;
    }
  }
  return best_alpha;
}

double fw_gap(const MarginalGradient& gradient,
              const std::vector<VisitationMeasure>& d_current,
              const std::vector<VisitationMeasure>& d_vertex) {
  if (gradient.size() != d_current.size() ||
      d_current.size() != d_vertex.size())
    throw std::invalid_argument("gradient and measures disagree on K");
  double gap = 0.0;
  for (std::size_t q = 0; q < gradient.size(); ++q) {
    for (std::size_t h = 0; h < gradient[q].size(); ++h) {
      gap += gradient[q][h].dot(d_vertex[q].state_marginal(h) -
                                d_current[q].state_marginal(h));
    }
  }
  return gap;
}

StepTensor broadcast_reward(const std::vector<Eigen::VectorXd>& per_step,
                            int num_actions) {
  StepTensor out;
  out.reserve(per_step.size());
  for (const auto& g : per_step)
    out.push_back(g.replicate(1, num_actions));
  return out;
}

DesignResult solve_design(const MdpSpec& spec, const FeatureMap& features,
                          const DesignConfig& cfg,
                          const DesignObserver& observer) {
  require_valid(spec);
  validate_features(features);
  validate_config(cfg);
  if (features.num_states() != spec.num_states)
    throw std::invalid_argument("feature rows (" +
                                std::to_string(features.num_states()) +
                                ") do not match num_states (" +
                                std::to_string(spec.num_states) + ")");

  const auto objective = [&](const std::vector<VisitationMeasure>& d) {
    return design_objective(cfg.scalarization, d, features.phi, cfg.episodes,
                            cfg.lambda);
  };

  DesignResult result;
  std::vector<VisitationMeasure> current(
      cfg.num_policies,
      VisitationMeasure{
          zero_step_tensor(spec.horizon, spec.num_states, spec.num_actions)});

  for (int n = 0; n < cfg.fw_iterations; ++n) {
    Vertices vertices;
    try {
      vertices = linear_oracle(spec, features, cfg, current);
    } catch (const std::exception& e) {
      throw std::runtime_error("Frank-Wolfe iteration " + std::to_string(n) +
                               ": " + e.what());
    }
    const double gap = fw_gap(vertices.gradient, current, vertices.measures);

    double alpha = 1.0;
    // The zero initializer is not a visitation measure; the full step onto
    // the first vertex is what makes the iterate feasible.
    if (n > 0) {
      alpha = line_search(
          [&](double a) {
            return objective(mix_all(a, current, vertices.measures));
          },
          cfg.line_search);
    }
    current = mix_all(alpha, current, vertices.measures);
    const double value = objective(current);

    result.objective_trace.push_back(value);
    result.fw_gap_trace.push_back(gap);
    result.step_sizes.push_back(alpha);
    if (observer) observer(n, value, gap, alpha);
  }

  const Vertices final_vertices = linear_oracle(spec, features, cfg, current);
  result.final_gap =
      fw_gap(final_vertices.gradient, current, final_vertices.measures);

  result.visitations = std::move(current);
  result.policies.reserve(result.visitations.size());
  for (const auto& d : result.visitations)
    result.policies.push_back(extract_policy(d));
  return result;
}

}  // namespace edpbrl
