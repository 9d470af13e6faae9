#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "edpbrl/design.hpp"
#include "edpbrl/mdp.hpp"

namespace edpbrl {

struct LineSearchOptions {
  int grid_points = 33;
  double refine_tolerance = 1e-6;
};

struct DesignConfig {
  int num_policies = 4;   // K
  int episodes = 1;       // T
  double lambda = 100.0;
  Scalarization scalarization;
  int fw_iterations = 100;  // N
  LineSearchOptions line_search;
  std::uint64_t rng_seed = 0;
};

/// Throws std::invalid_argument unless K >= 2, T >= 1, N >= 1, lambda > 0.
void validate_config(const DesignConfig& cfg);

struct DesignResult {
  std::vector<VisitationMeasure> visitations;
  std::vector<Policy> policies;
  std::vector<double> objective_trace;  // objective after each iteration
  std::vector<double> fw_gap_trace;     // gap at the iterate entering each iteration
  std::vector<double> step_sizes;
  double final_gap = 0.0;               // gap at the returned iterate
};

/// Maximizes a scalar function of alpha on [0, 1]: uniform grid, then
/// golden-section refinement inside the bracket around the best grid point.
/// The returned alpha scores at least as well as every grid point.
double line_search(const std::function<double(double)>& objective_at,
                   const LineSearchOptions& opts = {});

/// <G, d_vertex - d_current> over state marginals of all K policies.
double fw_gap(const MarginalGradient& gradient,
              const std::vector<VisitationMeasure>& d_current,
              const std::vector<VisitationMeasure>& d_vertex);

/// Lifts a per-state gradient to a state-action reward (broadcast over
/// actions).
StepTensor broadcast_reward(const std::vector<Eigen::VectorXd>& per_step,
                            int num_actions);

/// Per-iteration progress callback: (iteration, objective, gap, alpha).
using DesignObserver = std::function<void(int, double, double, double)>;

/// Frank-Wolfe over the product of K visitation polytopes starting from the
/// all-zero measure. The first step is taken with alpha = 1, which makes the
/// iterate feasible; later steps use line_search on a shared alpha.
DesignResult solve_design(const MdpSpec& spec, const FeatureMap& features,
                          const DesignConfig& cfg,
                          const DesignObserver& observer = {});

}  // namespace edpbrl
