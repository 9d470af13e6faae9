// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "edpbrl/design.hpp"
#include "edpbrl/experiment.hpp"
#include "edpbrl/frank_wolfe.hpp"
#include "edpbrl/mdp.hpp"
#include "edpbrl/preference.hpp"
#include "support/oracles.hpp"

using namespace edpbrl;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

std::vector<VisitationMeasure> random_collection(const MdpSpec& m, int K, std::mt19937_64& rng) {
  std::vector<VisitationMeasure> out;
  for (int q = 0; q < K; ++q)
    out.push_back(policy_to_visitation(m, oracle::random_policy(m, rng)));
  return out;
}

std::vector<std::vector<Eigen::MatrixXd>> tables(const std::vector<VisitationMeasure>& c) {
  std::vector<std::vector<Eigen::MatrixXd>> out;
  for (const auto& v : c) out.push_back(v.d);
  return out;
}

Verdict marginalization_identity() {
  std::mt19937_64 rng(101);
  double worst_double = 0.0, worst_pair = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int S = uniform_int(rng, 1, 8);
    const int K = uniform_int(rng, 2, 5);
    const int d = uniform_int(rng, 1, 6);
    const auto marg = oracle::random_marginals(S, K, rng);
    const auto phi = oracle::random_phi(S, d, rng);
    const auto fim = approx_fim_step(marg, phi);
    worst_double = std::max(worst_double, max_abs(fim - oracle::double_sum_fim(marg, phi)));
    worst_pair = std::max(worst_pair, max_abs(fim - pairwise_decomposition_step(marg, phi)));
  }
  return {worst_double <= 1e-12 && worst_pair <= 1e-12,
          fmt("max dev vs double sum %.3g, vs pairwise %.3g (tol 1e-12)", worst_double,
              worst_pair)};
}

struct TinyCase {
  MdpSpec spec;
  std::vector<Policy> policies;
  Eigen::MatrixXd phi;
  Eigen::VectorXd theta;
};

std::vector<TinyCase> tiny_cases() {
  std::mt19937_64 rng(202);
  std::vector<TinyCase> out;
  for (int i = 0; i < 20; ++i) {
    TinyCase c;
    c.spec = oracle::random_mdp(3, 2, 3, rng);
    c.policies = {oracle::random_policy(c.spec, rng), oracle::random_policy(c.spec, rng)};
    c.phi = oracle::random_phi(3, 2, rng);
    c.theta = oracle::random_phi(2, 1, rng).col(0);
    out.push_back(c);
  }
  return out;
}

Verdict trajectory_equivalence() {
  double worst = 0.0;
  for (const auto& c : tiny_cases())
    for (int h = 0; h < 3; ++h)
      worst = std::max(worst, max_abs(brute_force_expected_fim_step(c.spec, c.policies, c.theta,
                                                                    h, c.phi) -
                                      oracle::trajectory_tuple_fim(c.spec, c.policies, c.theta,
                                                                   c.phi, h)));
  return {worst <= 1e-10, fmt("max dev %.3g over 20 MDPs x 3 steps (tol 1e-10)", worst)};
}

Verdict theta_zero_exactness() {
  double worst = 0.0;
  for (const auto& c : tiny_cases()) {
    std::vector<VisitationMeasure> d;
    for (const auto& p : c.policies) d.push_back(policy_to_visitation(c.spec, p));
    for (int h = 0; h < 3; ++h)
      worst = std::max(worst, max_abs(brute_force_expected_fim_step(c.spec, c.policies,
                                                                    Eigen::VectorXd::Zero(2), h,
                                                                    c.phi) -
                                      approx_fim_step(marginals_at(d, h), c.phi)));
  }
  return {worst <= 1e-12, fmt("max dev %.3g (tol 1e-12)", worst)};
}

Verdict information_equality() {
  std::mt19937_64 rng(404);
  const int n = 200000;
  double worst_z = 0.0;
  for (int i = 0; i < 10; ++i) {
    const int K = uniform_int(rng, 2, 5);
    const int d = uniform_int(rng, 2, 4);
    ChoiceOptions x;
    x.features = oracle::random_phi(K, d, rng);
    const Eigen::VectorXd theta = oracle::random_phi(d, 1, rng).col(0);
    const Eigen::VectorXd p = oracle::naive_softmax(theta, x.features);
    const Eigen::VectorXd mean = x.features.transpose() * p;
    std::discrete_distribution<int> pick(p.data(), p.data() + K);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d), sum_sq = Eigen::MatrixXd::Zero(d, d);
    for (int t = 0; t < n; ++t) {
      const Eigen::VectorXd s = x.features.row(pick(rng)).transpose() - mean;
      const Eigen::MatrixXd outer = s * s.transpose();
      sum += outer;
      sum_sq += outer.cwiseProduct(outer);
    }
    const Eigen::MatrixXd avg = sum / n;
    const Eigen::MatrixXd var = sum_sq / n - avg.cwiseProduct(avg);
    const Eigen::MatrixXd exact = exact_choice_fim(theta, x);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        const double se = std::sqrt(std::max(var(a, b), 0.0) / n);
        const double dev = std::abs(avg(a, b) - exact(a, b));
        worst_z = std::max(worst_z, se > 0 ? dev / se : (dev > 1e-12 ? INFINITY : 0.0));
      }
  }
  return {worst_z <= 3.0, fmt("worst entry deviation %.3g standard errors (tol 3)", worst_z)};
}

Verdict gradient_correctness() {
  std::mt19937_64 rng(505);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto m = oracle::random_mdp(5, 2, 2, rng);
    const auto coll = random_collection(m, 3, rng);
    const auto phi = oracle::random_phi(5, 4, rng);
    const Eigen::MatrixXd v =
        i % 2 ? Eigen::MatrixXd(Eigen::MatrixXd::Identity(4, 4)) : oracle::random_psd(4, rng);
    const Scalarization s = i % 2 ? Scalarization::a_design() : Scalarization::v_design(v);
    const double T = 3.0, lambda = 2.0;
    const auto grad = scalarize_gradient(s, coll, phi, T, lambda);
    const double eps = 1e-5;
    double err = 0.0, scale = 0.0;
    for (int q = 0; q < 3; ++q)
      for (int h = 0; h < 2; ++h)
        for (int st = 0; st < 5; ++st) {
          auto up = tables(coll), down = tables(coll);
          up[q][h](st, 0) += eps;
          down[q][h](st, 0) -= eps;
          const double fd = (oracle::design_value(up, phi, T, lambda, v) -
                             oracle::design_value(down, phi, T, lambda, v)) /
                            (2 * eps);
          err = std::max(err, std::abs(fd - grad[q][h][st]));
          scale = std::max(scale, std::abs(fd));
        }
    worst = std::max(worst, err / scale);
  }
  return {worst <= 1e-5, fmt("worst relative error %.3g over 50 instances (tol 1e-5)", worst)};
}

Verdict concavity() {
  std::mt19937_64 rng(606);
  double worst = INFINITY;
  for (int i = 0; i < 1000; ++i) {
    const auto m = oracle::random_mdp(4, 3, 3, rng);
    const auto phi = oracle::random_phi(4, 3, rng);
    const int K = uniform_int(rng, 2, 4);
    const auto a = random_collection(m, K, rng);
    const auto b = random_collection(m, K, rng);
    std::vector<VisitationMeasure> mid;
    for (int q = 0; q < K; ++q) mid.push_back(mix_visitations(0.5, a[q], b[q]));
    const Scalarization s =
        i % 2 ? Scalarization::a_design() : Scalarization::v_design(oracle::random_psd(3, rng));
    const auto f = [&](const std::vector<VisitationMeasure>& c) {
      return design_objective(s, c, phi, 5.0, 1.0);
    };
    worst = std::min(worst, f(mid) - 0.5 * (f(a) + f(b)));
  }
  return {worst >= -1e-9, fmt("minimum midpoint slack %.3g (tol -1e-9)", worst)};
}

Verdict fw_convergence() {
  int rate_failures = 0;
  bool monotone = true;
  std::string worst;
  double worst_ratio = 0.0;
  for (int i = 0; i < 10; ++i) {
    std::mt19937_64 rng(1000 + i);
    const auto m = oracle::random_mdp(3, 2, 2, rng);
    FeatureMap f;
    f.phi = oracle::random_phi(3, 2, rng);
    DesignConfig cfg;
    cfg.num_policies = 2;
    cfg.episodes = 10;
    cfg.lambda = 100.0;
    cfg.fw_iterations = 500;
    const auto r = solve_design(m, f, cfg);
    for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
      if (r.objective_trace[k] < r.objective_trace[k - 1] - 1e-10) monotone = false;
    const double ref = r.objective_trace.back();
    const auto sub = [&](int n) { return ref - r.objective_trace[n - 1]; };
    const double c = 10.0 * sub(10);
    bool ok = true;
    for (int n : {20, 50, 100}) {
      if (sub(n) > c / n) ok = false;
      if (c > 0) {
        const double ratio = n * sub(n) / c;
        if (ratio > worst_ratio) {
          worst_ratio = ratio;
          worst = fmt("instance %.0f n=%.0f: n*sub(n)/c = %.3g", i, n, ratio);
        }
      }
    }
    if (!ok) ++rate_failures;
  }
  return {rate_failures == 0 && monotone,
          fmt("%.0f/10 instances violate sub(n) <= c/n; ", rate_failures) +
              "trace monotone: " + (monotone ? "yes" : "no") + "; worst " + worst};
}

Verdict truncated_bound() {
  std::mt19937_64 rng(808);
  double worst = INFINITY;
  for (int i = 0; i < 200; ++i) {
    const int T = uniform_int(rng, 1, 3);
    const int K = uniform_int(rng, 2, 4);
    const int H = uniform_int(rng, 1, 6);
    TrajectorySet set(T, std::vector<Trajectory>(K));
    for (auto& episode : set)
      for (auto& tr : episode)
        for (int h = 0; h < H; ++h) tr.steps.emplace_back(uniform_int(rng, 0, 5), 0);
    FeatureMap f{oracle::random_phi(6, 4, rng), {}};
    const Eigen::MatrixXd diff = truncated_fim_of_trajectories(set, f, PrefixMode::additive) -
                                 0.25 * state_fim_of_trajectories(set, f.phi);
    worst = std::min(worst, min_eigenvalue(diff));
  }
  Eigen::Matrix3d expected;
  expected << 3, 2, 1, 2, 2, 1, 1, 1, 1;
  const bool m_ok = max_abs(cumulative_gram_matrix(3) - expected) == 0.0;
  double eig_dev = 0.0, eig_min = INFINITY;
  for (int H = 1; H <= 8; ++H) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cumulative_gram_matrix(H));
    Eigen::VectorXd closed(H);
    for (int k = 1; k <= H; ++k) {
      const double sn = std::sin((2 * k - 1) * std::numbers::pi / (2 * (2 * H + 1)));
      closed[k - 1] = 1.0 / (4 * sn * sn);
    }
    std::sort(closed.data(), closed.data() + H);
    eig_dev = std::max(eig_dev, max_abs(es.eigenvalues() - closed));
    eig_min = std::min(eig_min, es.eigenvalues().minCoeff());
  }
  return {worst >= -1e-9 && m_ok && eig_dev <= 1e-9 && eig_min >= 0.25,
          fmt("min eigenvalue %.3g (tol -1e-9); closed-form eigenvalue dev %.3g; min eigenvalue "
              "of M %.6f; ",
              worst, eig_dev, eig_min) +
              (m_ok ? "M(3) matches" : "M(3) differs")};
}

Verdict figure_two_direction() {
  const auto instance = make_benchmark_instance({}, 7);
  SweepConfig cfg;
  for (std::uint64_t s = 1; s <= 25; ++s) cfg.seeds.push_back(s);
  cfg.episode_budgets = {10, 30, 70, 110};
  cfg.design.num_policies = 4;
  cfg.design.lambda = 100.0;
  cfg.design.fw_iterations = 100;
  cfg.oracle_mode = OracleMode::sampled_softmax;
  const auto rows = run_sweep(instance, cfg);
  std::string table;
  bool below = true;
  for (int t : cfg.episode_budgets) {
    const double d = median_metric(rows, "design", t, "cosine_error");
    const double r = median_metric(rows, "random", t, "cosine_error");
    table += fmt("T=%.0f design %.4f random %.4f; ", t, d, r);
    if (t != 10 && !(d < r)) below = false;
  }
  const bool learning = median_metric(rows, "design", 110, "cosine_error") <=
                        median_metric(rows, "design", 10, "cosine_error");
  return {below && learning, table + (learning ? "design(110) <= design(10)" : "no decrease")};
}

Verdict random_guess_floor() {
  const auto instance = make_benchmark_instance({}, 7);
  DesignConfig cfg;
  cfg.num_policies = 4;
  cfg.lambda = 100.0;
  cfg.episodes = 60;
  const auto design = solve_design(instance.spec, instance.features, cfg);
  std::vector<double> per_seed;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto theta_rng = make_stream(seed, phase::kTheta);
    OracleSpec oracle{random_unit_vector(16, theta_rng), OracleMode::argmax, seed};
    cfg.rng_seed = seed;
    const auto run = run_protocol(instance.spec, instance.features, cfg, oracle,
                                  FeedbackKind::state_based, PolicySource::design, {}, &design);
    double acc = 0.0;
    const auto folds = cross_validate(run.records, 60, 3, 10, cfg.lambda);
    for (const auto& f : folds) acc += f.holdout_accuracy;
    per_seed.push_back(acc / folds.size());
  }
  const double med = median(per_seed);
  return {med > 0.25 + 0.15,
          fmt("median holdout accuracy %.4f over 20 seeds, 50 training episodes per fold "
              "(needs > 0.40)",
              med)};
}

Verdict mle_oracle() {
  std::mt19937_64 rng(1111);
  double worst_gap = -INFINITY;
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd star = oracle::random_phi(2, 1, rng).col(0);
    std::vector<PreferenceRecord> recs;
    for (int n = 0; n < 40; ++n) {
      PreferenceRecord r;
      r.options.features = oracle::random_phi(uniform_int(rng, 2, 4), 2, rng);
      const Eigen::VectorXd p = oracle::naive_softmax(star, r.options.features);
      std::discrete_distribution<int> pick(p.data(), p.data() + p.size());
      r.chosen = pick(rng);
      recs.push_back(r);
    }
    const double lambda = 1.0;
    const auto est = estimate_theta(recs, lambda);
    const auto obj = [&](double a, double b) {
      return regularized_loglik(Eigen::Vector2d(a, b), recs, lambda);
    };
    double best = -INFINITY, ba = 0.0, bb = 0.0;
    for (int a = -500; a <= 500; ++a)
      for (int b = -500; b <= 500; b += 1) {
        const double v = obj(a * 0.01, b * 0.01);
        if (v > best) best = v, ba = a * 0.01, bb = b * 0.01;
      }
    for (int a = -50; a <= 50; ++a)
      for (int b = -50; b <= 50; ++b) best = std::max(best, obj(ba + a * 1e-3, bb + b * 1e-3));
    worst_gap = std::max(worst_gap, best - regularized_loglik(est.theta, recs, lambda));
  }
  const auto empty = estimate_theta({}, 1.0, {}, 2);
  const bool zero = empty.theta.size() == 2 && empty.theta.isZero(0.0);
  return {worst_gap <= 1e-5 && zero,
          fmt("grid best minus MLE objective %.3g (tol 1e-5); ", worst_gap) +
              (zero ? "zero records give exactly 0" : "zero records give nonzero")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {"marginalization identity", marginalization_identity},
      {"state-marginal vs trajectory-tuple equivalence", trajectory_equivalence},
      {"theta = 0 exactness", theta_zero_exactness},
      {"information-matrix equality", information_equality},
      {"gradient correctness", gradient_correctness},
      {"concavity", concavity},
      {"Frank-Wolfe convergence", fw_convergence},
      {"truncated bound", truncated_bound},
      {"directional reproduction of the learning curves", figure_two_direction},
      {"random-guess floor", random_guess_floor},
      {"MLE oracle", mle_oracle},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    const Verdict v = c.run();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!v.pass) ++failures;
    std::printf("%s  %s  [%.1f s]  %s\n", v.pass ? "PASS" : "FAIL", c.name, secs,
                v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failures);
  return failures == 0 ? 0 : 1;
}
