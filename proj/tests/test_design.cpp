#include <doctest.h>

#include <cmath>
#include <numbers>

#include "edpbrl/design.hpp"
#include "support/oracles.hpp"

using namespace edpbrl;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

std::vector<VisitationMeasure> random_collection(const MdpSpec& m, int K,
                                                 std::mt19937_64& rng) {
  std::vector<VisitationMeasure> out;
  for (int q = 0; q < K; ++q)
    out.push_back(policy_to_visitation(m, oracle::random_policy(m, rng)));
  return out;
}

TrajectorySet random_trajectories(int T, int K, int H, int S, std::mt19937_64& rng) {
  TrajectorySet set(T, std::vector<Trajectory>(K));
  for (auto& episode : set)
    for (auto& tr : episode)
      for (int h = 0; h < H; ++h)
        tr.steps.emplace_back(static_cast<int>(uniform01(rng) * S), 0);
  return set;
}

// (1/K) sum_q Phi^T (diag d_q - d_q d_q^T) Phi.
Eigen::MatrixXd averaged_covariance(const Eigen::MatrixXd& marg, const Eigen::MatrixXd& phi) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(phi.cols(), phi.cols());
  for (int q = 0; q < marg.cols(); ++q) {
    const Eigen::VectorXd d = marg.col(q);
    out += phi.transpose() *
           (Eigen::MatrixXd(d.asDiagonal()) - d * d.transpose()) * phi;
  }
  return out / marg.cols();
}

}  // namespace

TEST_CASE("approx_fim_step vanishes for identical point-mass marginals") {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd marg = Eigen::MatrixXd::Zero(4, 3);
  marg.row(2).setOnes();
  CHECK(max_abs(approx_fim_step(marg, oracle::random_phi(4, 3, rng))) <= 1e-15);
}

TEST_CASE("approx_fim_step on two orthogonal one-hot marginals") {
  Eigen::MatrixXd marg(2, 2);
  marg << 1, 0, 0, 1;
  Eigen::Matrix2d expected;
  expected << 0.25, -0.25, -0.25, 0.25;
  CHECK(max_abs(approx_fim_step(marg, Eigen::Matrix2d::Identity()) - expected) <= 1e-15);
  CHECK(max_abs(pairwise_decomposition_step(marg, Eigen::Matrix2d::Identity()) - expected) <=
        1e-15);
}

TEST_CASE("approx_fim_step equals the double-sum form") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto marg = oracle::random_marginals(5, 3, rng);
    const auto phi = oracle::random_phi(5, 4, rng);
    const auto fim = approx_fim_step(marg, phi);
    CHECK(max_abs(fim - oracle::double_sum_fim(marg, phi)) <= 1e-12);
    CHECK(max_abs(fim - fim.transpose()) <= 1e-12);
    CHECK(min_eigenvalue(fim) >= -1e-10);
  }
}

TEST_CASE("pairwise decomposition equals approx_fim_step") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int S = 1 + static_cast<int>(uniform01(rng) * 8);
    const int K = 1 + static_cast<int>(uniform01(rng) * 5);
    const int d = 1 + static_cast<int>(uniform01(rng) * 6);
    const auto marg = oracle::random_marginals(S, K, rng);
    const auto phi = oracle::random_phi(S, d, rng);
    CHECK(max_abs(pairwise_decomposition_step(marg, phi) - approx_fim_step(marg, phi)) <=
          1e-12);
  }
}

TEST_CASE("pairwise decomposition without diversity is the averaged covariance") {
  std::mt19937_64 rng(4);
  const auto one = oracle::random_marginals(6, 1, rng);
  const Eigen::MatrixXd marg = one.replicate(1, 3);
  const auto phi = oracle::random_phi(6, 3, rng);
  CHECK(max_abs(pairwise_decomposition_step(marg, phi) - averaged_covariance(marg, phi)) <=
        1e-12);
}

TEST_CASE("brute force at theta = 0 differs from the approximation by the own-pair covariances") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 3;
    const auto marg = oracle::random_marginals(4, K, rng);
    const auto phi = oracle::random_phi(4, 3, rng);
    Eigen::MatrixXd own = Eigen::MatrixXd::Zero(3, 3);
    for (int q = 0; q < K; ++q) {
      const Eigen::VectorXd dq = marg.col(q);
      own += phi.transpose() * (Eigen::MatrixXd(dq.asDiagonal()) - dq * dq.transpose()) * phi;
    }
    CHECK(max_abs(brute_force_expected_fim_step(marg, Eigen::VectorXd::Zero(3), phi) -
                  (approx_fim_step(marg, phi) - own / (K * K))) <= 1e-12);
  }
}

TEST_CASE("brute force at theta = 0 equals the approximation for point-mass marginals") {
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<int> pick(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd marg = Eigen::MatrixXd::Zero(5, 3);
    for (int q = 0; q < 3; ++q) marg(pick(rng), q) = 1.0;
    const auto phi = oracle::random_phi(5, 2, rng);
    CHECK(max_abs(brute_force_expected_fim_step(marg, Eigen::VectorXd::Zero(2), phi) -
                  approx_fim_step(marg, phi)) <= 1e-12);
  }
}

TEST_CASE("brute force with a single policy carries no information") {
  std::mt19937_64 rng(6);
  const auto marg = oracle::random_marginals(4, 1, rng);
  CHECK(max_abs(brute_force_expected_fim_step(marg, Eigen::Vector2d(1, -1),
                                              oracle::random_phi(4, 2, rng))) == 0.0);
}

TEST_CASE("brute force refuses oversized enumerations") {
  const Eigen::MatrixXd marg = Eigen::MatrixXd::Constant(1001, 2, 1.0 / 1001);
  const Eigen::MatrixXd phi = Eigen::MatrixXd::Ones(1001, 1);
  CHECK_THROWS_AS(brute_force_expected_fim_step(marg, Eigen::VectorXd::Zero(1), phi),
                  std::length_error);
}

TEST_CASE("state-marginal enumeration equals trajectory-tuple enumeration") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = oracle::random_mdp(3, 2, 3, rng);
    const std::vector<Policy> policies{oracle::random_policy(m, rng),
                                       oracle::random_policy(m, rng)};
    const auto phi = oracle::random_phi(3, 2, rng);
    const Eigen::VectorXd theta = oracle::random_phi(2, 1, rng).col(0);
    for (int h = 0; h < 3; ++h)
      CHECK(max_abs(brute_force_expected_fim_step(m, policies, theta, h, phi) -
                    oracle::trajectory_tuple_fim(m, policies, theta, phi, h)) <= 1e-10);
  }
}

TEST_CASE("total_information reduces to lambda I and to one step") {
  std::mt19937_64 rng(8);
  const auto m = oracle::random_mdp(4, 2, 3, rng);
  const auto phi = oracle::random_phi(4, 3, rng);
  const std::vector<VisitationMeasure> zero(3, VisitationMeasure{zero_step_tensor(3, 4, 2)});
  CHECK(max_abs(total_information(zero, phi, 7, 2.5) -
                2.5 * Eigen::MatrixXd::Identity(3, 3)) == 0.0);

  auto one_step = m;
  one_step.horizon = 1;
  const auto coll = random_collection(one_step, 3, rng);
  const Eigen::MatrixXd expected =
      4.0 * approx_fim_step(marginals_at(coll, 0), phi) + 1.5 * Eigen::MatrixXd::Identity(3, 3);
  CHECK(max_abs(total_information(coll, phi, 4, 1.5) - expected) <= 1e-12);
  CHECK_THROWS_AS(total_information(coll, phi, 4, -1.0), std::invalid_argument);
}

TEST_CASE("total_information has an eigenvalue floor at lambda") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = oracle::random_mdp(5, 3, 4, rng);
    const auto coll = random_collection(m, 3, rng);
    const auto info = total_information(coll, oracle::random_phi(5, 4, rng), 10, 3.0);
    CHECK(min_eigenvalue(info) >= 3.0 - 1e-8);
    CHECK(max_abs(info - info.transpose()) <= 1e-10);
  }
}

TEST_CASE("scalarize closed-form values and spectral agreement") {
  const auto a = Scalarization::a_design();
  CHECK(scalarize(a, Eigen::MatrixXd::Identity(3, 3)) == doctest::Approx(-3.0).epsilon(1e-15));
  CHECK(scalarize(a, 2 * Eigen::MatrixXd::Identity(3, 3)) ==
        doctest::Approx(-1.5).epsilon(1e-15));
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = oracle::random_psd(4, rng, 0.5);
    const auto v = oracle::random_psd(4, rng);
    CHECK(std::abs(scalarize(Scalarization::v_design(v), m) -
                   oracle::spectral_scalarize(v, m)) <= 1e-9);
    CHECK(std::abs(scalarize(a, m) -
                   oracle::spectral_scalarize(Eigen::MatrixXd::Identity(4, 4), m)) <= 1e-9);
  }
}

TEST_CASE("scalarize reports the minimum eigenvalue of a singular matrix") {
  Eigen::Matrix2d m;
  m << 1, 1, 1, 1;
  try {
    scalarize(Scalarization::a_design(), m);
    FAIL("expected std::domain_error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("eigenvalue") != std::string::npos);
  }
  std::mt19937_64 rng(11);
  const auto m0 = oracle::random_mdp(3, 2, 2, rng);
  const auto coll = random_collection(m0, 2, rng);
  CHECK_THROWS_AS(design_objective(Scalarization::a_design(), coll,
                                   oracle::random_phi(3, 4, rng), 1, 0.0),
                  std::domain_error);
}

TEST_CASE("V-design validates its weight matrix") {
  Eigen::Matrix2d asym;
  asym << 1, 2, 0, 1;
  CHECK_THROWS_AS(Scalarization::v_design(asym), std::invalid_argument);
  Eigen::Matrix2d indefinite;
  indefinite << 1, 0, 0, -1;
  CHECK_THROWS_AS(Scalarization::v_design(indefinite), std::invalid_argument);
  CHECK_THROWS_AS(scalarize(Scalarization::v_design(Eigen::Matrix3d::Identity()),
                            Eigen::Matrix2d::Identity()),
                  std::invalid_argument);
}

TEST_CASE("scalarize_gradient matches central finite differences") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = oracle::random_mdp(5, 2, 2, rng);
    auto coll = random_collection(m, 3, rng);
    const auto phi = oracle::random_phi(5, 4, rng);
    const Scalarization s =
        trial % 2 ? Scalarization::a_design()
                  : Scalarization::v_design(oracle::random_psd(4, rng));
    const double T = 3.0, lambda = 2.0;
    const auto grad = scalarize_gradient(s, coll, phi, T, lambda);
    const double eps = 1e-5;
    double err = 0.0, scale = 0.0;
    for (int q = 0; q < 3; ++q)
      for (int h = 0; h < 2; ++h)
        for (int st = 0; st < 5; ++st) {
          auto up = coll, down = coll;
          up[q].d[h](st, 0) += eps;
          down[q].d[h](st, 0) -= eps;
          const double fd = (design_objective(s, up, phi, T, lambda) -
                             design_objective(s, down, phi, T, lambda)) /
                            (2 * eps);
          err = std::max(err, std::abs(fd - grad[q][h][st]));
          scale = std::max(scale, std::abs(grad[q][h][st]));
        }
    CHECK(err <= 1e-5 * scale);
  }
}

TEST_CASE("scalarize_gradient is identical across policies on a symmetric instance") {
  MdpSpec m;
  m.num_states = 3;
  m.num_actions = 2;
  m.horizon = 2;
  m.transition = Eigen::MatrixXd::Constant(6, 3, 1.0 / 3);
  m.initial_dist = Eigen::VectorXd::Constant(3, 1.0 / 3);
  const auto d = policy_to_visitation(m, uniform_policy(m));
  const std::vector<VisitationMeasure> coll(3, d);
  const auto grad = scalarize_gradient(Scalarization::a_design(), coll,
                                       Eigen::MatrixXd::Identity(3, 3), 5, 1.0);
  for (int q = 1; q < 3; ++q)
    for (int h = 0; h < 2; ++h) CHECK((grad[q][h] - grad[0][h]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalarize_gradient saturates for huge lambda") {
  std::mt19937_64 rng(13);
  const auto m = oracle::random_mdp(4, 2, 3, rng);
  const auto coll = random_collection(m, 2, rng);
  const auto grad =
      scalarize_gradient(Scalarization::a_design(), coll, oracle::random_phi(4, 3, rng), 10, 1e9);
  for (const auto& per_q : grad)
    for (const auto& g : per_q) CHECK(g.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("design objective is midpoint concave") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = oracle::random_mdp(4, 3, 3, rng);
    const auto phi = oracle::random_phi(4, 3, rng);
    const auto a = random_collection(m, 2, rng);
    const auto b = random_collection(m, 2, rng);
    std::vector<VisitationMeasure> mid;
    for (int q = 0; q < 2; ++q) mid.push_back(mix_visitations(0.5, a[q], b[q]));
    const auto f = [&](const std::vector<VisitationMeasure>& c) {
      return design_objective(Scalarization::a_design(), c, phi, 5, 1.0);
    };
    CHECK(f(mid) - 0.5 * (f(a) + f(b)) >= -1e-9);
  }
}

TEST_CASE("state information of identical trajectories is zero") {
  std::mt19937_64 rng(15);
  auto set = random_trajectories(3, 1, 4, 5, rng);
  for (auto& episode : set) episode.assign(3, episode.front());
  CHECK(max_abs(state_fim_of_trajectories(set, oracle::random_phi(5, 3, rng))) <= 1e-15);
}

TEST_CASE("state information of one step equals approx_fim_step on point masses") {
  std::mt19937_64 rng(16);
  const auto set = random_trajectories(1, 4, 1, 6, rng);
  const auto phi = oracle::random_phi(6, 3, rng);
  Eigen::MatrixXd marg = Eigen::MatrixXd::Zero(6, 4);
  for (int q = 0; q < 4; ++q) marg(set[0][q].state(0), q) = 1.0;
  CHECK(max_abs(state_fim_of_trajectories(set, phi) - approx_fim_step(marg, phi)) <= 1e-12);
}

TEST_CASE("state information equals the Kronecker form") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto set = random_trajectories(3, 4, 5, 6, rng);
    const auto phi = oracle::random_phi(6, 3, rng);
    CHECK(max_abs(state_fim_of_trajectories(set, phi) -
                  oracle::kronecker_state_fim(set, phi)) <= 1e-10);
  }
}

TEST_CASE("truncated information with one step equals state information") {
  std::mt19937_64 rng(18);
  const auto set = random_trajectories(4, 3, 1, 5, rng);
  FeatureMap f{oracle::random_phi(5, 3, rng), {}};
  CHECK(max_abs(truncated_fim_of_trajectories(set, f, PrefixMode::additive) -
                state_fim_of_trajectories(set, f.phi)) == 0.0);
}

TEST_CASE("truncated information dominates a quarter of state information") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 1 + static_cast<int>(uniform01(rng) * 3);
    const int K = 2 + static_cast<int>(uniform01(rng) * 3);
    const int H = 1 + static_cast<int>(uniform01(rng) * 6);
    const auto set = random_trajectories(T, K, H, 6, rng);
    FeatureMap f{oracle::random_phi(6, 4, rng), {}};
    const Eigen::MatrixXd diff = truncated_fim_of_trajectories(set, f, PrefixMode::additive) -
                                 0.25 * state_fim_of_trajectories(set, f.phi);
    CHECK(min_eigenvalue(diff) >= -1e-9);
  }
}

TEST_CASE("table prefixes holding prefix sums reproduce the additive mode") {
  std::mt19937_64 rng(20);
  const auto set = random_trajectories(2, 3, 3, 4, rng);
  FeatureMap f{oracle::random_phi(4, 2, rng), {}};
  for (const auto& episode : set)
    for (const auto& tr : episode) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(2);
      std::vector<int> states;
      for (int h = 0; h < 3; ++h) {
        acc += f.phi.row(tr.state(h)).transpose();
        states.push_back(tr.state(h));
        f.prefix_table[path_key(states)] = acc;
      }
    }
  CHECK(max_abs(truncated_fim_of_trajectories(set, f, PrefixMode::table) -
                truncated_fim_of_trajectories(set, f, PrefixMode::additive)) <= 1e-12);
  f.prefix_table.erase(f.prefix_table.begin());
  CHECK_THROWS_AS(truncated_fim_of_trajectories(set, f, PrefixMode::table), std::out_of_range);
}

TEST_CASE("cumulative Gram matrix for three steps") {
  Eigen::Matrix3d expected;
  expected << 3, 2, 1, 2, 2, 1, 1, 1, 1;
  CHECK(max_abs(cumulative_gram_matrix(3) - expected) == 0.0);
  CHECK(max_abs(cumulative_sum_matrix(3).transpose() * cumulative_sum_matrix(3) - expected) ==
        0.0);
}

TEST_CASE("cumulative Gram eigenvalues follow the closed form") {
  for (int H = 1; H <= 8; ++H) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cumulative_gram_matrix(H));
    Eigen::VectorXd closed(H);
    for (int k = 1; k <= H; ++k) {
      const double sn = std::sin((2 * k - 1) * std::numbers::pi / (2 * (2 * H + 1)));
      closed[k - 1] = 1.0 / (4 * sn * sn);
    }
    std::sort(closed.data(), closed.data() + H);
    Eigen::VectorXd ours = cumulative_gram_eigenvalues(H);
    std::sort(ours.data(), ours.data() + H);
    CHECK((es.eigenvalues() - closed).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((ours - closed).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(es.eigenvalues().minCoeff() >= 0.25);
  }
}

TEST_CASE("build_v_matrix examples") {
  const Eigen::Vector3d e1(1, 0, 0), e2(0, 1, 0);
  CHECK(max_abs(build_v_matrix({{e1, e2}}) - (e1 - e2) * (e1 - e2).transpose()) == 0.0);
  CHECK(max_abs(build_v_matrix({{e1, e1}})) == 0.0);
  CHECK_THROWS_AS(build_v_matrix({}), std::invalid_argument);
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
    for (int i = 0; i < 3; ++i) {
      const auto x = oracle::random_phi(2, 4, rng);
      pairs.emplace_back(x.row(0).transpose(), x.row(1).transpose());
    }
    CHECK(min_eigenvalue(build_v_matrix(pairs)) >= -1e-10);
  }
}

TEST_CASE("path keys and feature validation") {
  CHECK(path_key({0, 3, 2}) == "0-3-2");
  CHECK(path_key({7}) == "7");
  FeatureMap bad{Eigen::MatrixXd::Constant(2, 2, NAN), {}};
  CHECK_THROWS_AS(validate_features(bad), std::invalid_argument);
}
