#include <doctest.h>

#include <cmath>

#include "edpbrl/preference.hpp"
#include "support/oracles.hpp"

using namespace edpbrl;

namespace {

ChoiceOptions random_options(int K, int d, std::mt19937_64& rng, double scale = 1.0) {
  return ChoiceOptions{scale * oracle::random_phi(K, d, rng)};
}

Eigen::VectorXd random_vector(int d, std::mt19937_64& rng, double scale = 1.0) {
  return scale * oracle::random_phi(d, 1, rng).col(0);
}

std::vector<PreferenceRecord> random_records(int n, int K, int d, std::mt19937_64& rng) {
  std::vector<PreferenceRecord> out;
  for (int i = 0; i < n; ++i) {
    PreferenceRecord rec;
    rec.episode = i;
    rec.options = random_options(K, d, rng);
    rec.chosen = static_cast<int>(uniform01(rng) * K);
    out.push_back(rec);
  }
  return out;
}

// Sum of log naive-softmax probabilities, one scalar at a time.
double scalar_loglik(const Eigen::VectorXd& theta,
                     const std::vector<PreferenceRecord>& records, double lambda) {
  double total = 0.0;
  for (int j = 0; j < theta.size(); ++j) total -= 0.5 * lambda * theta[j] * theta[j];
  for (const auto& rec : records)
    total += std::log(oracle::naive_softmax(theta, rec.options.features)[rec.chosen]);
  return total;
}

}  // namespace

TEST_CASE("choice_probs is uniform at theta = 0") {
  std::mt19937_64 rng(1);
  const auto p = choice_probs(Eigen::VectorXd::Zero(3), random_options(4, 3, rng));
  CHECK((p.array() - 0.25).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("choice_probs reproduces the logistic identity") {
  ChoiceOptions opts{Eigen::MatrixXd(2, 1)};
  opts.features << std::log(3.0), 0.0;
  const auto p = choice_probs(Eigen::VectorXd::Ones(1), opts);
  CHECK(std::abs(p[0] - 0.75) <= 1e-15);
  CHECK(std::abs(p[1] - 0.25) <= 1e-15);
}

TEST_CASE("choice_probs matches the naive formula on small logits") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto opts = random_options(4, 3, rng);
    const auto theta = random_vector(3, rng);
    const auto p = choice_probs(theta, opts);
    CHECK((p - oracle::naive_softmax(theta, opts.features)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    CHECK(p.minCoeff() > 0.0);
  }
}

TEST_CASE("choice_probs is invariant to a common feature shift") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto opts = random_options(5, 4, rng);
    const auto theta = random_vector(4, rng);
    const Eigen::RowVectorXd shift = random_vector(4, rng, 3.0).transpose();
    ChoiceOptions shifted{opts.features.rowwise() + shift};
    CHECK((choice_probs(theta, opts) - choice_probs(theta, shifted)).cwiseAbs().maxCoeff() <=
          1e-12);
  }
}

TEST_CASE("choice_probs survives huge logits and rejects mismatched dimensions") {
  ChoiceOptions opts{Eigen::MatrixXd(3, 1)};
  opts.features << 1000.0, 999.0, -1000.0;
  const auto p = choice_probs(Eigen::VectorXd::Ones(1), opts);
  CHECK(p.allFinite());
  CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
  CHECK_THROWS_AS(choice_probs(Eigen::VectorXd::Ones(2), opts), std::invalid_argument);
}

TEST_CASE("sample_choice with a point mass always returns it") {
  const Eigen::Vector4d probs(1, 0, 0, 0);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) CHECK(sample_choice(probs, rng) == 0);
}

TEST_CASE("sample_choice frequencies are uniform under uniform probabilities") {
  const Eigen::Vector4d probs = Eigen::Vector4d::Constant(0.25);
  std::mt19937_64 rng(5);
  const int n = 100000;
  Eigen::Vector4d counts = Eigen::Vector4d::Zero();
  for (int i = 0; i < n; ++i) counts[sample_choice(probs, rng)] += 1;
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  double chi2 = 0.0;
  for (int q = 0; q < 4; ++q) {
    CHECK(std::abs(counts[q] / n - 0.25) <= 3 * sigma);
    chi2 += std::pow(counts[q] - n / 4.0, 2) / (n / 4.0);
  }
  // 99.9% quantile of chi-square with 3 degrees of freedom.
  CHECK(chi2 < 16.266);
}

TEST_CASE("sample_choice is reproducible for a fixed seed") {
  const Eigen::Vector3d probs(0.2, 0.5, 0.3);
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    CHECK(sample_choice(probs, seed) == sample_choice(probs, seed));
}

TEST_CASE("regularized_loglik closed-form values") {
  std::mt19937_64 rng(6);
  PreferenceRecord rec;
  rec.options = random_options(4, 3, rng);
  rec.chosen = 2;
  CHECK(std::abs(regularized_loglik(Eigen::VectorXd::Zero(3), {rec}, 5.0) - std::log(0.25)) <=
        1e-15);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(3);
  unit[1] = 1.0;
  CHECK(regularized_loglik(unit, {}, 2.0) == -1.0);
  CHECK_THROWS_AS(regularized_loglik(unit, {}, -1.0), std::invalid_argument);
}

TEST_CASE("regularized_loglik matches a scalar reimplementation") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto records = random_records(20, 3, 4, rng);
    const auto theta = random_vector(4, rng, 0.5);
    CHECK(std::abs(regularized_loglik(theta, records, 1.5) -
                   scalar_loglik(theta, records, 1.5)) <= 1e-12);
  }
}

TEST_CASE("regularized_loglik is midpoint concave") {
  std::mt19937_64 rng(8);
  const auto records = random_records(30, 4, 3, rng);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_vector(3, rng, 2.0);
    const auto b = random_vector(3, rng, 2.0);
    const double mid = regularized_loglik(0.5 * (a + b), records, 0.7);
    const double avg =
        0.5 * (regularized_loglik(a, records, 0.7) + regularized_loglik(b, records, 0.7));
    CHECK(mid >= avg - 1e-9);
  }
}

TEST_CASE("loglik_gradient vanishes on a symmetric record set at theta = 0") {
  ChoiceOptions opts{Eigen::MatrixXd(4, 2)};
  opts.features << 1, 0, -1, 0, 0, 1, 0, -1;
  std::vector<PreferenceRecord> records;
  for (int q = 0; q < 4; ++q) records.push_back({0, 0, opts, q, {}});
  CHECK(loglik_gradient(Eigen::VectorXd::Zero(2), records, 3.0).norm() <= 1e-15);
}

TEST_CASE("loglik_gradient of the regularizer alone") {
  const Eigen::Vector3d e1(1, 0, 0);
  CHECK((loglik_gradient(e1, {}, 1.0) + e1).norm() == 0.0);
}

TEST_CASE("loglik_gradient matches central finite differences") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto records = random_records(10, 4, 3, rng);
    const auto theta = random_vector(3, rng, 0.7);
    const auto g = loglik_gradient(theta, records, 0.8);
    const double h = 1e-6;
    Eigen::VectorXd fd(3);
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd up = theta, down = theta;
      up[j] += h;
      down[j] -= h;
      fd[j] = (regularized_loglik(up, records, 0.8) - regularized_loglik(down, records, 0.8)) /
              (2 * h);
    }
    CHECK((g - fd).norm() <= 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST_CASE("exact_choice_fim degenerate and hand-computed cases") {
  ChoiceOptions same{Eigen::MatrixXd(3, 2)};
  same.features << 1, 2, 1, 2, 1, 2;
  CHECK(exact_choice_fim(Eigen::Vector2d(0.3, -0.4), same).cwiseAbs().maxCoeff() <= 1e-15);

  ChoiceOptions pm{Eigen::MatrixXd(2, 2)};
  pm.features << 1, 0, -1, 0;
  Eigen::Matrix2d expected;
  expected << 1, 0, 0, 0;
  CHECK((exact_choice_fim(Eigen::Vector2d::Zero(), pm) - expected).cwiseAbs().maxCoeff() <=
        1e-15);
}

TEST_CASE("exact_choice_fim is symmetric PSD and matches the naive formula") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const auto opts = random_options(5, 4, rng, 2.0);
    const auto theta = random_vector(4, rng);
    const auto fim = exact_choice_fim(theta, opts);
    CHECK((fim - fim.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fim);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    CHECK((fim - oracle::choice_fim(theta, opts.features)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("exact_choice_fim is the negated Hessian of one record's log-likelihood") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    PreferenceRecord rec;
    rec.options = random_options(4, 3, rng);
    rec.chosen = trial % 4;
    const auto theta = random_vector(3, rng);
    const double h = 1e-5;
    Eigen::MatrixXd hess(3, 3);
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd up = theta, down = theta;
      up[j] += h;
      down[j] -= h;
      hess.col(j) = (loglik_gradient(up, {rec}, 0.0) - loglik_gradient(down, {rec}, 0.0)) /
                    (2 * h);
    }
    const auto fim = exact_choice_fim(theta, rec.options);
    CHECK((fim + hess).norm() <= 1e-5 * std::max(1.0, fim.norm()));
  }
}

TEST_CASE("exact_choice_fim equals the Monte Carlo score covariance") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 3; ++trial) {
    const auto opts = random_options(4, 3, rng);
    const auto theta = random_vector(3, rng);
    const auto p = choice_probs(theta, opts);
    const Eigen::VectorXd mean = opts.features.transpose() * p;
    const int n = 200000;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 3);
    Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(3, 3);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd s =
          opts.features.row(sample_choice(p, rng)).transpose() - mean;
      const Eigen::MatrixXd outer = s * s.transpose();
      sum += outer;
      sum_sq += outer.cwiseProduct(outer);
    }
    const Eigen::MatrixXd avg = sum / n;
    const Eigen::MatrixXd var = sum_sq / n - avg.cwiseProduct(avg);
    const Eigen::MatrixXd fim = exact_choice_fim(theta, opts);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(std::abs(avg(i, j) - fim(i, j)) <= 3 * std::sqrt(var(i, j) / n));
  }
}

TEST_CASE("estimate_theta on zero records returns exactly zero") {
  const auto est = estimate_theta({}, 1.0, {}, 5);
  CHECK(est.theta.size() == 5);
  CHECK(est.theta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(est.converged);
  CHECK_THROWS_AS(estimate_theta({}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(estimate_theta({}, -1.0, {}, 2), std::invalid_argument);
}

TEST_CASE("estimate_theta stays near zero when choices carry no signal") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    std::vector<PreferenceRecord> records;
    const Eigen::Vector4d uniform = Eigen::Vector4d::Constant(0.25);
    for (int i = 0; i < 10000; ++i) {
      PreferenceRecord rec;
      rec.options = random_options(4, 3, rng);
      rec.chosen = sample_choice(uniform, rng);
      records.push_back(rec);
    }
    const auto est = estimate_theta(records, 1.0);
    CHECK(est.converged);
    CHECK(est.theta.norm() <= 0.1);
  }
}

TEST_CASE("estimate_theta converges to a stationary point") {
  std::mt19937_64 rng(13);
  const auto records = random_records(200, 4, 5, rng);
  const auto est = estimate_theta(records, 2.0);
  CHECK(est.converged);
  CHECK(est.gradient_norm <= 1e-8);
  CHECK(loglik_gradient(est.theta, records, 2.0).norm() <= 1e-8);
  CHECK(est.final_objective == doctest::Approx(regularized_loglik(est.theta, records, 2.0)));
}

TEST_CASE("estimate_theta reports failure when the iteration budget runs out") {
  std::mt19937_64 rng(14);
  const auto records = random_records(50, 4, 3, rng);
  const auto est = estimate_theta(records, 0.5, {1e-14, 1});
  CHECK_FALSE(est.converged);
  CHECK(est.iterations == 1);
  CHECK(est.final_objective >= regularized_loglik(Eigen::VectorXd::Zero(3), records, 0.5));
}

TEST_CASE("estimate_theta matches a dense grid search in two dimensions") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 3; ++trial) {
    const auto records = random_records(3, 3, 2, rng);
    const auto est = estimate_theta(records, 1.0);
    const auto f = [&](double x, double y) {
      return regularized_loglik(Eigen::Vector2d(x, y), records, 1.0);
    };
    // Coarse pass over [-5, 5]^2, then a 1e-3 pass around the coarse winner.
    double best = -INFINITY, bx = 0, by = 0;
    for (int i = 0; i <= 1000; ++i)
      for (int j = 0; j <= 1000; ++j) {
        const double x = -5 + 0.01 * i, y = -5 + 0.01 * j;
        const double v = f(x, y);
        if (v > best) best = v, bx = x, by = y;
      }
    for (int i = -50; i <= 50; ++i)
      for (int j = -50; j <= 50; ++j) best = std::max(best, f(bx + 1e-3 * i, by + 1e-3 * j));
    CHECK(est.final_objective >= best - 1e-12);
    CHECK(est.final_objective - best <= 1e-5);
  }
}

TEST_CASE("records with an out-of-range choice are rejected") {
  std::mt19937_64 rng(16);
  auto records = random_records(2, 3, 2, rng);
  records[1].chosen = 3;
  CHECK_THROWS_AS(regularized_loglik(Eigen::Vector2d::Zero(), records, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(estimate_theta(records, 1.0), std::invalid_argument);
}
