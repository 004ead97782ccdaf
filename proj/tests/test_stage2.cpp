#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "gcr/stage2.hpp"
#include "support/oracles.hpp"

using namespace gcr;

namespace {

Stage1Chain::Pool make_pool(const std::vector<double>& psi,
                            const std::vector<double>& dbar) {
  Stage1Chain::Pool pool;
  const Eigen::Index S = static_cast<Eigen::Index>(psi.size());
  pool.mu = Eigen::VectorXd::LinSpaced(S, -1.0, 1.0);
  pool.theta = Eigen::VectorXd::Constant(S, 0.3);
  pool.theta_idx = Eigen::VectorXi::Zero(S);
  pool.psi = Eigen::Map<const Eigen::VectorXd>(psi.data(), S);
  pool.dbar = Eigen::Map<const Eigen::VectorXd>(dbar.data(), S);
  pool.loglik = Eigen::VectorXd::Zero(S);
  return pool;
}

}  // namespace

TEST_CASE("stage 2 draws are always pool entries (provenance)") {
  const auto pool = make_pool({0.1, 0.5, 0.9, 0.5, 0.2},
                              {0.3, 0.8, 0.5, 0.8, 0.9});
  const Stage2Chain chain = run_stage2(pool, 3, 10, 2000, 99);
  CHECK(chain.acceptance > 0.0);
  CHECK(chain.acceptance <= 1.0);
  for (Eigen::Index k = 0; k < chain.size(); ++k) {
    const int j = chain.pool_index[k];
    CHECK(chain.mu[k] == pool.mu[j]);
    CHECK(chain.psi[k] == pool.psi[j]);
    CHECK(chain.lambda[k] ==
          Catch::Approx(10 * pool.psi[j] * pool.dbar[j]).epsilon(1e-12));
  }
}

TEST_CASE("constant lambda pool makes stage 2 uniform resampling") {
  // psi * dbar identical across entries: every proposal accepts and the
  // stationary distribution is uniform over the pool
  const auto pool = make_pool({0.2, 0.4, 0.1, 0.8}, {0.4, 0.2, 0.8, 0.1});
  const Stage2Chain chain = run_stage2(pool, 2, 50, 40000, 5);
  CHECK(chain.acceptance == 1.0);
  std::map<int, int> freq;
  for (Eigen::Index k = 0; k < chain.size(); ++k) freq[chain.pool_index[k]]++;
  for (const auto& [idx, count] : freq) {
    CHECK(static_cast<double>(count) / chain.size() ==
          Catch::Approx(0.25).margin(0.01));
  }
}

TEST_CASE("at n=0 any lambda decrease is accepted") {
  // Poisson pmf at zero is monotone decreasing in lambda
  CHECK(n_loglik(0, 10, 0.1, 0.5) > n_loglik(0, 10, 0.9, 0.5));
  const auto pool = make_pool({0.9, 0.1}, {0.9, 0.1});
  const Stage2Chain chain = run_stage2(pool, 0, 10, 4000, 3);
  // chain should spend most time at the low-lambda entry
  int low = 0;
  for (Eigen::Index k = 0; k < chain.size(); ++k) low += chain.pool_index[k] == 1;
  CHECK(static_cast<double>(low) / chain.size() > 0.9);
}

TEST_CASE("stage 2 empirical frequencies match the PPRB stationary weights") {
  // pool of 10 entries with 7 distinct values; stationary mass of entry j
  // is proportional to Pois(n; lambda_j), aggregated over duplicates
  const std::vector<double> psi = {0.10, 0.20, 0.30, 0.20, 0.40,
                                   0.10, 0.30, 0.55, 0.20, 0.35};
  const std::vector<double> dbar = {0.50, 0.40, 0.70, 0.40, 0.60,
                                    0.50, 0.70, 0.80, 0.40, 0.30};
  const auto pool = make_pool(psi, dbar);
  const int n = 2, M = 12;
  const Stage2Chain chain = run_stage2(pool, n, M, 1000000, 12345);

  Eigen::VectorXd weight(10);
  for (int j = 0; j < 10; ++j) {
    weight[j] = std::exp(n_loglik(n, M, psi[j], dbar[j]));
  }
  weight /= weight.sum();
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(10);
  for (Eigen::Index k = 0; k < chain.size(); ++k) freq[chain.pool_index[k]] += 1.0;
  freq /= chain.size();
  for (int j = 0; j < 10; ++j) {
    CHECK(freq[j] == Catch::Approx(weight[j]).margin(0.01));
  }
}

TEST_CASE("homogeneous toy: two-stage posterior matches the grid oracle") {
  // n = 5, M = 20, J = 3; uniform priors on p and psi
  Eigen::VectorXi y(5);
  y << 1, 2, 1, 3, 1;
  const int M = 20, J = 3, n = 5;
  const HomogeneousCrFit fit =
      fit_homogeneous_cr(y, M, J, HomogeneousPriors{}, 200000, 31);

  // 200 x 200 midpoint grid over (p, psi)
  const int G = 200;
  double wsum = 0.0, p_mean = 0.0, psi_mean = 0.0, n_mean = 0.0;
  double max_log = -1e300;
  Eigen::MatrixXd logw(G, G);
  for (int a = 0; a < G; ++a) {
    const double p = (a + 0.5) / G;
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      ll += oracles::binom_pmf(y[i], J, p) > 0
                ? std::log(oracles::binom_pmf(y[i], J, p))
                : -1e300;
      ll -= std::log1p(-std::pow(1.0 - p, J));
    }
    for (int b = 0; b < G; ++b) {
      const double psi = (b + 0.5) / G;
      const double lambda = M * psi * (1.0 - std::pow(1.0 - p, J));
      const double lw =
          ll + n * std::log(lambda) - lambda - std::lgamma(n + 1.0);
      logw(a, b) = lw;
      max_log = std::max(max_log, lw);
    }
  }
  for (int a = 0; a < G; ++a) {
    const double p = (a + 0.5) / G;
    const double q = std::pow(1.0 - p, J);
    for (int b = 0; b < G; ++b) {
      const double psi = (b + 0.5) / G;
      const double w = std::exp(logw(a, b) - max_log);
      wsum += w;
      p_mean += w * p;
      psi_mean += w * psi;
      n_mean += w * (n + (M - n) * psi * q / (psi * q + 1.0 - psi));
    }
  }
  p_mean /= wsum;
  psi_mean /= wsum;
  n_mean /= wsum;

  CHECK(fit.p.mean() == Catch::Approx(p_mean).margin(0.01));
  CHECK(fit.psi.mean() == Catch::Approx(psi_mean).margin(0.01));
  const double n_fit = fit.N.cast<double>().mean();
  CHECK(std::abs(n_fit - n_mean) / n_mean < 0.02);
}

TEST_CASE("homogeneous toy: weaker prior lets p concentrate near 1") {
  // J = 1, every individual captured exactly once: the zero-truncated
  // binomial is flat in p, so the posterior is driven by prior and the
  // n-correction, which rewards larger p when n is near M psi
  Eigen::VectorXi y = Eigen::VectorXi::Ones(5);
  HomogeneousPriors strong;
  strong.a_p = 2.0;
  strong.b_p = 2.0;
  const HomogeneousCrFit tight = fit_homogeneous_cr(y, 6, 1, strong, 60000, 7);
  const HomogeneousCrFit weak =
      fit_homogeneous_cr(y, 6, 1, HomogeneousPriors{}, 60000, 7);
  CHECK(weak.p.mean() > tight.p.mean());
  CHECK(weak.p.mean() > 0.5);
}

TEST_CASE("homogeneous toy: with n=0 and p pinned near zero, psi keeps its prior") {
  Eigen::VectorXi empty(0);
  HomogeneousPriors priors;
  priors.a_p = 1.0;
  priors.b_p = 1e6;  // p concentrated at ~1e-6: no information in n
  const HomogeneousCrFit fit = fit_homogeneous_cr(empty, 20, 3, priors, 80000, 13);
  CHECK(fit.psi.mean() == Catch::Approx(0.5).margin(0.01));
  Eigen::VectorXd sorted = fit.psi;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  CHECK(sorted[sorted.size() / 2] == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("stage 2 input validation") {
  Stage1Chain::Pool empty;
  CHECK_THROWS_AS(run_stage2(empty, 1, 10, 100, 1), GcrError);
  const auto pool = make_pool({0.5}, {0.5});
  CHECK_THROWS_AS(run_stage2(pool, 11, 10, 100, 1), GcrError);
  Eigen::VectorXi bad(1);
  bad << 4;
  CHECK_THROWS_AS(fit_homogeneous_cr(bad, 10, 3, HomogeneousPriors{}, 100, 1),
                  GcrError);
}
