#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "gcr/stage1.hpp"
#include "support/oracles.hpp"

using namespace gcr;

namespace {

struct OneTrapFixture {
  TrapArray traps;
  ThetaGridCache cache;

  explicit OneTrapFixture(int crn, std::uint64_t seed)
      : traps(one_trap()), cache(build_cache(traps, crn, seed)) {}

  static TrapArray one_trap() {
    Coordinates c(1, 2);
    c << 0.0, 0.0;
    return TrapArray(c);
  }
  static ThetaGridCache build_cache(const TrapArray& traps, int crn,
                                    std::uint64_t seed) {
    Coordinates two(2, 2);
    two << 0.0, 0.0, 1.0, 0.0;
    const ThetaGrid grid = ThetaGrid::over_traps(TrapArray(two), 4);
    return ThetaGridCache::build(traps, grid, 1.0, crn, seed);
  }
};

ModelConfig small_config() {
  ModelConfig mc;
  mc.M = 20;
  mc.theta_grid_size = 4;
  return mc;
}

}  // namespace

TEST_CASE("reflected discrete random walk kernel is symmetric") {
  for (int size : {2, 3, 5}) {
    for (int m = 1; m <= 3; ++m) {
      Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(size, size);
      for (int i = 0; i < size; ++i) {
        for (int mag = 1; mag <= m; ++mag) {
          for (int sign : {-1, 1}) {
            const int j = reflect_theta_index(i + sign * mag, size);
            kernel(i, j) += 1.0 / (2.0 * m);
          }
        }
      }
      INFO("size " << size << " m " << m);
      CHECK((kernel - kernel.transpose()).cwiseAbs().maxCoeff() == 0.0);
      for (int i = 0; i < size; ++i) {
        CHECK(kernel.row(i).sum() == Catch::Approx(1.0));
      }
    }
  }
}

TEST_CASE("tune_proposals adapts toward the acceptance band") {
  const auto up = tune_proposals({1000, 0.9, 0.5, 2});
  CHECK(up.mu_step > 0.5);
  CHECK(up.theta_step == 3);
  const auto down = tune_proposals({1000, 0.02, 0.5, 2});
  CHECK(down.mu_step < 0.5);
  CHECK(down.theta_step == 1);
  const auto keep = tune_proposals({1000, 0.30, 0.5, 2});
  CHECK(keep.mu_step == 0.5);
  CHECK(keep.theta_step == 2);
  CHECK_THROWS_AS(tune_proposals({999, 0.3, 0.5, 1}), GcrError);
}

TEST_CASE("stage 1 with one trap, one occasion, y=1 reproduces the prior") {
  // the integrated likelihood is exactly flat, so the chain must sample
  // the mu prior; the quadrature oracle for the posterior mean is mu0
  OneTrapFixture fx(256, 11);
  Eigen::MatrixXi counts(1, 1);
  counts << 1;
  const CaptureData data(counts, 1);
  ModelConfig mc = small_config();
  mc.mu0 = 0.3;
  mc.sigma0sq = 0.5;
  Stage1Settings settings;
  settings.iterations = 20000;
  settings.chains = 2;
  const Stage1Chain chain = run_stage1(data, fx.cache, mc, settings, 99);
  const auto pool = chain.pooled();
  const double oracle_mean = oracles::gh_expect_1d(
      mc.mu0, mc.sigma0sq, 48, [](double v) { return v; });
  CHECK(pool.mu.mean() == Catch::Approx(oracle_mean).margin(0.02));
  // theta carries no information at L=1: all grid values visited
  std::map<int, int> seen;
  for (Eigen::Index i = 0; i < pool.size(); ++i) seen[pool.theta_idx[i]]++;
  CHECK(seen.size() == 4);
}

TEST_CASE("stage 1 posterior matches 1-D quadrature with informative data") {
  // one trap, J = 6, y = 2: posterior over mu is proportional to
  // prior(mu) * E_v[Binom(2; 6, Phi(mu + v))] / E_v[1 - (1-Phi)^6]
  OneTrapFixture fx(4096, 13);
  Eigen::MatrixXi counts(1, 1);
  counts << 2;
  const CaptureData data(counts, 6);
  ModelConfig mc = small_config();
  mc.mu0 = 0.0;
  mc.sigma0sq = 4.0;
  Stage1Settings settings;
  settings.iterations = 40000;
  settings.chains = 2;
  const Stage1Chain chain = run_stage1(data, fx.cache, mc, settings, 7);
  const auto pool = chain.pooled();

  // quadrature posterior mean over a dense mu grid (the v integral is
  // 1-D as well; theta is irrelevant at a single trap)
  const int J = 6;
  auto loglik_mu = [&](double mu) {
    const double numer = oracles::gh_expect_1d(mu, 1.0, 64, [&](double v) {
      return oracles::binom_pmf(2, J, oracles::ref_normal_cdf(v));
    });
    const double denom = oracles::gh_expect_1d(mu, 1.0, 64, [&](double v) {
      return 1.0 - std::pow(1.0 - oracles::ref_normal_cdf(v), J);
    });
    return std::log(numer / denom);
  };
  double num = 0.0, den = 0.0;
  for (double mu = -8.0; mu <= 8.0; mu += 0.01) {
    const double w = std::exp(loglik_mu(mu) -
                              0.5 * (mu - mc.mu0) * (mu - mc.mu0) / mc.sigma0sq);
    num += w * mu;
    den += w;
  }
  CHECK(pool.mu.mean() == Catch::Approx(num / den).margin(0.02));
}

TEST_CASE("psi draws are iid from the Beta prior") {
  OneTrapFixture fx(64, 5);
  Eigen::MatrixXi counts(1, 1);
  counts << 1;
  const CaptureData data(counts, 1);
  const ModelConfig mc = small_config();
  Stage1Settings settings;
  settings.iterations = 100000;
  settings.chains = 1;
  settings.warmup_frac = 0.0;
  const Stage1Chain chain = run_stage1(data, fx.cache, mc, settings, 3);
  CHECK(chain.psi[0].mean() == Catch::Approx(0.5).margin(0.005));
  double var = (chain.psi[0].array() - chain.psi[0].mean()).square().mean();
  CHECK(var == Catch::Approx(1.0 / 12.0).margin(0.003));
}

TEST_CASE("identical individuals contribute identical logliks each iteration") {
  OneTrapFixture fx(512, 23);
  // evaluator-level check is in test_marginal; here the chain property:
  // swapping two identical rows leaves the chain bitwise unchanged
  Eigen::MatrixXi counts(2, 1);
  counts << 1, 1;
  const CaptureData data(counts, 2);
  ModelConfig mc = small_config();
  Stage1Settings settings;
  settings.iterations = 500;
  settings.chains = 1;
  const Stage1Chain a = run_stage1(data, fx.cache, mc, settings, 41);
  const Stage1Chain b = run_stage1(data, fx.cache, mc, settings, 41);
  CHECK(a.mu[0] == b.mu[0]);
  CHECK(a.theta_idx[0] == b.theta_idx[0]);
}

TEST_CASE("chain is invariant to individual labeling order") {
  Coordinates c(3, 2);
  c << 0.0, 0.0, 0.4, 0.0, 0.0, 0.4;
  const TrapArray traps(c);
  const ThetaGrid grid = ThetaGrid::over_traps(traps, 5);
  const ThetaGridCache cache = ThetaGridCache::build(traps, grid, 1.0, 256, 2);
  Eigen::MatrixXi counts(3, 3);
  counts << 2, 0, 1, 0, 3, 0, 1, 1, 1;
  ModelConfig mc = small_config();
  mc.theta_grid_size = 5;
  Stage1Settings settings;
  settings.iterations = 800;
  settings.chains = 1;
  const Stage1Chain base =
      run_stage1(CaptureData(counts, 3), cache, mc, settings, 17);

  Eigen::MatrixXi shuffled(3, 3);
  shuffled.row(0) = counts.row(2);
  shuffled.row(1) = counts.row(0);
  shuffled.row(2) = counts.row(1);
  const Stage1Chain perm =
      run_stage1(CaptureData(shuffled, 3), cache, mc, settings, 17);
  CHECK((base.mu[0] - perm.mu[0]).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(base.theta_idx[0] == perm.theta_idx[0]);
}

TEST_CASE("acceptance warning triggers outside the healthy band") {
  OneTrapFixture fx(128, 3);
  Eigen::MatrixXi counts(1, 1);
  counts << 1;
  const CaptureData data(counts, 1);
  const ModelConfig mc = small_config();
  Stage1Settings settings;
  settings.iterations = 2000;
  settings.chains = 1;
  settings.tune = false;
  // flat likelihood and a symmetric proposal: nearly every move accepts
  settings.initial_mu_step = 1e-6;
  const Stage1Chain chain = run_stage1(data, fx.cache, mc, settings, 2);
  CHECK(chain.stats[0].acceptance > 0.95);
  CHECK(chain.stats[0].acceptance_warning);
}

TEST_CASE("stage 1 is deterministic and thread-count invariant") {
  OneTrapFixture fx(128, 31);
  Eigen::MatrixXi counts(2, 1);
  counts << 1, 2;
  const CaptureData data(counts, 2);
  const ModelConfig mc = small_config();
  Stage1Settings settings;
  settings.iterations = 1500;
  settings.chains = 3;
  const Stage1Chain a = run_stage1(data, fx.cache, mc, settings, 47, 1);
  const Stage1Chain b = run_stage1(data, fx.cache, mc, settings, 47, 8);
  for (int c = 0; c < 3; ++c) {
    CHECK(a.mu[c] == b.mu[c]);
    CHECK(a.psi[c] == b.psi[c]);
    CHECK(a.theta_idx[c] == b.theta_idx[c]);
    CHECK(a.dbar[c] == b.dbar[c]);
  }
  // pooled order is chain-major
  const auto pool = a.pooled();
  const int per_chain = a.iterations - a.warmup;
  CHECK(pool.size() == 3 * per_chain);
  CHECK(pool.mu[0] == a.mu[0][a.warmup]);
  CHECK(pool.mu[per_chain] == a.mu[1][a.warmup]);
}

TEST_CASE("stage 1 input validation") {
  OneTrapFixture fx(64, 3);
  Eigen::MatrixXi counts(1, 1);
  counts << 1;
  const CaptureData data(counts, 1);
  ModelConfig mc = small_config();
  mc.M = 1;  // must exceed n
  Stage1Settings settings;
  settings.iterations = 10;
  CHECK_THROWS_AS(run_stage1(data, fx.cache, mc, settings, 1), GcrError);
}
