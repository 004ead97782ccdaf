#include <catch2/catch_amalgamated.hpp>

#include "gcr/scr.hpp"
#include "gcr/simulator.hpp"

using namespace gcr;

namespace {

SimConfig small_world() {
  SimConfig cfg;
  cfg.M = 60;
  cfg.psi = 0.25;
  cfg.trap_nx = 4;
  cfg.trap_ny = 4;
  cfg.trap_spacing = 1.0 / 3.0;
  cfg.buffer = 0.3;
  cfg.lambda_ac = 1e-9;  // effectively one center per individual
  cfg.occasions = 5;
  return cfg;
}

}  // namespace

TEST_CASE("conjugate psi update matches Beta moments") {
  RngStream rng(5);
  const double a = 1.0, b = 1.0;
  const int sum_z = 13, M = 50;
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double psi = scr_detail::draw_psi_conjugate(a, b, sum_z, M, rng);
    sum += psi;
    sumsq += psi * psi;
  }
  const double pa = a + sum_z, pb = b + M - sum_z;
  const double mean = pa / (pa + pb);
  const double var = pa * pb / ((pa + pb) * (pa + pb) * (pa + pb + 1.0));
  CHECK(sum / n == Catch::Approx(mean).margin(0.002));
  CHECK(sumsq / n - (sum / n) * (sum / n) == Catch::Approx(var).margin(0.0005));
}

TEST_CASE("member loglik treats augmented individuals exchangeably") {
  const TrapArray traps = TrapArray::grid(3, 3, 0.5);
  // all-zero histories share one likelihood value regardless of identity;
  // only the center location matters
  const double a = scr_detail::member_loglik(nullptr, 0.2, 0.3, -1.0, -8.0,
                                             traps, 4);
  const double b = scr_detail::member_loglik(nullptr, 0.2, 0.3, -1.0, -8.0,
                                             traps, 4);
  CHECK(a == b);
  // and equals the binomial loglik of an explicit zero row
  Eigen::VectorXi zeros = Eigen::VectorXi::Zero(9);
  CHECK(scr_detail::member_loglik(&zeros, 0.2, 0.3, -1.0, -8.0, traps, 4) == a);
}

TEST_CASE("scr fit concentrates a single-trap individual's center") {
  const SimConfig cfg = small_world();
  // build data with one individual detected often at a single trap
  const TrapArray traps =
      TrapArray::grid(cfg.trap_nx, cfg.trap_ny, cfg.trap_spacing);
  Eigen::MatrixXi counts(2, traps.count());
  counts.setZero();
  counts(0, 5) = 5;   // trap 5 at (2/3? , ...) -- interior trap
  counts(1, 10) = 3;  // second individual elsewhere
  const CaptureData data(counts, 5);
  ScrSettings settings;
  settings.iterations = 4000;
  const ScrChain chain =
      fit_scr(data, traps, cfg.buffer, 40, settings, ScrPriors{}, 7);

  // posterior mean center of individual 0 within one trap spacing of trap 5
  double cx = 0.0, cy = 0.0;
  int used = 0;
  for (std::size_t t = 0; t < chain.centers.size(); ++t) {
    cx += chain.centers[t](0, 0);
    cy += chain.centers[t](0, 1);
    ++used;
  }
  cx /= used;
  cy /= used;
  const double d = std::hypot(cx - traps.locations()(5, 0),
                              cy - traps.locations()(5, 1));
  CHECK(d < cfg.trap_spacing);
  // detected individuals always counted: N >= n
  CHECK(chain.N.minCoeff() >= 2);
}

TEST_CASE("scr is deterministic in the seed") {
  const SimConfig cfg = small_world();
  const SimResult sim = simulate(cfg, 99);
  ScrSettings settings;
  settings.iterations = 600;
  const ScrChain a = fit_scr(sim.data, sim.traps, cfg.buffer, cfg.M, settings,
                             ScrPriors{}, 11);
  const ScrChain b = fit_scr(sim.data, sim.traps, cfg.buffer, cfg.M, settings,
                             ScrPriors{}, 11);
  CHECK(a.alpha == b.alpha);
  CHECK(a.N == b.N);
}

TEST_CASE("scr credible intervals cover truth on self-generated data") {
  // data simulated from the SCR model itself: single activity center per
  // individual; 95% CI for N should cover the true N in >= 18 of 20 runs
  const SimConfig cfg = small_world();
  int covered = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const SimResult sim = simulate(cfg, 5000 + rep);
    ScrSettings settings;
    settings.iterations = 2500;
    settings.thin_centers = 0;  // maps not needed
    const ScrChain chain = fit_scr(sim.data, sim.traps, cfg.buffer, cfg.M,
                                   settings, ScrPriors{}, 31 + rep);
    Eigen::VectorXd n_draws =
        chain.N.segment(chain.warmup, chain.N.size() - chain.warmup)
            .cast<double>();
    std::sort(n_draws.data(), n_draws.data() + n_draws.size());
    const double lo = n_draws[static_cast<Eigen::Index>(0.025 * n_draws.size())];
    const double hi =
        n_draws[static_cast<Eigen::Index>(0.975 * (n_draws.size() - 1))];
    if (sim.truth.N_true >= lo && sim.truth.N_true <= hi) ++covered;
  }
  CHECK(covered >= 18);
}

TEST_CASE("scr map is flat when beta = 0 and peaks at the center mode") {
  const TrapArray traps = TrapArray::grid(3, 3, 0.5);
  ScrChain chain;
  chain.M = 10;
  chain.n_observed = 1;
  chain.warmup = 0;
  const int K = 5;
  chain.alpha = Eigen::VectorXd::Constant(K, -1.0);
  chain.beta = Eigen::VectorXd::Zero(K);
  chain.psi = Eigen::VectorXd::Constant(K, 0.5);
  chain.N = Eigen::VectorXi::Constant(K, 3);
  for (int t = 0; t < K; ++t) {
    Eigen::MatrixXd c(1, 2);
    c << 0.4, 0.6;
    chain.centers.push_back(c);
    chain.center_iteration.push_back(t);
  }
  const PredictionGrid flat = scr_predict_map(chain, 0, traps, 7, 7);
  const double expected = 1.0 - std::exp(-std::exp(-1.0));
  CHECK(flat.mean_p.isApproxToConstant(expected, 1e-12));
  CHECK(flat.sd_p.maxCoeff() < 1e-12);

  // with decay, the map maximum sits at the grid point nearest the center
  chain.beta = Eigen::VectorXd::Constant(K, -30.0);
  const PredictionGrid peaked = scr_predict_map(chain, 0, traps, 21, 21);
  Eigen::Index argmax = 0;
  peaked.mean_p.maxCoeff(&argmax);
  CHECK(std::hypot(peaked.sites(argmax, 0) - 0.4,
                   peaked.sites(argmax, 1) - 0.6) < 0.08);
  CHECK_THROWS_AS(scr_predict_map(chain, 3, traps, 7, 7), GcrError);
}
