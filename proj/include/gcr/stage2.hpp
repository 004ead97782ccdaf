#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>

#include "gcr/error.hpp"
#include "gcr/marginal.hpp"
#include "gcr/rng.hpp"
#include "gcr/stage1.hpp"

namespace gcr {

/// Final posterior sample: stage-1 pool draws resampled with replacement
/// and corrected through the conditional model for n. Every draw is a
/// pool entry; provenance indices are kept alongside.
struct Stage2Chain {
  Eigen::VectorXd mu, theta, psi, lambda, dbar;
  Eigen::VectorXi theta_idx, pool_index, accepted;
  double acceptance = 0.0;
  int n_observed = 0;
  int M = 0;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return mu.size(); }
};

inline Stage2Chain run_stage2(const Stage1Chain::Pool& pool, int n_observed,
                              int M, int iterations, std::uint64_t seed) {
  const Eigen::Index S = pool.size();
  if (S < 1) throw validation_error("stage 2 requires a nonempty stage-1 pool");
  if (iterations < 1) throw validation_error("stage 2 needs iterations >= 1");
  if (n_observed < 0 || n_observed > M) {
    throw validation_error("stage 2: n must lie in [0, M]");
  }

  Stage2Chain out;
  out.n_observed = n_observed;
  out.M = M;
  out.seed = seed;
  out.mu.resize(iterations);
  out.theta.resize(iterations);
  out.psi.resize(iterations);
  out.lambda.resize(iterations);
  out.dbar.resize(iterations);
  out.theta_idx.resize(iterations);
  out.pool_index.resize(iterations);
  out.accepted.resize(iterations);

  RngStream rng = RngStream::derive(seed, "stage2");
  Eigen::Index cur = static_cast<Eigen::Index>(rng.uniform_index(S));
  double cur_ll = n_loglik(n_observed, M, pool.psi[cur], pool.dbar[cur]);
  long n_accept = 0;
  for (int k = 0; k < iterations; ++k) {
    const Eigen::Index j = static_cast<Eigen::Index>(rng.uniform_index(S));
    const double prop_ll = n_loglik(n_observed, M, pool.psi[j], pool.dbar[j]);
    bool accepted = false;
    if (std::log(rng.uniform()) < prop_ll - cur_ll) {
      cur = j;
      cur_ll = prop_ll;
      accepted = true;
      ++n_accept;
    }
    out.mu[k] = pool.mu[cur];
    out.theta[k] = pool.theta[cur];
    out.theta_idx[k] = pool.theta_idx[cur];
    out.psi[k] = pool.psi[cur];
    out.dbar[k] = pool.dbar[cur];
    out.lambda[k] = M * pool.psi[cur] * pool.dbar[cur];
    out.pool_index[k] = static_cast<int>(cur);
    out.accepted[k] = accepted ? 1 : 0;
  }
  out.acceptance = static_cast<double>(n_accept) / iterations;
  return out;
}

struct HomogeneousPriors {
  double a_p = 1.0, b_p = 1.0;      // Beta prior for p
  double a_psi = 1.0, b_psi = 1.0;  // Beta prior for psi
};

/// The two-stage procedure specialized to a scalar detection probability:
/// stage 1 is a zero-truncated-binomial MH for p with psi drawn from its
/// prior, stage 2 is the Poisson n-correction, abundance follows.
/// Small enough to check against a brute-force grid posterior.
struct HomogeneousCrFit {
  Eigen::VectorXd p, psi;  // stage-2 draws
  Eigen::VectorXi N;       // abundance draws
  double stage1_acceptance = 0.0;
  double stage2_acceptance = 0.0;
};

inline HomogeneousCrFit fit_homogeneous_cr(const Eigen::VectorXi& y_totals,
                                           int M, int occasions,
                                           const HomogeneousPriors& priors,
                                           int iterations, std::uint64_t seed) {
  const int n = static_cast<int>(y_totals.size());
  if (M <= n) throw validation_error("fit_homogeneous_cr: M must exceed n");
  for (int i = 0; i < n; ++i) {
    if (y_totals[i] < 1 || y_totals[i] > occasions) {
      throw validation_error("fit_homogeneous_cr: totals must lie in [1, J]");
    }
  }

  auto stage1_logpost = [&](double p) {
    double ll = (priors.a_p - 1.0) * std::log(p) +
                (priors.b_p - 1.0) * std::log1p(-p);
    const double log_capture = std::log1p(-std::pow(1.0 - p, occasions));
    for (int i = 0; i < n; ++i) {
      ll += y_totals[i] * std::log(p) +
            (occasions - y_totals[i]) * std::log1p(-p) - log_capture;
    }
    return ll;
  };

  const int K = iterations;
  const int warmup = K / 5;
  RngStream rng = RngStream::derive(seed, "homog-stage1");
  double p = 0.5;
  double cur = stage1_logpost(p);
  double step = 0.1;
  Eigen::VectorXd pool_p(K - warmup), pool_psi(K - warmup), pool_lam(K - warmup);
  int window_accept = 0, window_count = 0;
  long post_accept = 0;
  for (int k = 0; k < K; ++k) {
    double prop = p + step * rng.normal();
    while (prop < 0.0 || prop > 1.0) {  // reflect at the unit interval
      if (prop < 0.0) prop = -prop;
      if (prop > 1.0) prop = 2.0 - prop;
    }
    prop = std::min(std::max(prop, 1e-12), 1.0 - 1e-12);
    bool accepted = false;
    const double prop_ll = stage1_logpost(prop);
    if (std::log(rng.uniform()) < prop_ll - cur) {
      p = prop;
      cur = prop_ll;
      accepted = true;
    }
    const double psi = rng.beta(priors.a_psi, priors.b_psi);
    if (k < warmup) {
      window_accept += accepted ? 1 : 0;
      if (++window_count == 1000) {
        const ProposalScales tuned = tune_proposals(
            {window_count, window_accept / 1000.0, step, 1});
        step = tuned.mu_step;
        window_count = 0;
        window_accept = 0;
      }
    } else {
      post_accept += accepted ? 1 : 0;
      pool_p[k - warmup] = p;
      pool_psi[k - warmup] = psi;
      pool_lam[k - warmup] = M * psi * (1.0 - std::pow(1.0 - p, occasions));
    }
  }

  HomogeneousCrFit fit;
  fit.stage1_acceptance = static_cast<double>(post_accept) / (K - warmup);
  fit.p.resize(K);
  fit.psi.resize(K);
  fit.N.resize(K);

  RngStream rng2 = RngStream::derive(seed, "homog-stage2");
  const Eigen::Index S = pool_p.size();
  auto pois_ll = [&](double lam) {
    if (lam == 0.0) return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return n * std::log(lam) - lam - std::lgamma(n + 1.0);
  };
  Eigen::Index curi = static_cast<Eigen::Index>(rng2.uniform_index(S));
  double cur_ll = pois_ll(pool_lam[curi]);
  long acc2 = 0;
  for (int k = 0; k < K; ++k) {
    const Eigen::Index j = static_cast<Eigen::Index>(rng2.uniform_index(S));
    const double prop_ll = pois_ll(pool_lam[j]);
    if (std::log(rng2.uniform()) < prop_ll - cur_ll) {
      curi = j;
      cur_ll = prop_ll;
      ++acc2;
    }
    fit.p[k] = pool_p[curi];
    fit.psi[k] = pool_psi[curi];
    const double q = std::pow(1.0 - fit.p[k], occasions);
    const double psi_bar = fit.psi[k] * q / (fit.psi[k] * q + 1.0 - fit.psi[k]);
    fit.N[k] = n + rng2.poisson(psi_bar * (M - n));
  }
  fit.stage2_acceptance = static_cast<double>(acc2) / K;
  return fit;
}

}  // namespace gcr
