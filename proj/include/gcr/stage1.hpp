#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gcr/error.hpp"
#include "gcr/marginal.hpp"
#include "gcr/normal.hpp"
#include "gcr/parallel.hpp"
#include "gcr/rng.hpp"
#include "gcr/theta_cache.hpp"
#include "gcr/types.hpp"

namespace gcr {

/// Reflects a proposed grid index back into [0, size). The folding keeps
/// the discrete random-walk kernel symmetric at the edges.
inline int reflect_theta_index(int idx, int size) {
  while (idx < 0 || idx >= size) {
    if (idx < 0) idx = -1 - idx;
    if (idx >= size) idx = 2 * size - 1 - idx;
  }
  return idx;
}

struct ProposalScales {
  double mu_step = 0.5;
  int theta_step = 1;
};

struct PilotStats {
  int length = 0;
  double acceptance = 0.0;
  double mu_step = 0.5;
  int theta_step = 1;
};

/// Scales the random-walk proposals toward a 25-45% acceptance band.
inline ProposalScales tune_proposals(const PilotStats& pilot) {
  if (pilot.length < 1000) {
    throw validation_error("tune_proposals: pilot chain must have >= 1000 draws");
  }
  ProposalScales out{pilot.mu_step, pilot.theta_step};
  if (pilot.acceptance > 0.45) {
    out.mu_step *= 1.5;
    out.theta_step = std::min(3, pilot.theta_step + 1);
  } else if (pilot.acceptance < 0.25) {
    out.mu_step /= 1.5;
    out.theta_step = std::max(1, pilot.theta_step - 1);
  }
  return out;
}

struct Stage1Settings {
  int iterations = 20000;  // per chain
  int chains = 4;
  double warmup_frac = 0.2;
  double initial_mu_step = 0.5;
  int initial_theta_step = 1;
  bool tune = true;
  int tune_window = 1000;
};

/// Stage-1 sample from the temporary posterior over (mu, theta), with psi
/// drawn from its prior each iteration. Chains run independently on
/// derived substreams and the pooled post-warmup draws feed stage 2.
struct Stage1Chain {
  struct ChainStats {
    double acceptance = 0.0;       // post-warmup
    double mu_step = 0.0;          // frozen scale
    int theta_step = 1;
    bool acceptance_warning = false;
  };

  int iterations = 0;
  int warmup = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd theta_values;  // grid echo

  // one column set per chain, each of length `iterations`
  std::vector<Eigen::VectorXd> mu, psi, loglik, dbar;
  std::vector<Eigen::VectorXi> theta_idx;
  std::vector<ChainStats> stats;

  int chains() const { return static_cast<int>(mu.size()); }

  struct Pool {
    Eigen::VectorXd mu, theta, psi, dbar, loglik;
    Eigen::VectorXi theta_idx;
    Eigen::Index size() const { return mu.size(); }
  };

  /// Post-warmup draws in chain-major order.
  Pool pooled() const {
    const int per_chain = iterations - warmup;
    const Eigen::Index total =
        static_cast<Eigen::Index>(per_chain) * chains();
    Pool pool;
    pool.mu.resize(total);
    pool.theta.resize(total);
    pool.psi.resize(total);
    pool.dbar.resize(total);
    pool.loglik.resize(total);
    pool.theta_idx.resize(total);
    Eigen::Index r = 0;
    for (int c = 0; c < chains(); ++c) {
      for (int k = warmup; k < iterations; ++k, ++r) {
        pool.mu[r] = mu[c][k];
        pool.theta_idx[r] = theta_idx[c][k];
        pool.theta[r] = theta_values[theta_idx[c][k]];
        pool.psi[r] = psi[c][k];
        pool.dbar[r] = dbar[c][k];
        pool.loglik[r] = loglik[c][k];
      }
    }
    return pool;
  }
};

inline Stage1Chain run_stage1(const CaptureData& data,
                              const ThetaGridCache& cache,
                              const ModelConfig& config,
                              const Stage1Settings& settings,
                              std::uint64_t seed, int threads = 1) {
  if (data.n() < 1) throw validation_error("stage 1 requires observed individuals");
  if (data.traps() != cache.entries.front().correlation.rows()) {
    throw validation_error("capture data and theta cache disagree on trap count");
  }
  if (settings.iterations < 1 || settings.chains < 1) {
    throw validation_error("stage 1 needs iterations >= 1 and chains >= 1");
  }
  config.validate(data.n());

  const int K = settings.iterations;
  const int G = cache.grid.size();
  Stage1Chain out;
  out.iterations = K;
  out.warmup = static_cast<int>(settings.warmup_frac * K);
  out.seed = seed;
  out.theta_values = cache.grid.values;
  out.mu.resize(settings.chains);
  out.psi.resize(settings.chains);
  out.loglik.resize(settings.chains);
  out.dbar.resize(settings.chains);
  out.theta_idx.resize(settings.chains);
  out.stats.resize(settings.chains);

  const IntegratedLikelihood like(data, config.link);

  parallel_for(settings.chains, threads, [&](int c) {
    RngStream rng = RngStream::derive(seed, "stage1", static_cast<std::uint64_t>(c));
    Eigen::VectorXd& mu_col = out.mu[c];
    Eigen::VectorXd& psi_col = out.psi[c];
    Eigen::VectorXd& ll_col = out.loglik[c];
    Eigen::VectorXd& db_col = out.dbar[c];
    Eigen::VectorXi& th_col = out.theta_idx[c];
    mu_col.resize(K);
    psi_col.resize(K);
    ll_col.resize(K);
    db_col.resize(K);
    th_col.resize(K);

    double mu = config.mu0 + std::sqrt(config.sigma0sq) * rng.normal();
    int ti = static_cast<int>(rng.uniform_index(G));
    IntegratedLikelihood::Eval cur =
        like.evaluate(cache.entries[ti].field_products, mu);
    double cur_target = cur.total + normal_logpdf(mu, config.mu0, config.sigma0sq);

    double step = settings.initial_mu_step;
    int theta_step = settings.initial_theta_step;
    int window_count = 0, window_accept = 0;
    long post_accept = 0;

    for (int k = 0; k < K; ++k) {
      const double mu_prop = mu + step * rng.normal();
      const int mag = 1 + static_cast<int>(rng.uniform_index(theta_step));
      const bool down = rng.uniform() < 0.5;
      const int tj = reflect_theta_index(ti + (down ? -mag : mag), G);
      IntegratedLikelihood::Eval prop =
          like.evaluate(cache.entries[tj].field_products, mu_prop);
      const double prop_target =
          prop.total + normal_logpdf(mu_prop, config.mu0, config.sigma0sq);
      bool accepted = false;
      if (std::log(rng.uniform()) < prop_target - cur_target) {
        mu = mu_prop;
        ti = tj;
        cur = prop;
        cur_target = prop_target;
        accepted = true;
      }
      mu_col[k] = mu;
      th_col[k] = ti;
      psi_col[k] = rng.beta(config.alpha_psi, config.beta_psi);
      ll_col[k] = cur.total;
      db_col[k] = cur.dbar;

      if (k < out.warmup) {
        window_accept += accepted ? 1 : 0;
        if (settings.tune && ++window_count == settings.tune_window &&
            settings.tune_window >= 1000) {
          const ProposalScales tuned = tune_proposals(
              {window_count, static_cast<double>(window_accept) / window_count,
               step, theta_step});
          step = tuned.mu_step;
          theta_step = tuned.theta_step;
          window_count = 0;
          window_accept = 0;
        }
      } else {
        post_accept += accepted ? 1 : 0;
      }
    }

    Stage1Chain::ChainStats& st = out.stats[c];
    st.acceptance = K > out.warmup
                        ? static_cast<double>(post_accept) / (K - out.warmup)
                        : 0.0;
    st.mu_step = step;
    st.theta_step = theta_step;
    st.acceptance_warning = st.acceptance < 0.05 || st.acceptance > 0.95;
  });

  return out;
}

}  // namespace gcr
