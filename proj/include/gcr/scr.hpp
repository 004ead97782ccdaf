#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gcr/error.hpp"
#include "gcr/links.hpp"
#include "gcr/posthoc.hpp"
#include "gcr/rng.hpp"
#include "gcr/stage1.hpp"
#include "gcr/types.hpp"

namespace gcr {

struct ScrPriors {
  double alpha_mean = 0.0, alpha_var = 100.0;
  double beta_mean = 0.0, beta_var = 100.0;
  double a_psi = 1.0, b_psi = 1.0;
};

struct ScrSettings {
  int iterations = 20000;
  double warmup_frac = 0.2;
  int thin_centers = 20;  // keep every so-many center states for maps
  double init_step_center = 0.1;
  double init_step_alpha = 0.3;
  double init_step_beta = 10.0;
  bool tune = true;
};

struct ScrChain {
  Eigen::VectorXd alpha, beta, psi;
  Eigen::VectorXi N;
  // thinned center states for the observed individuals (each n x 2),
  // recorded together with alpha/beta at the same iteration
  std::vector<Eigen::MatrixXd> centers;
  std::vector<int> center_iteration;
  int M = 0, n_observed = 0;
  int warmup = 0;
  double accept_center = 0.0, accept_alpha = 0.0, accept_beta = 0.0;
};

namespace scr_detail {

inline double cloglog_inv(double eta) { return -std::expm1(-std::exp(eta)); }

/// Binomial log-likelihood of one individual's capture history given its
/// activity center; an all-zero history integrates J misses at every trap.
inline double member_loglik(const Eigen::VectorXi* y_row, double cx, double cy,
                            double alpha, double beta, const TrapArray& traps,
                            int occasions) {
  double ll = 0.0;
  for (Eigen::Index l = 0; l < traps.count(); ++l) {
    const double dx = cx - traps.locations()(l, 0);
    const double dy = cy - traps.locations()(l, 1);
    const double eta = alpha + beta * (dx * dx + dy * dy);
    const double p = clamp_prob(cloglog_inv(eta));
    const int y = y_row ? (*y_row)[l] : 0;
    if (y > 0) ll += y * std::log(p);
    if (y < occasions) ll += (occasions - y) * std::log1p(-p);
  }
  return ll;
}

inline double noncapture_logprob(double cx, double cy, double alpha,
                                 double beta, const TrapArray& traps,
                                 int occasions) {
  return member_loglik(nullptr, cx, cy, alpha, beta, traps, occasions);
}

inline double draw_psi_conjugate(double a, double b, int sum_z, int M,
                                 RngStream& rng) {
  return rng.beta(a + sum_z, b + (M - sum_z));
}

}  // namespace scr_detail

/// Classical SCR fit with parameter-expanded data augmentation: MH random
/// walks for each activity center (reflected at the buffered-region
/// boundary) and for (alpha, beta), Bernoulli full-conditional for the
/// membership indicators, conjugate Beta update for psi. cloglog link.
inline ScrChain fit_scr(const CaptureData& data, const TrapArray& traps,
                        double buffer, int M, const ScrSettings& settings,
                        const ScrPriors& priors, std::uint64_t seed) {
  if (buffer < 0.0) throw validation_error("fit_scr: buffer must be >= 0");
  const int n = static_cast<int>(data.n());
  if (M <= n) throw validation_error("fit_scr: M must exceed n");
  const int J = data.occasions();
  const double x0 = traps.min_x() - buffer, x1 = traps.max_x() + buffer;
  const double y0 = traps.min_y() - buffer, y1 = traps.max_y() + buffer;
  auto reflect = [](double v, double lo, double hi) {
    while (v < lo || v > hi) {
      if (v < lo) v = 2.0 * lo - v;
      if (v > hi) v = 2.0 * hi - v;
    }
    return v;
  };

  const int K = settings.iterations;
  const int warmup = static_cast<int>(settings.warmup_frac * K);
  RngStream rng = RngStream::derive(seed, "scr");

  std::vector<Eigen::VectorXi> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = data.counts().row(i).transpose();

  // init: detected centers at their detection centroid, others uniform
  Eigen::MatrixXd centers(M, 2);
  for (int i = 0; i < M; ++i) {
    if (i < n) {
      double wx = 0.0, wy = 0.0, wsum = 0.0;
      for (Eigen::Index l = 0; l < traps.count(); ++l) {
        const double w = rows[i][l];
        wx += w * traps.locations()(l, 0);
        wy += w * traps.locations()(l, 1);
        wsum += w;
      }
      centers(i, 0) = wx / wsum;
      centers(i, 1) = wy / wsum;
    } else {
      centers(i, 0) = x0 + (x1 - x0) * rng.uniform();
      centers(i, 1) = y0 + (y1 - y0) * rng.uniform();
    }
  }
  Eigen::VectorXi z(M);
  for (int i = 0; i < M; ++i) z[i] = (i < n) ? 1 : (rng.bernoulli(0.5) ? 1 : 0);
  double alpha = -1.0, beta = -10.0, psi = 0.5;

  Eigen::VectorXd loglik(M);  // member log-likelihood cache at current state
  auto recompute_loglik = [&](int i) {
    loglik[i] = scr_detail::member_loglik(i < n ? &rows[i] : nullptr,
                                          centers(i, 0), centers(i, 1), alpha,
                                          beta, traps, J);
  };
  for (int i = 0; i < M; ++i) recompute_loglik(i);

  ScrChain out;
  out.M = M;
  out.n_observed = n;
  out.warmup = warmup;
  out.alpha.resize(K);
  out.beta.resize(K);
  out.psi.resize(K);
  out.N.resize(K);

  double step_c = settings.init_step_center;
  double step_a = settings.init_step_alpha;
  double step_b = settings.init_step_beta;
  long win_c = 0, win_a = 0, win_b = 0, win_n = 0;
  long post_c = 0, post_a = 0, post_b = 0, post_cn = 0, post_n = 0;

  for (int k = 0; k < K; ++k) {
    // activity centers
    for (int i = 0; i < M; ++i) {
      if (z[i] == 0) {
        // full conditional is the uniform prior
        centers(i, 0) = x0 + (x1 - x0) * rng.uniform();
        centers(i, 1) = y0 + (y1 - y0) * rng.uniform();
        recompute_loglik(i);
        continue;
      }
      const double cx = reflect(centers(i, 0) + step_c * rng.normal(), x0, x1);
      const double cy = reflect(centers(i, 1) + step_c * rng.normal(), y0, y1);
      const double prop = scr_detail::member_loglik(
          i < n ? &rows[i] : nullptr, cx, cy, alpha, beta, traps, J);
      if (std::log(rng.uniform()) < prop - loglik[i]) {
        centers(i, 0) = cx;
        centers(i, 1) = cy;
        loglik[i] = prop;
        ++win_c;
        if (k >= warmup) ++post_c;
      }
      if (k >= warmup) ++post_cn;
    }

    // alpha, beta random walks over the members' joint likelihood
    auto member_total = [&](double a, double b) {
      double tot = 0.0;
      for (int i = 0; i < M; ++i) {
        if (z[i] == 0) continue;
        tot += scr_detail::member_loglik(i < n ? &rows[i] : nullptr,
                                         centers(i, 0), centers(i, 1), a, b,
                                         traps, J);
      }
      return tot;
    };
    double cur_total = 0.0;
    for (int i = 0; i < M; ++i) cur_total += z[i] ? loglik[i] : 0.0;

    {
      const double a_prop = alpha + step_a * rng.normal();
      const double prop_total = member_total(a_prop, beta);
      const double lr = prop_total - cur_total +
                        normal_logpdf(a_prop, priors.alpha_mean, priors.alpha_var) -
                        normal_logpdf(alpha, priors.alpha_mean, priors.alpha_var);
      if (std::log(rng.uniform()) < lr) {
        alpha = a_prop;
        cur_total = prop_total;
        for (int i = 0; i < M; ++i) recompute_loglik(i);
        ++win_a;
        if (k >= warmup) ++post_a;
      }
    }
    {
      const double b_prop = beta + step_b * rng.normal();
      const double prop_total = member_total(alpha, b_prop);
      const double lr = prop_total - cur_total +
                        normal_logpdf(b_prop, priors.beta_mean, priors.beta_var) -
                        normal_logpdf(beta, priors.beta_mean, priors.beta_var);
      if (std::log(rng.uniform()) < lr) {
        beta = b_prop;
        for (int i = 0; i < M; ++i) recompute_loglik(i);
        ++win_b;
        if (k >= warmup) ++post_b;
      }
    }

    // membership indicators for the augmented individuals
    for (int i = n; i < M; ++i) {
      const double q = std::exp(loglik[i]);  // all-zero history probability
      const double prob = psi * q / (psi * q + 1.0 - psi);
      z[i] = rng.bernoulli(prob) ? 1 : 0;
    }
    psi = scr_detail::draw_psi_conjugate(priors.a_psi, priors.b_psi, z.sum(), M,
                                         rng);

    out.alpha[k] = alpha;
    out.beta[k] = beta;
    out.psi[k] = psi;
    out.N[k] = z.sum();
    if (k >= warmup) ++post_n;

    if (k >= warmup && settings.thin_centers > 0 &&
        (k - warmup) % settings.thin_centers == 0) {
      out.centers.push_back(centers.topRows(n));
      out.center_iteration.push_back(k);
    }

    if (settings.tune && k < warmup && ++win_n == 1000) {
      auto adapt = [](double rate, double step) {
        if (rate > 0.45) return step * 1.5;
        if (rate < 0.25) return step / 1.5;
        return step;
      };
      step_c = adapt(static_cast<double>(win_c) / (1000.0 * M), step_c);
      step_a = adapt(win_a / 1000.0, step_a);
      step_b = adapt(win_b / 1000.0, step_b);
      win_c = win_a = win_b = 0;
      win_n = 0;
    }
  }

  out.accept_center = post_cn > 0 ? static_cast<double>(post_c) / post_cn : 0.0;
  out.accept_alpha = post_n > 0 ? static_cast<double>(post_a) / post_n : 0.0;
  out.accept_beta = post_n > 0 ? static_cast<double>(post_b) / post_n : 0.0;
  return out;
}

/// Detection-probability map for one observed individual from the thinned
/// center states: p(s) = cloglog^{-1}(alpha + beta ||c_i - s||^2).
inline PredictionGrid scr_predict_map(const ScrChain& chain, int individual,
                                      const TrapArray& traps, int nx, int ny) {
  if (individual < 0 || individual >= chain.n_observed) {
    throw validation_error("scr_predict_map: individual index out of range");
  }
  if (chain.centers.empty()) {
    throw validation_error("scr_predict_map: chain holds no center states");
  }
  PredictionGrid out;
  out.nx = nx;
  out.ny = ny;
  out.sites = prediction_sites(traps, nx, ny);
  const Eigen::Index P = out.sites.rows();
  const int K = static_cast<int>(chain.centers.size());
  out.mean_p = Eigen::VectorXd::Zero(P);
  out.sd_p = Eigen::VectorXd::Zero(P);
  out.utilization = Eigen::VectorXd::Zero(P);
  out.mean_v = Eigen::VectorXd::Zero(P);
  out.sd_v = Eigen::VectorXd::Zero(P);
  Eigen::VectorXd p(P);
  for (int t = 0; t < K; ++t) {
    const int k = chain.center_iteration[t];
    const double cx = chain.centers[t](individual, 0);
    const double cy = chain.centers[t](individual, 1);
    for (Eigen::Index s = 0; s < P; ++s) {
      const double dx = cx - out.sites(s, 0);
      const double dy = cy - out.sites(s, 1);
      p[s] = scr_detail::cloglog_inv(chain.alpha[k] +
                                     chain.beta[k] * (dx * dx + dy * dy));
    }
    out.mean_p += p;
    out.sd_p += p.cwiseProduct(p);
    out.utilization += p / p.sum();
  }
  out.mean_p /= K;
  out.utilization /= K;
  for (Eigen::Index s = 0; s < P; ++s) {
    const double var =
        K > 1 ? std::max(0.0, (out.sd_p[s] - K * out.mean_p[s] * out.mean_p[s]) /
                                  (K - 1))
              : 0.0;
    out.sd_p[s] = std::sqrt(var);
  }
  return out;
}

}  // namespace gcr
