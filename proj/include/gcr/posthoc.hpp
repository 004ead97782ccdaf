#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "gcr/error.hpp"
#include "gcr/kriging.hpp"
#include "gcr/links.hpp"
#include "gcr/marginal.hpp"
#include "gcr/parallel.hpp"
#include "gcr/rng.hpp"
#include "gcr/stage2.hpp"
#include "gcr/theta_cache.hpp"
#include "gcr/types.hpp"

namespace gcr {

/// CRN Monte Carlo average of the full-conditional membership probability
/// psi q / (psi q + 1 - psi) for an undetected individual.
inline double psi_bar(const GcrParams& params, const ThetaEntry& entry,
                      int occasions, LinkKind link = LinkKind::probit) {
  const auto& tab = LinkLogTable::get(link);
  const Eigen::MatrixXd& W = entry.field_products;
  const Eigen::Index L = W.rows();
  const Eigen::Index B = W.cols();
  const double psi = params.psi;
  if (psi <= 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const double* col = W.data() + static_cast<std::size_t>(b) * L;
    double s = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) s += tab.log_1mp(params.mu + col[l]);
    const double q = std::exp(occasions * s);
    acc += psi * q / (psi * q + 1.0 - psi);
  }
  return acc / static_cast<double>(B);
}

struct AbundanceDraws {
  Eigen::VectorXd psi_bar;
  Eigen::VectorXi N0, N;
  int n_observed = 0;
  int M = 0;
};

/// Per stage-2 draw: N0 ~ Poisson(psi_bar (M - n)), N = n + N0. The
/// psi_bar integrals depend only on the pooled draw, so they are computed
/// once per distinct provenance index (in parallel) and reused.
inline AbundanceDraws sample_abundance(const Stage2Chain& chain,
                                       const ThetaGridCache& cache,
                                       int occasions, std::uint64_t seed,
                                       int threads = 1,
                                       LinkKind link = LinkKind::probit) {
  const Eigen::Index K = chain.size();
  if (K < 1) throw validation_error("sample_abundance: empty stage-2 chain");
  const int n = chain.n_observed;
  const int M = chain.M;

  // distinct provenance indices, in first-appearance order
  std::map<int, int> slot_of;
  std::vector<Eigen::Index> representative;
  std::vector<int> slot(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    auto [it, fresh] = slot_of.try_emplace(chain.pool_index[k],
                                           static_cast<int>(representative.size()));
    if (fresh) representative.push_back(k);
    slot[k] = it->second;
  }

  Eigen::VectorXd unique_psibar(static_cast<Eigen::Index>(representative.size()));
  parallel_for(static_cast<int>(representative.size()), threads, [&](int u) {
    const Eigen::Index k = representative[u];
    GcrParams params{chain.mu[k], cache.sigma2, chain.theta[k], chain.psi[k]};
    unique_psibar[u] = psi_bar(params, cache.entries.at(chain.theta_idx[k]),
                               occasions, link);
  });

  AbundanceDraws out;
  out.n_observed = n;
  out.M = M;
  out.psi_bar.resize(K);
  out.N0.resize(K);
  out.N.resize(K);
  RngStream rng = RngStream::derive(seed, "abundance");
  for (Eigen::Index k = 0; k < K; ++k) {
    const double pb = unique_psibar[slot[k]];
    out.psi_bar[k] = pb;
    out.N0[k] = rng.poisson(pb * (M - n));
    out.N[k] = n + out.N0[k];
  }
  return out;
}

/// Auxiliary-variable Gibbs sampler for one individual's latent field at
/// the traps, conditional on (mu, theta). The counts are disaggregated
/// into J binary trials per trap; trials are exchangeable so successes are
/// placed first. Works in the spectral basis v = mu 1 + H alpha, where the
/// orthonormal columns of H make the alpha full-conditional precision
/// diagonal: J I + (sigma2 Lambda)^{-1}.
class GibbsFieldSampler {
 public:
  GibbsFieldSampler(const Eigen::VectorXi& y_row, double mu, double sigma2,
                    const ThetaEntry& entry, int occasions)
      : y_(y_row), mu_(mu), occasions_(occasions) {
    const Eigen::Index L = entry.correlation.rows();
    if (y_.size() != L) throw validation_error("gibbs field: row length != L");
    // drop eigenpairs with non-positive scale; keep the reduced basis
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < entry.basis_scale.size(); ++r) {
      const double lam = entry.basis_scale[r];
      if (!std::isfinite(lam)) {
        throw numeric_error("gibbs field: non-finite eigenvalue");
      }
      if (lam > 1e-10) keep.push_back(r);
    }
    basis_.resize(L, static_cast<Eigen::Index>(keep.size()));
    prior_var_.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
      basis_.col(static_cast<Eigen::Index>(r)) = entry.basis.col(keep[r]);
      prior_var_[static_cast<Eigen::Index>(r)] = sigma2 * entry.basis_scale[keep[r]];
    }
    alpha_ = Eigen::VectorXd::Zero(basis_.cols());
    post_sd_.resize(basis_.cols());
    for (Eigen::Index r = 0; r < basis_.cols(); ++r) {
      post_sd_[r] = 1.0 / std::sqrt(occasions_ + 1.0 / prior_var_[r]);
    }
  }

  void step(RngStream& rng) {
    const Eigen::Index L = basis_.rows();
    const Eigen::VectorXd field_mean = basis_ * alpha_;
    Eigen::VectorXd z_sum = Eigen::VectorXd::Zero(L);
    for (Eigen::Index l = 0; l < L; ++l) {
      const double m = mu_ + field_mean[l];
      const int successes = y_[l];
      for (int j = 0; j < occasions_; ++j) {
        const double z = (j < successes) ? rng.tnorm_lower(m, 1.0, 0.0)
                                         : rng.tnorm_upper(m, 1.0, 0.0);
        z_sum[l] += z;
      }
    }
    if (occasions_ > 0) {
      const Eigen::VectorXd rhs =
          basis_.transpose() * (z_sum.array() - occasions_ * mu_).matrix();
      for (Eigen::Index r = 0; r < alpha_.size(); ++r) {
        const double mean = rhs[r] * post_sd_[r] * post_sd_[r];
        alpha_[r] = mean + post_sd_[r] * rng.normal();
      }
    } else {
      for (Eigen::Index r = 0; r < alpha_.size(); ++r) {
        alpha_[r] = std::sqrt(prior_var_[r]) * rng.normal();
      }
    }
  }

  Eigen::VectorXd field() const {
    Eigen::VectorXd v = basis_ * alpha_;
    v.array() += mu_;
    return v;
  }

 private:
  Eigen::VectorXi y_;
  double mu_;
  int occasions_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd prior_var_;
  Eigen::VectorXd post_sd_;
  Eigen::VectorXd alpha_;
};

/// Runs a short Gibbs chain and returns the final field realization.
inline Eigen::VectorXd gibbs_field_individual(const Eigen::VectorXi& y_row,
                                              double mu, double sigma2,
                                              const ThetaEntry& entry,
                                              int occasions, int iterations,
                                              RngStream& rng) {
  GibbsFieldSampler sampler(y_row, mu, sigma2, entry, occasions);
  for (int it = 0; it < iterations; ++it) sampler.step(rng);
  return sampler.field();
}

struct PredictionGrid {
  int nx = 0, ny = 0;
  Coordinates sites;  // row s = iy * nx + ix
  Eigen::VectorXd mean_v, sd_v, mean_p, sd_p, utilization;
};

inline Coordinates prediction_sites(const TrapArray& traps, int nx, int ny) {
  if (nx < 2 || ny < 2) {
    throw validation_error("prediction grid needs at least 2 cells per axis");
  }
  const double x0 = traps.min_x(), x1 = traps.max_x();
  const double y0 = traps.min_y(), y1 = traps.max_y();
  Coordinates sites(static_cast<Eigen::Index>(nx) * ny, 2);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const Eigen::Index s = static_cast<Eigen::Index>(iy) * nx + ix;
      sites(s, 0) = x0 + ix * (x1 - x0) / (nx - 1);
      sites(s, 1) = y0 + iy * (y1 - y0) / (ny - 1);
    }
  }
  return sites;
}

struct MapSettings {
  int grid_nx = 40, grid_ny = 40;
  int thin_to = 1000;
  int gibbs_iterations = 200;
  bool prior_process = false;  // map a hypothetical undetected individual
};

/// Space-use maps for one individual by composition sampling: Gibbs draw
/// of the field at the traps, kriging to the grid, one predictive draw,
/// then probit back-transform. Per-draw substreams are keyed by
/// (individual, chain iteration) so results do not depend on scheduling.
inline PredictionGrid predict_maps(const CaptureData& data, int individual,
                                   const TrapArray& traps,
                                   const Stage2Chain& chain,
                                   const ThetaGridCache& cache,
                                   const ModelConfig& config,
                                   const MapSettings& settings,
                                   std::uint64_t seed, int threads = 1) {
  if (config.link != LinkKind::probit) {
    throw validation_error(
        "predict-maps requires the probit link (auxiliary-variable sampler)");
  }
  if (!settings.prior_process && (individual < 0 || individual >= data.n())) {
    throw validation_error("predict-maps: individual index out of range");
  }
  if (chain.size() < 1) throw validation_error("predict-maps: empty stage-2 chain");

  PredictionGrid out;
  out.nx = settings.grid_nx;
  out.ny = settings.grid_ny;
  out.sites = prediction_sites(traps, settings.grid_nx, settings.grid_ny);
  const Eigen::Index P = out.sites.rows();

  const int retained = static_cast<int>(
      std::min<Eigen::Index>(settings.thin_to, chain.size()));
  std::vector<Eigen::Index> kept(retained);
  for (int t = 0; t < retained; ++t) {
    kept[t] = static_cast<Eigen::Index>(
        (static_cast<long long>(t) * chain.size()) / retained);
  }

  // group retained draws by theta so each kriging system is built once
  std::map<int, std::vector<int>> by_theta;
  for (int t = 0; t < retained; ++t) by_theta[chain.theta_idx[kept[t]]].push_back(t);

  Eigen::MatrixXd v_draws(retained, P);
  Eigen::MatrixXd p_draws(retained, P);
  const Eigen::VectorXi y_row =
      settings.prior_process ? Eigen::VectorXi::Zero(traps.count()).eval()
                             : data.counts().row(individual).transpose().eval();

  for (const auto& [theta_idx, members] : by_theta) {
    const ThetaEntry& entry = cache.entries.at(theta_idx);
    const KrigingOperator op(traps.locations(), out.sites, cache.sigma2,
                             entry.theta);
    parallel_for(static_cast<int>(members.size()), threads, [&](int mi) {
      const int t = members[mi];
      const Eigen::Index k = kept[t];
      RngStream rng = RngStream::derive(seed, "maps",
                                        static_cast<std::uint64_t>(individual),
                                        static_cast<std::uint64_t>(k));
      Eigen::VectorXd v_traps;
      if (settings.prior_process) {
        Eigen::VectorXd eps(traps.count());
        for (Eigen::Index l = 0; l < eps.size(); ++l) eps[l] = rng.normal();
        v_traps = entry.chol * eps;
        v_traps.array() += chain.mu[k];
      } else {
        v_traps = gibbs_field_individual(y_row, chain.mu[k], cache.sigma2,
                                         entry, data.occasions(),
                                         settings.gibbs_iterations, rng);
      }
      const Eigen::VectorXd v_pred = op.draw(chain.mu[k], v_traps, rng);
      v_draws.row(t) = v_pred.transpose();
      for (Eigen::Index s = 0; s < P; ++s) {
        p_draws(t, s) = normal_cdf(v_pred[s]);
      }
    });
  }

  // fixed-order reduction over retained draws
  out.mean_v = Eigen::VectorXd::Zero(P);
  out.sd_v = Eigen::VectorXd::Zero(P);
  out.mean_p = Eigen::VectorXd::Zero(P);
  out.sd_p = Eigen::VectorXd::Zero(P);
  out.utilization = Eigen::VectorXd::Zero(P);
  for (int t = 0; t < retained; ++t) {
    out.mean_v += v_draws.row(t).transpose();
    out.sd_v += v_draws.row(t).cwiseProduct(v_draws.row(t)).transpose();
    out.mean_p += p_draws.row(t).transpose();
    out.sd_p += p_draws.row(t).cwiseProduct(p_draws.row(t)).transpose();
    out.utilization += (p_draws.row(t) / p_draws.row(t).sum()).transpose();
  }
  const double inv_k = 1.0 / retained;
  out.mean_v *= inv_k;
  out.mean_p *= inv_k;
  out.utilization *= inv_k;
  auto finish_sd = [&](Eigen::VectorXd& ssq, const Eigen::VectorXd& mean) {
    for (Eigen::Index s = 0; s < P; ++s) {
      const double var =
          retained > 1
              ? std::max(0.0, (ssq[s] - retained * mean[s] * mean[s]) /
                                  (retained - 1))
              : 0.0;
      ssq[s] = std::sqrt(var);
    }
  };
  finish_sd(out.sd_v, out.mean_v);
  finish_sd(out.sd_p, out.mean_p);
  return out;
}

/// Local maxima of a gridded map after 3x3 box smoothing (edge-aware).
/// Returns site indices of cells strictly greater than all neighbors.
inline std::vector<int> local_maxima(const Eigen::VectorXd& values, int nx,
                                     int ny) {
  if (values.size() != static_cast<Eigen::Index>(nx) * ny) {
    throw validation_error("local_maxima: size mismatch");
  }
  Eigen::VectorXd smooth(values.size());
  auto at = [&](int ix, int iy) { return values[iy * nx + ix]; };
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      double acc = 0.0;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int jx = ix + dx, jy = iy + dy;
          if (jx < 0 || jx >= nx || jy < 0 || jy >= ny) continue;
          acc += at(jx, jy);
          ++cnt;
        }
      }
      smooth[iy * nx + ix] = acc / cnt;
    }
  }
  std::vector<int> maxima;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double c = smooth[iy * nx + ix];
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1 && is_max; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int jx = ix + dx, jy = iy + dy;
          if (jx < 0 || jx >= nx || jy < 0 || jy >= ny) continue;
          if (smooth[jy * nx + jx] >= c) is_max = false;
        }
      }
      if (is_max) maxima.push_back(iy * nx + ix);
    }
  }
  return maxima;
}

}  // namespace gcr
