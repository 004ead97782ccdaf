#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "gcr/covariance.hpp"
#include "gcr/error.hpp"
#include "gcr/rng.hpp"
#include "gcr/theta_cache.hpp"
#include "gcr/types.hpp"

namespace gcr {

// Kriging solves start from a much smaller jitter than the cache
// factorizations so interpolation at training sites stays exact to ~1e-10;
// the escalation ladder still ends at the same 1e-4 ceiling.
inline constexpr double kKrigingJitter = 1e-10;

struct KrigingResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::VectorXd variances() const {
    return cov.diagonal().cwiseMax(0.0);
  }
};

/// Exact Gaussian conditional of the latent field at prediction sites given
/// values at the observation sites. Factorized solves throughout.
inline KrigingResult krige(const Coordinates& obs_sites,
                           const Eigen::VectorXd& v_obs, double mu,
                           double sigma2, double theta,
                           const Coordinates& pred_sites,
                           bool want_cov = true) {
  if (v_obs.size() != obs_sites.rows()) {
    throw validation_error("krige: observation size mismatch");
  }
  Eigen::MatrixXd obs_cov = build_covariance(obs_sites, obs_sites, sigma2, theta);
  Eigen::LLT<Eigen::MatrixXd> llt =
      cholesky_with_jitter(obs_cov, sigma2, kKrigingJitter, nullptr,
                           "kriging system");
  const Eigen::MatrixXd cross =
      build_covariance(pred_sites, obs_sites, sigma2, theta);
  KrigingResult out;
  Eigen::VectorXd centered = v_obs.array() - mu;
  out.mean = cross * llt.solve(centered);
  out.mean.array() += mu;
  if (want_cov) {
    out.cov = build_covariance(pred_sites, pred_sites, sigma2, theta);
    out.cov.noalias() -= cross * llt.solve(cross.transpose());
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  }
  return out;
}

/// Reusable kriging system for composition sampling: many conditional draws
/// at a fixed (geometry, sigma2, theta) with varying mu and observed field.
class KrigingOperator {
 public:
  KrigingOperator(const Coordinates& obs_sites, const Coordinates& pred_sites,
                  double sigma2, double theta) {
    Eigen::MatrixXd obs_cov =
        build_covariance(obs_sites, obs_sites, sigma2, theta);
    Eigen::LLT<Eigen::MatrixXd> llt =
        cholesky_with_jitter(obs_cov, sigma2, kKrigingJitter, nullptr,
                             "kriging system");
    const Eigen::MatrixXd cross =
        build_covariance(pred_sites, obs_sites, sigma2, theta);
    gain_ = llt.solve(cross.transpose()).transpose();
    cov_ = build_covariance(pred_sites, pred_sites, sigma2, theta);
    cov_.noalias() -= gain_ * cross.transpose();
    cov_ = 0.5 * (cov_ + cov_.transpose()).eval();
    Eigen::LLT<Eigen::MatrixXd> pred_llt =
        cholesky_with_jitter(cov_, sigma2, kKrigingJitter, nullptr,
                             "predictive covariance");
    chol_ = pred_llt.matrixL();
  }

  Eigen::VectorXd mean(double mu, const Eigen::VectorXd& v_obs) const {
    Eigen::VectorXd centered = v_obs.array() - mu;
    Eigen::VectorXd m = gain_ * centered;
    m.array() += mu;
    return m;
  }

  Eigen::VectorXd draw(double mu, const Eigen::VectorXd& v_obs,
                       RngStream& rng) const {
    Eigen::VectorXd z(chol_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return mean(mu, v_obs) + chol_ * z;
  }

  const Eigen::MatrixXd& predictive_cov() const { return cov_; }

 private:
  Eigen::MatrixXd gain_;  // cross * inv(obs_cov)
  Eigen::MatrixXd cov_;   // predictive covariance
  Eigen::MatrixXd chol_;
};

}  // namespace gcr
