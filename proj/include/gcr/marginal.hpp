#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "gcr/error.hpp"
#include "gcr/links.hpp"
#include "gcr/theta_cache.hpp"
#include "gcr/types.hpp"

namespace gcr {

/// Monte Carlo estimate of the per-(mu, theta) capture probability
/// E_v[1 - prod_l (1 - p_l)^J] over the cached CRN field draws. Shared by
/// every individual, and exactly monotone in mu because the fields shift
/// additively.
inline double capture_prob_from_products(const Eigen::MatrixXd& field_products,
                                         double mu, int occasions,
                                         LinkKind link = LinkKind::probit) {
  const auto& tab = LinkLogTable::get(link);
  const Eigen::Index L = field_products.rows();
  const Eigen::Index B = field_products.cols();
  double acc = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const double* col = field_products.data() + static_cast<std::size_t>(b) * L;
    double s = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) s += tab.log_1mp(mu + col[l]);
    acc += 1.0 - std::exp(occasions * s);
  }
  return acc / static_cast<double>(B);
}

inline double capture_prob(const ThetaEntry& entry, double mu, int occasions,
                           LinkKind link = LinkKind::probit) {
  return capture_prob_from_products(entry.field_products, mu, occasions, link);
}

/// Per-CRN-draw all-zero-history probabilities q_b = prod_l (1-p_l)^J for
/// the first `count` cached draws.
inline Eigen::VectorXd noncapture_draws(const ThetaEntry& entry, double mu,
                                        int occasions, int count,
                                        LinkKind link = LinkKind::probit) {
  const auto& tab = LinkLogTable::get(link);
  const Eigen::MatrixXd& W = entry.field_products;
  if (count > W.cols()) {
    throw validation_error("noncapture_draws: count exceeds cached CRN draws");
  }
  const Eigen::Index L = W.rows();
  Eigen::VectorXd q(count);
  for (int b = 0; b < count; ++b) {
    const double* col = W.data() + static_cast<std::size_t>(b) * L;
    double s = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) s += tab.log_1mp(mu + col[l]);
    q[b] = std::exp(occasions * s);
  }
  return q;
}

/// Batch evaluator for the integrated (field-marginalized, detection-
/// conditioned) data model. One evaluation serves a whole MH proposal:
/// it returns every individual's log-likelihood plus the shared capture
/// probability, all from the same CRN draws so the result is a
/// deterministic function of (mu, theta).
class IntegratedLikelihood {
 public:
  struct Eval {
    Eigen::VectorXd loglik;  // per individual
    double total = 0.0;
    double dbar = 0.0;  // capture probability at this (mu, theta)
  };

  IntegratedLikelihood(const Eigen::MatrixXi& counts, int occasions,
                       LinkKind link = LinkKind::probit)
      : occasions_(occasions), link_(link) {
    const Eigen::Index n = counts.rows();
    const Eigen::Index L = counts.cols();
    log_binom_const_.resize(n);
    detections_.resize(n);
    std::vector<char> used(L, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = 0.0;
      int row_sum = 0;
      for (Eigen::Index l = 0; l < L; ++l) {
        const int y = counts(i, l);
        if (y < 0 || y > occasions_) {
          throw validation_error("count outside [0, J]");
        }
        c += log_binom_coeff(occasions_, y);
        row_sum += y;
        if (y > 0) {
          detections_[i].push_back({static_cast<int>(l), y});
          used[l] = 1;
        }
      }
      if (row_sum == 0) {
        throw validation_error(
            "integrated likelihood requires at least one detection per "
            "individual (row " +
            std::to_string(i + 1) + " is all zero)");
      }
      log_binom_const_[i] = c;
    }
    for (Eigen::Index l = 0; l < L; ++l) {
      if (used[l]) detected_traps_.push_back(static_cast<int>(l));
    }
    trap_slot_.assign(L, -1);
    for (std::size_t r = 0; r < detected_traps_.size(); ++r) {
      trap_slot_[detected_traps_[r]] = static_cast<int>(r);
    }
  }

  explicit IntegratedLikelihood(const CaptureData& data,
                                LinkKind link = LinkKind::probit)
      : IntegratedLikelihood(data.counts(), data.occasions(), link) {}

  Eval evaluate(const Eigen::MatrixXd& field_products, double mu) const {
    const auto& tab = LinkLogTable::get(link_);
    const Eigen::Index L = field_products.rows();
    const Eigen::Index B = field_products.cols();
    const Eigen::Index n = log_binom_const_.size();
    const int ndet = static_cast<int>(detected_traps_.size());

    // s_b = sum_l log(1-p_lb); T(b, r) = log p - log(1-p) at detected traps.
    Eigen::ArrayXd s = Eigen::ArrayXd::Zero(B);
    Eigen::MatrixXd odds(B, ndet);
    for (Eigen::Index b = 0; b < B; ++b) {
      const double* col = field_products.data() + static_cast<std::size_t>(b) * L;
      double acc = 0.0;
      for (Eigen::Index l = 0; l < L; ++l) acc += tab.log_1mp(mu + col[l]);
      s[b] = acc;
      for (int r = 0; r < ndet; ++r) {
        const double v = mu + col[detected_traps_[r]];
        odds(b, r) = tab.log_p(v) - tab.log_1mp(v);
      }
    }

    Eval out;
    out.loglik.resize(n);
    const Eigen::ArrayXd base = static_cast<double>(occasions_) * s;
    out.dbar = (1.0 - base.exp()).mean();
    const double log_dbar = std::log(out.dbar);
    const double log_B = std::log(static_cast<double>(B));
    Eigen::ArrayXd ll(B);
    for (Eigen::Index i = 0; i < n; ++i) {
      ll = base;
      for (const auto& [trap, y] : detections_[i]) {
        ll += static_cast<double>(y) * odds.col(trap_slot_[trap]).array();
      }
      const double m = ll.maxCoeff();
      const double lse = m + std::log((ll - m).exp().sum());
      out.loglik[i] = log_binom_const_[i] + lse - log_B - log_dbar;
    }
    out.total = out.loglik.sum();
    return out;
  }

  int occasions() const { return occasions_; }
  LinkKind link() const { return link_; }

 private:
  int occasions_;
  LinkKind link_;
  Eigen::VectorXd log_binom_const_;
  std::vector<std::vector<std::pair<int, int>>> detections_;  // (trap, count)
  std::vector<int> detected_traps_;
  std::vector<int> trap_slot_;
};

/// log [y_i | mu, sigma2, theta, y_i'1 > 0] for one individual.
inline double integrated_loglik_individual(const Eigen::VectorXi& y,
                                           const ThetaEntry& entry, double mu,
                                           int occasions,
                                           LinkKind link = LinkKind::probit) {
  if (y.sum() <= 0) {
    throw validation_error(
        "integrated_loglik_individual: capture history is all zero");
  }
  Eigen::MatrixXi counts(1, y.size());
  counts.row(0) = y.transpose();
  IntegratedLikelihood like(counts, occasions, link);
  return like.evaluate(entry.field_products, mu).loglik[0];
}

/// Conditional model for the observed count n: Poisson with rate
/// lambda = M psi dbar (the expected intensity under exchangeable fields).
inline double n_loglik(int n, int M, double psi, double dbar) {
  if (n < 0 || n > M) throw validation_error("n_loglik: n outside [0, M]");
  const double lambda = M * psi * dbar;
  if (lambda == 0.0) return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return n * std::log(lambda) - lambda - std::lgamma(n + 1.0);
}

/// Exact Poisson-binomial pmf over heterogeneous success probabilities,
/// dynamic-programming convolution.
inline Eigen::VectorXd poisbinom_pmf(const Eigen::VectorXd& probs) {
  const Eigen::Index m = probs.size();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(m + 1);
  f[0] = 1.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = probs[i];
    if (r < 0.0 || r > 1.0) {
      throw validation_error("poisbinom_pmf: probability outside [0,1]");
    }
    for (Eigen::Index k = i + 1; k >= 1; --k) {
      f[k] = f[k] * (1.0 - r) + f[k - 1] * r;
    }
    f[0] *= (1.0 - r);
  }
  return f;
}

/// Validation alternative to n_loglik: exact Poisson-binomial over M
/// per-individual capture probabilities psi (1 - q_i), with q_i the
/// noncapture probabilities of M latent-field draws.
inline double n_loglik_poisbinom(int n, int M, double psi,
                                 const Eigen::VectorXd& noncapture_q) {
  if (noncapture_q.size() != M) {
    throw validation_error("n_loglik_poisbinom: need one q draw per individual");
  }
  if (n < 0 || n > M) throw validation_error("n outside [0, M]");
  Eigen::VectorXd r = psi * (1.0 - noncapture_q.array());
  const Eigen::VectorXd pmf = poisbinom_pmf(r);
  return std::log(pmf[n]);
}

}  // namespace gcr
