#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "gcr/error.hpp"
#include "gcr/normal.hpp"

namespace gcr {

enum class LinkKind { probit, logit, cloglog };

inline std::string to_string(LinkKind k) {
  switch (k) {
    case LinkKind::probit: return "probit";
    case LinkKind::logit: return "logit";
    case LinkKind::cloglog: return "cloglog";
  }
  return "?";
}

inline LinkKind parse_link(std::string_view s) {
  if (s == "probit") return LinkKind::probit;
  if (s == "logit") return LinkKind::logit;
  if (s == "cloglog") return LinkKind::cloglog;
  throw validation_error("unknown link '" + std::string(s) +
                         "' (expected probit, logit or cloglog)");
}

// Probabilities are clamped away from {0,1} before any log in the Monte
// Carlo averages so tiny likelihoods stay finite.
inline constexpr double kProbFloor = 1e-12;

inline double clamp_prob(double p) {
  if (p < kProbFloor) return kProbFloor;
  if (p > 1.0 - kProbFloor) return 1.0 - kProbFloor;
  return p;
}

inline double link_inverse_scalar(double v, LinkKind k) {
  if (!std::isfinite(v)) {
    throw validation_error("link_inverse: non-finite input");
  }
  switch (k) {
    case LinkKind::probit:
      return normal_cdf(v);
    case LinkKind::logit:
      return 1.0 / (1.0 + std::exp(-v));
    case LinkKind::cloglog:
      return -std::expm1(-std::exp(v));
  }
  return 0.0;
}

/// 1 - g^{-1}(v) evaluated without cancellation near p = 1.
inline double link_survival_scalar(double v, LinkKind k) {
  if (!std::isfinite(v)) {
    throw validation_error("link_survival: non-finite input");
  }
  switch (k) {
    case LinkKind::probit:
      return normal_cdf(-v);
    case LinkKind::logit:
      return 1.0 / (1.0 + std::exp(v));
    case LinkKind::cloglog:
      return std::exp(-std::exp(v));
  }
  return 0.0;
}

inline Eigen::VectorXd link_inverse(const Eigen::VectorXd& v, LinkKind k) {
  Eigen::VectorXd p(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    p[i] = link_inverse_scalar(v[i], k);
  }
  return p;
}

inline double log_binom_coeff(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// Sum over traps of log Binom(y_l; J, p_l). Degenerate p in {0,1} yields
/// -inf when contradicted by y, which is a value, not an error.
inline double binom_count_loglik(const Eigen::VectorXi& y,
                                 const Eigen::VectorXd& p, int occasions) {
  if (y.size() != p.size()) {
    throw validation_error("binom_count_loglik: length mismatch");
  }
  double total = 0.0;
  for (Eigen::Index l = 0; l < y.size(); ++l) {
    const int yl = y[l];
    if (yl < 0 || yl > occasions) {
      throw validation_error("binom_count_loglik: count outside [0, J]");
    }
    total += log_binom_coeff(occasions, yl);
    if (yl > 0) total += yl * std::log(p[l]);
    if (yl < occasions) total += (occasions - yl) * std::log1p(-p[l]);
  }
  return total;
}

/// Probability of an all-zero capture history, prod_l (1-p_l)^J.
inline double noncapture_prob(const Eigen::VectorXd& p, int occasions) {
  double acc = 0.0;
  for (Eigen::Index l = 0; l < p.size(); ++l) {
    if (p[l] >= 1.0) return 0.0;
    acc += std::log1p(-p[l]);
  }
  return std::exp(occasions * acc);
}

// Piecewise-linear tables of log g^{-1}(v) and log(1 - g^{-1}(v)) with the
// probability clamp baked in. The marginal-likelihood estimators evaluate
// these hundreds of millions of times; the table error (< 1e-6 on the log
// scale) is far below the Monte Carlo noise they feed.
class LinkLogTable {
 public:
  static const LinkLogTable& get(LinkKind k) {
    static const LinkLogTable probit(LinkKind::probit, -7.5, 7.5);
    static const LinkLogTable logit(LinkKind::logit, -28.5, 28.5);
    static const LinkLogTable cloglog(LinkKind::cloglog, -28.5, 3.8);
    switch (k) {
      case LinkKind::probit: return probit;
      case LinkKind::logit: return logit;
      case LinkKind::cloglog: return cloglog;
    }
    return probit;
  }

  double log_p(double v) const { return eval(log_p_, v); }
  double log_1mp(double v) const { return eval(log_1mp_, v); }

 private:
  LinkLogTable(LinkKind k, double lo, double hi) : lo_(lo), hi_(hi) {
    const int cells = 1 << 16;
    inv_h_ = cells / (hi_ - lo_);
    log_p_.resize(cells + 1);
    log_1mp_.resize(cells + 1);
    for (int i = 0; i <= cells; ++i) {
      const double v = lo_ + i * (hi_ - lo_) / cells;
      log_p_[i] = std::log(clamp_prob(link_inverse_scalar(v, k)));
      log_1mp_[i] = std::log(clamp_prob(link_survival_scalar(v, k)));
    }
  }

  double eval(const std::vector<double>& tab, double v) const {
    double u = (v - lo_) * inv_h_;
    if (u <= 0.0) return tab.front();
    const double top = static_cast<double>(tab.size() - 1);
    if (u >= top) return tab.back();
    const int i = static_cast<int>(u);
    const double f = u - i;
    return tab[i] + f * (tab[i + 1] - tab[i]);
  }

  double lo_, hi_, inv_h_;
  std::vector<double> log_p_, log_1mp_;
};

}  // namespace gcr
