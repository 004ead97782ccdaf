#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gcr/error.hpp"

namespace gcr {

/// Type-7 (linear interpolation) sample quantile.
inline double quantile(Eigen::VectorXd sorted_ascending, double q) {
  const Eigen::Index n = sorted_ascending.size();
  if (n == 0) throw validation_error("quantile of an empty sample");
  if (q <= 0.0) return sorted_ascending[0];
  if (q >= 1.0) return sorted_ascending[n - 1];
  const double h = (n - 1) * q;
  const Eigen::Index lo = static_cast<Eigen::Index>(h);
  const double f = h - lo;
  if (lo + 1 >= n) return sorted_ascending[n - 1];
  return sorted_ascending[lo] * (1.0 - f) + sorted_ascending[lo + 1] * f;
}

/// Effective sample size via Geyer's initial monotone positive sequence.
/// Constant chains report n.
inline double effective_sample_size(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n == 0) throw validation_error("ess of an empty chain");
  if (n < 4) return static_cast<double>(n);
  const double mean = x.mean();
  const Eigen::VectorXd c = x.array() - mean;
  const double var = c.squaredNorm() / n;
  if (var == 0.0) return static_cast<double>(n);
  const Eigen::Index max_lag = std::min<Eigen::Index>(n - 2, 2000);
  auto gamma = [&](Eigen::Index lag) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t + lag < n; ++t) acc += c[t] * c[t + lag];
    return acc / n;
  };
  double sum_pairs = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index lag = 1; lag + 1 <= max_lag; lag += 2) {
    const double pair = gamma(lag) + gamma(lag + 1);
    if (pair <= 0.0) break;
    const double monotone = std::min(pair, prev_pair);
    sum_pairs += monotone;
    prev_pair = monotone;
  }
  const double tau = 1.0 + 2.0 * sum_pairs / var;
  return std::max(1.0, n / std::max(tau, 1.0));
}

struct ParamSummary {
  std::string name;
  Eigen::Index count = 0;
  double mean = 0.0, sd = 0.0;
  double q2_5 = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, q97_5 = 0.0;
  double ess = 0.0;
};

inline ParamSummary summarize_vector(const std::string& name,
                                     const Eigen::VectorXd& x) {
  if (x.size() == 0) {
    throw validation_error("cannot summarize empty chain '" + name + "'");
  }
  ParamSummary s;
  s.name = name;
  s.count = x.size();
  s.mean = x.mean();
  if (x.size() > 1) {
    s.sd = std::sqrt((x.array() - s.mean).square().sum() / (x.size() - 1));
  }
  Eigen::VectorXd sorted = x;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  s.q2_5 = quantile(sorted, 0.025);
  s.q25 = quantile(sorted, 0.25);
  s.median = quantile(sorted, 0.5);
  s.q75 = quantile(sorted, 0.75);
  s.q97_5 = quantile(sorted, 0.975);
  s.ess = effective_sample_size(x);
  return s;
}

inline std::string render_summary_table(const std::vector<ParamSummary>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "parameter" << std::right
      << std::setw(10) << "mean" << std::setw(10) << "sd" << std::setw(10)
      << "2.5%" << std::setw(10) << "25%" << std::setw(10) << "50%"
      << std::setw(10) << "75%" << std::setw(10) << "97.5%" << std::setw(10)
      << "ess" << '\n';
  out << std::string(94, '-') << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(14) << r.name << std::right << std::fixed
        << std::setprecision(3) << std::setw(10) << r.mean << std::setw(10)
        << r.sd << std::setw(10) << r.q2_5 << std::setw(10) << r.q25
        << std::setw(10) << r.median << std::setw(10) << r.q75 << std::setw(10)
        << r.q97_5 << std::setprecision(0) << std::setw(10) << r.ess << '\n';
    out.unsetf(std::ios::fixed);
  }
  return out.str();
}

}  // namespace gcr
