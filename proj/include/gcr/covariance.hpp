#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "gcr/error.hpp"
#include "gcr/types.hpp"

namespace gcr {

/// Squared-exponential covariance between two site sets:
/// entry (a,b) = sigma2 * exp(-||x_a - x_b||^2 / theta^2).
inline Eigen::MatrixXd build_covariance(const Coordinates& sites_a,
                                        const Coordinates& sites_b,
                                        double sigma2, double theta) {
  if (!(theta > 0.0) || !(sigma2 > 0.0)) {
    throw validation_error("build_covariance: theta and sigma2 must be positive");
  }
  const double inv_t2 = 1.0 / (theta * theta);
  Eigen::MatrixXd cov(sites_a.rows(), sites_b.rows());
  for (Eigen::Index a = 0; a < sites_a.rows(); ++a) {
    for (Eigen::Index b = 0; b < sites_b.rows(); ++b) {
      const double d2 = (sites_a.row(a) - sites_b.row(b)).squaredNorm();
      cov(a, b) = sigma2 * std::exp(-d2 * inv_t2);
    }
  }
  return cov;
}

/// Discrete support for the range parameter: equally spaced values from
/// max(D)/20 to max(D)/2.
struct ThetaGrid {
  Eigen::VectorXd values;
  double d_max = 0.0;

  static ThetaGrid over_traps(const TrapArray& traps, int size) {
    if (size < 2) throw validation_error("theta grid needs at least 2 points");
    ThetaGrid g;
    g.d_max = traps.max_distance();
    if (!(g.d_max > 0.0)) {
      throw validation_error("theta grid requires at least two distinct traps");
    }
    const double lo = g.d_max / 20.0;
    const double hi = g.d_max / 2.0;
    g.values.resize(size);
    for (int i = 0; i < size; ++i) {
      g.values[i] = lo + i * (hi - lo) / (size - 1);
    }
    return g;
  }

  int size() const { return static_cast<int>(values.size()); }

  int closest_index(double theta) const {
    int best = 0;
    double best_d = std::abs(values[0] - theta);
    for (int i = 1; i < size(); ++i) {
      const double d = std::abs(values[i] - theta);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }
};

}  // namespace gcr
