#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gcr/error.hpp"
#include "gcr/links.hpp"
#include "gcr/rng.hpp"
#include "gcr/types.hpp"

namespace gcr {

struct SimConfig {
  int M = 200;
  double psi = 0.2;
  int trap_nx = 8, trap_ny = 8;
  double trap_spacing = 1.0 / 7.0;
  Coordinates explicit_traps;  // overrides the grid when non-empty
  double buffer = 0.5;
  double lambda_ac = 0.5;      // zero-truncated Poisson intensity for centers
  double det_alpha = -1.0;
  double det_beta = -50.0;
  int occasions = 5;

  void validate() const {
    if (M < 1) throw validation_error("sim: M must be >= 1");
    if (!(psi > 0.0 && psi < 1.0)) throw validation_error("sim: psi must be in (0,1)");
    if (!(lambda_ac > 0.0)) throw validation_error("sim: lambda_ac must be positive");
    if (buffer < 0.0) throw validation_error("sim: buffer must be >= 0");
    if (!(det_beta < 0.0)) {
      throw validation_error("sim: det_beta must be negative (decaying detection)");
    }
    if (occasions < 1) throw validation_error("sim: occasions must be >= 1");
  }
};

struct SimTruth {
  Eigen::VectorXi z;
  std::vector<Coordinates> centers;  // per superpopulation individual
  Eigen::MatrixXd p_true;            // M x L
  int N_true = 0;
  std::vector<int> observed_index;   // superpopulation index per data row
};

struct SimResult {
  TrapArray traps;
  CaptureData data;
  SimTruth truth;
};

/// Zero-truncated Poisson draw by inverse CDF on the truncated support.
inline int ztpois_sample(double lambda, RngStream& rng) {
  if (!(lambda > 0.0)) throw validation_error("ztpois: lambda must be positive");
  const double u = rng.uniform();
  double pmf = lambda * std::exp(-lambda) / (-std::expm1(-lambda));
  double cum = pmf;
  int k = 1;
  while (u > cum && k < 1000000) {
    ++k;
    pmf *= lambda / k;
    cum += pmf;
  }
  return k;
}

/// Detection probability at a trap: maximum of the cloglog kernel over all
/// activity centers, p = 1 - exp(-exp(alpha + beta ||c - x||^2)).
inline double multi_center_detection(const Coordinates& centers,
                                     double trap_x, double trap_y,
                                     double alpha, double beta) {
  double best_eta = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const double dx = centers(c, 0) - trap_x;
    const double dy = centers(c, 1) - trap_y;
    const double eta = alpha + beta * (dx * dx + dy * dy);
    if (eta > best_eta) best_eta = eta;
  }
  return -std::expm1(-std::exp(best_eta));
}

inline SimResult simulate(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  TrapArray traps =
      config.explicit_traps.rows() > 0
          ? TrapArray(config.explicit_traps)
          : TrapArray::grid(config.trap_nx, config.trap_ny, config.trap_spacing);
  const Eigen::Index L = traps.count();
  const double x0 = traps.min_x() - config.buffer;
  const double x1 = traps.max_x() + config.buffer;
  const double y0 = traps.min_y() - config.buffer;
  const double y1 = traps.max_y() + config.buffer;

  RngStream rng = RngStream::derive(seed, "simulate");
  SimTruth truth;
  truth.z.resize(config.M);
  truth.centers.resize(config.M);
  truth.p_true.resize(config.M, L);

  Eigen::MatrixXi counts(config.M, L);
  for (int i = 0; i < config.M; ++i) {
    truth.z[i] = rng.bernoulli(config.psi) ? 1 : 0;
    const int n_centers = ztpois_sample(config.lambda_ac, rng);
    Coordinates c(n_centers, 2);
    for (int j = 0; j < n_centers; ++j) {
      c(j, 0) = x0 + (x1 - x0) * rng.uniform();
      c(j, 1) = y0 + (y1 - y0) * rng.uniform();
    }
    truth.centers[i] = c;
    for (Eigen::Index l = 0; l < L; ++l) {
      truth.p_true(i, l) = multi_center_detection(
          c, traps.locations()(l, 0), traps.locations()(l, 1),
          config.det_alpha, config.det_beta);
      counts(i, l) = truth.z[i]
                         ? rng.binomial(config.occasions, truth.p_true(i, l))
                         : 0;
    }
  }
  truth.N_true = truth.z.sum();

  std::vector<int> observed;
  for (int i = 0; i < config.M; ++i) {
    if (counts.row(i).sum() > 0) observed.push_back(i);
  }
  Eigen::MatrixXi obs_counts(static_cast<Eigen::Index>(observed.size()), L);
  std::vector<std::string> ids;
  for (std::size_t r = 0; r < observed.size(); ++r) {
    obs_counts.row(static_cast<Eigen::Index>(r)) = counts.row(observed[r]);
    ids.push_back(std::to_string(r + 1));
  }
  truth.observed_index = observed;
  if (observed.empty()) {
    throw numeric_error("simulation produced no detected individuals; "
                        "adjust psi, detection or seed");
  }
  return SimResult{std::move(traps),
                   CaptureData(std::move(obs_counts), config.occasions, ids),
                   std::move(truth)};
}

}  // namespace gcr
