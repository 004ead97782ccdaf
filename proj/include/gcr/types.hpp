#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gcr/error.hpp"
#include "gcr/links.hpp"

namespace gcr {

using Coordinates = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Detector array. Immutable after construction; the pairwise distance
/// matrix is computed once and shared read-only by all workers.
class TrapArray {
 public:
  explicit TrapArray(Coordinates locations) : locations_(std::move(locations)) {
    const Eigen::Index L = locations_.rows();
    if (L < 1) throw validation_error("trap array must contain at least one trap");
    if (!locations_.allFinite()) {
      throw validation_error("trap coordinates must be finite");
    }
    distances_.resize(L, L);
    max_distance_ = 0.0;
    for (Eigen::Index a = 0; a < L; ++a) {
      distances_(a, a) = 0.0;
      for (Eigen::Index b = a + 1; b < L; ++b) {
        const double d = (locations_.row(a) - locations_.row(b)).norm();
        if (d == 0.0) {
          throw validation_error("traps " + std::to_string(a + 1) + " and " +
                                 std::to_string(b + 1) +
                                 " share identical coordinates");
        }
        distances_(a, b) = d;
        distances_(b, a) = d;
        if (d > max_distance_) max_distance_ = d;
      }
    }
  }

  static TrapArray grid(int nx, int ny, double spacing, double x0 = 0.0,
                        double y0 = 0.0) {
    if (nx < 1 || ny < 1 || spacing <= 0.0) {
      throw validation_error("trap grid needs nx,ny >= 1 and spacing > 0");
    }
    Coordinates locs(static_cast<Eigen::Index>(nx) * ny, 2);
    Eigen::Index r = 0;
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix, ++r) {
        locs(r, 0) = x0 + ix * spacing;
        locs(r, 1) = y0 + iy * spacing;
      }
    }
    return TrapArray(std::move(locs));
  }

  Eigen::Index count() const { return locations_.rows(); }
  const Coordinates& locations() const { return locations_; }
  const Eigen::MatrixXd& distances() const { return distances_; }
  double max_distance() const { return max_distance_; }

  double min_x() const { return locations_.col(0).minCoeff(); }
  double max_x() const { return locations_.col(0).maxCoeff(); }
  double min_y() const { return locations_.col(1).minCoeff(); }
  double max_y() const { return locations_.col(1).maxCoeff(); }

 private:
  Coordinates locations_;
  Eigen::MatrixXd distances_;
  double max_distance_;
};

/// Per-individual per-trap detection counts over J occasions. Rows are the
/// observed individuals; every row must record at least one detection.
class CaptureData {
 public:
  CaptureData(Eigen::MatrixXi counts, int occasions,
              std::vector<std::string> ids = {})
      : counts_(std::move(counts)), occasions_(occasions), ids_(std::move(ids)) {
    if (occasions_ < 0) throw validation_error("occasions J must be >= 0");
    for (Eigen::Index i = 0; i < counts_.rows(); ++i) {
      int row_sum = 0;
      for (Eigen::Index l = 0; l < counts_.cols(); ++l) {
        const int y = counts_(i, l);
        if (y < 0 || y > occasions_) {
          throw validation_error("capture count " + std::to_string(y) +
                                 " for individual " + id_or_index(i) +
                                 " is outside [0, J=" + std::to_string(occasions_) +
                                 "]");
        }
        row_sum += y;
      }
      if (row_sum == 0) {
        throw validation_error("individual " + id_or_index(i) +
                               " has an all-zero capture history");
      }
    }
    if (ids_.empty()) {
      ids_.reserve(counts_.rows());
      for (Eigen::Index i = 0; i < counts_.rows(); ++i) {
        ids_.push_back(std::to_string(i + 1));
      }
    } else if (static_cast<Eigen::Index>(ids_.size()) != counts_.rows()) {
      throw validation_error("individual id list does not match row count");
    }
  }

  Eigen::Index n() const { return counts_.rows(); }
  Eigen::Index traps() const { return counts_.cols(); }
  int occasions() const { return occasions_; }
  const Eigen::MatrixXi& counts() const { return counts_; }
  const std::vector<std::string>& ids() const { return ids_; }

  Eigen::Index row_of(const std::string& id) const {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ids_.size()); ++i) {
      if (ids_[i] == id) return i;
    }
    throw validation_error("unknown individual id '" + id + "'");
  }

 private:
  std::string id_or_index(Eigen::Index i) const {
    return ids_.empty() ? std::to_string(i + 1) : ids_[i];
  }

  Eigen::MatrixXi counts_;
  int occasions_;
  std::vector<std::string> ids_;
};

struct ModelConfig {
  int M = 200;
  double mu0 = 0.0;
  double sigma0sq = 4.0;
  double alpha_psi = 1.0;
  double beta_psi = 1.0;
  double sigma2 = 1.0;
  int theta_grid_size = 20;
  LinkKind link = LinkKind::probit;

  void validate(Eigen::Index n_observed) const {
    if (M <= n_observed) {
      throw validation_error("superpopulation M=" + std::to_string(M) +
                             " must exceed the number of observed individuals (" +
                             std::to_string(n_observed) + ")");
    }
    if (!(sigma0sq > 0.0)) throw validation_error("sigma0sq must be positive");
    if (!(alpha_psi > 0.0) || !(beta_psi > 0.0)) {
      throw validation_error("psi prior parameters must be positive");
    }
    if (!(sigma2 > 0.0)) throw validation_error("sigma2 must be positive");
    if (theta_grid_size < 2) {
      throw validation_error("theta_grid_size must be at least 2");
    }
  }
};

/// One posterior draw of the top-level parameters.
struct GcrParams {
  double mu = 0.0;
  double sigma2 = 1.0;
  double theta = 0.0;
  double psi = 0.0;
};

struct LatentField {
  Eigen::VectorXd v;
  Eigen::VectorXd p;
};

}  // namespace gcr
