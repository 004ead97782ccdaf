#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gcr/covariance.hpp"
#include "gcr/error.hpp"
#include "gcr/links.hpp"
#include "gcr/parallel.hpp"
#include "gcr/rng.hpp"
#include "gcr/types.hpp"

namespace gcr {

inline constexpr double kFactorJitter = 1e-8;   // relative to sigma2
inline constexpr double kMaxJitter = 1e-4;

/// Cholesky with escalating diagonal jitter. `unit` scales the jitter
/// (pass sigma2 for covariance matrices). Throws after the last escalation.
inline Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(
    const Eigen::MatrixXd& m, double unit, double base, double* jitter_used,
    const std::string& what) {
  for (double rel = base; rel <= kMaxJitter * 1.0001; rel *= 10.0) {
    Eigen::MatrixXd work = m;
    work.diagonal().array() += rel * unit;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = rel * unit;
      return llt;
    }
  }
  throw numeric_error("Cholesky factorization failed for " + what +
                      " even with maximum jitter");
}

struct ThetaEntry {
  double theta = 0.0;
  Eigen::MatrixXd correlation;     // R(theta), L x L
  Eigen::MatrixXd chol;            // lower C with C C' = sigma2 R + jitter I
  Eigen::MatrixXd basis;           // eigenvectors H of R (ascending eigenvalues)
  Eigen::VectorXd basis_scale;     // eigenvalues of R
  Eigen::MatrixXd field_products;  // W = C eps, L x B, shared eps across theta
  double jitter = 0.0;
};

/// Precomputed per-theta factorizations plus common-random-number latent
/// field draws. Built once, then shared read-only by every sampler stage.
class ThetaGridCache {
 public:
  ThetaGrid grid;
  double sigma2 = 1.0;
  int crn_count = 0;
  std::uint64_t seed = 0;
  std::uint64_t geometry_hash = 0;
  std::vector<ThetaEntry> entries;

  static std::uint64_t hash_geometry(const TrapArray& traps) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (v >> (8 * byte)) & 0xff;
        h *= 0x100000001b3ull;
      }
    };
    mix(static_cast<std::uint64_t>(traps.count()));
    for (Eigen::Index i = 0; i < traps.count(); ++i) {
      std::uint64_t bits;
      double x = traps.locations()(i, 0);
      double y = traps.locations()(i, 1);
      std::memcpy(&bits, &x, 8);
      mix(bits);
      std::memcpy(&bits, &y, 8);
      mix(bits);
    }
    return h;
  }

  static ThetaGridCache build(const TrapArray& traps, const ThetaGrid& grid,
                              double sigma2, int crn_count, std::uint64_t seed,
                              int threads = 1) {
    if (crn_count < 1) throw validation_error("CRN count must be >= 1");
    ThetaGridCache cache;
    cache.grid = grid;
    cache.sigma2 = sigma2;
    cache.crn_count = crn_count;
    cache.seed = seed;
    cache.geometry_hash = hash_geometry(traps);
    cache.entries.resize(grid.size());

    const Eigen::MatrixXd eps = draw_crn(traps.count(), crn_count, seed);
    parallel_for(grid.size(), threads, [&](int g) {
      cache.entries[g] = build_entry(traps, grid.values[g], sigma2, eps);
    });
    return cache;
  }

  /// Appends CRN columns by continuing the same eps stream, so draws
  /// 0..crn_count-1 are unchanged.
  void extend_crn(int new_count) {
    if (new_count <= crn_count) return;
    if (entries.empty()) throw numeric_error("extend_crn on an empty cache");
    const Eigen::Index L = entries.front().field_products.rows();
    RngStream rng = RngStream::derive(seed, "gp-crn");
    rng.engine().discard(static_cast<unsigned long long>(L) * crn_count);
    Eigen::MatrixXd eps_new(L, new_count - crn_count);
    for (Eigen::Index b = 0; b < eps_new.cols(); ++b) {
      for (Eigen::Index l = 0; l < L; ++l) eps_new(l, b) = rng.normal();
    }
    for (auto& e : entries) {
      Eigen::MatrixXd extra = e.chol * eps_new;
      e.field_products.conservativeResize(Eigen::NoChange, new_count);
      e.field_products.rightCols(extra.cols()) = extra;
    }
    crn_count = new_count;
  }

  /// v = mu 1 + C eps_b, p = g^{-1}(v).
  LatentField sample_field(int theta_idx, double mu, int crn_idx,
                           LinkKind link = LinkKind::probit) const {
    const ThetaEntry& e = entries.at(theta_idx);
    if (crn_idx < 0 || crn_idx >= crn_count) {
      throw validation_error("CRN index out of range");
    }
    LatentField f;
    f.v = e.field_products.col(crn_idx);
    f.v.array() += mu;
    f.p = link_inverse(f.v, link);
    return f;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot open '" + path + "' for writing");
    out.write(kMagic, 8);
    write_u64(out, geometry_hash);
    write_u64(out, seed);
    write_u64(out, static_cast<std::uint64_t>(crn_count));
    write_double(out, sigma2);
    write_double(out, grid.d_max);
    write_u64(out, static_cast<std::uint64_t>(grid.size()));
    for (int i = 0; i < grid.size(); ++i) write_double(out, grid.values[i]);
    write_u64(out, static_cast<std::uint64_t>(entries.size()));
    for (const auto& e : entries) {
      write_double(out, e.theta);
      write_double(out, e.jitter);
      write_matrix(out, e.correlation);
      write_matrix(out, e.chol);
      write_matrix(out, e.basis);
      write_matrix(out, e.basis_scale);
      write_matrix(out, e.field_products);
    }
    if (!out) throw numeric_error("failed writing cache to '" + path + "'");
  }

  static ThetaGridCache load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open cache file '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
      throw validation_error("'" + path + "' is not a theta-cache file of a supported version");
    }
    ThetaGridCache cache;
    cache.geometry_hash = read_u64(in);
    cache.seed = read_u64(in);
    cache.crn_count = static_cast<int>(read_u64(in));
    cache.sigma2 = read_double(in);
    cache.grid.d_max = read_double(in);
    const auto gsize = read_u64(in);
    cache.grid.values.resize(static_cast<Eigen::Index>(gsize));
    for (std::uint64_t i = 0; i < gsize; ++i) cache.grid.values[i] = read_double(in);
    const auto esize = read_u64(in);
    cache.entries.resize(esize);
    for (auto& e : cache.entries) {
      e.theta = read_double(in);
      e.jitter = read_double(in);
      read_matrix(in, e.correlation);
      read_matrix(in, e.chol);
      read_matrix(in, e.basis);
      Eigen::MatrixXd scale;
      read_matrix(in, scale);
      e.basis_scale = scale.col(0);
      read_matrix(in, e.field_products);
    }
    if (!in) throw validation_error("truncated cache file '" + path + "'");
    return cache;
  }

 private:
  static constexpr const char kMagic[9] = "GCRTHC1\n";

  static Eigen::MatrixXd draw_crn(Eigen::Index L, int count, std::uint64_t seed) {
    RngStream rng = RngStream::derive(seed, "gp-crn");
    Eigen::MatrixXd eps(L, count);
    for (int b = 0; b < count; ++b) {
      for (Eigen::Index l = 0; l < L; ++l) eps(l, b) = rng.normal();
    }
    return eps;
  }

  static ThetaEntry build_entry(const TrapArray& traps, double theta,
                                double sigma2, const Eigen::MatrixXd& eps) {
    ThetaEntry e;
    e.theta = theta;
    e.correlation = build_covariance(traps.locations(), traps.locations(), 1.0, theta);
    Eigen::MatrixXd cov = sigma2 * e.correlation;
    Eigen::LLT<Eigen::MatrixXd> llt;
    try {
      llt = cholesky_with_jitter(cov, sigma2, kFactorJitter, &e.jitter,
                                 "R(theta)");
    } catch (const GcrError&) {
      throw numeric_error("covariance factorization failed at theta = " +
                          std::to_string(theta));
    }
    e.chol = llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.correlation);
    if (es.info() != Eigen::Success) {
      throw numeric_error("eigendecomposition failed at theta = " +
                          std::to_string(theta));
    }
    e.basis = es.eigenvectors();
    e.basis_scale = es.eigenvalues();
    e.field_products = e.chol * eps;
    return e;
  }

  static void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
  static void write_double(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
  static void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    write_u64(out, static_cast<std::uint64_t>(m.rows()));
    write_u64(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  static void write_matrix(std::ostream& out, const Eigen::VectorXd& v) {
    write_matrix(out, Eigen::MatrixXd(v));
  }
  static std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  }
  static double read_double(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  }
  static void read_matrix(std::istream& in, Eigen::MatrixXd& m) {
    const auto rows = read_u64(in);
    const auto cols = read_u64(in);
    if (rows > (1ull << 32) || cols > (1ull << 32)) {
      throw validation_error("corrupt cache file (implausible matrix size)");
    }
    m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
};

}  // namespace gcr
