#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcr/error.hpp"
#include "gcr/posthoc.hpp"
#include "gcr/scr.hpp"
#include "gcr/simulator.hpp"
#include "gcr/stage1.hpp"
#include "gcr/stage2.hpp"
#include "gcr/types.hpp"
#include "gcr/version.hpp"

namespace gcr {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// number formatting: shortest round-trip representations so chain CSVs are
// exact and byte-stable across reruns
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw validation_error("cannot parse number '" + std::string(s) + "' in " +
                           where);
  }
  return v;
}

inline long parse_long(std::string_view s, const std::string& where) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw validation_error("cannot parse integer '" + std::string(s) + "' in " +
                           where);
  }
  return v;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name, const std::string& path) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw validation_error("'" + path + "' is missing column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != table.header.size()) {
        throw validation_error("'" + path + "' line " + std::to_string(line_no) +
                               ": expected " + std::to_string(table.header.size()) +
                               " fields, found " + std::to_string(fields.size()));
      }
      table.rows.push_back(std::move(fields));
    }
  }
  if (first) throw validation_error("'" + path + "' is empty");
  return table;
}

// ---------------------------------------------------------------------------
// plain-text key = value configuration
// ---------------------------------------------------------------------------

class KeyValueConfig {
 public:
  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    KeyValueConfig cfg = parse(buf.str(), path);
    cfg.path_ = path;
    return cfg;
  }

  static KeyValueConfig parse(const std::string& text, const std::string& name) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      if (trim(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw validation_error(name + " line " + std::to_string(line_no) +
                               ": expected 'key = value'");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw validation_error(name + " line " + std::to_string(line_no) +
                               ": empty key");
      }
      cfg.values_[key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_double(it->second, "config key '" + key + "'");
  }

  int get_int(const std::string& key, int fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return static_cast<int>(parse_long(it->second, "config key '" + key + "'"));
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    const auto& s = it->second;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw validation_error("config key '" + key + "': bad unsigned value");
    }
    return v;
  }

  const std::map<std::string, std::string>& values() const { return values_; }
  const std::string& path() const { return path_; }

 private:
  std::map<std::string, std::string> values_;
  std::string path_;
};

inline ModelConfig model_config_from(const KeyValueConfig& cfg) {
  ModelConfig mc;
  mc.M = cfg.get_int("M", mc.M);
  mc.mu0 = cfg.get_double("mu0", mc.mu0);
  mc.sigma0sq = cfg.get_double("sigma0sq", mc.sigma0sq);
  mc.alpha_psi = cfg.get_double("alpha_psi", mc.alpha_psi);
  mc.beta_psi = cfg.get_double("beta_psi", mc.beta_psi);
  mc.sigma2 = cfg.get_double("sigma2", mc.sigma2);
  mc.theta_grid_size = cfg.get_int("theta_grid_size", mc.theta_grid_size);
  mc.link = parse_link(cfg.get_string("link", "probit"));
  return mc;
}

inline SimConfig sim_config_from(const KeyValueConfig& cfg) {
  SimConfig sc;
  sc.M = cfg.get_int("M", sc.M);
  sc.psi = cfg.get_double("psi_true", sc.psi);
  sc.trap_nx = cfg.get_int("trap_nx", sc.trap_nx);
  sc.trap_ny = cfg.get_int("trap_ny", sc.trap_ny);
  sc.trap_spacing = cfg.get_double("trap_spacing", sc.trap_spacing);
  sc.buffer = cfg.get_double("buffer", sc.buffer);
  sc.lambda_ac = cfg.get_double("lambda_ac", sc.lambda_ac);
  sc.det_alpha = cfg.get_double("det_alpha", sc.det_alpha);
  sc.det_beta = cfg.get_double("det_beta", sc.det_beta);
  sc.occasions = cfg.get_int("J", sc.occasions);
  return sc;
}

// ---------------------------------------------------------------------------
// domain files
// ---------------------------------------------------------------------------

inline void write_traps_csv(const std::string& path, const TrapArray& traps) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << "trap_id,x,y\n";
  for (Eigen::Index l = 0; l < traps.count(); ++l) {
    out << (l + 1) << ',' << format_double(traps.locations()(l, 0)) << ','
        << format_double(traps.locations()(l, 1)) << '\n';
  }
}

inline TrapArray read_traps_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int id_col = t.column("trap_id", path);
  const int x_col = t.column("x", path);
  const int y_col = t.column("y", path);
  Coordinates locs(static_cast<Eigen::Index>(t.rows.size()), 2);
  std::map<long, Eigen::Index> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = "'" + path + "' row " + std::to_string(r + 2);
    const long id = parse_long(t.rows[r][id_col], where);
    if (!seen.emplace(id, r).second) {
      throw validation_error(where + ": duplicate trap_id " + std::to_string(id));
    }
    locs(static_cast<Eigen::Index>(r), 0) = parse_double(t.rows[r][x_col], where);
    locs(static_cast<Eigen::Index>(r), 1) = parse_double(t.rows[r][y_col], where);
  }
  return TrapArray(std::move(locs));
}

/// trap_id column order of a traps.csv, used to resolve capture records.
inline std::map<long, int> trap_id_index(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int id_col = t.column("trap_id", path);
  std::map<long, int> idx;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    idx[parse_long(t.rows[r][id_col], path)] = static_cast<int>(r);
  }
  return idx;
}

inline void write_captures_csv(const std::string& path, const CaptureData& data) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << "individual_id,trap_id,count\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index l = 0; l < data.traps(); ++l) {
      if (data.counts()(i, l) > 0) {
        out << data.ids()[i] << ',' << (l + 1) << ',' << data.counts()(i, l)
            << '\n';
      }
    }
  }
}

inline CaptureData read_captures_csv(const std::string& path,
                                     const std::map<long, int>& trap_index,
                                     int occasions) {
  const CsvTable t = read_csv(path);
  const int ind_col = t.column("individual_id", path);
  const int trap_col = t.column("trap_id", path);
  const int count_col = t.column("count", path);
  std::vector<std::string> ids;
  std::map<std::string, int> row_of;
  std::vector<std::vector<int>> counts;
  std::vector<std::vector<char>> filled;
  const int L = static_cast<int>(trap_index.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = "'" + path + "' row " + std::to_string(r + 2);
    const std::string& id = t.rows[r][ind_col];
    if (id.empty()) throw validation_error(where + ": empty individual_id");
    const long trap_id = parse_long(t.rows[r][trap_col], where);
    const auto trap_it = trap_index.find(trap_id);
    if (trap_it == trap_index.end()) {
      throw validation_error(where + ": unknown trap_id " +
                             std::to_string(trap_id));
    }
    const long count = parse_long(t.rows[r][count_col], where);
    if (count < 0 || count > occasions) {
      throw validation_error(where + ": count " + std::to_string(count) +
                             " outside [0, J=" + std::to_string(occasions) +
                             "] for individual " + id);
    }
    auto [it, fresh] = row_of.try_emplace(id, static_cast<int>(ids.size()));
    if (fresh) {
      ids.push_back(id);
      counts.emplace_back(L, 0);
      filled.emplace_back(L, 0);
    }
    const int row = it->second;
    if (filled[row][trap_it->second]) {
      throw validation_error(where + ": duplicate record for individual " + id +
                             " at trap " + std::to_string(trap_id));
    }
    filled[row][trap_it->second] = 1;
    counts[row][trap_it->second] = static_cast<int>(count);
  }
  if (ids.empty()) throw validation_error("'" + path + "' contains no captures");
  Eigen::MatrixXi m(static_cast<Eigen::Index>(ids.size()), L);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    int row_sum = 0;
    for (int l = 0; l < L; ++l) {
      m(static_cast<Eigen::Index>(i), l) = counts[i][l];
      row_sum += counts[i][l];
    }
    if (row_sum == 0) {
      throw validation_error("individual " + ids[i] + " in '" + path +
                             "' has an all-zero capture history");
    }
  }
  return CaptureData(std::move(m), occasions, std::move(ids));
}

struct IngestResult {
  TrapArray traps;
  CaptureData data;
  ModelConfig config;
  int occasions;
};

inline IngestResult ingest(const std::string& traps_path,
                           const std::string& captures_path,
                           const KeyValueConfig& cfg) {
  TrapArray traps = read_traps_csv(traps_path);
  const int J = cfg.get_int("J", 5);
  if (J < 1) throw validation_error("config key 'J' must be >= 1");
  CaptureData data =
      read_captures_csv(captures_path, trap_id_index(traps_path), J);
  if (data.traps() != traps.count()) {
    // capture matrix is sized from the trap list, so this cannot diverge
    throw validation_error("capture data and trap list disagree");
  }
  ModelConfig mc = model_config_from(cfg);
  mc.validate(data.n());
  return IngestResult{std::move(traps), std::move(data), mc, J};
}

inline void write_truth_csv(const std::string& path, const SimTruth& truth) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << "superpop_id,observed_id,z,center_idx,center_x,center_y\n";
  std::map<int, int> observed_of;
  for (std::size_t r = 0; r < truth.observed_index.size(); ++r) {
    observed_of[truth.observed_index[r]] = static_cast<int>(r) + 1;
  }
  for (Eigen::Index i = 0; i < truth.z.size(); ++i) {
    const auto obs = observed_of.find(static_cast<int>(i));
    const std::string obs_id =
        obs == observed_of.end() ? "" : std::to_string(obs->second);
    for (Eigen::Index c = 0; c < truth.centers[i].rows(); ++c) {
      out << (i + 1) << ',' << obs_id << ',' << truth.z[i] << ',' << (c + 1)
          << ',' << format_double(truth.centers[i](c, 0)) << ','
          << format_double(truth.centers[i](c, 1)) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// chain persistence
// ---------------------------------------------------------------------------

inline void write_stage1_csv(const std::string& path, const Stage1Chain& chain) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << "iter,chain,mu,theta,psi,loglik,dbar\n";
  for (int c = 0; c < chain.chains(); ++c) {
    for (int k = 0; k < chain.iterations; ++k) {
      out << k << ',' << c << ',' << format_double(chain.mu[c][k]) << ','
          << format_double(chain.theta_values[chain.theta_idx[c][k]]) << ','
          << format_double(chain.psi[c][k]) << ','
          << format_double(chain.loglik[c][k]) << ','
          << format_double(chain.dbar[c][k]) << '\n';
    }
  }
}

/// Post-warmup pool reconstructed from a stage-1 chain CSV; identical to
/// Stage1Chain::pooled() because doubles round-trip exactly.
inline Stage1Chain::Pool read_stage1_pool(const std::string& path, int warmup,
                                          const ThetaGrid& grid) {
  const CsvTable t = read_csv(path);
  const int iter_col = t.column("iter", path);
  const int mu_col = t.column("mu", path);
  const int theta_col = t.column("theta", path);
  const int psi_col = t.column("psi", path);
  const int dbar_col = t.column("dbar", path);
  const int ll_col = t.column("loglik", path);
  std::vector<double> mu, theta, psi, dbar, ll;
  std::vector<int> tidx;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path + " row " + std::to_string(r + 2);
    if (parse_long(t.rows[r][iter_col], where) < warmup) continue;
    mu.push_back(parse_double(t.rows[r][mu_col], where));
    theta.push_back(parse_double(t.rows[r][theta_col], where));
    psi.push_back(parse_double(t.rows[r][psi_col], where));
    dbar.push_back(parse_double(t.rows[r][dbar_col], where));
    ll.push_back(parse_double(t.rows[r][ll_col], where));
    tidx.push_back(grid.closest_index(theta.back()));
  }
  if (mu.empty()) {
    throw validation_error("stage-1 chain '" + path +
                           "' has no post-warmup draws");
  }
  Stage1Chain::Pool pool;
  const Eigen::Index S = static_cast<Eigen::Index>(mu.size());
  pool.mu = Eigen::Map<Eigen::VectorXd>(mu.data(), S);
  pool.theta = Eigen::Map<Eigen::VectorXd>(theta.data(), S);
  pool.psi = Eigen::Map<Eigen::VectorXd>(psi.data(), S);
  pool.dbar = Eigen::Map<Eigen::VectorXd>(dbar.data(), S);
  pool.loglik = Eigen::Map<Eigen::VectorXd>(ll.data(), S);
  pool.theta_idx = Eigen::Map<Eigen::VectorXi>(tidx.data(), S);
  return pool;
}

inline void write_stage2_csv(const std::string& path, const Stage2Chain& chain) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << "iter,mu,theta,psi,lambda,accepted\n";
  for (Eigen::Index k = 0; k < chain.size(); ++k) {
    out << k << ',' << format_double(chain.mu[k]) << ','
        << format_double(chain.theta[k]) << ',' << format_double(chain.psi[k])
        << ',' << format_double(chain.lambda[k]) << ',' << chain.accepted[k]
        << '\n';
  }
}

/// Rebuilds a stage-2 chain from CSV. Provenance indices are re-derived by
/// grouping identical (mu, theta, psi) triples, which is enough for the
/// post-hoc stages to reuse per-draw work.
inline Stage2Chain read_stage2_csv(const std::string& path, int n_observed,
                                   int M, const ThetaGrid& grid) {
  const CsvTable t = read_csv(path);
  const int mu_col = t.column("mu", path);
  const int theta_col = t.column("theta", path);
  const int psi_col = t.column("psi", path);
  const int lambda_col = t.column("lambda", path);
  const int acc_col = t.column("accepted", path);
  Stage2Chain chain;
  chain.n_observed = n_observed;
  chain.M = M;
  const Eigen::Index K = static_cast<Eigen::Index>(t.rows.size());
  if (K == 0) throw validation_error("stage-2 chain '" + path + "' is empty");
  chain.mu.resize(K);
  chain.theta.resize(K);
  chain.psi.resize(K);
  chain.lambda.resize(K);
  chain.dbar.resize(K);
  chain.theta_idx.resize(K);
  chain.pool_index.resize(K);
  chain.accepted.resize(K);
  std::map<std::tuple<double, double, double>, int> group;
  long accepted = 0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const std::string where = path + " row " + std::to_string(k + 2);
    chain.mu[k] = parse_double(t.rows[k][mu_col], where);
    chain.theta[k] = parse_double(t.rows[k][theta_col], where);
    chain.psi[k] = parse_double(t.rows[k][psi_col], where);
    chain.lambda[k] = parse_double(t.rows[k][lambda_col], where);
    chain.accepted[k] = static_cast<int>(parse_long(t.rows[k][acc_col], where));
    accepted += chain.accepted[k];
    chain.theta_idx[k] = grid.closest_index(chain.theta[k]);
    const double denom = M * chain.psi[k];
    chain.dbar[k] = denom > 0.0 ? chain.lambda[k] / denom : 0.0;
    auto [it, fresh] = group.try_emplace(
        std::make_tuple(chain.mu[k], chain.theta[k], chain.psi[k]),
        static_cast<int>(group.size()));
    chain.pool_index[k] = it->second;
  }
  chain.acceptance = static_cast<double>(accepted) / static_cast<double>(K);
  return chain;
}

inline void write_abundance_csv(const std::string& path,
                                const AbundanceDraws& draws) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << "draw,psi_bar,N0,N\n";
  for (Eigen::Index k = 0; k < draws.N.size(); ++k) {
    out << k << ',' << format_double(draws.psi_bar[k]) << ',' << draws.N0[k]
        << ',' << draws.N[k] << '\n';
  }
}

inline void write_maps_csv(const std::string& path, const PredictionGrid& grid) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << "x,y,mean_p,sd_p,utilization\n";
  for (Eigen::Index s = 0; s < grid.sites.rows(); ++s) {
    out << format_double(grid.sites(s, 0)) << ','
        << format_double(grid.sites(s, 1)) << ','
        << format_double(grid.mean_p[s]) << ',' << format_double(grid.sd_p[s])
        << ',' << format_double(grid.utilization[s]) << '\n';
  }
}

inline void write_scr_csv(const std::string& path, const ScrChain& chain) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << "iter,alpha,beta,psi,N\n";
  for (Eigen::Index k = 0; k < chain.alpha.size(); ++k) {
    out << k << ',' << format_double(chain.alpha[k]) << ','
        << format_double(chain.beta[k]) << ',' << format_double(chain.psi[k])
        << ',' << chain.N[k] << '\n';
  }
}

inline void write_scr_centers_csv(const std::string& path,
                                  const ScrChain& chain,
                                  const CaptureData& data) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << "draw,iter,individual_id,cx,cy\n";
  for (std::size_t t = 0; t < chain.centers.size(); ++t) {
    for (int i = 0; i < chain.n_observed; ++i) {
      out << t << ',' << chain.center_iteration[t] << ',' << data.ids()[i]
          << ',' << format_double(chain.centers[t](i, 0)) << ','
          << format_double(chain.centers[t](i, 1)) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// run manifest: one per output directory, one record per executed stage
// ---------------------------------------------------------------------------

inline std::uint64_t file_fnv1a(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot hash missing file '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

inline std::string hex_u64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

class Manifest {
 public:
  static std::string path_in(const std::string& dir) {
    return (std::filesystem::path(dir) / "manifest.json").string();
  }

  static Manifest load_or_new(const std::string& dir) {
    Manifest m;
    m.path_ = path_in(dir);
    if (std::filesystem::exists(m.path_)) {
      std::ifstream in(m.path_);
      try {
        in >> m.doc_;
      } catch (const json::exception&) {
        throw validation_error("manifest '" + m.path_ + "' is not valid JSON");
      }
    } else {
      m.doc_ = json::object();
      m.doc_["manifest_version"] = 1;
    }
    m.doc_["software_version"] = kVersion;
    if (!m.doc_.contains("stages")) m.doc_["stages"] = json::object();
    return m;
  }

  void record_stage(const std::string& name, json payload) {
    doc_["stages"][name] = std::move(payload);
  }

  bool has_stage(const std::string& name) const {
    return doc_.contains("stages") && doc_["stages"].contains(name);
  }

  const json& stage(const std::string& name) const {
    if (!has_stage(name)) {
      throw validation_error("missing " + name +
                             " record in manifest (run that stage first)");
    }
    return doc_["stages"][name];
  }

  void save() const {
    std::ofstream out(path_);
    if (!out) throw validation_error("cannot write manifest '" + path_ + "'");
    out << doc_.dump(2) << '\n';
  }

  json& doc() { return doc_; }

 private:
  json doc_;
  std::string path_;
};

}  // namespace gcr
