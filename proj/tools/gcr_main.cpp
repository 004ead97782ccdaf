// Command-line surface for the geostatistical capture-recapture toolkit.
// Subcommands mirror the pipeline stages; every stage reads its inputs from
// --out-dir, appends a record to the run manifest there, and derives all
// randomness from the --seed through named substreams.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gcr/gcr.hpp"

namespace fs = std::filesystem;
using gcr::json;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 1;
  int threads = gcr::default_thread_count();
  std::string out_dir = ".";
  std::string config_path;
};

struct StageTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

std::string path_in(const GlobalOpts& g, const std::string& name) {
  return (fs::path(g.out_dir) / name).string();
}

gcr::KeyValueConfig load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) {
    throw gcr::validation_error("this command requires --config");
  }
  return gcr::KeyValueConfig::load(g.config_path);
}

json base_record(const GlobalOpts& g, const gcr::KeyValueConfig& cfg,
                 const StageTimer& timer) {
  json rec;
  rec["seed"] = g.seed;
  rec["threads"] = g.threads;
  rec["software_version"] = gcr::kVersion;
  rec["seconds"] = timer.seconds();
  rec["config"] = cfg.values();
  if (!cfg.path().empty()) {
    rec["input_hashes"][cfg.path()] = gcr::hex_u64(gcr::file_fnv1a(cfg.path()));
  }
  return rec;
}

void add_input_hash(json& rec, const std::string& path) {
  rec["input_hashes"][path] = gcr::hex_u64(gcr::file_fnv1a(path));
}

void require_file(const std::string& path, const std::string& what,
                  const std::string& hint) {
  if (!fs::exists(path)) {
    throw gcr::validation_error("missing " + what + " ('" + path + "'); " + hint);
  }
}

// --------------------------------------------------------------------------

int cmd_simulate(const GlobalOpts& g) {
  StageTimer timer;
  const gcr::KeyValueConfig cfg = load_config(g);
  const gcr::SimConfig sim_cfg = gcr::sim_config_from(cfg);
  const gcr::SimResult sim = gcr::simulate(sim_cfg, g.seed);

  fs::create_directories(g.out_dir);
  gcr::write_traps_csv(path_in(g, "traps.csv"), sim.traps);
  gcr::write_captures_csv(path_in(g, "captures.csv"), sim.data);
  gcr::write_truth_csv(path_in(g, "truth.csv"), sim.truth);

  gcr::Manifest manifest = gcr::Manifest::load_or_new(g.out_dir);
  json rec = base_record(g, cfg, timer);
  rec["J"] = sim_cfg.occasions;
  rec["N_true"] = sim.truth.N_true;
  rec["n_observed"] = sim.data.n();
  manifest.record_stage("simulate", rec);
  manifest.save();
  std::cout << "simulate: N_true = " << sim.truth.N_true << ", n = "
            << sim.data.n() << " detected individuals over " << sim.traps.count()
            << " traps\n";
  return 0;
}

int cmd_precompute(const GlobalOpts& g, int crn_override) {
  StageTimer timer;
  const gcr::KeyValueConfig cfg = load_config(g);
  const std::string traps_path = path_in(g, "traps.csv");
  require_file(traps_path, "trap list", "run simulate or provide traps.csv");
  const gcr::TrapArray traps = gcr::read_traps_csv(traps_path);
  const gcr::ModelConfig mc = gcr::model_config_from(cfg);
  const int crn = crn_override > 0 ? crn_override : cfg.get_int("crn_fit", 4096);
  const gcr::ThetaGrid grid = gcr::ThetaGrid::over_traps(traps, mc.theta_grid_size);
  const gcr::ThetaGridCache cache =
      gcr::ThetaGridCache::build(traps, grid, mc.sigma2, crn, g.seed, g.threads);
  cache.save(path_in(g, "theta_cache.bin"));

  gcr::Manifest manifest = gcr::Manifest::load_or_new(g.out_dir);
  json rec = base_record(g, cfg, timer);
  add_input_hash(rec, traps_path);
  rec["crn_count"] = crn;
  rec["theta_grid"] = std::vector<double>(grid.values.data(),
                                          grid.values.data() + grid.size());
  rec["geometry_hash"] = gcr::hex_u64(cache.geometry_hash);
  manifest.record_stage("precompute", rec);
  manifest.save();
  std::cout << "precompute: " << grid.size() << " theta values, " << crn
            << " CRN field draws, L = " << traps.count() << "\n";
  return 0;
}

gcr::ThetaGridCache load_cache_checked(const GlobalOpts& g,
                                       const gcr::TrapArray& traps,
                                       const gcr::ModelConfig& mc) {
  const std::string cache_path = path_in(g, "theta_cache.bin");
  require_file(cache_path, "theta cache", "run precompute first");
  gcr::ThetaGridCache cache = gcr::ThetaGridCache::load(cache_path);
  if (cache.geometry_hash != gcr::ThetaGridCache::hash_geometry(traps)) {
    throw gcr::validation_error(
        "theta cache was built for a different trap geometry; rerun precompute");
  }
  if (cache.grid.size() != mc.theta_grid_size || cache.sigma2 != mc.sigma2) {
    throw gcr::validation_error(
        "theta cache does not match the current model config; rerun precompute");
  }
  return cache;
}

int cmd_fit_stage1(const GlobalOpts& g) {
  StageTimer timer;
  const gcr::KeyValueConfig cfg = load_config(g);
  const std::string traps_path = path_in(g, "traps.csv");
  const std::string captures_path = path_in(g, "captures.csv");
  require_file(traps_path, "trap list", "run simulate or provide traps.csv");
  require_file(captures_path, "capture data", "run simulate or provide captures.csv");
  const gcr::IngestResult in = gcr::ingest(traps_path, captures_path, cfg);
  const gcr::ThetaGridCache cache = load_cache_checked(g, in.traps, in.config);

  gcr::Stage1Settings settings;
  settings.iterations = cfg.get_int("k1", settings.iterations);
  settings.chains = cfg.get_int("chains", settings.chains);
  const gcr::Stage1Chain chain =
      gcr::run_stage1(in.data, cache, in.config, settings, g.seed, g.threads);
  gcr::write_stage1_csv(path_in(g, "stage1_chain.csv"), chain);

  gcr::Manifest manifest = gcr::Manifest::load_or_new(g.out_dir);
  json rec = base_record(g, cfg, timer);
  add_input_hash(rec, traps_path);
  add_input_hash(rec, captures_path);
  rec["iterations"] = chain.iterations;
  rec["warmup"] = chain.warmup;
  rec["chains"] = chain.chains();
  json accept = json::array();
  json warnings = json::array();
  for (int c = 0; c < chain.chains(); ++c) {
    accept.push_back(chain.stats[c].acceptance);
    if (chain.stats[c].acceptance_warning) {
      warnings.push_back("chain " + std::to_string(c) +
                         " post-warmup acceptance rate " +
                         std::to_string(chain.stats[c].acceptance) +
                         " outside [0.05, 0.95]");
    }
  }
  rec["acceptance"] = accept;
  rec["warnings"] = warnings;
  manifest.record_stage("fit-stage1", rec);
  manifest.save();
  std::cout << "fit-stage1: " << chain.chains() << " chains x "
            << chain.iterations << " iterations";
  for (int c = 0; c < chain.chains(); ++c) {
    std::cout << (c == 0 ? ", acceptance " : ", ") << chain.stats[c].acceptance;
  }
  std::cout << "\n";
  for (const auto& w : warnings) std::cout << "warning: " << w.get<std::string>() << "\n";
  return 0;
}

int cmd_fit_stage2(const GlobalOpts& g) {
  StageTimer timer;
  const gcr::KeyValueConfig cfg = load_config(g);
  const std::string chain_path = path_in(g, "stage1_chain.csv");
  require_file(chain_path, "stage-1 chain", "run fit-stage1 first");
  const std::string traps_path = path_in(g, "traps.csv");
  const std::string captures_path = path_in(g, "captures.csv");
  require_file(traps_path, "trap list", "run simulate or provide traps.csv");
  require_file(captures_path, "capture data", "run simulate or provide captures.csv");
  const gcr::IngestResult in = gcr::ingest(traps_path, captures_path, cfg);

  gcr::Manifest manifest = gcr::Manifest::load_or_new(g.out_dir);
  const int warmup = manifest.stage("fit-stage1").value("warmup", 0);
  const gcr::ThetaGrid grid =
      gcr::ThetaGrid::over_traps(in.traps, in.config.theta_grid_size);
  const gcr::Stage1Chain::Pool pool =
      gcr::read_stage1_pool(chain_path, warmup, grid);
  const int iterations = cfg.get_int("k2", 20000);
  const gcr::Stage2Chain chain = gcr::run_stage2(
      pool, static_cast<int>(in.data.n()), in.config.M, iterations, g.seed);
  gcr::write_stage2_csv(path_in(g, "stage2_chain.csv"), chain);

  json rec = base_record(g, cfg, timer);
  add_input_hash(rec, chain_path);
  rec["iterations"] = iterations;
  rec["pool_size"] = pool.size();
  rec["acceptance"] = chain.acceptance;
  manifest.record_stage("fit-stage2", rec);
  manifest.save();
  std::cout << "fit-stage2: " << iterations << " iterations over a pool of "
            << pool.size() << ", acceptance " << chain.acceptance << "\n";
  return 0;
}

json summary_to_json(const gcr::ParamSummary& s) {
  return json{{"n", s.count},     {"mean", s.mean},     {"sd", s.sd},
              {"q2.5", s.q2_5},   {"q25", s.q25},       {"median", s.median},
              {"q75", s.q75},     {"q97.5", s.q97_5},   {"ess", s.ess}};
}

int cmd_abundance(const GlobalOpts& g, int crn_report_override) {
  StageTimer timer;
  const gcr::KeyValueConfig cfg = load_config(g);
  const std::string stage2_path = path_in(g, "stage2_chain.csv");
  require_file(stage2_path, "stage-2 chain", "run fit-stage2 first");
  const std::string traps_path = path_in(g, "traps.csv");
  const std::string captures_path = path_in(g, "captures.csv");
  require_file(traps_path, "trap list", "run simulate or provide traps.csv");
  require_file(captures_path, "capture data", "run simulate or provide captures.csv");
  const gcr::IngestResult in = gcr::ingest(traps_path, captures_path, cfg);
  gcr::ThetaGridCache cache = load_cache_checked(g, in.traps, in.config);
  const int crn_report = crn_report_override > 0
                             ? crn_report_override
                             : cfg.get_int("crn_report", 16384);
  cache.extend_crn(crn_report);
  const gcr::ThetaGrid grid =
      gcr::ThetaGrid::over_traps(in.traps, in.config.theta_grid_size);
  const gcr::Stage2Chain chain = gcr::read_stage2_csv(
      stage2_path, static_cast<int>(in.data.n()), in.config.M, grid);
  const gcr::AbundanceDraws draws = gcr::sample_abundance(
      chain, cache, in.occasions, g.seed, g.threads, in.config.link);
  gcr::write_abundance_csv(path_in(g, "abundance.csv"), draws);

  Eigen::VectorXd N = draws.N.cast<double>();
  const gcr::ParamSummary s = gcr::summarize_vector("N", N);
  json report;
  report["n_observed"] = draws.n_observed;
  report["M"] = draws.M;
  report["N"] = summary_to_json(s);
  {
    std::ofstream out(path_in(g, "abundance_summary.json"));
    out << report.dump(2) << '\n';
  }

  gcr::Manifest manifest = gcr::Manifest::load_or_new(g.out_dir);
  json rec = base_record(g, cfg, timer);
  add_input_hash(rec, stage2_path);
  rec["crn_report"] = crn_report;
  rec["N_mean"] = s.mean;
  manifest.record_stage("abundance", rec);
  manifest.save();
  std::cout << "abundance: posterior mean N = " << s.mean << ", 95% CI ("
            << s.q2_5 << ", " << s.q97_5 << "), quartiles (" << s.q25 << ", "
            << s.q75 << ")\n";
  return 0;
}

int cmd_predict_maps(const GlobalOpts& g, const std::vector<std::string>& ids,
                     const std::string& model, bool prior_process) {
  StageTimer timer;
  const gcr::KeyValueConfig cfg = load_config(g);
  if (ids.empty() && !prior_process) {
    throw gcr::validation_error(
        "predict-maps needs at least one --individual id (or --prior-process)");
  }
  const std::string traps_path = path_in(g, "traps.csv");
  const std::string captures_path = path_in(g, "captures.csv");
  require_file(traps_path, "trap list", "run simulate or provide traps.csv");
  require_file(captures_path, "capture data", "run simulate or provide captures.csv");
  const gcr::IngestResult in = gcr::ingest(traps_path, captures_path, cfg);

  gcr::MapSettings settings;
  settings.grid_nx = cfg.get_int("map_grid", 40);
  settings.grid_ny = settings.grid_nx;
  settings.thin_to = cfg.get_int("map_thin", 1000);
  settings.gibbs_iterations = cfg.get_int("gibbs_iterations", 200);

  gcr::Manifest manifest = gcr::Manifest::load_or_new(g.out_dir);
  json rec = base_record(g, cfg, timer);
  json outputs = json::array();

  if (model == "scr") {
    const std::string scr_path = path_in(g, "scr_chain.csv");
    const std::string centers_path = path_in(g, "scr_centers.csv");
    require_file(scr_path, "SCR chain", "run fit-scr first");
    require_file(centers_path, "SCR center draws", "run fit-scr first");
    // rebuild the pieces of the chain the map needs
    const gcr::CsvTable chain_csv = gcr::read_csv(scr_path);
    const int a_col = chain_csv.column("alpha", scr_path);
    const int b_col = chain_csv.column("beta", scr_path);
    gcr::ScrChain chain;
    chain.M = in.config.M;
    chain.n_observed = static_cast<int>(in.data.n());
    chain.alpha.resize(static_cast<Eigen::Index>(chain_csv.rows.size()));
    chain.beta.resize(chain.alpha.size());
    chain.psi = Eigen::VectorXd::Zero(chain.alpha.size());
    chain.N = Eigen::VectorXi::Zero(chain.alpha.size());
    for (Eigen::Index k = 0; k < chain.alpha.size(); ++k) {
      chain.alpha[k] = gcr::parse_double(chain_csv.rows[k][a_col], scr_path);
      chain.beta[k] = gcr::parse_double(chain_csv.rows[k][b_col], scr_path);
    }
    const gcr::CsvTable centers = gcr::read_csv(centers_path);
    const int draw_col = centers.column("draw", centers_path);
    const int iter_col = centers.column("iter", centers_path);
    const int id_col = centers.column("individual_id", centers_path);
    const int cx_col = centers.column("cx", centers_path);
    const int cy_col = centers.column("cy", centers_path);
    std::map<long, Eigen::Index> draw_slot;
    for (const auto& row : centers.rows) {
      const long d = gcr::parse_long(row[draw_col], centers_path);
      if (!draw_slot.count(d)) {
        const Eigen::Index t = static_cast<Eigen::Index>(draw_slot.size());
        draw_slot[d] = t;
        chain.centers.emplace_back(
            Eigen::MatrixXd::Zero(chain.n_observed, 2));
        chain.center_iteration.push_back(
            static_cast<int>(gcr::parse_long(row[iter_col], centers_path)));
      }
      const Eigen::Index t = draw_slot[d];
      const Eigen::Index i = in.data.row_of(row[id_col]);
      chain.centers[t](i, 0) = gcr::parse_double(row[cx_col], centers_path);
      chain.centers[t](i, 1) = gcr::parse_double(row[cy_col], centers_path);
    }
    for (const std::string& id : ids) {
      const Eigen::Index row = in.data.row_of(id);
      const gcr::PredictionGrid map_grid =
          gcr::scr_predict_map(chain, static_cast<int>(row), in.traps,
                               settings.grid_nx, settings.grid_ny);
      const std::string out_path = path_in(g, "scr_maps_individual_" + id + ".csv");
      gcr::write_maps_csv(out_path, map_grid);
      outputs.push_back(out_path);
    }
  } else if (model == "gcr") {
    const std::string stage2_path = path_in(g, "stage2_chain.csv");
    require_file(stage2_path, "stage-2 chain", "run fit-stage2 first");
    gcr::ThetaGridCache cache = load_cache_checked(g, in.traps, in.config);
    const gcr::ThetaGrid grid =
        gcr::ThetaGrid::over_traps(in.traps, in.config.theta_grid_size);
    const gcr::Stage2Chain chain = gcr::read_stage2_csv(
        stage2_path, static_cast<int>(in.data.n()), in.config.M, grid);
    if (prior_process) {
      gcr::MapSettings prior_settings = settings;
      prior_settings.prior_process = true;
      const gcr::PredictionGrid map_grid =
          gcr::predict_maps(in.data, -1, in.traps, chain, cache, in.config,
                            prior_settings, g.seed, g.threads);
      const std::string out_path = path_in(g, "maps_prior_process.csv");
      gcr::write_maps_csv(out_path, map_grid);
      outputs.push_back(out_path);
    }
    for (const std::string& id : ids) {
      const Eigen::Index row = in.data.row_of(id);
      const gcr::PredictionGrid map_grid =
          gcr::predict_maps(in.data, static_cast<int>(row), in.traps, chain,
                            cache, in.config, settings, g.seed, g.threads);
      const std::string out_path = path_in(g, "maps_individual_" + id + ".csv");
      gcr::write_maps_csv(out_path, map_grid);
      outputs.push_back(out_path);
    }
  } else {
    throw gcr::validation_error("unknown --model '" + model +
                                "' (expected gcr or scr)");
  }

  rec["outputs"] = outputs;
  rec["model"] = model;
  manifest.record_stage("predict-maps", rec);
  manifest.save();
  std::cout << "predict-maps: wrote " << outputs.size() << " map file(s)\n";
  return 0;
}

int cmd_fit_scr(const GlobalOpts& g) {
  StageTimer timer;
  const gcr::KeyValueConfig cfg = load_config(g);
  const std::string traps_path = path_in(g, "traps.csv");
  const std::string captures_path = path_in(g, "captures.csv");
  require_file(traps_path, "trap list", "run simulate or provide traps.csv");
  require_file(captures_path, "capture data", "run simulate or provide captures.csv");
  const gcr::IngestResult in = gcr::ingest(traps_path, captures_path, cfg);

  gcr::ScrSettings settings;
  settings.iterations = cfg.get_int("scr_iterations", settings.iterations);
  settings.thin_centers = cfg.get_int("scr_thin", settings.thin_centers);
  gcr::ScrPriors priors;
  priors.alpha_var = cfg.get_double("scr_alpha_var", priors.alpha_var);
  priors.beta_var = cfg.get_double("scr_beta_var", priors.beta_var);
  priors.a_psi = cfg.get_double("alpha_psi", priors.a_psi);
  priors.b_psi = cfg.get_double("beta_psi", priors.b_psi);
  const double buffer = cfg.get_double("buffer", 0.5);

  const gcr::ScrChain chain = gcr::fit_scr(in.data, in.traps, buffer,
                                           in.config.M, settings, priors, g.seed);
  gcr::write_scr_csv(path_in(g, "scr_chain.csv"), chain);
  gcr::write_scr_centers_csv(path_in(g, "scr_centers.csv"), chain, in.data);

  gcr::Manifest manifest = gcr::Manifest::load_or_new(g.out_dir);
  json rec = base_record(g, cfg, timer);
  add_input_hash(rec, traps_path);
  add_input_hash(rec, captures_path);
  rec["iterations"] = settings.iterations;
  rec["buffer"] = buffer;
  rec["priors"] = {{"alpha", {priors.alpha_mean, priors.alpha_var}},
                   {"beta", {priors.beta_mean, priors.beta_var}},
                   {"psi", {priors.a_psi, priors.b_psi}}};
  rec["acceptance"] = {{"center", chain.accept_center},
                       {"alpha", chain.accept_alpha},
                       {"beta", chain.accept_beta}};
  manifest.record_stage("fit-scr", rec);
  manifest.save();
  std::cout << "fit-scr: " << settings.iterations
            << " iterations, acceptance (center " << chain.accept_center
            << ", alpha " << chain.accept_alpha << ", beta "
            << chain.accept_beta << ")\n";
  return 0;
}

int cmd_summary(const GlobalOpts& g) {
  json report;
  std::vector<gcr::ParamSummary> rows;
  auto add_csv_params =
      [&](const std::string& file, const std::string& prefix,
          const std::vector<std::string>& cols, int skip_prefix_rows) {
        const std::string path = path_in(g, file);
        if (!fs::exists(path)) return false;
        const gcr::CsvTable t = gcr::read_csv(path);
        for (const auto& col : cols) {
          const int c = t.column(col, path);
          Eigen::VectorXd x(static_cast<Eigen::Index>(t.rows.size()) -
                            skip_prefix_rows);
          for (Eigen::Index r = 0; r < x.size(); ++r) {
            x[r] = gcr::parse_double(t.rows[r + skip_prefix_rows][c], path);
          }
          const gcr::ParamSummary s =
              gcr::summarize_vector(prefix + col, x);
          rows.push_back(s);
          report[prefix + col] = summary_to_json(s);
        }
        return true;
      };

  bool any = false;
  any |= add_csv_params("stage1_chain.csv", "stage1.",
                        {"mu", "theta", "psi", "dbar"}, 0);
  any |= add_csv_params("stage2_chain.csv", "stage2.",
                        {"mu", "theta", "psi", "lambda"}, 0);
  any |= add_csv_params("abundance.csv", "", {"N"}, 0);
  any |= add_csv_params("scr_chain.csv", "scr.", {"alpha", "beta", "psi", "N"}, 0);
  if (!any) {
    throw gcr::validation_error("no chain files found in '" + g.out_dir + "'");
  }

  gcr::Manifest manifest = gcr::Manifest::load_or_new(g.out_dir);
  for (const char* stage : {"fit-stage1", "fit-stage2", "fit-scr"}) {
    if (manifest.has_stage(stage) && manifest.stage(stage).contains("acceptance")) {
      report["acceptance"][stage] = manifest.stage(stage)["acceptance"];
    }
  }
  {
    std::ofstream out(path_in(g, "summary.json"));
    out << report.dump(2) << '\n';
  }
  std::cout << gcr::render_summary_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geostatistical capture-recapture fitting toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "root RNG seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker thread budget")
      ->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "pipeline output directory")
      ->capture_default_str();
  app.add_option("--config", g.config_path, "key = value configuration file");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  auto* pre = app.add_subcommand("precompute",
                                 "build the theta-grid covariance cache");
  int crn_override = 0;
  pre->add_option("--crn", crn_override, "override the CRN draw count");
  auto* s1 = app.add_subcommand("fit-stage1",
                                "stage-1 MCMC over (mu, theta) with psi from prior");
  auto* s2 = app.add_subcommand("fit-stage2",
                                "stage-2 resampling corrected through n");
  auto* ab = app.add_subcommand("abundance", "posterior abundance draws");
  int crn_report_override = 0;
  ab->add_option("--crn", crn_report_override,
                 "override the reporting CRN draw count");
  auto* maps = app.add_subcommand("predict-maps",
                                  "individual space-use prediction maps");
  std::vector<std::string> map_ids;
  std::string map_model = "gcr";
  bool prior_process = false;
  maps->add_option("--individual", map_ids, "individual id (repeatable)");
  maps->add_option("--model", map_model, "gcr or scr")->capture_default_str();
  maps->add_flag("--prior-process", prior_process,
                 "also map a hypothetical undetected individual");
  auto* scr = app.add_subcommand("fit-scr", "classical SCR baseline fit");
  auto* summ = app.add_subcommand("summary", "summarize chains in the out-dir");

  for (auto* sub : {sim, pre, s1, s2, ab, maps, scr, summ}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (g.threads < 1) throw gcr::validation_error("--threads must be >= 1");
    if (sim->parsed()) return cmd_simulate(g);
    if (pre->parsed()) return cmd_precompute(g, crn_override);
    if (s1->parsed()) return cmd_fit_stage1(g);
    if (s2->parsed()) return cmd_fit_stage2(g);
    if (ab->parsed()) return cmd_abundance(g, crn_report_override);
    if (maps->parsed()) return cmd_predict_maps(g, map_ids, map_model, prior_process);
    if (scr->parsed()) return cmd_fit_scr(g);
    if (summ->parsed()) return cmd_summary(g);
  } catch (const gcr::GcrError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == gcr::ErrorKind::validation ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
