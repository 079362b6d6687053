#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "adaptspecx/adaptspecx.hpp"

namespace fs = std::filesystem;
using namespace adaptspecx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

RegionMap read_region_map(const std::string& path) {
  const Json j = read_json_file(path);
  RegionMap m;
  try {
    m.fallback = j.value("default", 4);
    for (const auto& r : j.at("regions")) {
      RegionPolygon p;
      p.region = r.at("region").get<int>();
      for (const auto& v : r.at("polygon")) p.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      require(p.vertices.size() >= 3, path + ": polygons need at least 3 vertices");
      require(p.region >= 1 && p.region <= 4, path + ": regions are numbered 1 to 4");
      m.polygons.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
  require(m.fallback >= 1 && m.fallback <= 4, path + ": default region must be 1 to 4");
  return m;
}

struct SimulateArgs {
  std::string out_dir;
  std::uint64_t seed = 1;
  int series = 100;
  int length = 256;
  double missing = 0.1;
  bool block = false;
  std::string regions;
  int kmax = 128;
};

void run_simulate(const SimulateArgs& a) {
  SimulationConfig cfg;
  cfg.series = a.series;
  cfg.length = a.length;
  cfg.switch_time = a.length / 2;
  cfg.missing_fraction = a.missing;
  cfg.block_missing = a.block;
  if (!a.regions.empty()) cfg.regions = read_region_map(a.regions);
  require(a.kmax >= 2, "kmax must be at least 2");
  Rng rng(a.seed);
  const SimulatedPanel sim = simulate_panel(cfg, rng);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  write_panel(sim.panel, (dir / "panel.csv").string(), (dir / "covariates.csv").string());

  std::ostringstream regions;
  regions << "series,region,u1,u2\n";
  for (int j = 0; j < sim.panel.series(); ++j)
    regions << sim.panel.names[j] << ',' << sim.regions[j] << ',' << full_precision(sim.panel.covariates(j, 0)) << ','
            << full_precision(sim.panel.covariates(j, 1)) << '\n';
  write_text((dir / "regions.csv").string(), regions.str());

  // Named points: the observed series nearest each anchor and the test points.
  std::ostringstream points;
  points << "name,series,u1,u2\n";
  const Eigen::VectorXd grid = half_frequency_grid(a.kmax);
  std::vector<TidyRow> truth;
  auto add_truth = [&](const std::string& name, int region) {
    const ProcessSpec& proc = cfg.processes[region - 1];
    const Eigen::VectorXd mean = true_mean_surface(proc, cfg.length, cfg.switch_time);
    const Eigen::MatrixXd spec = true_log_spectrum_surface(proc, cfg.length, cfg.switch_time, grid);
    for (int t = 0; t < cfg.length; ++t)
      truth.push_back({t + 1, std::numeric_limits<double>::quiet_NaN(), name, "mean", mean[t]});
    for (int t = 0; t < cfg.length; ++t)
      for (int k = 0; k < a.kmax; ++k) truth.push_back({t + 1, grid[k], name, "log_spectrum", spec(t, k)});
  };
  const auto anchors = default_observed_anchors();
  for (int r = 1; r <= 4; ++r) {
    const int j = nearest_series(sim, r, anchors[r - 1].u1, anchors[r - 1].u2);
    if (j < 0) continue;
    points << anchors[r - 1].name << ',' << sim.panel.names[j] << ",,\n";
    add_truth(anchors[r - 1].name, r);
  }
  for (const auto& tp : default_test_points()) {
    points << tp.name << ",," << tp.u1 << ',' << tp.u2 << '\n';
    add_truth(tp.name, cfg.regions.region(tp.u1, tp.u2));
  }
  write_text((dir / "points.csv").string(), points.str());
  write_text((dir / "truth.csv").string(), tidy_csv(truth));
  std::cout << "wrote " << sim.panel.series() << " series of length " << sim.panel.length() << " to " << a.out_dir
            << "\n";
}

struct FitArgs {
  std::string panel, covariates, config, out;
  int iterations = -1, burn_in = -1, thin = -1, threads = 1, checkpoint_every = 1000;
  long long seed = -1;
  double scale = 1.0;
  bool resume = false, quiet = false;
};

void run_fit(const FitArgs& a) {
  SamplerConfig cfg;
  if (!a.config.empty()) apply_config_json(read_json_file(a.config), cfg);
  require(a.scale > 0.0, "scale must be positive");
  if (a.scale != 1.0) {
    cfg.iterations = static_cast<int>(std::lround(cfg.iterations * a.scale));
    cfg.burn_in = static_cast<int>(std::lround(cfg.burn_in * a.scale));
  }
  if (a.iterations >= 0) cfg.iterations = a.iterations;
  if (a.burn_in >= 0) cfg.burn_in = a.burn_in;
  if (a.thin >= 0) cfg.thin = a.thin;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.threads = a.threads;
  const Panel panel = read_panel(a.panel, a.covariates);
  cfg.validate(panel);
  RunOptions opts;
  opts.resume = a.resume;
  opts.checkpoint_every = a.checkpoint_every;
  if (!a.quiet) {
    opts.on_iteration = [&](const ChainState& s) {
      if (s.iteration % 500 == 0 || s.iteration == cfg.iterations)
        std::cerr << "iteration " << s.iteration << "/" << cfg.iterations << "  log-likelihood "
                  << s.log_likelihood << "\n";
    };
  }
  const StoreManifest m = run_chain(panel, cfg, a.out, opts);
  std::cout << "stored " << m.draws << " draws in " << a.out << "\n";
}

struct SummarizeArgs {
  std::string store, points, out;
  std::vector<std::string> series, events;
  int freq_grid = 128;
  bool plug_in = false, no_variance = false;
};

void write_summary(const SampleStore& store, const std::vector<QueryPoint>& points, const SummarizeArgs& a) {
  const PosteriorSummary summary = estimate_surfaces(store, points, a.freq_grid, a.plug_in, !a.no_variance);
  std::vector<TidyRow> rows = summary_rows(summary);
  for (const auto& text : a.events) {
    const Predicate pred = parse_predicate(text, store.manifest.series_length);
    for (const auto& p : points)
      rows.push_back({0, std::numeric_limits<double>::quiet_NaN(), p.name, "P[" + text + "]",
                      event_probability(store, p, pred, a.plug_in, a.freq_grid)});
  }
  if (a.out.empty())
    std::cout << tidy_csv(rows);
  else
    write_text(a.out, tidy_csv(rows));
}

void run_summarize(const SummarizeArgs& a) {
  const SampleStore store = read_store(a.store);
  const StoreManifest& m = store.manifest;
  std::vector<QueryPoint> points;
  if (!a.points.empty()) points = read_points(a.points, m.series_names, static_cast<int>(m.covariates.cols()));
  for (const auto& name : a.series) {
    auto it = std::find(m.series_names.begin(), m.series_names.end(), name);
    require(it != m.series_names.end(), "unknown series '" + name + "'");
    points.push_back({name, static_cast<int>(it - m.series_names.begin()), {}});
  }
  if (points.empty())
    for (int j = 0; j < static_cast<int>(m.series_names.size()); ++j) points.push_back({m.series_names[j], j, {}});
  write_summary(store, points, a);
}

void run_predict(const SummarizeArgs& a) {
  const SampleStore store = read_store(a.store);
  const std::vector<QueryPoint> points =
      read_covariate_points(a.points, static_cast<int>(store.manifest.covariates.cols()));
  write_summary(store, points, a);
}

struct MseArgs {
  std::string estimate, truth, out;
};

void run_mse(const MseArgs& a) {
  const auto est = read_tidy_surfaces(a.estimate);
  const auto truth = read_tidy_surfaces(a.truth);
  std::ostringstream s;
  s << "point,mse_mean,mse_spec\n";
  for (const auto& [name, t] : truth) {
    auto it = est.find(name);
    if (it == est.end()) continue;
    const double mm = mse_mean(it->second.mean, t.mean);
    double ms = std::numeric_limits<double>::quiet_NaN();
    if (t.log_spectrum.size() > 0) {
      require(it->second.omega.size() == t.omega.size() && (it->second.omega - t.omega).cwiseAbs().maxCoeff() < 1e-9,
              "estimate and truth use different frequency grids for point '" + name + "'");
      ms = mse_spec(it->second.log_spectrum, t.log_spectrum);
    }
    s << name << ',' << format_value(mm) << ',' << format_value(ms) << '\n';
  }
  if (a.out.empty())
    std::cout << s.str();
  else
    write_text(a.out, s.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian time-varying mean and spectrum estimation for panels of time series"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate the piecewise AR(2) panel design with truth surfaces");
  simulate->add_option("--out-dir", sim.out_dir, "Output directory")->required();
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--series", sim.series, "Number of series");
  simulate->add_option("--length", sim.length, "Series length (even)");
  simulate->add_option("--missing", sim.missing, "Fraction of missing times per series");
  simulate->add_flag("--block-missing", sim.block, "Missing times form one contiguous block");
  simulate->add_option("--regions", sim.regions, "JSON region map overriding the default layout");
  simulate->add_option("--kmax", sim.kmax, "Frequency grid size for truth surfaces");

  FitArgs fit;
  auto* fitc = app.add_subcommand("fit", "Run the sampler and write a sample store");
  fitc->add_option("--panel", fit.panel, "Panel CSV")->required();
  fitc->add_option("--covariates", fit.covariates, "Covariate CSV");
  fitc->add_option("--config", fit.config, "JSON configuration");
  fitc->add_option("--out", fit.out, "Sample store directory")->required();
  fitc->add_option("--iterations", fit.iterations, "Total iterations");
  fitc->add_option("--burn-in", fit.burn_in, "Burn-in iterations");
  fitc->add_option("--thin", fit.thin, "Thinning interval");
  fitc->add_option("--seed", fit.seed, "Random seed");
  fitc->add_option("--threads", fit.threads, "Worker threads (results do not depend on it)");
  fitc->add_option("--scale", fit.scale, "Multiply the configured iterations and burn-in");
  fitc->add_option("--checkpoint-every", fit.checkpoint_every, "Iterations between store flushes");
  fitc->add_flag("--resume", fit.resume, "Continue from the store's checkpoint");
  fitc->add_flag("--quiet", fit.quiet, "No progress output");

  SummarizeArgs summ;
  auto* summarize = app.add_subcommand("summarize", "Posterior surfaces and event probabilities");
  summarize->add_option("--store", summ.store, "Sample store directory")->required();
  summarize->add_option("--points", summ.points, "Points CSV (name,series,covariates...)");
  summarize->add_option("--series", summ.series, "Observed series to summarize");
  summarize->add_option("--event", summ.events, "Predicate such as 'mu(200) < mu(50)'");
  summarize->add_option("--freq-grid", summ.freq_grid, "Frequency grid size on [0, 1/2]");
  summarize->add_flag("--plug-in", summ.plug_in, "Weight observed series by pi_h(u_j) instead of the drawn z_j");
  summarize->add_flag("--no-variance", summ.no_variance, "Skip the variance surface");
  summarize->add_option("--out", summ.out, "Tidy CSV output (stdout if omitted)");

  SummarizeArgs pred;
  auto* predict = app.add_subcommand("predict", "Posterior surfaces at new covariate values");
  predict->add_option("--store", pred.store, "Sample store directory")->required();
  predict->add_option("--covariates", pred.points, "CSV of name,covariates...")->required();
  predict->add_option("--event", pred.events, "Predicate such as 'sigma2(10) < sigma2(200)'");
  predict->add_option("--freq-grid", pred.freq_grid, "Frequency grid size on [0, 1/2]");
  predict->add_flag("--no-variance", pred.no_variance, "Skip the variance surface");
  predict->add_option("--out", pred.out, "Tidy CSV output (stdout if omitted)");

  MseArgs mse;
  auto* msec = app.add_subcommand("mse", "Mean squared errors of estimated surfaces against truth");
  msec->add_option("--estimate", mse.estimate, "Tidy CSV of estimates")->required();
  msec->add_option("--truth", mse.truth, "Tidy CSV of true surfaces")->required();
  msec->add_option("--out", mse.out, "CSV output (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*simulate) run_simulate(sim);
    if (*fitc) run_fit(fit);
    if (*summarize) run_summarize(summ);
    if (*predict) run_predict(pred);
    if (*msec) run_mse(mse);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOk;
}
