#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "adaptspecx/adaptspecx.hpp"
#include "support/oracles.hpp"

using namespace adaptspecx;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("adaptspecx_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Region-3 process everywhere: stationary AR(2) with phi = (1.5, -0.75).
SimulationConfig single_region(int series, int length) {
  SimulationConfig cfg;
  cfg.series = series;
  cfg.length = length;
  cfg.regions.polygons.clear();
  cfg.regions.fallback = 3;
  cfg.missing_fraction = 0.0;
  return cfg;
}

SamplerConfig small_sampler() {
  SamplerConfig c;
  c.components = 3;
  c.basis = 2;
  c.iterations = 40;
  c.burn_in = 10;
  c.thin = 3;
  c.seed = 99;
  c.component.max_segments = 3;
  c.component.min_segment_length = 16;
  c.component.basis_size = 5;
  return c;
}

Panel small_panel(std::uint64_t seed) {
  Rng rng(seed);
  SimulationConfig cfg;
  cfg.series = 12;
  cfg.length = 64;
  cfg.switch_time = 32;
  return simulate_panel(cfg, rng).panel;
}

void expect_same_draw(const Draw& a, const ChainState& s) {
  EXPECT_EQ(a.iteration, s.iteration);
  EXPECT_EQ(a.z, s.z);
  ASSERT_EQ(a.theta.size(), s.theta.size());
  for (std::size_t h = 0; h < a.theta.size(); ++h) {
    EXPECT_EQ(a.theta[h].cutpoints, s.theta[h].cutpoints);
    EXPECT_EQ(a.theta[h].means, s.theta[h].means);
    for (std::size_t k = 0; k < a.theta[h].spectra.size(); ++k) {
      EXPECT_EQ(a.theta[h].spectra[k].coefficients, s.theta[h].spectra[k].coefficients);
      EXPECT_EQ(a.theta[h].spectra[k].tau2_b, s.theta[h].spectra[k].tau2_b);
    }
  }
  for (std::size_t h = 0; h < a.stick.beta.size(); ++h) {
    EXPECT_EQ(a.stick.beta[h], s.stick.beta[h]);
    EXPECT_EQ(a.stick.tau2[h], s.stick.tau2[h]);
    EXPECT_EQ(a.stick.a[h], s.stick.a[h]);
  }
}

// One series of length 8 and two components with known pieces.
SampleStore handmade_store() {
  SampleStore store;
  StoreManifest& m = store.manifest;
  m.config.basis = 0;
  m.config.component.basis_size = 2;
  m.series_length = 8;
  m.series_names = {"a", "b"};
  m.covariate_names = {"u"};
  m.covariates.resize(2, 1);
  m.covariates << 0.0, 1.0;
  Draw d;
  SegmentModel c0;
  c0.cutpoints = {4, 8};
  c0.means = {1.0, 3.0};
  SplineSpectrum flat;
  flat.coefficients = VectorXd::Zero(3);
  flat.tau2_b = 1.0;
  SplineSpectrum loud = flat;
  loud.coefficients[0] = std::log(4.0);
  c0.spectra = {flat, loud};
  SegmentModel c1;
  c1.cutpoints = {8};
  c1.means = {-2.0};
  c1.spectra = {flat};
  d.theta = {c0, c1};
  d.z = {0, 1};
  d.stick.beta = {VectorXd::Zero(2)};
  d.stick.tau2 = {1.0};
  d.stick.a = {1.0};
  store.draws.push_back(d);
  return store;
}

}  // namespace

// ---------------------------------------------------------------------------
// Simulation

TEST(Ar2, VarianceMatchesIntegratedSpectrum) {
  const VectorXd grid = half_frequency_grid(513);
  for (auto [p1, p2] : std::vector<std::pair<double, double>>{{1.5, -0.75}, {-0.8, 0.0}, {0.2, 0.0}, {0.5, 0.3}}) {
    const double integrated = variance_functional(true_ar2_log_spectrum(p1, p2, 1.0, grid));
    EXPECT_NEAR(integrated / ar2_variance(p1, p2, 1.0), 1.0, 0.01);
  }
  EXPECT_THROW(ar2_variance(1.5, 0.75, 1.0), InvalidArgument);
}

TEST(Ar2, PeakFrequencyOfTheResonantProcess) {
  // The spectral peak sits where cos(2 pi w) = phi1 (phi2 - 1) / (4 phi2) = 0.875.
  const VectorXd grid = half_frequency_grid(100001);
  const VectorXd lf = true_ar2_log_spectrum(1.5, -0.75, 1.0, grid);
  Index best = 0;
  lf.maxCoeff(&best);
  EXPECT_NEAR(grid[best], std::acos(0.875) / (2.0 * std::numbers::pi), 1e-5);
  EXPECT_NEAR(grid[best], 0.0804, 1e-4);
}

TEST(Ar2, SimulatedAutocorrelationAndVariance) {
  Rng rng(1);
  const SimulatedPanel sim = simulate_panel(single_region(1, 200000), rng);
  const VectorXd x = sim.panel.values.col(0);
  const double mean = x.mean();
  const VectorXd d = x.array() - mean;
  const double c0 = d.squaredNorm() / static_cast<double>(d.size());
  const double c1 = d.head(d.size() - 1).dot(d.tail(d.size() - 1)) / static_cast<double>(d.size());
  EXPECT_NEAR(c1 / c0, 6.0 / 7.0, 0.01);
  EXPECT_NEAR(c0 / ar2_variance(1.5, -0.75, 1.0), 1.0, 0.05);
}

TEST(Simulation, ExactMissingCountAndBlocks) {
  Rng rng(2);
  SimulationConfig cfg;
  cfg.series = 30;
  cfg.length = 100;
  cfg.missing_fraction = 0.1;
  const SimulatedPanel scattered = simulate_panel(cfg, rng);
  EXPECT_EQ(scattered.panel.missing_count(), 30 * 10);
  for (int j = 0; j < 30; ++j) {
    int count = 0;
    for (int t = 0; t < 100; ++t) count += scattered.panel.missing(t, j) ? 1 : 0;
    EXPECT_EQ(count, 10);
  }
  cfg.block_missing = true;
  const SimulatedPanel blocks = simulate_panel(cfg, rng);
  for (int j = 0; j < 30; ++j) {
    int first = -1, last = -1, count = 0;
    for (int t = 0; t < 100; ++t) {
      if (!blocks.panel.missing(t, j)) continue;
      if (first < 0) first = t;
      last = t;
      ++count;
    }
    EXPECT_EQ(count, 10);
    EXPECT_EQ(last - first + 1, 10);
  }
}

TEST(Simulation, RegionMapPlacesTestPointsInTheirRegions) {
  const RegionMap map = default_region_map();
  const auto points = default_test_points();
  for (std::size_t i = 0; i < points.size(); ++i) EXPECT_EQ(map.region(points[i].u1, points[i].u2), static_cast<int>(i) + 1);
  const auto anchors = default_observed_anchors();
  for (std::size_t i = 0; i < anchors.size(); ++i) EXPECT_EQ(map.region(anchors[i].u1, anchors[i].u2), static_cast<int>(i) + 1);
  EXPECT_EQ(map.region(0.1, 0.1), 1);
  EXPECT_EQ(map.region(0.95, 0.1), 4);
}

TEST(Simulation, TruthSurfacesSwitchAtTheChangepoint) {
  const ProcessSpec& p = default_processes()[0];
  const VectorXd mean = true_mean_surface(p, 10, 4);
  EXPECT_EQ(mean[3], -1.5);
  EXPECT_EQ(mean[4], -2.0);
  const VectorXd grid = half_frequency_grid(5);
  const MatrixXd spec = true_log_spectrum_surface(p, 10, 4, grid);
  EXPECT_EQ(spec.row(0), true_ar2_log_spectrum(1.5, -0.75, 1.0, grid).transpose());
  EXPECT_EQ(spec.row(9), true_ar2_log_spectrum(-0.8, 0.0, 1.0, grid).transpose());
}

TEST(Metrics, MseMatchesHandComputation) {
  VectorXd a(4), b(4);
  a << 1, 2, 3, 4;
  b << 1, 0, 3, 5;
  EXPECT_DOUBLE_EQ(mse_mean(a, b), (4.0 + 1.0) / 4.0);
  MatrixXd e(2, 3), t(2, 3);
  e << 0, 0, 0, 1, 1, 1;
  t << 1, 0, 0, 1, 1, 3;
  EXPECT_DOUBLE_EQ(mse_spec(e, t), (1.0 + 4.0) / 6.0);
  EXPECT_THROW(mse_mean(a, VectorXd::Zero(3)), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Input and output

TEST(PanelCsv, RoundTripIsExact) {
  const fs::path dir = scratch_dir("panel");
  Panel p = small_panel(3);
  write_panel(p, (dir / "panel.csv").string(), (dir / "cov.csv").string());
  const Panel q = read_panel((dir / "panel.csv").string(), (dir / "cov.csv").string());
  EXPECT_EQ(q.names, p.names);
  EXPECT_EQ(q.covariate_names, p.covariate_names);
  EXPECT_EQ(q.time, p.time);
  EXPECT_EQ(q.covariates, p.covariates);
  for (int j = 0; j < p.series(); ++j)
    for (int t = 0; t < p.length(); ++t) {
      ASSERT_EQ(q.missing(t, j), p.missing(t, j));
      if (!p.missing(t, j)) ASSERT_EQ(q.values(t, j), p.values(t, j));
    }
}

TEST(PanelCsv, ParseErrorsReportLineAndColumn) {
  const fs::path dir = scratch_dir("parse");
  write_text_file(dir / "bad.csv", "time,a,b\n1,0.5,1\n2,0.25,abc\n");
  try {
    read_panel((dir / "bad.csv").string(), "");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:3:8:"), std::string::npos) << e.what();
  }
  write_text_file(dir / "short.csv", "time,a,b\n1,0.5\n");
  EXPECT_THROW(read_panel((dir / "short.csv").string(), ""), ParseError);
  write_text_file(dir / "quote.csv", "time,\"a\n");
  EXPECT_THROW(read_panel((dir / "quote.csv").string(), ""), ParseError);
  write_text_file(dir / "ok.csv", "time,a,b\n1,0.5,1\n2,NA,3\n");
  write_text_file(dir / "cov.csv", "series,u\na,1\n");
  EXPECT_THROW(read_panel((dir / "ok.csv").string(), (dir / "cov.csv").string()), InvalidArgument);
  write_text_file(dir / "empty.csv", "time,a\n1,NA\n2,NA\n");
  EXPECT_THROW(read_panel((dir / "empty.csv").string(), ""), InvalidArgument);
}

TEST(TidyCsv, SurfacesRoundTrip) {
  const fs::path dir = scratch_dir("tidy");
  const SampleStore store = handmade_store();
  QueryPoint a{"A", 0, {}};
  const PosteriorSummary s = estimate_surfaces(store, {a}, 4);
  write_text((dir / "out.csv").string(), tidy_csv(summary_rows(s)));
  const auto back = read_tidy_surfaces((dir / "out.csv").string());
  ASSERT_EQ(back.count("A"), 1u);
  EXPECT_LT((back.at("A").mean - s.points[0].mean.mean).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((back.at("A").log_spectrum - s.points[0].log_spectrum).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Config, JsonRoundTripAndValidation) {
  SamplerConfig c = small_sampler();
  c.stick.A_tau = 2.5;
  const SamplerConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_THROW(config_from_json(Json{{"itrations", 5}}), InvalidArgument);
  EXPECT_THROW(config_from_json(Json{{"components", "three"}}), InvalidArgument);
  EXPECT_THROW(config_from_json(Json::array()), InvalidArgument);
  const Panel p = small_panel(4);
  SamplerConfig bad = c;
  bad.iterations = 0;
  EXPECT_THROW(bad.validate(p), InvalidArgument);
  bad = c;
  bad.basis = 12;
  EXPECT_THROW(bad.validate(p), InvalidArgument);
}

TEST(Config, JsonSyntaxErrorReportsPosition) {
  const fs::path dir = scratch_dir("json");
  write_text_file(dir / "c.json", "{\n  \"seed\": 3,\n  \"thin\" 2\n}\n");
  try {
    read_json_file((dir / "c.json").string());
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("c.json:3:"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------
// Sampler and store

TEST(LabelSwap, PreservesLikelihoodAndReverseRatioNegates) {
  const Panel panel = small_panel(5);
  SamplerConfig cfg = small_sampler();
  cfg.components = 4;
  const CovariateDesign design = build_design(panel.covariates, cfg.basis);
  Rng base(6);
  ChainState s = initial_state(panel, design, cfg, base);
  for (int it = 0; it < 5; ++it) s = mcmc_iteration(s, panel, design, cfg, base);
  for (auto [h1, h2] : std::vector<std::pair<int, int>>{{0, 1}, {1, 3}, {0, 3}}) {
    ChainState t = s;
    swap_labels(t, h1, h2);
    EXPECT_NEAR(assigned_log_likelihood(series_log_likelihoods(t.data, t.theta, 1), t.z),
                assigned_log_likelihood(series_log_likelihoods(s.data, s.theta, 1), s.z), 1e-9);
    Rng rng(7);
    for (int h : {h1, h2})
      if (h < 3) t.stick.beta[h] = s.stick.beta[h] + VectorXd::Constant(s.stick.beta[h].size(), 0.1 * rng.uniform());
    const double fwd = label_swap_log_ratio(s.stick, s.z, t.stick, t.z, h1, h2, design, cfg.stick);
    const double rev = label_swap_log_ratio(t.stick, t.z, s.stick, s.z, h1, h2, design, cfg.stick);
    EXPECT_TRUE(std::isfinite(fwd));
    EXPECT_NEAR(fwd, -rev, 1e-9 * (1.0 + std::abs(fwd)));
  }
}

// Two well-separated groups and a label-symmetric prior: with the swap move
// the chain visits both labelings about equally often.
TEST(LabelSwap, SymmetricToyVisitsBothLabelings) {
  Rng rng(13);
  const int N = 6, n = 64;
  Panel panel;
  panel.time = VectorXd::LinSpaced(n, 1.0, n);
  panel.values.resize(n, N);
  panel.covariates.resize(N, 1);
  panel.covariate_names = {"u"};
  for (int j = 0; j < N; ++j) {
    panel.names.push_back("s" + std::to_string(j));
    panel.covariates(j, 0) = j;
    for (int t = 0; t < n; ++t) panel.values(t, j) = (j < 3 ? -3.0 : 3.0) + standard_normal(rng);
  }
  SamplerConfig cfg;
  cfg.components = 2;
  cfg.basis = 0;
  cfg.iterations = 6000;
  cfg.burn_in = 0;
  cfg.seed = 14;
  cfg.component.max_segments = 1;
  cfg.component.min_segment_length = 16;
  cfg.component.basis_size = 3;
  long first_label = 0, total = 0;
  const ChainState last = run_chain_in_memory(panel, cfg, [&](const ChainState& s) {
    first_label += s.z[0] == 0 ? 1 : 0;
    ++total;
  });
  EXPECT_GT(last.swaps.accepted, 100);
  EXPECT_NEAR(static_cast<double>(first_label) / static_cast<double>(total), 0.5, 0.02);
}

TEST(Chain, IdenticalAcrossThreadCounts) {
  const Panel panel = small_panel(8);
  SamplerConfig cfg = small_sampler();
  std::vector<ChainState> one, three;
  run_chain_in_memory(panel, cfg, [&](const ChainState& s) { one.push_back(s); });
  cfg.threads = 3;
  run_chain_in_memory(panel, cfg, [&](const ChainState& s) { three.push_back(s); });
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    Draw d{one[i].iteration, one[i].theta, one[i].z, one[i].stick};
    expect_same_draw(d, three[i]);
    EXPECT_EQ(one[i].data, three[i].data);
  }
}

TEST(Store, DrawsMatchInMemoryChain) {
  const fs::path dir = scratch_dir("store");
  const Panel panel = small_panel(9);
  const SamplerConfig cfg = small_sampler();
  std::vector<ChainState> mem;
  run_chain_in_memory(panel, cfg, [&](const ChainState& s) { mem.push_back(s); });
  RunOptions opts;
  opts.checkpoint_every = 7;
  const StoreManifest m = run_chain(panel, cfg, dir, opts);
  EXPECT_TRUE(m.complete);
  EXPECT_EQ(m.draws, 10);
  EXPECT_EQ(m.iterations_completed, 40);
  EXPECT_EQ(m.series_names, panel.names);
  const SampleStore store = read_store(dir);
  ASSERT_EQ(store.draws.size(), mem.size());
  for (std::size_t i = 0; i < mem.size(); ++i) expect_same_draw(store.draws[i], mem[i]);
}

TEST(Store, ResumedRunIsByteIdentical) {
  const fs::path full = scratch_dir("full"), cut = scratch_dir("cut");
  const Panel panel = small_panel(10);
  const SamplerConfig cfg = small_sampler();
  RunOptions opts;
  opts.checkpoint_every = 10;
  run_chain(panel, cfg, full, opts);

  RunOptions interrupted = opts;
  interrupted.on_iteration = [](const ChainState& s) {
    if (s.iteration == 25) throw std::runtime_error("interrupt");
  };
  EXPECT_THROW(run_chain(panel, cfg, cut, interrupted), std::runtime_error);
  EXPECT_FALSE(read_manifest(cut).complete);
  SamplerConfig other = cfg;
  other.seed = 100;
  RunOptions resume = opts;
  resume.resume = true;
  EXPECT_THROW(run_chain(panel, other, cut, resume), InvalidArgument);
  run_chain(panel, cfg, cut, resume);

  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(full)) names.push_back(e.path().filename().string());
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(cut)) count += e.path().extension() == ".tmp" ? 0 : 1;
  EXPECT_EQ(count, names.size());
  for (const auto& name : names) EXPECT_EQ(slurp(full / name), slurp(cut / name)) << name;
}

TEST(Store, RejectsCorruptChunk) {
  const fs::path dir = scratch_dir("corrupt");
  run_chain(small_panel(11), small_sampler(), dir);
  const StoreManifest m = read_manifest(dir);
  ASSERT_FALSE(m.chunks.empty());
  std::string bytes = slurp(dir / m.chunks[0]);
  bytes.resize(bytes.size() / 2);
  write_text_file(dir / m.chunks[0], bytes);
  EXPECT_THROW(read_store(dir), StoreError);
}

// ---------------------------------------------------------------------------
// Summaries

TEST(Summary, ObservedSeriesSurfacesFollowTheirComponent) {
  const SampleStore store = handmade_store();
  QueryPoint a{"A", 0, {}}, b{"B", 1, {}};
  const PosteriorSummary s = estimate_surfaces(store, {a, b}, 5);
  VectorXd want_a(8);
  want_a << 1, 1, 1, 1, 3, 3, 3, 3;
  EXPECT_EQ(s.points[0].mean.mean, want_a);
  EXPECT_EQ(s.points[1].mean.mean, VectorXd::Constant(8, -2.0));
  EXPECT_NEAR(s.points[0].variance.mean[0], 1.0, 1e-12);
  EXPECT_NEAR(s.points[0].variance.mean[7], 4.0, 1e-12);
  EXPECT_NEAR(s.points[0].log_spectrum(6, 2), std::log(4.0), 1e-12);
}

TEST(Summary, NewCovariatePointMixesByStickWeights) {
  SampleStore store = handmade_store();
  store.draws[0].stick.beta[0] << std::log(3.0), 0.0;  // pi_0 = 0.75
  QueryPoint u{"U", -1, VectorXd::Constant(1, 0.3)};
  const PosteriorSummary s = estimate_surfaces(store, {u}, 3);
  EXPECT_NEAR(s.points[0].mean.mean[0], 0.75 * 1.0 + 0.25 * -2.0, 1e-12);
  EXPECT_NEAR(s.points[0].mean.mean[5], 0.75 * 3.0 + 0.25 * -2.0, 1e-12);
  EXPECT_NEAR(s.points[0].log_spectrum(5, 1), 0.75 * std::log(4.0), 1e-12);
}

TEST(Predicates, ParseAndEvaluate) {
  const SampleStore store = handmade_store();
  QueryPoint a{"A", 0, {}};
  EXPECT_EQ(event_probability(store, a, parse_predicate("mu(1) < mu(8)", 8)), 1.0);
  EXPECT_EQ(event_probability(store, a, parse_predicate("mu(5)>=3.5", 8)), 0.0);
  EXPECT_EQ(event_probability(store, a, parse_predicate("sigma2(8) > 3.9", 8)), 1.0);
  EXPECT_EQ(event_probability(store, a, parse_predicate("2 != mu( 2 )", 8)), 1.0);
  EXPECT_THROW(parse_predicate("mu(0) < 1", 8), InvalidArgument);
  EXPECT_THROW(parse_predicate("mu(9) < 1", 8), InvalidArgument);
  EXPECT_THROW(parse_predicate("mu(2) ~ 1", 8), InvalidArgument);
  EXPECT_THROW(parse_predicate("mu(2) < 1 x", 8), InvalidArgument);
  EXPECT_THROW(parse_predicate("nu(2) < 1", 8), InvalidArgument);
}
