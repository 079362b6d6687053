#pragma once

// Chunked on-disk sample store.
//
// A store directory holds
//   manifest.json    configuration, panel metadata and the chunk list
//   chunk_NNNNN.bin  retained draws (binary records, see write_draw)
//   diagnostics.csv  one row of scalar diagnostics per iteration
//   checkpoint.bin   full chain state at the last flush, for resuming
// Every file is a deterministic function of (seed, config, data).

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "adaptspecx/config.hpp"
#include "adaptspecx/error.hpp"
#include "adaptspecx/lsbp.hpp"
#include "adaptspecx/panel.hpp"
#include "adaptspecx/sampler.hpp"

namespace adaptspecx {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One retained posterior draw.
struct Draw {
  long iteration = 0;
  std::vector<SegmentModel> theta;
  std::vector<int> z;
  StickState stick;
};

namespace store_detail {

inline constexpr char kChunkMagic[4] = {'A', 'S', 'X', 'C'};
inline constexpr char kCheckpointMagic[4] = {'A', 'S', 'X', 'K'};
inline constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void put(T v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  void put_doubles(const double* p, std::size_t n) { buf_.append(reinterpret_cast<const char*>(p), n * sizeof(double)); }
  [[nodiscard]] const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string name) : buf_(std::move(bytes)), name_(std::move(name)) {}
  template <class T>
  T get() {
    T v;
    take(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }
  void take(char* out, std::size_t n) {
    if (pos_ + n > buf_.size()) throw StoreError(name_ + ": truncated file");
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  void get_doubles(double* out, std::size_t n) { take(reinterpret_cast<char*>(out), n * sizeof(double)); }
  [[nodiscard]] bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline void write_draw(Writer& w, long iteration, const std::vector<SegmentModel>& theta, const std::vector<int>& z,
                       const StickState& stick) {
  w.put<std::int64_t>(iteration);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(theta.size()));
  for (const auto& m : theta) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.segments()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.spectra.front().coefficients.size()));
    for (int c : m.cutpoints) w.put<std::int32_t>(c);
    w.put_doubles(m.means.data(), m.means.size());
    for (const auto& s : m.spectra) w.put<double>(s.tau2_b);
    for (const auto& s : m.spectra) w.put_doubles(s.coefficients.data(), s.coefficients.size());
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(z.size()));
  for (int v : z) w.put<std::int32_t>(v);
  const std::uint32_t cols = stick.beta.empty() ? 0 : static_cast<std::uint32_t>(stick.beta.front().size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stick.beta.size()));
  w.put<std::uint32_t>(cols);
  for (const auto& b : stick.beta) w.put_doubles(b.data(), b.size());
  w.put_doubles(stick.tau2.data(), stick.tau2.size());
  w.put_doubles(stick.a.data(), stick.a.size());
}

inline Draw read_draw(Reader& r) {
  Draw d;
  d.iteration = r.get<std::int64_t>();
  const std::uint32_t H = r.get<std::uint32_t>();
  for (std::uint32_t h = 0; h < H; ++h) {
    SegmentModel m;
    const std::uint32_t segs = r.get<std::uint32_t>();
    const std::uint32_t coefs = r.get<std::uint32_t>();
    m.cutpoints.resize(segs);
    for (auto& c : m.cutpoints) c = r.get<std::int32_t>();
    m.means.resize(segs);
    r.get_doubles(m.means.data(), segs);
    m.spectra.resize(segs);
    for (auto& s : m.spectra) s.tau2_b = r.get<double>();
    for (auto& s : m.spectra) {
      s.coefficients.resize(coefs);
      r.get_doubles(s.coefficients.data(), coefs);
    }
    d.theta.push_back(std::move(m));
  }
  d.z.resize(r.get<std::uint32_t>());
  for (auto& v : d.z) v = r.get<std::int32_t>();
  const std::uint32_t sticks = r.get<std::uint32_t>();
  const std::uint32_t cols = r.get<std::uint32_t>();
  d.stick.beta.assign(sticks, Eigen::VectorXd(cols));
  for (auto& b : d.stick.beta) r.get_doubles(b.data(), cols);
  d.stick.tau2.resize(sticks);
  d.stick.a.resize(sticks);
  r.get_doubles(d.stick.tau2.data(), sticks);
  r.get_doubles(d.stick.a.data(), sticks);
  return d;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StoreError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file and a rename so readers never see a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& bytes) {
  const std::filesystem::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw StoreError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, p, ec);
  if (ec) throw StoreError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string chunk_name(int index) {
  std::ostringstream ss;
  ss << "chunk_" << std::setw(5) << std::setfill('0') << index << ".bin";
  return ss.str();
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string checkpoint_bytes(const ChainState& s) {
  Writer w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kVersion);
  write_draw(w, s.iteration, s.theta, s.z, s.stick);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.data.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.data.cols()));
  w.put_doubles(s.data.data(), static_cast<std::size_t>(s.data.size()));
  w.put<double>(s.log_likelihood);
  const long counters[] = {s.moves.birth_proposed, s.moves.birth_accepted, s.moves.death_proposed,
                           s.moves.death_accepted, s.moves.within_proposed, s.moves.within_accepted,
                           s.moves.hmc_proposed,   s.moves.hmc_accepted,   s.moves.hmc_divergent,
                           s.moves.newton_failures, s.swaps.proposed,      s.swaps.accepted,
                           s.swaps.mode_failures};
  for (long c : counters) w.put<std::int64_t>(c);
  return w.bytes();
}

inline ChainState parse_checkpoint(const std::filesystem::path& p) {
  Reader r(read_file(p), p.string());
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw StoreError(p.string() + ": not a checkpoint file");
  if (r.get<std::uint32_t>() != kVersion) throw StoreError(p.string() + ": unsupported version");
  Draw d = read_draw(r);
  ChainState s;
  s.iteration = d.iteration;
  s.theta = std::move(d.theta);
  s.z = std::move(d.z);
  s.stick = std::move(d.stick);
  const std::uint32_t rows = r.get<std::uint32_t>(), cols = r.get<std::uint32_t>();
  s.data.resize(rows, cols);
  r.get_doubles(s.data.data(), static_cast<std::size_t>(s.data.size()));
  s.log_likelihood = r.get<double>();
  long* counters[] = {&s.moves.birth_proposed, &s.moves.birth_accepted, &s.moves.death_proposed,
                      &s.moves.death_accepted, &s.moves.within_proposed, &s.moves.within_accepted,
                      &s.moves.hmc_proposed,   &s.moves.hmc_accepted,   &s.moves.hmc_divergent,
                      &s.moves.newton_failures, &s.swaps.proposed,      &s.swaps.accepted,
                      &s.swaps.mode_failures};
  for (long* c : counters) *c = r.get<std::int64_t>();
  return s;
}

inline double rate(long accepted, long proposed) {
  return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
}

inline std::string diagnostics_header(int H) {
  std::string h = "iteration,log_likelihood,occupied";
  for (int k = 1; k <= H; ++k) h += ",m_" + std::to_string(k);
  h += ",birth_rate,death_rate,within_rate,hmc_rate,swap_rate,newton_failures,hmc_divergent\n";
  return h;
}

inline std::string diagnostics_row(const ChainState& s) {
  const int H = static_cast<int>(s.theta.size());
  std::vector<int> counts(H, 0);
  for (int v : s.z) ++counts[v];
  int occupied = 0;
  for (int c : counts) occupied += c > 0 ? 1 : 0;
  std::ostringstream row;
  row << s.iteration << ',' << format_double(s.log_likelihood) << ',' << occupied;
  for (const auto& m : s.theta) row << ',' << m.segments();
  row << ',' << format_double(rate(s.moves.birth_accepted, s.moves.birth_proposed)) << ','
      << format_double(rate(s.moves.death_accepted, s.moves.death_proposed)) << ','
      << format_double(rate(s.moves.within_accepted, s.moves.within_proposed)) << ','
      << format_double(rate(s.moves.hmc_accepted, s.moves.hmc_proposed)) << ','
      << format_double(rate(s.swaps.accepted, s.swaps.proposed)) << ',' << s.moves.newton_failures << ','
      << s.moves.hmc_divergent << '\n';
  return row.str();
}

}  // namespace store_detail

// ---------------------------------------------------------------------------
// Manifest

inline Json panel_metadata(const Panel& panel) {
  Json cov = Json::array();
  for (int j = 0; j < panel.series(); ++j) {
    Json row = Json::array();
    for (int p = 0; p < panel.covariates.cols(); ++p) row.push_back(panel.covariates(j, p));
    cov.push_back(row);
  }
  return Json{{"series_length", panel.length()},
              {"series_names", panel.names},
              {"covariate_names", panel.covariate_names},
              {"covariates", cov}};
}

struct StoreManifest {
  SamplerConfig config;
  int series_length = 0;
  std::vector<std::string> series_names;
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd covariates;
  std::vector<std::string> chunks;
  long draws = 0;
  long iterations_completed = 0;
  bool complete = false;
};

inline StoreManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  Json j;
  try {
    j = Json::parse(store_detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw StoreError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "adaptspecx-store") throw StoreError(path.string() + ": not a sample store");
  StoreManifest m;
  m.config = config_from_json(j.at("config"));
  const Json& p = j.at("panel");
  m.series_length = p.at("series_length").get<int>();
  m.series_names = p.at("series_names").get<std::vector<std::string>>();
  m.covariate_names = p.at("covariate_names").get<std::vector<std::string>>();
  const Json& cov = p.at("covariates");
  m.covariates.resize(static_cast<Index>(cov.size()), static_cast<Index>(m.covariate_names.size()));
  for (std::size_t r = 0; r < cov.size(); ++r)
    for (std::size_t c = 0; c < m.covariate_names.size(); ++c)
      m.covariates(static_cast<Index>(r), static_cast<Index>(c)) = cov[r][c].get<double>();
  for (const auto& c : j.at("chunks")) m.chunks.push_back(c.at("file").get<std::string>());
  m.draws = j.at("draws").get<long>();
  m.iterations_completed = j.at("iterations_completed").get<long>();
  m.complete = j.at("complete").get<bool>();
  return m;
}

inline std::vector<Draw> read_chunk(const std::filesystem::path& p) {
  store_detail::Reader r(store_detail::read_file(p), p.string());
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, store_detail::kChunkMagic, 4) != 0) throw StoreError(p.string() + ": not a chunk file");
  if (r.get<std::uint32_t>() != store_detail::kVersion) throw StoreError(p.string() + ": unsupported version");
  const std::uint32_t count = r.get<std::uint32_t>();
  std::vector<Draw> draws;
  for (std::uint32_t i = 0; i < count; ++i) draws.push_back(store_detail::read_draw(r));
  if (!r.done()) throw StoreError(p.string() + ": trailing bytes");
  return draws;
}

struct SampleStore {
  StoreManifest manifest;
  std::vector<Draw> draws;
};

inline SampleStore read_store(const std::filesystem::path& dir) {
  SampleStore s;
  s.manifest = read_manifest(dir);
  for (const auto& c : s.manifest.chunks) {
    auto part = read_chunk(dir / c);
    for (auto& d : part) s.draws.push_back(std::move(d));
  }
  if (static_cast<long>(s.draws.size()) != s.manifest.draws) throw StoreError("draw count disagrees with manifest");
  return s;
}

// ---------------------------------------------------------------------------
// Running a chain

struct RunOptions {
  /// Flush draws, diagnostics and the checkpoint every this many iterations.
  int checkpoint_every = 1000;
  /// Continue from an existing checkpoint in the store directory.
  bool resume = false;
  /// Called after every iteration (progress reporting).
  std::function<void(const ChainState&)> on_iteration;
};

inline bool retained(long iteration, const SamplerConfig& cfg) {
  return iteration > cfg.burn_in && (iteration - cfg.burn_in) % cfg.thin == 0;
}

/// Runs the chain in memory, calling `on_draw` for each retained iteration.
inline ChainState run_chain_in_memory(const Panel& panel, const SamplerConfig& cfg,
                                      const std::function<void(const ChainState&)>& on_draw) {
  validate_panel(panel);
  cfg.validate(panel);
  const CovariateDesign design = build_design(panel.covariates, cfg.basis);
  const Rng base(cfg.seed);
  ChainState state = initial_state(panel, design, cfg, base);
  while (state.iteration < cfg.iterations) {
    state = mcmc_iteration(state, panel, design, cfg, base);
    if (on_draw && retained(state.iteration, cfg)) on_draw(state);
  }
  return state;
}

/// Runs the configured chain and persists it to `dir`.
inline StoreManifest run_chain(const Panel& panel, const SamplerConfig& cfg, const std::filesystem::path& dir,
                               const RunOptions& options = {}) {
  namespace fs = std::filesystem;
  using namespace store_detail;
  validate_panel(panel);
  cfg.validate(panel);
  require(options.checkpoint_every >= 1, "checkpoint interval must be at least 1");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StoreError("cannot create " + dir.string() + ": " + ec.message());

  const CovariateDesign design = build_design(panel.covariates, cfg.basis);
  const Rng base(cfg.seed);
  const int H = cfg.components;

  ChainState state;
  std::vector<std::string> chunks;
  long draws = 0;
  std::string diagnostics;
  if (options.resume && fs::exists(dir / "checkpoint.bin")) {
    const StoreManifest previous = read_manifest(dir);
    require(config_to_json(previous.config) == config_to_json(cfg), "resume requires the original configuration");
    state = parse_checkpoint(dir / "checkpoint.bin");
    chunks = previous.chunks;
    draws = previous.draws;
    diagnostics = read_file(dir / "diagnostics.csv");
  } else {
    state = initial_state(panel, design, cfg, base);
    diagnostics = diagnostics_header(H);
  }

  auto manifest_json = [&](bool complete) {
    Json chunk_list = Json::array();
    for (const auto& c : chunks) chunk_list.push_back(Json{{"file", c}});
    Json j{{"format", "adaptspecx-store"},
           {"version", kVersion},
           {"config", config_to_json(cfg)},
           {"panel", panel_metadata(panel)},
           {"components", H},
           {"spline_basis", cfg.component.basis_size},
           {"design_columns", design.columns()},
           {"chunks", chunk_list},
           {"draws", draws},
           {"iterations_completed", state.iteration},
           {"complete", complete},
           {"record_layout",
            "int64 iteration; uint32 H; per component {uint32 m; uint32 J+1; int32 cutpoints[m]; double means[m]; "
            "double tau2_b[m]; double coefficients[m][J+1]}; uint32 N; int32 z[N] (0-based); uint32 H-1; uint32 "
            "columns; double beta[H-1][columns]; double tau2[H-1]; double a[H-1]"}};
    return j.dump(2) + "\n";
  };

  Writer pending;
  std::uint32_t pending_count = 0;
  auto flush = [&](bool complete) {
    if (pending_count > 0) {
      Writer chunk;
      chunk.put_bytes(kChunkMagic, 4);
      chunk.put<std::uint32_t>(kVersion);
      chunk.put<std::uint32_t>(pending_count);
      chunk.put_bytes(pending.bytes().data(), pending.bytes().size());
      const std::string name = chunk_name(static_cast<int>(chunks.size()));
      write_file_atomic(dir / name, chunk.bytes());
      chunks.push_back(name);
      draws += pending_count;
      pending = Writer();
      pending_count = 0;
    }
    write_file_atomic(dir / "diagnostics.csv", diagnostics);
    write_file_atomic(dir / "checkpoint.bin", checkpoint_bytes(state));
    write_file_atomic(dir / "manifest.json", manifest_json(complete));
  };

  while (state.iteration < cfg.iterations) {
    state = mcmc_iteration(state, panel, design, cfg, base);
    diagnostics += diagnostics_row(state);
    if (retained(state.iteration, cfg)) {
      write_draw(pending, state.iteration, state.theta, state.z, state.stick);
      ++pending_count;
    }
    if (options.on_iteration) options.on_iteration(state);
    if (state.iteration % options.checkpoint_every == 0 && state.iteration < cfg.iterations) flush(false);
  }
  flush(true);
  return read_manifest(dir);
}

}  // namespace adaptspecx
