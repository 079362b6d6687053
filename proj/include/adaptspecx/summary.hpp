#pragma once

// Posterior surfaces of the time-varying mean, log-spectrum and variance at
// observed series or new covariate values, plus event probabilities.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "adaptspecx/error.hpp"
#include "adaptspecx/lsbp.hpp"
#include "adaptspecx/simulation.hpp"
#include "adaptspecx/spectral.hpp"
#include "adaptspecx/store.hpp"

namespace adaptspecx {

/// A location to summarize: an observed series (series >= 0) or a covariate
/// value without data.
struct QueryPoint {
  std::string name;
  int series = -1;
  Eigen::VectorXd u;
};

/// 2 * trapezoid integral of exp(row) over an equally spaced grid on [0, 1/2].
inline double variance_functional(const Eigen::Ref<const Eigen::VectorXd>& log_spectrum_row) {
  const Index F = log_spectrum_row.size();
  require(F >= 2, "variance functional needs at least 2 grid points");
  const Eigen::ArrayXd f = log_spectrum_row.array().exp();
  const double h = 0.5 / static_cast<double>(F - 1);
  return 2.0 * h * (f.sum() - 0.5 * (f[0] + f[F - 1]));
}

inline CovariateDesign design_from_manifest(const StoreManifest& m) {
  return build_design(m.covariates, m.config.basis);
}

/// Mixture weights of a draw at a query point. Observed series use the
/// indicator of their drawn component unless `plug_in` asks for pi_h(u_j).
inline Eigen::VectorXd point_weights(const Draw& draw, const CovariateDesign& design, const QueryPoint& point,
                                     bool plug_in) {
  const int H = static_cast<int>(draw.theta.size());
  if (point.series >= 0) {
    require(point.series < static_cast<int>(draw.z.size()), "query series index out of range");
    if (!plug_in) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(H);
      w[draw.z[point.series]] = 1.0;
      return w;
    }
    return mixture_weights(design.U_dagger.row(point.series).transpose(), draw.stick);
  }
  require(point.u.size() == design.covariates(), "query point dimension does not match the covariates");
  return mixture_weights(predictive_design_row(point.u, design), draw.stick);
}

struct DrawSurface {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::MatrixXd log_spectrum;
};

/// Surfaces of one draw under `weights`. `basis` is the spline basis on the
/// output frequency grid.
inline DrawSurface draw_surface(const Draw& draw, const Eigen::VectorXd& weights, int n, const Eigen::MatrixXd& basis,
                                bool with_log_spectrum, bool with_variance) {
  const int H = static_cast<int>(draw.theta.size());
  const Index F = basis.rows();
  DrawSurface out;
  out.mean = Eigen::VectorXd::Zero(n);
  if (with_variance) out.variance.resize(n);
  if (with_log_spectrum) out.log_spectrum.resize(n, F);

  std::vector<int> active;
  std::set<int> breaks{0, n};
  for (int h = 0; h < H; ++h) {
    if (weights[h] == 0.0) continue;
    active.push_back(h);
    const SegmentModel& m = draw.theta[h];
    for (int s = 0; s < m.segments(); ++s) {
      for (int t = m.start(s); t < m.end(s); ++t) out.mean[t] += weights[h] * m.means[s];
      breaks.insert(m.end(s));
    }
  }
  if (!with_log_spectrum && !with_variance) return out;

  // Per-component, per-segment log spectra on the output grid.
  std::vector<std::vector<Eigen::VectorXd>> lf(H);
  for (int h : active)
    for (const auto& spec : draw.theta[h].spectra) lf[h].push_back(basis * spec.coefficients);

  Eigen::VectorXd row(F);
  for (auto it = breaks.begin(); std::next(it) != breaks.end(); ++it) {
    const int a = *it, b = *std::next(it);
    row.setZero();
    for (int h : active) row += weights[h] * lf[h][draw.theta[h].segment_of(a)];
    const double var = with_variance ? variance_functional(row) : 0.0;
    for (int t = a; t < b; ++t) {
      if (with_variance) out.variance[t] = var;
      if (with_log_spectrum) out.log_spectrum.row(t) = row.transpose();
    }
  }
  return out;
}

/// Linear-interpolation quantile of a sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct SurfaceBand {
  Eigen::VectorXd mean, q05, q50, q95;
};

struct PointSummary {
  std::string name;
  SurfaceBand mean;
  SurfaceBand variance;
  /// Posterior mean of log f(t, w), n x F.
  Eigen::MatrixXd log_spectrum;
};

struct PosteriorSummary {
  int length = 0;
  Eigen::VectorXd omega;
  long draws = 0;
  long burn_in = 0;
  long iterations = 0;
  std::vector<PointSummary> points;
};

inline SurfaceBand summarize_band(const Eigen::MatrixXd& samples) {
  // samples: n x D
  SurfaceBand b;
  const Index n = samples.rows();
  b.mean = samples.rowwise().mean();
  b.q05.resize(n);
  b.q50.resize(n);
  b.q95.resize(n);
  std::vector<double> v(samples.cols());
  for (Index t = 0; t < n; ++t) {
    for (Index d = 0; d < samples.cols(); ++d) v[d] = samples(t, d);
    std::sort(v.begin(), v.end());
    b.q05[t] = sorted_quantile(v, 0.05);
    b.q50[t] = sorted_quantile(v, 0.50);
    b.q95[t] = sorted_quantile(v, 0.95);
  }
  return b;
}

inline PosteriorSummary estimate_surfaces(const SampleStore& store, const std::vector<QueryPoint>& points,
                                          int freq_grid_size, bool plug_in = false, bool with_variance = true) {
  require(!store.draws.empty(), "the sample store holds no draws");
  require(freq_grid_size >= 2, "frequency grid needs at least 2 points");
  const StoreManifest& m = store.manifest;
  const CovariateDesign design = design_from_manifest(m);
  const int n = m.series_length;
  PosteriorSummary out;
  out.length = n;
  out.omega = half_frequency_grid(freq_grid_size);
  out.draws = static_cast<long>(store.draws.size());
  out.burn_in = m.config.burn_in;
  out.iterations = m.iterations_completed;
  const Eigen::MatrixXd basis = spline_basis(out.omega, m.config.component.basis_size);
  const Index D = out.draws;

  for (const auto& point : points) {
    if (point.series < 0) require(point.u.size() == design.covariates(), "query point '" + point.name + "' has the wrong dimension");
    PointSummary ps;
    ps.name = point.name;
    Eigen::MatrixXd mean_samples(n, D), var_samples(n, with_variance ? D : 0);
    ps.log_spectrum = Eigen::MatrixXd::Zero(n, freq_grid_size);
    for (Index d = 0; d < D; ++d) {
      const Draw& draw = store.draws[d];
      const Eigen::VectorXd w = point_weights(draw, design, point, plug_in);
      const DrawSurface s = draw_surface(draw, w, n, basis, true, with_variance);
      mean_samples.col(d) = s.mean;
      if (with_variance) var_samples.col(d) = s.variance;
      ps.log_spectrum += s.log_spectrum;
    }
    ps.log_spectrum /= static_cast<double>(D);
    ps.mean = summarize_band(mean_samples);
    if (with_variance) ps.variance = summarize_band(var_samples);
    out.points.push_back(std::move(ps));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Event probabilities
//
// Predicates compare two terms, each mu(t), sigma2(t) (1-based t) or a number:
//   mu(200) < mu(50)      sigma2(10) >= 2.5

struct PredicateTerm {
  enum Kind { kMean, kVariance, kConstant } kind = kConstant;
  int time = 0;  // 0-based
  double value = 0.0;
};

struct Predicate {
  PredicateTerm lhs, rhs;
  std::string op;

  [[nodiscard]] bool needs_variance() const { return lhs.kind == PredicateTerm::kVariance || rhs.kind == PredicateTerm::kVariance; }

  [[nodiscard]] bool holds(double a, double b) const {
    if (op == "<") return a < b;
    if (op == "<=") return a <= b;
    if (op == ">") return a > b;
    if (op == ">=") return a >= b;
    if (op == "==") return a == b;
    return a != b;
  }
};

inline Predicate parse_predicate(const std::string& text, int n) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) -> void {
    throw InvalidArgument("predicate column " + std::to_string(pos + 1) + ": " + what);
  };
  auto skip = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto term = [&]() {
    skip();
    PredicateTerm t;
    std::size_t start = pos;
    while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) ++pos;
    const std::string word = text.substr(start, pos - start);
    if (word == "mu" || word == "sigma2") {
      t.kind = word == "mu" ? PredicateTerm::kMean : PredicateTerm::kVariance;
      skip();
      if (pos >= text.size() || text[pos] != '(') fail("expected '('");
      ++pos;
      skip();
      start = pos;
      while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
      if (start == pos) fail("expected a time index");
      const int time = std::stoi(text.substr(start, pos - start));
      if (time < 1 || time > n) fail("time index outside 1.." + std::to_string(n));
      t.time = time - 1;
      skip();
      if (pos >= text.size() || text[pos] != ')') fail("expected ')'");
      ++pos;
      return t;
    }
    pos = start;
    const char* begin = text.c_str() + pos;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("expected mu(t), sigma2(t) or a number");
    pos += static_cast<std::size_t>(end - begin);
    t.value = v;
    return t;
  };
  Predicate p;
  p.lhs = term();
  skip();
  for (const char* op : {"<=", ">=", "==", "!=", "<", ">"}) {
    if (text.compare(pos, std::char_traits<char>::length(op), op) == 0) {
      p.op = op;
      pos += p.op.size();
      break;
    }
  }
  if (p.op.empty()) fail("expected a comparison operator");
  p.rhs = term();
  skip();
  if (pos != text.size()) fail("unexpected trailing text");
  return p;
}

/// Fraction of draws in which the predicate holds at `point`.
inline double event_probability(const SampleStore& store, const QueryPoint& point, const Predicate& pred,
                                bool plug_in = false, int freq_grid_size = 128) {
  require(!store.draws.empty(), "the sample store holds no draws");
  const CovariateDesign design = design_from_manifest(store.manifest);
  const int n = store.manifest.series_length;
  const Eigen::MatrixXd basis = spline_basis(half_frequency_grid(freq_grid_size), store.manifest.config.component.basis_size);
  long hits = 0;
  for (const Draw& draw : store.draws) {
    const DrawSurface s = draw_surface(draw, point_weights(draw, design, point, plug_in), n, basis, false,
                                       pred.needs_variance());
    auto value = [&](const PredicateTerm& t) {
      switch (t.kind) {
        case PredicateTerm::kMean:
          return s.mean[t.time];
        case PredicateTerm::kVariance:
          return s.variance[t.time];
        default:
          return t.value;
      }
    };
    hits += pred.holds(value(pred.lhs), value(pred.rhs)) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(store.draws.size());
}

}  // namespace adaptspecx
