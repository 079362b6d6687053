#pragma once

// Piecewise AR(2) simulation design with covariate-defined regions, the true
// mean and log-spectrum surfaces it implies, and the MSE metrics used to score
// estimates against them.

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "adaptspecx/distributions.hpp"
#include "adaptspecx/error.hpp"
#include "adaptspecx/panel.hpp"
#include "adaptspecx/rng.hpp"

namespace adaptspecx {

// ---------------------------------------------------------------------------
// AR(2) facts

inline bool ar2_stationary(double phi1, double phi2) {
  return std::abs(phi2) < 1.0 && phi2 + phi1 < 1.0 && phi2 - phi1 < 1.0;
}

/// log[sigma2 / |1 - phi1 e^{-2 pi i w} - phi2 e^{-4 pi i w}|^2] on `grid`.
inline Eigen::VectorXd true_ar2_log_spectrum(double phi1, double phi2, double sigma2,
                                             const Eigen::Ref<const Eigen::VectorXd>& grid) {
  require(ar2_stationary(phi1, phi2), "AR(2) coefficients are not stationary");
  require(sigma2 > 0.0, "innovation variance must be positive");
  Eigen::VectorXd out(grid.size());
  for (Index k = 0; k < grid.size(); ++k) {
    const double a = 2.0 * std::numbers::pi * grid[k];
    const std::complex<double> d = 1.0 - phi1 * std::polar(1.0, -a) - phi2 * std::polar(1.0, -2.0 * a);
    out[k] = std::log(sigma2) - std::log(std::norm(d));
  }
  return out;
}

/// Stationary variance gamma_0 from the Yule-Walker equations.
inline double ar2_variance(double phi1, double phi2, double sigma2) {
  require(ar2_stationary(phi1, phi2), "AR(2) coefficients are not stationary");
  return (1.0 - phi2) * sigma2 / ((1.0 + phi2) * ((1.0 - phi2) * (1.0 - phi2) - phi1 * phi1));
}

/// Frequencies w_k = (k-1)/(2 k_max - 2), k = 1..k_max, covering [0, 1/2].
inline Eigen::VectorXd half_frequency_grid(int points) {
  require(points >= 2, "frequency grid needs at least 2 points");
  return Eigen::VectorXd::LinSpaced(points, 0.0, 0.5);
}

// ---------------------------------------------------------------------------
// Regimes and regions

struct Ar2Regime {
  double mu, phi1, phi2;
};

/// Mean and AR(2) coefficients before (first) and after (second) the switch.
struct ProcessSpec {
  Ar2Regime before, after;
};

inline const std::array<ProcessSpec, 4>& default_processes() {
  static const std::array<ProcessSpec, 4> table{{
      {{-1.5, 1.5, -0.75}, {-2.0, -0.8, 0.0}},
      {{1.0, -0.8, 0.0}, {-1.0, -0.8, 0.0}},
      {{0.0, 1.5, -0.75}, {0.0, 1.5, -0.75}},
      {{1.0, 0.2, 0.0}, {1.0, 1.5, -0.75}},
  }};
  return table;
}

struct RegionPolygon {
  int region = 1;
  std::vector<std::array<double, 2>> vertices;
};

/// Ordered polygons (first containing polygon wins) with a fallback region.
struct RegionMap {
  std::vector<RegionPolygon> polygons;
  int fallback = 4;

  [[nodiscard]] int region(double u1, double u2) const {
    for (const auto& p : polygons) {
      bool inside = false;
      const auto& v = p.vertices;
      for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        if ((v[i][1] > u2) != (v[j][1] > u2) &&
            u1 < (v[j][0] - v[i][0]) * (u2 - v[i][1]) / (v[j][1] - v[i][1]) + v[i][0])
          inside = !inside;
      }
      if (inside) return p.region;
    }
    return fallback;
  }
};

/// Four regions over the unit square: region 1 on the left, region 3 in the
/// upper right, region 4 in the lower right and region 2 a small square
/// enclave inside region 4.
inline RegionMap default_region_map() {
  RegionMap m;
  m.polygons.push_back({2, {{0.578, 0.188}, {0.862, 0.188}, {0.862, 0.472}, {0.578, 0.472}}});
  m.polygons.push_back({1, {{-1.0, -1.0}, {0.41, -1.0}, {0.41, 2.0}, {-1.0, 2.0}}});
  m.polygons.push_back({3, {{0.41, 0.695}, {2.0, 0.695}, {2.0, 2.0}, {0.41, 2.0}}});
  m.fallback = 4;
  return m;
}

struct NamedPoint {
  std::string name;
  double u1, u2;
};

/// Test points, one inside each region.
inline std::vector<NamedPoint> default_test_points() {
  return {{"T1", 0.2, 0.5}, {"T2", 0.72, 0.33}, {"T3", 0.7, 0.85}, {"T4", 0.95, 0.6}};
}

/// Anchors near which an observed series of each region is chosen.
inline std::vector<NamedPoint> default_observed_anchors() {
  return {{"D1", 0.2, 0.8}, {"D2", 0.72, 0.33}, {"D3", 0.8, 0.85}, {"D4", 0.6, 0.1}};
}

// ---------------------------------------------------------------------------
// Simulation

struct SimulationConfig {
  int series = 100;
  int length = 256;
  int switch_time = 128;  // last time (1-based) of the first regime
  double missing_fraction = 0.1;
  bool block_missing = false;
  int warmup = 200;
  RegionMap regions = default_region_map();
  std::array<ProcessSpec, 4> processes = default_processes();
};

struct SimulatedPanel {
  Panel panel;
  std::vector<int> regions;  // 1-based, per series
};

inline const Ar2Regime& regime_at(const ProcessSpec& p, int t, int switch_time) {
  return t <= switch_time ? p.before : p.after;
}

inline SimulatedPanel simulate_panel(const SimulationConfig& cfg, Rng& rng) {
  require(cfg.series >= 1, "need at least one series");
  require(cfg.length >= 2 && cfg.length % 2 == 0, "series length must be even and at least 2");
  require(cfg.missing_fraction >= 0.0 && cfg.missing_fraction < 1.0, "missing fraction must lie in [0, 1)");
  SimulatedPanel out;
  Panel& p = out.panel;
  const int n = cfg.length, N = cfg.series;
  p.time = Eigen::VectorXd::LinSpaced(n, 1.0, n);
  p.values.resize(n, N);
  p.covariates.resize(N, 2);
  p.covariate_names = {"u1", "u2"};
  const int missing = static_cast<int>(std::floor(cfg.missing_fraction * n + 0.5));
  for (int j = 0; j < N; ++j) {
    p.names.push_back("s" + std::to_string(j + 1));
    const double u1 = rng.uniform(), u2 = rng.uniform();
    p.covariates(j, 0) = u1;
    p.covariates(j, 1) = u2;
    const int region = cfg.regions.region(u1, u2);
    require(region >= 1 && region <= 4, "region map returned an unknown region");
    out.regions.push_back(region);
    const ProcessSpec& proc = cfg.processes[region - 1];

    // Deviations from the mean follow the AR(2) recursion; the warm-up runs
    // under the first regime.
    double d1 = 0.0, d2 = 0.0;
    for (int w = 0; w < cfg.warmup; ++w) {
      const double d = proc.before.phi1 * d1 + proc.before.phi2 * d2 + standard_normal(rng);
      d2 = d1;
      d1 = d;
    }
    for (int t = 1; t <= n; ++t) {
      const Ar2Regime& r = regime_at(proc, t, cfg.switch_time);
      const double d = r.phi1 * d1 + r.phi2 * d2 + standard_normal(rng);
      d2 = d1;
      d1 = d;
      p.values(t - 1, j) = r.mu + d;
    }

    if (missing > 0) {
      if (cfg.block_missing) {
        const int start = static_cast<int>(rng.uniform() * (n - missing + 1));
        for (int t = start; t < start + missing; ++t) p.values(t, j) = std::numeric_limits<double>::quiet_NaN();
      } else {
        // Partial Fisher-Yates shuffle picks `missing` distinct times.
        std::vector<int> idx(n);
        for (int t = 0; t < n; ++t) idx[t] = t;
        for (int i = 0; i < missing; ++i) {
          const int k = i + static_cast<int>(rng.uniform() * (n - i));
          std::swap(idx[i], idx[k]);
          p.values(idx[i], j) = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
  }
  return out;
}

/// True mean mu(t) for t = 1..n.
inline Eigen::VectorXd true_mean_surface(const ProcessSpec& proc, int n, int switch_time) {
  Eigen::VectorXd m(n);
  for (int t = 1; t <= n; ++t) m[t - 1] = regime_at(proc, t, switch_time).mu;
  return m;
}

/// True log f(t, w_k) as an n x grid.size() matrix.
inline Eigen::MatrixXd true_log_spectrum_surface(const ProcessSpec& proc, int n, int switch_time,
                                                 const Eigen::VectorXd& grid) {
  const Eigen::VectorXd before = true_ar2_log_spectrum(proc.before.phi1, proc.before.phi2, 1.0, grid);
  const Eigen::VectorXd after = true_ar2_log_spectrum(proc.after.phi1, proc.after.phi2, 1.0, grid);
  Eigen::MatrixXd out(n, grid.size());
  for (int t = 1; t <= n; ++t) out.row(t - 1) = (t <= switch_time ? before : after).transpose();
  return out;
}

/// Index of the series of region `region` nearest to (u1, u2), or -1.
inline int nearest_series(const SimulatedPanel& sim, int region, double u1, double u2) {
  int best = -1;
  double best_d = 0.0;
  for (int j = 0; j < sim.panel.series(); ++j) {
    if (sim.regions[j] != region) continue;
    const double d = std::hypot(sim.panel.covariates(j, 0) - u1, sim.panel.covariates(j, 1) - u2);
    if (best < 0 || d < best_d) {
      best = j;
      best_d = d;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Error metrics

/// (1/n) sum_t (estimate_t - truth_t)^2.
inline double mse_mean(const Eigen::Ref<const Eigen::VectorXd>& estimate, const Eigen::Ref<const Eigen::VectorXd>& truth) {
  require(estimate.size() == truth.size() && estimate.size() > 0, "mean surfaces are on different grids");
  return (estimate - truth).squaredNorm() / static_cast<double>(estimate.size());
}

/// (1/(n k_max)) sum_t sum_k (log f_hat - log f)^2 over an n x k_max grid.
inline double mse_spec(const Eigen::Ref<const Eigen::MatrixXd>& estimate, const Eigen::Ref<const Eigen::MatrixXd>& truth) {
  require(estimate.rows() == truth.rows() && estimate.cols() == truth.cols() && estimate.size() > 0,
          "log-spectrum surfaces are on different grids");
  return (estimate - truth).squaredNorm() / static_cast<double>(estimate.size());
}

}  // namespace adaptspecx
