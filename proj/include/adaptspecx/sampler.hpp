#pragma once

// The full Gibbs cycle for the covariate-dependent mixture: imputation,
// component updates, indicators, stick coefficients, stick scales and a
// label-swap move.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "adaptspecx/component.hpp"
#include "adaptspecx/distributions.hpp"
#include "adaptspecx/lsbp.hpp"
#include "adaptspecx/panel.hpp"
#include "adaptspecx/parallel.hpp"
#include "adaptspecx/rng.hpp"
#include "adaptspecx/spectral.hpp"

namespace adaptspecx {

struct SamplerConfig {
  ComponentPrior component;
  StickPrior stick;
  int components = 25;  // H
  int basis = 10;       // B
  int iterations = 50000;
  int burn_in = 10000;
  int thin = 1;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate(const Panel& panel) const {
    component.validate(panel.length());
    require(components >= 2, "the mixture needs at least two components");
    require(basis >= 0 && basis < panel.series(), "basis truncation B must satisfy 0 <= B < N");
    require(iterations > burn_in, "iterations must exceed burn-in");
    require(burn_in >= 0, "burn-in must be nonnegative");
    require(thin >= 1, "thinning must be at least 1");
    require(threads >= 1, "threads must be at least 1");
    require(stick.sigma2_beta > 0.0 && stick.nu_tau > 0.0 && stick.A_tau > 0.0,
            "stick prior parameters must be positive");
  }
};

struct SwapStats {
  long proposed = 0;
  long accepted = 0;
  long mode_failures = 0;
};

struct ChainState {
  std::vector<SegmentModel> theta;
  StickState stick;
  std::vector<int> z;
  /// Panel values with the current imputations in place of missing entries.
  Eigen::MatrixXd data;
  long iteration = 0;
  double log_likelihood = 0.0;
  MoveStats moves;
  SwapStats swaps;
};

// Task tags for RNG substreams.
enum class Step : std::uint64_t { kInit = 0, kImpute = 1, kComponent = 2, kIndicator = 3, kBeta = 4, kScale = 5, kSwap = 6 };

inline Rng task_rng(const Rng& base, long iteration, Step step, long index) {
  return base.substream(static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(step),
                        static_cast<std::uint64_t>(index));
}

/// Columns of `data` whose indicator equals h.
inline Eigen::MatrixXd assigned_data(const Eigen::MatrixXd& data, const std::vector<int>& z, int h) {
  std::vector<Index> cols;
  for (std::size_t j = 0; j < z.size(); ++j)
    if (z[j] == h) cols.push_back(static_cast<Index>(j));
  Eigen::MatrixXd out(data.rows(), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Index>(i)) = data.col(cols[i]);
  return out;
}

/// log g_h(x_j | Theta_h) for every series j and component h. Each distinct
/// segment (start, length) is transformed once per series, and each
/// component's weighted inverse spectra are shared across series.
inline Eigen::MatrixXd series_log_likelihoods(const Eigen::MatrixXd& data, const std::vector<SegmentModel>& theta,
                                              int threads) {
  const int N = static_cast<int>(data.cols()), H = static_cast<int>(theta.size());
  struct SegmentTerms {
    std::size_t key;
    double mu;
    double log_det;            // sum_k w_k log f_k
    Eigen::VectorXd inv_f;     // w_k / f_k
  };
  std::vector<std::pair<Index, Index>> keys;
  std::vector<std::vector<SegmentTerms>> terms(H);
  for (int h = 0; h < H; ++h) {
    const SegmentModel& m = theta[h];
    for (int s = 0; s < m.segments(); ++s) {
      const std::pair<Index, Index> key{m.start(s), m.length(s)};
      auto it = std::find(keys.begin(), keys.end(), key);
      const auto k = static_cast<std::size_t>(it - keys.begin());
      if (it == keys.end()) keys.push_back(key);
      const Eigen::ArrayXd lf =
          half_log_spectral_density(m.spectra[s], key.second).array().max(kLogSpectrumFloor);
      const Eigen::ArrayXd w = half_spectrum_weights(key.second).array();
      terms[h].push_back({k, m.means[s], (w * lf).sum(), (w * (-lf).exp()).matrix()});
    }
  }
  Eigen::MatrixXd out(N, H);
  parallel_for(N, threads, [&](int j) {
    std::vector<SegmentStatistics> stats;
    stats.reserve(keys.size());
    for (const auto& [start, len] : keys) stats.push_back(segment_statistics(data.col(j), start, len));
    for (int h = 0; h < H; ++h) {
      double ll = -0.5 * static_cast<double>(data.rows()) * kLog2Pi;
      for (const auto& t : terms[h]) {
        const SegmentStatistics& st = stats[t.key];
        const Index half = st.power.size();
        const double quad = st.zero_frequency_power(t.mu) * t.inv_f[0] +
                            st.power.tail(half - 1).dot(t.inv_f.tail(half - 1));
        ll -= 0.5 * (t.log_det + quad);
      }
      out(j, h) = ll;
    }
  });
  return out;
}

inline double assigned_log_likelihood(const Eigen::MatrixXd& log_lik, const std::vector<int>& z) {
  double total = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) total += log_lik(static_cast<Index>(j), z[j]);
  return total;
}

// ---------------------------------------------------------------------------
// Initialization

/// Starting state: observed-mean imputation, indicators spread uniformly over
/// the H components, a single-segment modal fit for each occupied component,
/// prior draws for empty ones, and stick coefficients at the prior mean.
inline ChainState initial_state(const Panel& panel, const CovariateDesign& design, const SamplerConfig& cfg,
                                const Rng& base) {
  const int n = panel.length(), N = panel.series(), H = cfg.components;
  ChainState s;
  s.data = panel.values;
  for (int j = 0; j < N; ++j) {
    double sum = 0.0;
    int count = 0;
    for (int t = 0; t < n; ++t)
      if (!panel.missing(t, j)) {
        sum += panel.values(t, j);
        ++count;
      }
    for (int t = 0; t < n; ++t)
      if (panel.missing(t, j)) s.data(t, j) = sum / count;
  }
  Rng rng = task_rng(base, 0, Step::kInit, 0);
  s.z.resize(N);
  for (int j = 0; j < N; ++j) s.z[j] = static_cast<int>(rng.uniform() * H);
  for (int h = 0; h < H; ++h) {
    Rng rh = task_rng(base, 0, Step::kInit, 1 + h);
    const Eigen::MatrixXd data_h = assigned_data(s.data, s.z, h);
    if (data_h.cols() == 0) {
      s.theta.push_back(draw_from_prior(n, cfg.component, rh));
      continue;
    }
    const SegmentStatistics stats = segment_statistics(data_h, 0, n);
    const ModalProposal q = modal_proposal(stats, 1.0, cfg.component);
    SegmentModel m;
    m.cutpoints = {n};
    m.means = {q.mu_mode};
    m.spectra = {SplineSpectrum{q.mode.b, 1.0}};
    s.theta.push_back(std::move(m));
  }
  s.stick.beta.assign(H - 1, beta_prior(design, 1.0, cfg.stick).first);
  s.stick.tau2.assign(H - 1, 1.0);
  s.stick.a.assign(H - 1, 1.0);
  s.log_likelihood = assigned_log_likelihood(series_log_likelihoods(s.data, s.theta, cfg.threads), s.z);
  return s;
}

// ---------------------------------------------------------------------------
// Label swap

/// log acceptance ratio for moving from `from` to `to`, two states that differ
/// by exchanging labels h1 < h2. Both Laplace approximations are rebuilt from
/// the labels of the state they describe, so the ratio of the reverse move is
/// the negation.
inline double label_swap_log_ratio(const StickState& from_stick, const std::vector<int>& from_z,
                                   const StickState& to_stick, const std::vector<int>& to_z, int h1, int h2,
                                   const CovariateDesign& design, const StickPrior& prior, bool* mode_failed = nullptr) {
  const int H = from_stick.components();
  auto log_target = [&](const StickState& st, const std::vector<int>& z) {
    const Eigen::MatrixXd lw = log_mixture_weights(design.U_dagger, st);
    double v = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) v += lw(static_cast<Index>(j), z[j]);
    for (int h : {h1, h2})
      if (h < H - 1) v += beta_log_prior(st.beta[h], design, st.tau2[h], prior);
    return v;
  };
  double log_q = 0.0;
  for (int h : {h1, h2}) {
    if (h >= H - 1) continue;
    const BetaLaplace rev = beta_laplace(h, from_z, design, from_stick.tau2[h], prior);
    const BetaLaplace fwd = beta_laplace(h, to_z, design, to_stick.tau2[h], prior);
    if (mode_failed && !(rev.converged && fwd.converged)) *mode_failed = true;
    log_q += rev.log_density(from_stick.beta[h]) - fwd.log_density(to_stick.beta[h]);
  }
  return log_target(to_stick, to_z) - log_target(from_stick, from_z) + log_q;
}

/// Exchanges labels h1 < h2 in z, Theta and (when both have stick scales) the
/// scales; the stick coefficients are left for the caller to propose.
inline void swap_labels(ChainState& s, int h1, int h2) {
  for (int& zj : s.z) {
    if (zj == h1)
      zj = h2;
    else if (zj == h2)
      zj = h1;
  }
  std::swap(s.theta[h1], s.theta[h2]);
  const int H = static_cast<int>(s.theta.size());
  if (h2 < H - 1) {
    std::swap(s.stick.tau2[h1], s.stick.tau2[h2]);
    std::swap(s.stick.a[h1], s.stick.a[h2]);
  }
}

inline ChainState label_swap(const ChainState& state, const CovariateDesign& design, const StickPrior& prior, Rng& rng) {
  const int H = static_cast<int>(state.theta.size());
  require(H >= 2, "label swap needs at least two components");
  int h1 = static_cast<int>(rng.uniform() * H);
  int h2 = static_cast<int>(rng.uniform() * (H - 1));
  if (h2 >= h1) ++h2;
  if (h1 > h2) std::swap(h1, h2);

  ChainState next = state;
  ++next.swaps.proposed;
  swap_labels(next, h1, h2);
  bool failed = false;
  for (int h : {h1, h2}) {
    if (h >= H - 1) continue;
    const BetaLaplace fwd = beta_laplace(h, next.z, design, next.stick.tau2[h], prior);
    failed = failed || !fwd.converged;
    next.stick.beta[h] = sample_mvn_precision_factor(fwd.mode, fwd.precision, rng);
  }
  const double log_alpha =
      label_swap_log_ratio(state.stick, state.z, next.stick, next.z, h1, h2, design, prior, &failed);
  ChainState out = state;
  if (failed) {
    ++out.swaps.proposed;
    ++out.swaps.mode_failures;
    return out;
  }
  if (std::log(rng.uniform()) < log_alpha) {
    ++next.swaps.accepted;
    return next;
  }
  ++out.swaps.proposed;
  return out;
}

// ---------------------------------------------------------------------------
// One iteration

inline ChainState mcmc_iteration(const ChainState& state, const Panel& panel, const CovariateDesign& design,
                                 const SamplerConfig& cfg, const Rng& base) {
  const int N = panel.series(), H = cfg.components;
  ChainState s = state;
  const long it = state.iteration + 1;

  // Step 1: impute under the current component of each series.
  parallel_for(N, cfg.threads, [&](int j) {
    std::vector<bool> mask = panel.missing_mask(j);
    if (std::none_of(mask.begin(), mask.end(), [](bool m) { return m; })) return;
    Rng rng = task_rng(base, it, Step::kImpute, j);
    Eigen::VectorXd col = s.data.col(j);
    impute_missing(col, mask, s.theta[s.z[j]], rng);
    s.data.col(j) = col;
  });

  // Step 2: component updates.
  std::vector<MoveStats> stats(H);
  parallel_for(H, cfg.threads, [&](int h) {
    Rng rng = task_rng(base, it, Step::kComponent, h);
    s.theta[h] = component_update(s.theta[h], assigned_data(s.data, s.z, h), cfg.component, rng, &stats[h]);
  });
  for (const auto& st : stats) s.moves += st;

  // Step 3: indicators.
  const Eigen::MatrixXd log_lik = series_log_likelihoods(s.data, s.theta, cfg.threads);
  const Eigen::MatrixXd log_w = log_mixture_weights(design.U_dagger, s.stick);
  parallel_for(N, cfg.threads, [&](int j) {
    Rng rng = task_rng(base, it, Step::kIndicator, j);
    const Eigen::VectorXd lp = (log_lik.row(j) + log_w.row(j)).transpose();
    if (!std::isfinite(log_sum_exp(lp)))
      throw NumericalFailure("all component probabilities vanish for series " + panel.names[j]);
    s.z[j] = sample_categorical_log(lp, rng);
  });
  s.log_likelihood = assigned_log_likelihood(log_lik, s.z);

  // Steps 4 and 5: stick coefficients, then their scales.
  parallel_for(H - 1, cfg.threads, [&](int h) {
    Rng rng = task_rng(base, it, Step::kBeta, h);
    s.stick.beta[h] = sample_beta_dagger(h, s.z, design, s.stick, cfg.stick, rng);
  });
  parallel_for(H - 1, cfg.threads, [&](int h) {
    Rng rng = task_rng(base, it, Step::kScale, h);
    auto [tau2, a] = sample_tau_h(h, s.stick, design.basis(), cfg.stick, rng);
    s.stick.tau2[h] = tau2;
    s.stick.a[h] = a;
  });

  // Step 6: label swap.
  Rng rng = task_rng(base, it, Step::kSwap, 0);
  s = label_swap(s, design, cfg.stick, rng);
  s.iteration = it;
  return s;
}

}  // namespace adaptspecx
