#pragma once

// Single-component AdaptSPEC sampler. A component owns a SegmentModel and is
// updated against the complete (imputed) series currently assigned to it,
// stored as the columns of an n x c matrix. All series assigned to a
// component share its segmentation, means and spectra, so the likelihood of
// each segment depends on the data only through pooled SegmentStatistics.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "adaptspecx/distributions.hpp"
#include "adaptspecx/error.hpp"
#include "adaptspecx/rng.hpp"
#include "adaptspecx/segment_model.hpp"
#include "adaptspecx/spectral.hpp"

namespace adaptspecx {

// ---------------------------------------------------------------------------
// Conditional of the spline coefficients

/// Diagonal of Sigma_b^{-1} = diag(1/sigma2_alpha, 1/tau2_b, ..., 1/tau2_b).
inline Eigen::VectorXd spline_prior_precision(int basis_size, double sigma2_alpha, double tau2_b) {
  Eigen::VectorXd d = Eigen::VectorXd::Constant(basis_size + 1, 1.0 / tau2_b);
  d[0] = 1.0 / sigma2_alpha;
  return d;
}

inline double spline_log_prior(const Eigen::VectorXd& b, double sigma2_alpha, double tau2_b) {
  const Eigen::VectorXd d = spline_prior_precision(static_cast<int>(b.size()) - 1, sigma2_alpha, tau2_b);
  return 0.5 * (d.array().log().sum() - static_cast<double>(b.size()) * kLog2Pi - (d.array() * b.array().square()).sum());
}

struct BConditional {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// log p(b | mu, tau2_b, data) up to a b-free constant, with its gradient and
/// Hessian. `power` holds the summed periodogram of `replicates` series on the
/// half grid of a length-n segment, entry 0 already evaluated at the segment
/// mean. The value is the pooled Whittle log-likelihood plus the Gaussian log
/// prior density of b; frequencies where log f falls below the spectrum floor
/// contribute no curvature.
inline BConditional b_log_conditional(const Eigen::VectorXd& b, double tau2_b, const Eigen::VectorXd& power, Index n,
                                      int replicates, double sigma2_alpha, bool with_hessian = true) {
  const int J = static_cast<int>(b.size()) - 1;
  require(J >= 1, "spline coefficients need at least one basis function");
  require(power.size() == half_spectrum_size(n), "power vector does not match the segment length");
  const Eigen::MatrixXd& q = fourier_spline_basis(n, J);
  const Eigen::VectorXd lf = q * b;
  const Eigen::VectorXd prec = spline_prior_precision(J, sigma2_alpha, tau2_b);
  const double c = replicates;

  Eigen::VectorXd r(lf.size()), h(lf.size());
  double value = 0.0;
  for (Index k = 0; k < lf.size(); ++k) {
    const double w = frequency_multiplicity(k, n);
    const bool floored = lf[k] < kLogSpectrumFloor;
    const double l = floored ? kLogSpectrumFloor : lf[k];
    const double pe = power[k] * std::exp(-l);
    value -= 0.5 * w * (c * l + pe);
    r[k] = floored ? 0.0 : 0.5 * w * (pe - c);
    h[k] = floored ? 0.0 : 0.5 * w * pe;
  }
  BConditional out;
  out.value = value - 0.5 * c * static_cast<double>(n) * kLog2Pi + spline_log_prior(b, sigma2_alpha, tau2_b);
  out.gradient = q.transpose() * r - (prec.array() * b.array()).matrix();
  if (with_hessian) {
    const Eigen::MatrixXd scaled = q.array().colwise() * h.array().sqrt();
    out.hessian = Eigen::MatrixXd::Zero(b.size(), b.size());
    out.hessian.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose(), -1.0);
    out.hessian.triangularView<Eigen::StrictlyUpper>() = out.hessian.transpose();
    out.hessian.diagonal() -= prec;
  }
  return out;
}

/// Single-series form taking the full length-n periodogram.
inline BConditional b_log_conditional_and_derivatives(const SplineSpectrum& spec,
                                                      const Eigen::Ref<const Eigen::VectorXd>& periodogram,
                                                      double sigma2_alpha) {
  const Index n = periodogram.size();
  require(n >= 2, "periodogram too short");
  Eigen::VectorXd half(half_spectrum_size(n));
  for (Index k = 0; k < half.size(); ++k) {
    const Index mirror = (n - k) % n;
    half[k] = mirror == k ? periodogram[k] : 0.5 * (periodogram[k] + periodogram[mirror]);
  }
  return b_log_conditional(spec.coefficients, spec.tau2_b, half, n, 1, sigma2_alpha);
}

/// Expected negative Hessian of the b conditional: 0.5 c sum_k q_k q_k' + Sigma_b^{-1}.
inline Eigen::MatrixXd rmhmc_metric(Index n_segment, int basis_size, double sigma2_alpha, double tau2_b,
                                    int replicates = 1) {
  require(n_segment >= 2 && basis_size >= 1, "rmhmc_metric needs n >= 2 and J >= 1");
  require(sigma2_alpha > 0.0 && tau2_b > 0.0, "rmhmc_metric needs positive variances");
  const Eigen::MatrixXd& q = fourier_spline_basis(n_segment, basis_size);
  Eigen::VectorXd w = half_spectrum_weights(n_segment) * (0.5 * replicates);
  Eigen::MatrixXd g = q.transpose() * w.asDiagonal() * q;
  g.diagonal() += spline_prior_precision(basis_size, sigma2_alpha, tau2_b);
  return g;
}

// ---------------------------------------------------------------------------
// Move bookkeeping

struct MoveStats {
  long birth_proposed = 0, birth_accepted = 0;
  long death_proposed = 0, death_accepted = 0;
  long within_proposed = 0, within_accepted = 0;
  long hmc_proposed = 0, hmc_accepted = 0;
  long hmc_divergent = 0;
  long newton_failures = 0;

  MoveStats& operator+=(const MoveStats& o) {
    birth_proposed += o.birth_proposed;
    birth_accepted += o.birth_accepted;
    death_proposed += o.death_proposed;
    death_accepted += o.death_accepted;
    within_proposed += o.within_proposed;
    within_accepted += o.within_accepted;
    hmc_proposed += o.hmc_proposed;
    hmc_accepted += o.hmc_accepted;
    hmc_divergent += o.hmc_divergent;
    newton_failures += o.newton_failures;
    return *this;
  }
};

// ---------------------------------------------------------------------------
// Segment-level densities

inline double log_mean_prior(double mu, const ComponentPrior& prior) {
  if (!(mu > prior.mu_lower && mu < prior.mu_upper)) return -kInf;
  return -std::log(prior.mu_upper - prior.mu_lower);
}

/// log of the number of legal cutpoint configurations with m segments.
inline double log_cutpoint_configurations(int n, int m, int min_length) {
  const double free = static_cast<double>(n - m * min_length);
  if (free < 0) return -kInf;
  return std::lgamma(free + m) - std::lgamma(static_cast<double>(m)) - std::lgamma(free + 1.0);
}

/// Likelihood plus the priors of mu, b and tau2_b for one segment.
inline double segment_log_posterior(const SegmentStatistics& stats, double mu, const SplineSpectrum& spec,
                                    const ComponentPrior& prior) {
  return segment_log_likelihood(stats, mu, spec) + log_mean_prior(mu, prior) +
         spline_log_prior(spec.coefficients, prior.sigma2_alpha, spec.tau2_b) +
         inverse_gamma_log_density(spec.tau2_b, prior.tau2_prior_shape, prior.tau2_prior_scale);
}

// ---------------------------------------------------------------------------
// Segment mean

inline double mean_conditional_variance(const SegmentStatistics& stats, const SplineSpectrum& spec) {
  const double lf0 = std::max(fourier_spline_basis(stats.length, spec.basis_size()).row(0).dot(spec.coefficients),
                              kLogSpectrumFloor);
  return std::exp(lf0) / (static_cast<double>(stats.length) * stats.replicates);
}

/// mu | b, data ~ N(xbar, f(0)/(n c)) truncated to (mu_lower, mu_upper); with
/// no series (c = 0) this is the uniform prior.
inline double sample_segment_mean(const SegmentStatistics& stats, const SplineSpectrum& spec,
                                  const ComponentPrior& prior, Rng& rng) {
  if (stats.replicates == 0) return prior.mu_lower + (prior.mu_upper - prior.mu_lower) * rng.uniform();
  return sample_truncated_normal(stats.grand_mean, mean_conditional_variance(stats, spec), prior.mu_lower,
                                 prior.mu_upper, rng);
}

inline double segment_mean_log_density(double mu, const SegmentStatistics& stats, const SplineSpectrum& spec,
                                       const ComponentPrior& prior) {
  if (stats.replicates == 0) return log_mean_prior(mu, prior);
  return truncated_normal_log_density(mu, stats.grand_mean, mean_conditional_variance(stats, spec), prior.mu_lower,
                                      prior.mu_upper);
}

/// Single-series form with the segment values and full log-spectrum.
inline double sample_segment_mean(const Eigen::Ref<const Eigen::VectorXd>& segment, const Eigen::VectorXd& log_f,
                                  const ComponentPrior& prior, Rng& rng) {
  require(segment.size() >= 1 && log_f.size() == segment.size(), "segment and log-spectrum lengths differ");
  const double var = std::exp(std::max(log_f[0], kLogSpectrumFloor)) / static_cast<double>(segment.size());
  return sample_truncated_normal(segment.mean(), var, prior.mu_lower, prior.mu_upper, rng);
}

// ---------------------------------------------------------------------------
// Newton mode and modal (mu, b) proposal

struct BMode {
  Eigen::VectorXd b;
  Eigen::LLT<Eigen::MatrixXd> precision;
  bool converged = false;
  int iterations = 0;
};

inline constexpr int kNewtonMaxIterations = 50;
inline constexpr double kNewtonGradientTolerance = 1e-8;

/// Mode of the b conditional by damped Newton iteration from a data-only
/// starting point, so the result is a deterministic function of its inputs.
/// If the iteration does not converge the last iterate is returned.
inline BMode find_b_mode(const Eigen::VectorXd& power, Index n, int replicates, int basis_size, double tau2_b,
                         double sigma2_alpha) {
  BMode out;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(basis_size + 1);
  if (replicates > 0) {
    const double mean_power = half_spectrum_weights(n).dot(power) / (static_cast<double>(n) * replicates);
    b[0] = std::log(std::max(mean_power, kSpectrumFloor));
  }

  BConditional cur = b_log_conditional(b, tau2_b, power, n, replicates, sigma2_alpha);
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int it = 0; it < kNewtonMaxIterations; ++it) {
    out.iterations = it;
    llt.compute(-cur.hessian);
    if (llt.info() != Eigen::Success) break;
    if (cur.gradient.cwiseAbs().maxCoeff() < kNewtonGradientTolerance) {
      out.converged = true;
      break;
    }
    const Eigen::VectorXd step = llt.solve(cur.gradient);
    const double decrement = cur.gradient.dot(step);
    if (decrement < 1e-14 * (1.0 + std::abs(cur.value))) {
      out.converged = true;
      break;
    }
    double t = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      Eigen::VectorXd trial = b + t * step;
      BConditional next = b_log_conditional(trial, tau2_b, power, n, replicates, sigma2_alpha);
      if (std::isfinite(next.value) && next.value >= cur.value) {
        b = std::move(trial);
        cur = std::move(next);
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  out.b = b;
  out.precision.compute(-cur.hessian);
  if (out.precision.info() != Eigen::Success) {
    out.precision.compute(rmhmc_metric(n, basis_size, sigma2_alpha, tau2_b, replicates));
    out.converged = false;
  }
  return out;
}

/// Gaussian approximation at the mode of the (mu, b) conditional of one
/// segment. b is drawn from N(mode, (-H)^{-1}) computed with the zero-frequency
/// power evaluated at the clamped sample mean, and mu is then drawn from its
/// exact truncated-normal conditional given b.
struct ModalProposal {
  const SegmentStatistics* stats = nullptr;
  double tau2_b = 1.0;
  double mu_mode = 0.0;
  BMode mode;

  [[nodiscard]] double log_density(double mu, const Eigen::VectorXd& b, const ComponentPrior& prior) const {
    SplineSpectrum spec{b, tau2_b};
    return mvn_precision_log_density(b, mode.b, mode.precision) + segment_mean_log_density(mu, *stats, spec, prior);
  }

  [[nodiscard]] std::pair<double, SplineSpectrum> draw(const ComponentPrior& prior, Rng& rng) const {
    SplineSpectrum spec{sample_mvn_precision_factor(mode.b, mode.precision, rng), tau2_b};
    const double mu = sample_segment_mean(*stats, spec, prior, rng);
    return {mu, std::move(spec)};
  }
};

inline ModalProposal modal_proposal(const SegmentStatistics& stats, double tau2_b, const ComponentPrior& prior,
                                    MoveStats* move_stats = nullptr) {
  ModalProposal p;
  p.stats = &stats;
  p.tau2_b = tau2_b;
  const double margin = 1e-9 * (prior.mu_upper - prior.mu_lower);
  p.mu_mode = std::clamp(stats.grand_mean, prior.mu_lower + margin, prior.mu_upper - margin);
  p.mode = find_b_mode(stats.power_at(p.mu_mode), stats.length, stats.replicates, prior.basis_size, tau2_b,
                       prior.sigma2_alpha);
  if (!p.mode.converged && move_stats) ++move_stats->newton_failures;
  return p;
}

/// Pooled statistics for arbitrary segments of one component's data, cached
/// by (start, length) for the duration of a sweep, together with the modal
/// proposals built from them.
class SegmentStatsCache {
 public:
  explicit SegmentStatsCache(const Eigen::MatrixXd& data) : data_(data) {}

  const SegmentStatistics& get(int start, int length) {
    auto key = std::make_pair(start, length);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, segment_statistics(data_, start, length)).first;
    return it->second;
  }

  const SegmentStatistics& segment(const SegmentModel& model, int s) { return get(model.start(s), model.length(s)); }

  /// Modal proposal for segment [start, start + length) at smoothing tau2_b.
  /// Newton failures are counted once, when the proposal is first built.
  const ModalProposal& proposal(int start, int length, double tau2_b, const ComponentPrior& prior,
                                MoveStats* move_stats = nullptr) {
    auto key = std::make_tuple(start, length, std::bit_cast<std::uint64_t>(tau2_b));
    auto it = proposals_.find(key);
    if (it == proposals_.end())
      it = proposals_.emplace(key, modal_proposal(get(start, length), tau2_b, prior, move_stats)).first;
    return it->second;
  }

  const ModalProposal& proposal(const SegmentModel& model, int s, double tau2_b, const ComponentPrior& prior,
                                MoveStats* move_stats = nullptr) {
    return proposal(model.start(s), model.length(s), tau2_b, prior, move_stats);
  }

  [[nodiscard]] int replicates() const { return static_cast<int>(data_.cols()); }
  [[nodiscard]] int series_length() const { return static_cast<int>(data_.rows()); }

 private:
  const Eigen::MatrixXd& data_;
  std::map<std::pair<int, int>, SegmentStatistics> cache_;
  std::map<std::tuple<int, int, std::uint64_t>, ModalProposal> proposals_;
};

// ---------------------------------------------------------------------------
// Constant-metric HMC for b

struct HmcSettings {
  double step_min = 0.1;
  double step_max = 1.0;
  int steps_min = 1;
  int steps_max = 10;
  /// Test hooks: a positive fixed_step or nonnegative fixed_steps overrides the draw.
  double fixed_step = 0.0;
  int fixed_steps = -1;
};

struct HmcResult {
  Eigen::VectorXd b;
  bool accepted = false;
  bool divergent = false;
  double energy_error = 0.0;
};

/// One leapfrog trajectory for log p(b | mu, data) with mass matrix `metric`
/// from initial momentum p0, followed by the Metropolis decision using `u`.
inline HmcResult hmc_trajectory(const Eigen::VectorXd& b0, const Eigen::VectorXd& p0, double step, int steps,
                                const Eigen::LLT<Eigen::MatrixXd>& metric, double tau2_b,
                                const Eigen::VectorXd& power, Index n, int replicates, double sigma2_alpha, double u) {
  HmcResult out;
  BConditional start = b_log_conditional(b0, tau2_b, power, n, replicates, sigma2_alpha, false);
  const double h0 = -start.value + 0.5 * p0.dot(metric.solve(p0));
  Eigen::VectorXd b = b0, p = p0;
  Eigen::VectorXd grad = start.gradient;
  double value = start.value;
  for (int i = 0; i < steps; ++i) {
    p += 0.5 * step * grad;
    b += step * metric.solve(p);
    BConditional next = b_log_conditional(b, tau2_b, power, n, replicates, sigma2_alpha, false);
    grad = next.gradient;
    value = next.value;
    p += 0.5 * step * grad;
  }
  const double h1 = -value + 0.5 * p.dot(metric.solve(p));
  out.energy_error = h1 - h0;
  if (!std::isfinite(h1) || !b.allFinite()) {
    out.divergent = true;
    out.b = b0;
    return out;
  }
  out.accepted = std::log(u) < -(h1 - h0);
  out.b = out.accepted ? b : b0;
  return out;
}

/// One HMC update of the spline coefficients of a segment with mean mu.
inline SplineSpectrum rmhmc_update_b(const SplineSpectrum& spec, const SegmentStatistics& stats, double mu,
                                     const ComponentPrior& prior, Rng& rng, const HmcSettings& settings = {},
                                     MoveStats* move_stats = nullptr) {
  const int J = spec.basis_size();
  const double step = settings.fixed_step > 0.0
                          ? settings.fixed_step
                          : settings.step_min + (settings.step_max - settings.step_min) * rng.uniform();
  const int steps = settings.fixed_steps >= 0
                        ? settings.fixed_steps
                        : settings.steps_min +
                              static_cast<int>(rng.uniform() * (settings.steps_max - settings.steps_min + 1));
  Eigen::LLT<Eigen::MatrixXd> metric(rmhmc_metric(stats.length, J, prior.sigma2_alpha, spec.tau2_b, stats.replicates));
  Eigen::VectorXd z(J + 1);
  for (int i = 0; i <= J; ++i) z[i] = standard_normal(rng);
  const Eigen::VectorXd p0 = metric.matrixL() * z;
  const HmcResult r = hmc_trajectory(spec.coefficients, p0, step, steps, metric, spec.tau2_b, stats.power_at(mu),
                                     stats.length, stats.replicates, prior.sigma2_alpha, rng.uniform());
  if (move_stats) {
    ++move_stats->hmc_proposed;
    move_stats->hmc_accepted += r.accepted ? 1 : 0;
    move_stats->hmc_divergent += r.divergent ? 1 : 0;
  }
  return SplineSpectrum{r.b, spec.tau2_b};
}

// ---------------------------------------------------------------------------
// Smoothing parameter

inline double sample_tau2_b(const SplineSpectrum& spec, const ComponentPrior& prior, Rng& rng) {
  const int J = spec.basis_size();
  const double ss = spec.coefficients.tail(J).squaredNorm();
  return sample_inverse_gamma(prior.tau2_prior_shape + 0.5 * J, prior.tau2_prior_scale + 0.5 * ss, rng);
}

// ---------------------------------------------------------------------------
// Prior draws

/// Draws a segment count uniformly, cutpoints uniformly over legal
/// configurations, and every segment's parameters from their priors.
inline SegmentModel draw_from_prior(int n, const ComponentPrior& prior, Rng& rng) {
  prior.validate(n);
  SegmentModel model;
  const int m = 1 + static_cast<int>(rng.uniform() * prior.max_segments);
  // Stars and bars: m - 1 bars among free + m - 1 slots.
  const int free = n - m * prior.min_segment_length;
  const int slots = free + m - 1;
  std::vector<int> bars;
  for (int i = 0; i < m - 1; ++i) {
    int pick;
    do {
      pick = static_cast<int>(rng.uniform() * slots);
    } while (std::find(bars.begin(), bars.end(), pick) != bars.end());
    bars.push_back(pick);
  }
  std::sort(bars.begin(), bars.end());
  int prev_bar = -1, end = 0;
  for (int i = 0; i < m; ++i) {
    const int bar = i < m - 1 ? bars[i] : slots;
    end += prior.min_segment_length + (bar - prev_bar - 1);
    prev_bar = bar;
    model.cutpoints.push_back(end);
  }
  for (int s = 0; s < m; ++s) {
    model.means.push_back(prior.mu_lower + (prior.mu_upper - prior.mu_lower) * rng.uniform());
    SplineSpectrum spec;
    spec.tau2_b = sample_inverse_gamma(prior.tau2_prior_shape, prior.tau2_prior_scale, rng);
    spec.coefficients.resize(prior.basis_size + 1);
    spec.coefficients[0] = sample_normal(0.0, std::sqrt(prior.sigma2_alpha), rng);
    const double sd = std::sqrt(spec.tau2_b);
    for (int j = 1; j <= prior.basis_size; ++j) spec.coefficients[j] = sample_normal(0.0, sd, rng);
    model.spectra.push_back(std::move(spec));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Birth and death

inline bool segment_splittable(const SegmentModel& model, int s, const ComponentPrior& prior) {
  return model.length(s) >= 2 * prior.min_segment_length;
}

inline int splittable_count(const SegmentModel& model, const ComponentPrior& prior) {
  int count = 0;
  for (int s = 0; s < model.segments(); ++s) count += segment_splittable(model, s, prior) ? 1 : 0;
  return count;
}

inline double birth_probability(const SegmentModel& model, const ComponentPrior& prior) {
  if (model.segments() >= prior.max_segments || splittable_count(model, prior) == 0) return 0.0;
  return model.segments() == 1 ? 1.0 : 0.5;
}

inline double death_probability(const SegmentModel& model, const ComponentPrior& prior) {
  return model.segments() > 1 ? 1.0 - birth_probability(model, prior) : 0.0;
}

/// log acceptance ratio for splitting segment s of `coarse` into segments s
/// and s+1 of `fine`. The ratio of the reverse death is its negation. The
/// smoothing parameters of the children and parent must satisfy
/// tau2 = sqrt(tau2_left * tau2_right).
inline double birth_log_ratio(const SegmentModel& coarse, const SegmentModel& fine, int s, SegmentStatsCache& data,
                              const ComponentPrior& prior) {
  const int n = coarse.series_length();
  const int m = coarse.segments();
  const SegmentStatistics& parent = data.segment(coarse, s);
  const SegmentStatistics& left = data.segment(fine, s);
  const SegmentStatistics& right = data.segment(fine, s + 1);

  const double tau_l = fine.spectra[s].tau2_b, tau_r = fine.spectra[s + 1].tau2_b;
  const double tau2 = coarse.spectra[s].tau2_b;
  const double ratio = std::sqrt(tau_l / tau_r);
  const double u = ratio / (1.0 + ratio);

  double log_post = segment_log_posterior(left, fine.means[s], fine.spectra[s], prior) +
                    segment_log_posterior(right, fine.means[s + 1], fine.spectra[s + 1], prior) -
                    segment_log_posterior(parent, coarse.means[s], coarse.spectra[s], prior);
  log_post += -log_cutpoint_configurations(n, m + 1, prior.min_segment_length) +
              log_cutpoint_configurations(n, m, prior.min_segment_length);

  const ModalProposal& q_parent = data.proposal(coarse, s, tau2, prior);
  const ModalProposal& q_left = data.proposal(fine, s, tau_l, prior);
  const ModalProposal& q_right = data.proposal(fine, s + 1, tau_r, prior);

  const double log_reverse = std::log(death_probability(fine, prior)) - std::log(static_cast<double>(m)) +
                             q_parent.log_density(coarse.means[s], coarse.spectra[s].coefficients, prior);
  const double positions = parent.length - 2 * prior.min_segment_length + 1;
  const double log_forward = std::log(birth_probability(coarse, prior)) -
                             std::log(static_cast<double>(splittable_count(coarse, prior))) - std::log(positions) +
                             q_left.log_density(fine.means[s], fine.spectra[s].coefficients, prior) +
                             q_right.log_density(fine.means[s + 1], fine.spectra[s + 1].coefficients, prior);
  const double log_jacobian = std::log(2.0 * tau2) - std::log(u) - std::log1p(-u);
  return log_post + log_reverse - log_forward + log_jacobian;
}

inline SegmentModel birth_death_move(const SegmentModel& model, SegmentStatsCache& data, const ComponentPrior& prior,
                                     Rng& rng, MoveStats* move_stats = nullptr) {
  const double pb = birth_probability(model, prior);
  const double pd = death_probability(model, prior);
  if (pb + pd <= 0.0) return model;
  const double pick = rng.uniform();
  const int m = model.segments();

  if (pick < pb) {
    std::vector<int> candidates;
    for (int s = 0; s < m; ++s)
      if (segment_splittable(model, s, prior)) candidates.push_back(s);
    const int s = candidates[static_cast<int>(rng.uniform() * candidates.size())];
    const int positions = model.length(s) - 2 * prior.min_segment_length + 1;
    const int cut = model.start(s) + prior.min_segment_length + static_cast<int>(rng.uniform() * positions);
    const double u = rng.uniform();
    const double tau2 = model.spectra[s].tau2_b;

    SegmentModel fine = model;
    fine.cutpoints.insert(fine.cutpoints.begin() + s, cut);
    fine.means.insert(fine.means.begin() + s, 0.0);
    fine.spectra.insert(fine.spectra.begin() + s, SplineSpectrum{});
    const double tau_l = tau2 * u / (1.0 - u), tau_r = tau2 * (1.0 - u) / u;
    if (!(tau_l > 0.0 && tau_r > 0.0 && std::isfinite(tau_l) && std::isfinite(tau_r))) return model;
    for (int child = 0; child < 2; ++child) {
      const double tau_child = child == 0 ? tau_l : tau_r;
      const ModalProposal& q = data.proposal(fine, s + child, tau_child, prior, move_stats);
      auto [mu, spec] = q.draw(prior, rng);
      fine.means[s + child] = mu;
      fine.spectra[s + child] = std::move(spec);
    }
    // Store the parent tau2 through the child geometric mean so the reverse
    // map recovers it exactly.
    SegmentModel coarse = model;
    coarse.spectra[s].tau2_b = std::sqrt(tau_l * tau_r);
    if (move_stats) ++move_stats->birth_proposed;
    const double log_alpha = birth_log_ratio(coarse, fine, s, data, prior);
    if (std::log(rng.uniform()) < log_alpha) {
      if (move_stats) ++move_stats->birth_accepted;
      return fine;
    }
    return model;
  }

  const int s = static_cast<int>(rng.uniform() * (m - 1));
  SegmentModel coarse = model;
  coarse.cutpoints.erase(coarse.cutpoints.begin() + s);
  coarse.means.erase(coarse.means.begin() + s + 1);
  coarse.spectra.erase(coarse.spectra.begin() + s + 1);
  const double tau2 = std::sqrt(model.spectra[s].tau2_b * model.spectra[s + 1].tau2_b);
  const ModalProposal& q = data.proposal(coarse, s, tau2, prior, move_stats);
  auto [mu, spec] = q.draw(prior, rng);
  coarse.means[s] = mu;
  coarse.spectra[s] = std::move(spec);
  if (move_stats) ++move_stats->death_proposed;
  const double log_alpha = -birth_log_ratio(coarse, model, s, data, prior);
  if (std::log(rng.uniform()) < log_alpha) {
    if (move_stats) ++move_stats->death_accepted;
    return coarse;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Within-model move

inline constexpr double kLocalShiftProbability = 0.8;

/// Proposes a new position for interior cutpoint i (the end of segment i),
/// or returns -1 when the local shift lands on an illegal position.
inline int propose_cutpoint(const SegmentModel& model, int i, const ComponentPrior& prior, Rng& rng) {
  const int lo = model.start(i) + prior.min_segment_length;
  const int hi = model.end(i + 1) - prior.min_segment_length;
  if (rng.uniform() < kLocalShiftProbability) {
    const int reach = std::max(1, prior.min_segment_length / 2);
    int delta = 1 + static_cast<int>(rng.uniform() * reach);
    if (rng.uniform() < 0.5) delta = -delta;
    const int cut = model.cutpoints[i] + delta;
    return cut >= lo && cut <= hi ? cut : -1;
  }
  return lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
}

/// Relocates one interior cutpoint with fresh (mu, b) for the two affected
/// segments, then refreshes one random segment's mean by Gibbs and one random
/// segment's spline coefficients by HMC.
inline SegmentModel within_model_move(const SegmentModel& model, SegmentStatsCache& data, const ComponentPrior& prior,
                                      Rng& rng, MoveStats* move_stats = nullptr, const HmcSettings& hmc = {}) {
  SegmentModel out = model;
  const int m = model.segments();
  if (m > 1) {
    const int i = static_cast<int>(rng.uniform() * (m - 1));
    const int cut = propose_cutpoint(model, i, prior, rng);
    if (move_stats) ++move_stats->within_proposed;
    if (cut > 0) {
      SegmentModel next = model;
      next.cutpoints[i] = cut;
      double log_alpha = 0.0;
      for (int s = i; s <= i + 1; ++s) {
        const SegmentStatistics& old_stats = data.segment(model, s);
        const SegmentStatistics& new_stats = data.segment(next, s);
        const ModalProposal& q_new = data.proposal(next, s, model.spectra[s].tau2_b, prior, move_stats);
        const ModalProposal& q_old = data.proposal(model, s, model.spectra[s].tau2_b, prior);
        auto [mu, spec] = q_new.draw(prior, rng);
        next.means[s] = mu;
        next.spectra[s] = std::move(spec);
        log_alpha += segment_log_posterior(new_stats, next.means[s], next.spectra[s], prior) -
                     segment_log_posterior(old_stats, model.means[s], model.spectra[s], prior) +
                     q_old.log_density(model.means[s], model.spectra[s].coefficients, prior) -
                     q_new.log_density(next.means[s], next.spectra[s].coefficients, prior);
      }
      if (std::log(rng.uniform()) < log_alpha) {
        if (move_stats) ++move_stats->within_accepted;
        out = std::move(next);
      }
    }
  }

  const int s_mu = static_cast<int>(rng.uniform() * m);
  out.means[s_mu] = sample_segment_mean(data.segment(out, s_mu), out.spectra[s_mu], prior, rng);
  const int s_b = static_cast<int>(rng.uniform() * m);
  out.spectra[s_b] = rmhmc_update_b(out.spectra[s_b], data.segment(out, s_b), out.means[s_b], prior, rng, hmc,
                                    move_stats);
  return out;
}

// ---------------------------------------------------------------------------
// Full sweep

/// Summed Whittle log-likelihood of every column of `data` under `model`.
inline double component_log_likelihood(const SegmentModel& model, SegmentStatsCache& data) {
  double total = 0.0;
  for (int s = 0; s < model.segments(); ++s)
    total += segment_log_likelihood(data.segment(model, s), model.means[s], model.spectra[s]);
  return total;
}

/// One birth/death move, one within-model move and a smoothing-parameter
/// refresh of every segment, all against the series held by `cache`.
inline SegmentModel component_sweep(const SegmentModel& theta, SegmentStatsCache& cache, const ComponentPrior& prior,
                                    Rng& rng, MoveStats* move_stats = nullptr, const HmcSettings& hmc = {}) {
  SegmentModel model = birth_death_move(theta, cache, prior, rng, move_stats);
  model = within_model_move(model, cache, prior, rng, move_stats, hmc);
  for (auto& spec : model.spectra) spec.tau2_b = sample_tau2_b(spec, prior, rng);
  return model;
}

/// Birth/death, within-model move and a smoothing-parameter refresh of every
/// segment. `data` holds the assigned series as columns; with no columns the
/// result is a fresh prior draw.
inline SegmentModel component_update(const SegmentModel& theta, const Eigen::MatrixXd& data,
                                     const ComponentPrior& prior, Rng& rng, MoveStats* move_stats = nullptr,
                                     const HmcSettings& hmc = {}) {
  const int n = theta.series_length();
  require(data.cols() == 0 || data.rows() == n, "assigned series do not match the component length");
  if (data.cols() == 0) return draw_from_prior(n, prior, rng);
  SegmentStatsCache cache(data);
  SegmentModel model = component_sweep(theta, cache, prior, rng, move_stats, hmc);
  validate_segment_model(model, n, prior);
  return model;
}

inline SegmentModel component_update(const SegmentModel& theta, const std::vector<TimeSeries>& series,
                                     const ComponentPrior& prior, Rng& rng, MoveStats* move_stats = nullptr) {
  Eigen::MatrixXd data(theta.series_length(), static_cast<Index>(series.size()));
  for (std::size_t j = 0; j < series.size(); ++j) {
    require(!series[j].has_missing(), "component_update needs complete series");
    require(series[j].size() == theta.series_length(), "series length mismatch");
    data.col(static_cast<Index>(j)) = series[j].values;
  }
  return component_update(theta, data, prior, rng, move_stats);
}

}  // namespace adaptspecx
