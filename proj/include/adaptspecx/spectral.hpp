#pragma once

// Deterministic spectral kernels: Fourier grids, periodograms, spline
// log-spectra, the Whittle likelihood, the circulant precision it implies and
// the exact Gaussian conditional of missing values.

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "adaptspecx/distributions.hpp"
#include "adaptspecx/error.hpp"
#include "adaptspecx/fft.hpp"
#include "adaptspecx/rng.hpp"
#include "adaptspecx/segment_model.hpp"

namespace adaptspecx {

using Eigen::Index;

/// Spectral densities are floored here before dividing by them.
inline constexpr double kSpectrumFloor = 1e-12;
inline const double kLogSpectrumFloor = std::log(kSpectrumFloor);

/// A univariate series with a missing-value mask (true = missing).
struct TimeSeries {
  Eigen::VectorXd values;
  std::vector<bool> missing;

  /// Validating constructor: n >= 2, n even, observed entries finite.
  static TimeSeries make(Eigen::VectorXd values, std::vector<bool> missing) {
    require(values.size() >= 2 && values.size() % 2 == 0, "series length must be even and at least 2");
    require(static_cast<Index>(missing.size()) == values.size(), "missing mask length mismatch");
    for (Index t = 0; t < values.size(); ++t)
      require(missing[t] || std::isfinite(values[t]), "observed values must be finite");
    return TimeSeries{std::move(values), std::move(missing)};
  }

  static TimeSeries complete(Eigen::VectorXd values) {
    std::vector<bool> mask(values.size(), false);
    return make(std::move(values), std::move(mask));
  }

  [[nodiscard]] Index size() const { return values.size(); }
  [[nodiscard]] bool has_missing() const {
    for (bool m : missing)
      if (m) return true;
    return false;
  }
};

// ---------------------------------------------------------------------------
// Frequency grids and the spline basis

inline Eigen::VectorXd fourier_frequencies(Index n) {
  require(n >= 2 && n % 2 == 0, "fourier_frequencies requires an even n >= 2");
  Eigen::VectorXd omega(n);
  for (Index k = 0; k < n; ++k) omega[k] = static_cast<double>(k) / static_cast<double>(n);
  return omega;
}

/// Number of distinct frequencies 0 <= w_k <= 1/2 on a length-n grid.
inline Index half_spectrum_size(Index n) { return n / 2 + 1; }

/// How many of the n Fourier frequencies share the value of half-grid entry k.
inline double frequency_multiplicity(Index k, Index n) {
  if (k == 0) return 1.0;
  if (n % 2 == 0 && k == n / 2) return 1.0;
  return 2.0;
}

inline Eigen::VectorXd half_spectrum_weights(Index n) {
  Eigen::VectorXd w(half_spectrum_size(n));
  for (Index k = 0; k < w.size(); ++k) w[k] = frequency_multiplicity(k, n);
  return w;
}

/// Rows are q(w)' = (1, sqrt2 cos(2 pi w)/pi, ..., sqrt2 cos(2 J pi w)/(J pi)).
inline Eigen::MatrixXd spline_basis(const Eigen::Ref<const Eigen::VectorXd>& omega, int basis_size) {
  Eigen::MatrixXd q(omega.size(), basis_size + 1);
  for (Index k = 0; k < omega.size(); ++k) {
    const double c1 = std::cos(2.0 * std::numbers::pi * omega[k]);
    double prev = 1.0, cur = c1;
    q(k, 0) = 1.0;
    for (int j = 1; j <= basis_size; ++j) {
      q(k, j) = std::numbers::sqrt2 * cur / (j * std::numbers::pi);
      const double next = 2.0 * c1 * cur - prev;
      prev = cur;
      cur = next;
    }
  }
  return q;
}

/// Spline basis on the half Fourier grid of a length-n segment. Cached per
/// thread; the returned reference stays valid for the thread's lifetime.
inline const Eigen::MatrixXd& fourier_spline_basis(Index n, int basis_size) {
  thread_local std::map<std::pair<Index, int>, Eigen::MatrixXd> cache;
  auto key = std::make_pair(n, basis_size);
  auto it = cache.find(key);
  if (it == cache.end()) {
    Eigen::VectorXd omega(half_spectrum_size(n));
    for (Index k = 0; k < omega.size(); ++k) omega[k] = static_cast<double>(k) / static_cast<double>(n);
    it = cache.emplace(key, spline_basis(omega, basis_size)).first;
  }
  return it->second;
}

/// Expand a half-grid vector to all n Fourier frequencies using f(w_k) = f(w_{n-k}).
inline Eigen::VectorXd expand_half_spectrum(const Eigen::Ref<const Eigen::VectorXd>& half, Index n) {
  Eigen::VectorXd full(n);
  for (Index k = 0; k < n; ++k) full[k] = half[k <= n / 2 ? k : n - k];
  return full;
}

/// log f on the half grid (0 <= w <= 1/2) of a length-n segment.
inline Eigen::VectorXd half_log_spectral_density(const SplineSpectrum& spec, Index n) {
  return fourier_spline_basis(n, spec.basis_size()) * spec.coefficients;
}

/// log f(w_k) = q_k' b at all n Fourier frequencies.
inline Eigen::VectorXd log_spectral_density(const SplineSpectrum& spec, Index n) {
  require(n >= 2, "log_spectral_density requires n >= 2");
  require(spec.basis_size() >= 1, "spline spectrum needs at least one basis function");
  require(spec.tau2_b > 0.0, "tau2_b must be positive");
  return expand_half_spectrum(half_log_spectral_density(spec, n), n);
}

// ---------------------------------------------------------------------------
// Periodogram and Whittle likelihood

/// I_k = |d_k|^2 with d_k = n^{-1/2} sum_t (x_t - mu) exp(-2 pi i w_k (t-1)).
inline Eigen::VectorXd periodogram(const Eigen::Ref<const Eigen::VectorXd>& x, double mu) {
  require(x.size() >= 1, "periodogram of an empty series");
  const Index n = x.size();
  const Eigen::VectorXd centered = x.array() - mu;
  const Eigen::VectorXcd& half = real_fft_half(centered);
  Eigen::VectorXd out(n);
  for (Index k = 0; k < half.size(); ++k) out[k] = std::norm(half[k]) / static_cast<double>(n);
  for (Index k = half.size(); k < n; ++k) out[k] = out[n - k];
  return out;
}

inline Eigen::VectorXd periodogram(const TimeSeries& x, double mu) {
  require(!x.has_missing(), "periodogram requires a series without missing values");
  return periodogram(x.values, mu);
}

inline double whittle_log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& x, double mu,
                                     const Eigen::Ref<const Eigen::VectorXd>& log_f) {
  require(x.size() == log_f.size(), "series and log-spectrum lengths differ");
  require(log_f.allFinite(), "log spectrum must be finite");
  const Eigen::VectorXd pgram = periodogram(x, mu);
  const Eigen::ArrayXd lf = log_f.array().max(kLogSpectrumFloor);
  const double n = static_cast<double>(x.size());
  return -0.5 * n * kLog2Pi - 0.5 * lf.sum() - 0.5 * (pgram.array() * (-lf).exp()).sum();
}

inline double whittle_log_likelihood(const TimeSeries& x, double mu, const Eigen::Ref<const Eigen::VectorXd>& log_f) {
  require(!x.has_missing(), "whittle likelihood requires a series without missing values");
  return whittle_log_likelihood(x.values, mu, log_f);
}

/// Product of per-segment Whittle likelihoods (log scale).
inline double segmented_log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& x, const SegmentModel& model) {
  require(model.series_length() == x.size(), "cutpoints do not match the series length");
  double total = 0.0;
  for (int s = 0; s < model.segments(); ++s) {
    const Index len = model.length(s);
    require(len >= 2, "segment shorter than 2");
    total += whittle_log_likelihood(x.segment(model.start(s), len), model.means[s],
                                    log_spectral_density(model.spectra[s], len));
  }
  return total;
}

inline double segmented_log_likelihood(const TimeSeries& x, const SegmentModel& model) {
  require(!x.has_missing(), "segmented likelihood requires a series without missing values");
  return segmented_log_likelihood(x.values, model);
}

// ---------------------------------------------------------------------------
// Pooled sufficient statistics for one segment shared by several series.
//
// For k >= 1 the periodogram does not depend on the segment mean, and at
// k = 0 it equals len * (xbar - mu)^2, so a segment's Whittle likelihood
// under any (mu, f) follows from the summed periodogram and the series means.

struct SegmentStatistics {
  Index length = 0;
  int replicates = 0;
  /// Summed periodogram on the half grid; entry 0 is unused.
  Eigen::VectorXd power;
  double grand_mean = 0.0;
  /// sum_j (xbar_j - grand_mean)^2
  double mean_spread = 0.0;

  [[nodiscard]] double zero_frequency_power(double mu) const {
    const double d = grand_mean - mu;
    return static_cast<double>(length) * (mean_spread + replicates * d * d);
  }

  [[nodiscard]] Eigen::VectorXd power_at(double mu) const {
    Eigen::VectorXd p = power;
    p[0] = zero_frequency_power(mu);
    return p;
  }
};

/// Statistics of rows [start, start + length) of every column of `data`.
inline SegmentStatistics segment_statistics(const Eigen::Ref<const Eigen::MatrixXd>& data, Index start, Index length) {
  require(length >= 2, "segment shorter than 2");
  require(start >= 0 && start + length <= data.rows(), "segment outside the data");
  SegmentStatistics stats;
  stats.length = length;
  stats.replicates = static_cast<int>(data.cols());
  const Index half = half_spectrum_size(length);
  stats.power = Eigen::VectorXd::Zero(half);
  Eigen::VectorXd means(data.cols());
  Eigen::VectorXd centered(length);
  for (Index j = 0; j < data.cols(); ++j) {
    auto block = data.col(j).segment(start, length);
    means[j] = block.mean();
    centered = block.array() - means[j];
    const Eigen::VectorXcd& spectrum = real_fft_half(centered);
    for (Index k = 1; k < half; ++k) stats.power[k] += std::norm(spectrum[k]) / static_cast<double>(length);
  }
  if (data.cols() > 0) {
    stats.grand_mean = means.mean();
    stats.mean_spread = (means.array() - stats.grand_mean).square().sum();
  }
  return stats;
}

/// Summed Whittle log-likelihood of all replicates in `stats` for a segment
/// with mean mu and half-grid log-spectrum `half_log_f`.
inline double segment_log_likelihood(const SegmentStatistics& stats, double mu,
                                     const Eigen::Ref<const Eigen::VectorXd>& half_log_f) {
  const Index half = stats.power.size();
  const double c = stats.replicates;
  double quad = 0.0, logdet = 0.0;
  for (Index k = 0; k < half; ++k) {
    const double w = frequency_multiplicity(k, stats.length);
    const double lf = std::max(half_log_f[k], kLogSpectrumFloor);
    const double p = k == 0 ? stats.zero_frequency_power(mu) : stats.power[k];
    logdet += w * lf;
    quad += w * p * std::exp(-lf);
  }
  return -0.5 * c * static_cast<double>(stats.length) * kLog2Pi - 0.5 * c * logdet - 0.5 * quad;
}

inline double segment_log_likelihood(const SegmentStatistics& stats, double mu, const SplineSpectrum& spec) {
  return segment_log_likelihood(stats, mu, half_log_spectral_density(spec, stats.length));
}

// ---------------------------------------------------------------------------
// Circulant precision and missing values

/// First column of the symmetric circulant precision Lambda = V R V*.
struct CirculantPrecision {
  Eigen::VectorXd lambda;

  [[nodiscard]] Index size() const { return lambda.size(); }

  [[nodiscard]] double operator()(Index t1, Index t2) const {
    const Index n = lambda.size();
    Index d = (t1 - t2) % n;
    if (d < 0) d += n;
    return lambda[d];
  }

  [[nodiscard]] Eigen::MatrixXd dense() const {
    const Index n = size();
    Eigen::MatrixXd out(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) out(i, j) = (*this)(i, j);
    return out;
  }
};

inline void require_symmetric_spectrum(const Eigen::Ref<const Eigen::VectorXd>& log_f) {
  const Index n = log_f.size();
  for (Index k = 1; k < n; ++k) {
    const double a = log_f[k], b = log_f[n - k];
    require(std::abs(a - b) <= 1e-9 * (1.0 + std::abs(a)), "log spectrum is not symmetric about 1/2");
  }
}

/// lambda_t = (1/n) sum_k exp(-log f_k) exp(-2 pi i t w_k), one FFT of r = 1/f.
inline CirculantPrecision circulant_precision(const Eigen::Ref<const Eigen::VectorXd>& log_f) {
  require(log_f.size() >= 1, "empty log spectrum");
  require(log_f.allFinite(), "log spectrum must be finite");
  require_symmetric_spectrum(log_f);
  const Index n = log_f.size();
  Eigen::VectorXd r = (-log_f.array().max(kLogSpectrumFloor)).exp();
  // r is real and symmetric, so its transform is real and symmetric too.
  const Eigen::VectorXcd& half = real_fft_half(r);
  CirculantPrecision out;
  out.lambda.resize(n);
  for (Index t = 0; t < half.size(); ++t) out.lambda[t] = half[t].real() / static_cast<double>(n);
  for (Index t = half.size(); t < n; ++t) out.lambda[t] = out.lambda[n - t];
  return out;
}

/// Gaussian conditional of the missing entries given the observed ones.
struct MissingConditional {
  std::vector<Index> indices;
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
};

namespace detail {

inline MissingConditional missing_conditional_impl(const Eigen::Ref<const Eigen::VectorXd>& values,
                                                   const std::vector<bool>& missing, double mu,
                                                   const CirculantPrecision& lambda,
                                                   Eigen::LLT<Eigen::MatrixXd>* factor) {
  const Index n = values.size();
  MissingConditional out;
  std::vector<Index> observed;
  for (Index t = 0; t < n; ++t) (missing[t] ? out.indices : observed).push_back(t);
  const Index nm = static_cast<Index>(out.indices.size());
  if (nm == 0) {
    out.mean.resize(0);
    out.precision.resize(0, 0);
    return out;
  }
  out.precision.resize(nm, nm);
  for (Index a = 0; a < nm; ++a)
    for (Index b = 0; b < nm; ++b) out.precision(a, b) = lambda(out.indices[a], out.indices[b]);

  Eigen::LLT<Eigen::MatrixXd> llt(out.precision);
  if (llt.info() != Eigen::Success) throw NumericalFailure("conditional precision of missing values is not positive definite");

  Eigen::VectorXd cross = Eigen::VectorXd::Zero(nm);
  for (Index a = 0; a < nm; ++a)
    for (Index o : observed) cross[a] += lambda(out.indices[a], o) * (values[o] - mu);
  out.mean = (mu - llt.solve(cross).array()).matrix();
  if (factor) *factor = std::move(llt);
  return out;
}

}  // namespace detail

/// mu_mis|obs = mu - Lambda_mm^{-1} Lambda_mo (x_obs - mu), precision Lambda_mm.
inline MissingConditional missing_conditional(const TimeSeries& x, double mu,
                                              const Eigen::Ref<const Eigen::VectorXd>& log_f) {
  require(x.size() == log_f.size(), "series and log-spectrum lengths differ");
  return detail::missing_conditional_impl(x.values, x.missing, mu, circulant_precision(log_f), nullptr);
}

/// Draws every missing entry of `values` from its conditional, segment by
/// segment under `model`. Observed entries are left untouched.
inline void impute_missing(Eigen::Ref<Eigen::VectorXd> values, const std::vector<bool>& missing,
                           const SegmentModel& model, Rng& rng) {
  require(model.series_length() == values.size(), "cutpoints do not match the series length");
  for (int s = 0; s < model.segments(); ++s) {
    const Index start = model.start(s), len = model.length(s);
    std::vector<bool> seg_missing(missing.begin() + start, missing.begin() + start + len);
    bool any = false;
    for (bool m : seg_missing) any = any || m;
    if (!any) continue;
    const CirculantPrecision lambda = circulant_precision(log_spectral_density(model.spectra[s], len));
    Eigen::LLT<Eigen::MatrixXd> llt;
    const MissingConditional cond =
        detail::missing_conditional_impl(values.segment(start, len), seg_missing, model.means[s], lambda, &llt);
    const Eigen::VectorXd draw = sample_mvn_precision_factor(cond.mean, llt, rng);
    for (std::size_t a = 0; a < cond.indices.size(); ++a) values[start + cond.indices[a]] = draw[static_cast<Index>(a)];
  }
}

inline TimeSeries sample_missing(const TimeSeries& x, const SegmentModel& model, Rng& rng) {
  TimeSeries out = x;
  if (!x.has_missing()) return out;
  impute_missing(out.values, out.missing, model, rng);
  return out;
}

}  // namespace adaptspecx
