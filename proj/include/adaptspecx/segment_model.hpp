#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "adaptspecx/error.hpp"

namespace adaptspecx {

/// Log-spectrum of one stationary segment, log f(w) = q(w)' b, with
/// b = (alpha_0, b_1, ..., b_J) and smoothing variance tau2_b on b_1..b_J.
struct SplineSpectrum {
  Eigen::VectorXd coefficients;
  double tau2_b = 1.0;

  [[nodiscard]] int basis_size() const { return static_cast<int>(coefficients.size()) - 1; }
};

/// Hyperparameters of one AdaptSPEC mixture component.
struct ComponentPrior {
  int max_segments = 4;
  int min_segment_length = 40;
  int basis_size = 25;
  double mu_lower = -10.0;
  double mu_upper = 10.0;
  double sigma2_alpha = 100.0;
  // tau2_b ~ IG(shape, scale)
  double tau2_prior_shape = 1.0;
  double tau2_prior_scale = 1.0;

  void validate(int n) const {
    require(max_segments >= 1, "max_segments must be at least 1");
    require(min_segment_length >= 2, "min_segment_length must be at least 2");
    require(basis_size >= 1, "basis_size must be at least 1");
    require(mu_lower < mu_upper, "mu_lower must be below mu_upper");
    require(sigma2_alpha > 0.0, "sigma2_alpha must be positive");
    require(tau2_prior_shape > 0.0 && tau2_prior_scale > 0.0, "tau2_b prior parameters must be positive");
    require(static_cast<long>(max_segments) * min_segment_length <= n,
            "max_segments * min_segment_length must not exceed the series length");
  }
};

/// Piecewise-stationary parameter set Theta = (m, xi, mu, f_1..f_m).
///
/// `cutpoints[s]` is the (exclusive) end of segment s, so segment s covers
/// times [cutpoints[s-1], cutpoints[s]) with an implicit leading 0, and the
/// last cutpoint equals the series length.
struct SegmentModel {
  std::vector<int> cutpoints;
  std::vector<double> means;
  std::vector<SplineSpectrum> spectra;

  [[nodiscard]] int segments() const { return static_cast<int>(cutpoints.size()); }
  [[nodiscard]] int start(int s) const { return s == 0 ? 0 : cutpoints[s - 1]; }
  [[nodiscard]] int end(int s) const { return cutpoints[s]; }
  [[nodiscard]] int length(int s) const { return end(s) - start(s); }
  [[nodiscard]] int series_length() const { return cutpoints.empty() ? 0 : cutpoints.back(); }

  [[nodiscard]] int segment_of(int t) const {
    int s = 0;
    while (t >= cutpoints[s]) ++s;
    return s;
  }
};

/// Throws InvalidArgument unless the model satisfies every SegmentModel
/// invariant for a series of length n under `prior`.
inline void validate_segment_model(const SegmentModel& model, int n, const ComponentPrior& prior) {
  const int m = model.segments();
  require(m >= 1 && m <= prior.max_segments, "segment count out of range");
  require(static_cast<int>(model.means.size()) == m && static_cast<int>(model.spectra.size()) == m,
          "segment model arrays disagree in length");
  require(model.cutpoints.back() == n, "last cutpoint must equal the series length");
  for (int s = 0; s < m; ++s) {
    require(model.length(s) >= prior.min_segment_length, "segment shorter than min_segment_length");
    require(model.means[s] > prior.mu_lower && model.means[s] < prior.mu_upper, "segment mean outside prior support");
    require(model.spectra[s].basis_size() == prior.basis_size, "spline coefficient length mismatch");
    require(model.spectra[s].tau2_b > 0.0, "tau2_b must be positive");
    require(model.spectra[s].coefficients.allFinite(), "spline coefficients must be finite");
  }
}

}  // namespace adaptspecx
