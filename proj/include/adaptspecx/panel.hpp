#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "adaptspecx/error.hpp"
#include "adaptspecx/spectral.hpp"

namespace adaptspecx {

/// N series of common length n with missing masks and P covariates each.
/// Missing entries of `values` are NaN.
struct Panel {
  Eigen::VectorXd time;
  Eigen::MatrixXd values;  // n x N
  std::vector<std::string> names;
  Eigen::MatrixXd covariates;  // N x P
  std::vector<std::string> covariate_names;

  [[nodiscard]] int length() const { return static_cast<int>(values.rows()); }
  [[nodiscard]] int series() const { return static_cast<int>(values.cols()); }
  [[nodiscard]] bool missing(int t, int j) const { return std::isnan(values(t, j)); }

  [[nodiscard]] std::vector<bool> missing_mask(int j) const {
    std::vector<bool> mask(length());
    for (int t = 0; t < length(); ++t) mask[t] = missing(t, j);
    return mask;
  }

  [[nodiscard]] int missing_count() const {
    int count = 0;
    for (int j = 0; j < series(); ++j)
      for (int t = 0; t < length(); ++t) count += missing(t, j) ? 1 : 0;
    return count;
  }

  [[nodiscard]] TimeSeries series_at(int j) const {
    Eigen::VectorXd v = values.col(j);
    std::vector<bool> mask = missing_mask(j);
    for (int t = 0; t < length(); ++t)
      if (mask[t]) v[t] = 0.0;
    return TimeSeries::make(std::move(v), std::move(mask));
  }
};

inline void validate_panel(const Panel& p) {
  require(p.series() >= 1, "panel has no series");
  require(p.length() >= 2 && p.length() % 2 == 0, "series length must be even and at least 2");
  require(static_cast<int>(p.names.size()) == p.series(), "series names do not match the panel");
  require(p.time.size() == p.length(), "time index does not match the series length");
  require(p.covariates.rows() == p.series(), "covariate rows do not match the series");
  require(static_cast<int>(p.covariate_names.size()) == p.covariates.cols(), "covariate names do not match");
  require(p.covariates.allFinite(), "covariates must be finite");
  for (int j = 0; j < p.series(); ++j) {
    int observed = 0;
    for (int t = 0; t < p.length(); ++t) {
      const double v = p.values(t, j);
      require(std::isnan(v) || std::isfinite(v), "observed values must be finite");
      observed += std::isnan(v) ? 0 : 1;
    }
    require(observed >= 1, "series '" + p.names[j] + "' has no observed values");
  }
}

}  // namespace adaptspecx
