#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "adaptspecx/error.hpp"
#include "adaptspecx/rng.hpp"

namespace adaptspecx {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454836;

// ---------------------------------------------------------------------------
// Scalar helpers

inline double log_sum_exp(const double* values, std::size_t count) {
  double hi = -kInf;
  for (std::size_t i = 0; i < count; ++i) hi = std::max(hi, values[i]);
  if (!std::isfinite(hi)) return hi;
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) total += std::exp(values[i] - hi);
  return hi + std::log(total);
}

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& values) {
  double hi = values.size() ? values.maxCoeff() : -kInf;
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((values.array() - hi).exp().sum());
}

/// log of the standard normal CDF, accurate far into the lower tail.
inline double normal_log_cdf(double x) {
  if (x == -kInf) return -kInf;
  if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * kLog2Pi + std::log(series);
}

/// log(Phi(b) - Phi(a)) for a < b.
inline double normal_log_interval(double a, double b) {
  if (a >= 0.0) {
    const double la = normal_log_cdf(-a);
    const double lb = normal_log_cdf(-b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b <= 0.0) {
    const double la = normal_log_cdf(a);
    const double lb = normal_log_cdf(b);
    return lb + std::log1p(-std::exp(la - lb));
  }
  const double tails = 0.5 * std::erfc(-a / std::numbers::sqrt2) + 0.5 * std::erfc(b / std::numbers::sqrt2);
  return std::log1p(-tails);
}

inline double normal_log_density(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

inline double truncated_normal_log_density(double x, double mean, double var, double lo, double hi) {
  if (!(x > lo && x < hi)) return -kInf;
  const double sd = std::sqrt(var);
  return normal_log_density(x, mean, var) - normal_log_interval((lo - mean) / sd, (hi - mean) / sd);
}

inline double inverse_gamma_log_density(double x, double shape, double scale) {
  if (!(x > 0.0)) return -kInf;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

// ---------------------------------------------------------------------------
// Basic variates

inline double standard_normal(Rng& rng) {
  // Marsaglia polar method; the second variate is discarded so that the
  // generator carries no hidden state.
  for (;;) {
    const double u = 2.0 * rng.uniform() - 1.0;
    const double v = 2.0 * rng.uniform() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

inline double sample_normal(double mean, double sd, Rng& rng) { return mean + sd * standard_normal(rng); }

inline double sample_exponential(double rate, Rng& rng) { return -std::log(rng.uniform()) / rate; }

/// Gamma(shape, rate) by Marsaglia & Tsang, with the shape < 1 boost done in
/// log space so very small shapes underflow gracefully to zero.
inline double sample_gamma(double shape, double rate, Rng& rng) {
  require(shape > 0.0 && rate > 0.0, "gamma parameters must be positive");
  const double boost_shape = shape < 1.0 ? shape + 1.0 : shape;
  const double d = boost_shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  double draw;
  for (;;) {
    double x, v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x || std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      draw = d * v;
      break;
    }
  }
  if (shape < 1.0) return std::exp(std::log(draw) + std::log(rng.uniform()) / shape) / rate;
  return draw / rate;
}

/// X with density proportional to x^(-shape-1) exp(-scale / x).
inline double sample_inverse_gamma(double shape, double scale, Rng& rng) {
  require(shape > 0.0 && scale > 0.0, "inverse gamma parameters must be positive");
  return 1.0 / sample_gamma(shape, scale, rng);
}

namespace detail {

// Standard normal restricted to (a, b) with 0 <= a: exponential proposal with
// Robert's optimal rate, truncated to the interval so narrow windows in the
// far tail do not waste draws.
inline double one_sided_truncated_normal(double a, double b, Rng& rng) {
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  const double span = b - a;
  const double mass = std::isfinite(span) ? -std::expm1(-rate * span) : 1.0;
  for (;;) {
    const double z = a - std::log1p(-rng.uniform() * mass) / rate;
    const double d = z - rate;
    if (z < b && rng.uniform() <= std::exp(-0.5 * d * d)) return z;
  }
}

inline double standard_truncated_normal(double a, double b, Rng& rng) {
  if (a >= 0.0) return one_sided_truncated_normal(a, b, rng);
  if (b <= 0.0) return -one_sided_truncated_normal(-b, -a, rng);
  if (b - a < 2.5) {
    for (;;) {
      const double z = a + (b - a) * rng.uniform();
      if (rng.uniform() <= std::exp(-0.5 * z * z)) return z;
    }
  }
  for (;;) {
    const double z = standard_normal(rng);
    if (z > a && z < b) return z;
  }
}

}  // namespace detail

/// N(mean, var) restricted to (lo, hi).
inline double sample_truncated_normal(double mean, double var, double lo, double hi, Rng& rng) {
  require(lo < hi, "truncated normal requires lo < hi");
  require(var > 0.0, "truncated normal requires positive variance");
  const double sd = std::sqrt(var);
  const double z = detail::standard_truncated_normal((lo - mean) / sd, (hi - mean) / sd, rng);
  return std::clamp(mean + sd * z, std::nextafter(lo, kInf), std::nextafter(hi, -kInf));
}

// ---------------------------------------------------------------------------
// Polya-Gamma PG(1, c), Devroye-style alternating series (Windle's thesis
// formulation of the Polson-Scott-Windle sampler).

namespace detail {

inline double pg_series_term(int k, double x, double t) {
  const double kh = k + 0.5;
  constexpr double log_pi = 1.1447298858494002;
  if (x <= t) {
    return std::exp(log_pi + std::log(kh) + 1.5 * (std::log(2.0 / std::numbers::pi) - std::log(x)) - 2.0 * kh * kh / x);
  }
  return std::exp(log_pi + std::log(kh) - x * 0.5 * std::numbers::pi * std::numbers::pi * kh * kh);
}

inline double pg_truncated_gamma(Rng& rng) {
  constexpr double c = std::numbers::pi / 2.0;
  const double sqrt_c = std::sqrt(c);
  for (;;) {
    const double x = 2.0 * sample_exponential(1.0, rng) + c;
    if (rng.uniform() <= sqrt_c / std::sqrt(x)) return x;
  }
}

// Inverse Gaussian IG(1/z, 1) truncated to (0, t).
inline double pg_truncated_inverse_gaussian(double z, double t, Rng& rng) {
  const double mu = 1.0 / z;
  if (mu > t) {
    for (;;) {
      const double x = 1.0 / pg_truncated_gamma(rng);
      if (std::log(rng.uniform()) < -0.5 * z * z * x) return x;
    }
  }
  double x = t + 1.0;
  while (x >= t) {
    double y = standard_normal(rng);
    y *= y;
    x = mu + 0.5 * mu * mu * y - 0.5 * mu * std::sqrt(4.0 * mu * y + (mu * y) * (mu * y));
    if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
  }
  return x;
}

}  // namespace detail

inline double sample_polya_gamma_1(double c, Rng& rng) {
  require(std::isfinite(c), "Polya-Gamma tilt must be finite");
  const double z = 0.5 * std::fabs(c);
  constexpr double t = 2.0 / std::numbers::pi;
  const double k = 0.5 * z * z + std::numbers::pi * std::numbers::pi / 8.0;
  const double log_a = std::log(4.0) - std::log(std::numbers::pi) - z;
  const double log_k = std::log(k);
  const double w = std::sqrt(std::numbers::pi / 2.0);
  const double log_f1 = log_a + normal_log_cdf(w * (t * z - 1.0)) + log_k + k * t;
  const double log_f2 = log_a + 2.0 * z + normal_log_cdf(-w * (t * z + 1.0)) + log_k + k * t;
  const double exponential_share = 1.0 / (1.0 + std::exp(log_f1) + std::exp(log_f2));

  for (;;) {
    const double x = rng.uniform() < exponential_share ? t + sample_exponential(1.0, rng) / k
                                                       : detail::pg_truncated_inverse_gaussian(z, t, rng);
    double s = detail::pg_series_term(0, x, t);
    const double u = rng.uniform() * s;
    bool even = false;
    double sign = -1.0;
    for (int i = 1;; ++i) {
      s += sign * detail::pg_series_term(i, x, t);
      if (!even && u <= s) return 0.25 * x;
      if (even && u > s) break;
      even = !even;
      sign = -sign;
    }
  }
}

// ---------------------------------------------------------------------------
// Multivariate normal

/// Draw from N(mean, precision^{-1}) given the lower Cholesky factor of the
/// precision.
inline Eigen::VectorXd sample_mvn_precision_factor(const Eigen::VectorXd& mean, const Eigen::LLT<Eigen::MatrixXd>& llt,
                                                   Rng& rng) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = standard_normal(rng);
  return mean + llt.matrixU().solve(z);
}

inline Eigen::VectorXd sample_mvn_precision(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision, Rng& rng) {
  require(precision.rows() == mean.size() && precision.cols() == mean.size(), "precision dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalFailure("precision matrix is not positive definite");
  return sample_mvn_precision_factor(mean, llt, rng);
}

/// log N(x; mean, precision^{-1}) from the Cholesky factor of the precision.
inline double mvn_precision_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                        const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::VectorXd r = llt.matrixU() * (x - mean);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * (log_det - static_cast<double>(x.size()) * kLog2Pi - r.squaredNorm());
}

/// Index drawn with probabilities proportional to exp(log_weights).
inline int sample_categorical_log(const Eigen::Ref<const Eigen::VectorXd>& log_weights, Rng& rng) {
  const double total = log_sum_exp(log_weights);
  if (!std::isfinite(total)) throw NumericalFailure("categorical log-weights are all -inf or non-finite");
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < log_weights.size(); ++i) {
    acc += std::exp(log_weights[i] - total);
    if (u < acc) return static_cast<int>(i);
  }
  for (Eigen::Index i = log_weights.size() - 1; i >= 0; --i)
    if (std::isfinite(log_weights[i])) return static_cast<int>(i);
  return static_cast<int>(log_weights.size() - 1);
}

}  // namespace adaptspecx
