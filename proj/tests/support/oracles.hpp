#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Everything here works on dense matrices built from first principles (no
// FFTs, no circulant shortcuts) so it can check the library's fast paths.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "adaptspecx/adaptspecx.hpp"

namespace oracle {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Unitary DFT matrix V with V(t, k) = n^{-1/2} exp(2 pi i t k / n).
inline MatrixXcd dft_matrix(Index n) {
  MatrixXcd v(n, n);
  for (Index t = 0; t < n; ++t)
    for (Index k = 0; k < n; ++k)
      v(t, k) = std::polar(1.0 / std::sqrt(static_cast<double>(n)),
                           2.0 * std::numbers::pi * static_cast<double>(t * k) / static_cast<double>(n));
  return v;
}

/// Dense precision V diag(1/f) V* of a stationary series with log-spectrum
/// `log_f` at the n Fourier frequencies. Returns the real part and stores the
/// largest imaginary magnitude in `imag_max`.
inline MatrixXd dense_precision(const VectorXd& log_f, double* imag_max = nullptr) {
  const Index n = log_f.size();
  const MatrixXcd v = dft_matrix(n);
  VectorXd r(n);
  for (Index k = 0; k < n; ++k) r[k] = std::exp(-std::max(log_f[k], adaptspecx::kLogSpectrumFloor));
  const MatrixXcd lambda = v * r.cast<std::complex<double>>().asDiagonal() * v.adjoint();
  if (imag_max) *imag_max = lambda.imag().cwiseAbs().maxCoeff();
  return lambda.real();
}

/// log N(x; mu 1, precision^{-1}).
inline double gaussian_log_density(const VectorXd& x, double mu, const MatrixXd& precision) {
  const Index n = x.size();
  Eigen::LDLT<MatrixXd> ldlt(precision);
  const double logdet = ldlt.vectorD().array().log().sum();
  const VectorXd d = x.array() - mu;
  return -0.5 * static_cast<double>(n) * adaptspecx::kLog2Pi + 0.5 * logdet - 0.5 * d.dot(precision * d);
}

struct Conditional {
  VectorXd mean;
  MatrixXd precision;
};

/// Textbook conditional of x_m given x_o under N(mu 1, Sigma) with Sigma the
/// inverse of `precision`, via the covariance partition.
inline Conditional dense_conditional(const VectorXd& x, const std::vector<bool>& missing, double mu,
                                     const MatrixXd& precision) {
  const MatrixXd sigma = precision.inverse();
  std::vector<Index> m, o;
  for (Index t = 0; t < x.size(); ++t) (missing[t] ? m : o).push_back(t);
  const Index nm = static_cast<Index>(m.size()), no = static_cast<Index>(o.size());
  MatrixXd s_mm(nm, nm), s_mo(nm, no), s_oo(no, no);
  VectorXd xo(no);
  for (Index a = 0; a < nm; ++a) {
    for (Index b = 0; b < nm; ++b) s_mm(a, b) = sigma(m[a], m[b]);
    for (Index b = 0; b < no; ++b) s_mo(a, b) = sigma(m[a], o[b]);
  }
  for (Index a = 0; a < no; ++a) {
    xo[a] = x[o[a]] - mu;
    for (Index b = 0; b < no; ++b) s_oo(a, b) = sigma(o[a], o[b]);
  }
  const Eigen::LLT<MatrixXd> llt(s_oo);
  Conditional c;
  c.mean = (mu + (s_mo * llt.solve(xo)).array()).matrix();
  c.precision = (s_mm - s_mo * llt.solve(s_mo.transpose())).inverse();
  return c;
}

/// Draw from the stationary Gaussian whose Whittle likelihood is exact:
/// x ~ N(mu 1, (V diag(1/f) V*)^{-1}).
inline VectorXd sample_whittle_gaussian(double mu, const VectorXd& log_f, adaptspecx::Rng& rng) {
  const MatrixXd sigma = dense_precision(log_f).inverse();
  const MatrixXd sym = 0.5 * (sigma + sigma.transpose());
  const Eigen::LLT<MatrixXd> llt(sym);
  VectorXd z(log_f.size());
  for (Index i = 0; i < z.size(); ++i) z[i] = adaptspecx::standard_normal(rng);
  return (mu + (llt.matrixL() * z).array()).matrix();
}

/// A smooth log-spectrum: spline coefficients with geometrically decaying
/// scale.
inline adaptspecx::SplineSpectrum smooth_spectrum(int basis_size, adaptspecx::Rng& rng, double scale = 0.7) {
  adaptspecx::SplineSpectrum s;
  s.tau2_b = 1.0;
  s.coefficients.resize(basis_size + 1);
  for (int j = 0; j <= basis_size; ++j)
    s.coefficients[j] = adaptspecx::sample_normal(0.0, scale / (1.0 + 0.5 * j), rng);
  return s;
}

/// Central finite-difference gradient of f at x.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h) {
  VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Central finite-difference Jacobian of a vector function.
inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x, double h) {
  MatrixXd j(x.size(), x.size());
  for (Index i = 0; i < x.size(); ++i) {
    VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    j.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return j;
}

/// max |a - b| / max(1, max |b|).
inline double relative_error(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

/// Pearson chi-square p-value of observed counts against expected counts.
inline double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected,
                           int fitted_parameters = 0) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  const double dof = static_cast<double>(observed.size()) - 1.0 - fitted_parameters;
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Chi-square p-value for uniformity of counts over equally likely bins.
inline double uniformity_p(const std::vector<double>& counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  return chi_square_p(counts, std::vector<double>(counts.size(), total / static_cast<double>(counts.size())));
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  long count = 0;

  void add(double x) {
    ++count;
    const double d = x - mean;
    mean += d / static_cast<double>(count);
    variance += (d * (x - mean) - variance) / static_cast<double>(count);
  }
  [[nodiscard]] double mean_se() const { return std::sqrt(variance / static_cast<double>(count)); }
};

/// Standard normal CDF.
inline double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Bin probabilities of a distribution with CDF `cdf` over `edges`
/// (first and last edges are the support limits).
inline std::vector<double> bin_probabilities(const std::function<double(double)>& cdf, const std::vector<double>& edges) {
  std::vector<double> p;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) p.push_back(cdf(edges[i + 1]) - cdf(edges[i]));
  return p;
}

inline std::vector<double> histogram(const std::vector<double>& values, const std::vector<double>& edges) {
  std::vector<double> counts(edges.size() - 1, 0.0);
  for (double v : values)
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
      if (v >= edges[i] && v < edges[i + 1]) {
        counts[i] += 1.0;
        break;
      }
  return counts;
}

}  // namespace oracle
