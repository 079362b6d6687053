#pragma once

// Covariate-dependent logit stick-breaking weights with thin-plate GP log-odds.
// Component labels are 0-based here: z_j in {0, ..., H-1}, and the last
// component has no stick parameters (v_{H-1} = 1).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "adaptspecx/distributions.hpp"
#include "adaptspecx/error.hpp"
#include "adaptspecx/rng.hpp"

namespace adaptspecx {

// ---------------------------------------------------------------------------
// Thin-plate kernel and design

/// Radial thin-plate form: r^3 for P = 1, r^2 log r for P = 2, -r for P = 3.
inline double thin_plate_radial(double r, int dimension) {
  switch (dimension) {
    case 1:
      return r * r * r;
    case 2:
      return r > 0.0 ? r * r * std::log(r) : 0.0;
    case 3:
      return -r;
    default:
      throw InvalidArgument("thin-plate kernel supports 1 to 3 covariates");
  }
}

inline double thin_plate_kernel(const Eigen::Ref<const Eigen::VectorXd>& u1, const Eigen::Ref<const Eigen::VectorXd>& u2) {
  require(u1.size() == u2.size(), "covariate dimensions differ");
  return thin_plate_radial((u1 - u2).norm(), static_cast<int>(u1.size()));
}

struct CovariateDesign {
  /// Raw covariates (N x P) and their column standardization.
  Eigen::MatrixXd U;
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  Eigen::MatrixXd U_std;
  /// Retained eigenvectors (N x B) and eigenvalues (descending, clamped at 0).
  Eigen::MatrixXd Q;
  Eigen::VectorXd D;
  /// (1 | U_std | Q D^{1/2}), N x (P + B + 1).
  Eigen::MatrixXd U_dagger;
  /// Sum of retained over sum of positive eigenvalues.
  double energy_ratio = 1.0;

  [[nodiscard]] int covariates() const { return static_cast<int>(U.cols()); }
  [[nodiscard]] int basis() const { return static_cast<int>(D.size()); }
  [[nodiscard]] int columns() const { return static_cast<int>(U_dagger.cols()); }
  [[nodiscard]] int series() const { return static_cast<int>(U.rows()); }

  [[nodiscard]] Eigen::VectorXd standardize(const Eigen::Ref<const Eigen::VectorXd>& u) const {
    require(u.size() == U.cols(), "covariate dimension mismatch");
    return ((u - center).array() / scale.array()).matrix();
  }
};

inline Eigen::MatrixXd thin_plate_gram(const Eigen::MatrixXd& points) {
  const Index n = points.rows();
  Eigen::MatrixXd k(n, n);
  for (Index i = 0; i < n; ++i) {
    k(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) k(i, j) = k(j, i) = thin_plate_kernel(points.row(i).transpose(), points.row(j).transpose());
  }
  return k;
}

inline CovariateDesign build_design(const Eigen::MatrixXd& U, int B) {
  const Index N = U.rows();
  const int P = static_cast<int>(U.cols());
  require(N >= 1, "design needs at least one series");
  require(B >= 0 && B < N, "basis truncation B must satisfy 0 <= B < N");
  require(P <= 3, "at most 3 covariates are supported");
  require(P >= 1 || B == 0, "a GP basis needs at least one covariate");
  require(U.allFinite(), "covariates must be finite");

  CovariateDesign d;
  d.U = U;
  d.center = U.colwise().mean().transpose();
  d.scale = Eigen::VectorXd::Ones(P);
  for (int p = 0; p < P; ++p) {
    if (N > 1) {
      const double sd = std::sqrt((U.col(p).array() - d.center[p]).square().sum() / static_cast<double>(N - 1));
      if (sd > 0.0) d.scale[p] = sd;
    }
  }
  d.U_std = (U.rowwise() - d.center.transpose()).array().rowwise() / d.scale.transpose().array();

  d.Q.resize(N, B);
  d.D.resize(B);
  if (B > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(thin_plate_gram(d.U_std));
    if (eig.info() != Eigen::Success) throw NumericalFailure("eigendecomposition of the thin-plate kernel failed");
    // Eigen sorts ascending; the retained basis is the top B.
    const Eigen::VectorXd values = eig.eigenvalues();
    double positive = 0.0;
    for (Index i = 0; i < N; ++i) positive += std::max(values[i], 0.0);
    double kept = 0.0;
    for (int b = 0; b < B; ++b) {
      const Index src = N - 1 - b;
      d.D[b] = std::max(values[src], 0.0);
      d.Q.col(b) = eig.eigenvectors().col(src);
      kept += d.D[b];
    }
    d.energy_ratio = positive > 0.0 ? kept / positive : 1.0;
  }

  d.U_dagger.resize(N, 1 + P + B);
  d.U_dagger.col(0).setOnes();
  if (P > 0) d.U_dagger.middleCols(1, P) = d.U_std;
  if (B > 0) d.U_dagger.rightCols(B) = d.Q * d.D.cwiseSqrt().asDiagonal();
  return d;
}

/// Nystrom extension (1, u*_std, k*' Q D^{-1/2}) of the design at a new point.
inline Eigen::VectorXd predictive_design_row(const Eigen::Ref<const Eigen::VectorXd>& u_star, const CovariateDesign& d) {
  const int P = d.covariates(), B = d.basis();
  Eigen::VectorXd row = Eigen::VectorXd::Zero(1 + P + B);
  row[0] = 1.0;
  const Eigen::VectorXd s = d.standardize(u_star);
  row.segment(1, P) = s;
  if (B > 0) {
    Eigen::VectorXd k(d.series());
    for (int j = 0; j < d.series(); ++j) k[j] = thin_plate_kernel(s, d.U_std.row(j).transpose());
    const Eigen::VectorXd proj = d.Q.transpose() * k;
    for (int b = 0; b < B; ++b) row[1 + P + b] = d.D[b] > 0.0 ? proj[b] / std::sqrt(d.D[b]) : 0.0;
  }
  return row;
}

// ---------------------------------------------------------------------------
// Stick-breaking weights

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// log pi_h for h = 0..H-1 from the H-1 log-odds.
inline Eigen::VectorXd log_stick_weights(const Eigen::Ref<const Eigen::VectorXd>& log_odds) {
  const Index H = log_odds.size() + 1;
  Eigen::VectorXd out(H);
  double rest = 0.0;  // log prod_{h' < h} (1 - v_h')
  for (Index h = 0; h + 1 < H; ++h) {
    const double w = log_odds[h];
    out[h] = rest - softplus(-w);
    rest -= softplus(w);
  }
  out[H - 1] = rest;
  return out;
}

inline Eigen::VectorXd stick_weights(const Eigen::Ref<const Eigen::VectorXd>& log_odds) {
  return log_stick_weights(log_odds).array().exp();
}

// ---------------------------------------------------------------------------
// Stick parameters

struct StickPrior {
  double mu_beta = 0.0;
  double sigma2_beta = 100.0;
  double nu_tau = 3.0;
  double A_tau = 10.0;
};

struct StickState {
  /// beta[h] = (beta_0, beta_u, beta_gp) for h = 0..H-2.
  std::vector<Eigen::VectorXd> beta;
  std::vector<double> tau2;
  std::vector<double> a;

  [[nodiscard]] int components() const { return static_cast<int>(beta.size()) + 1; }
};

inline void validate_stick_state(const StickState& stick, const CovariateDesign& d) {
  require(stick.components() >= 2, "at least two mixture components are required");
  require(stick.tau2.size() == stick.beta.size() && stick.a.size() == stick.beta.size(),
          "stick state arrays disagree in length");
  for (std::size_t h = 0; h < stick.beta.size(); ++h) {
    require(stick.beta[h].size() == d.columns(), "beta length does not match the design");
    require(stick.beta[h].allFinite(), "beta must be finite");
    require(stick.tau2[h] > 0.0 && stick.a[h] > 0.0, "tau2 and a must be positive");
  }
}

/// Prior mean and diagonal prior precision of beta_h given tau2_h.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> beta_prior(const CovariateDesign& d, double tau2,
                                                              const StickPrior& prior) {
  const int fixed = 1 + d.covariates();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d.columns());
  mean.head(fixed).setConstant(prior.mu_beta);
  Eigen::VectorXd prec(d.columns());
  prec.head(fixed).setConstant(1.0 / prior.sigma2_beta);
  prec.tail(d.basis()).setConstant(1.0 / tau2);
  return {mean, prec};
}

inline double beta_log_prior(const Eigen::VectorXd& beta, const CovariateDesign& d, double tau2,
                             const StickPrior& prior) {
  auto [mean, prec] = beta_prior(d, tau2, prior);
  return 0.5 * (prec.array().log().sum() - static_cast<double>(beta.size()) * kLog2Pi -
                (prec.array() * (beta - mean).array().square()).sum());
}

/// Draws the stick parameters from their priors (half-t scales via the
/// inverse-gamma mixture).
inline StickState draw_stick_prior(int H, const CovariateDesign& d, const StickPrior& prior, Rng& rng) {
  require(H >= 2, "at least two mixture components are required");
  StickState s;
  for (int h = 0; h + 1 < H; ++h) {
    const double a = sample_inverse_gamma(0.5, 1.0 / (prior.A_tau * prior.A_tau), rng);
    const double tau2 = sample_inverse_gamma(0.5 * prior.nu_tau, prior.nu_tau / a, rng);
    auto [mean, prec] = beta_prior(d, tau2, prior);
    Eigen::VectorXd beta(d.columns());
    for (int i = 0; i < beta.size(); ++i) beta[i] = sample_normal(mean[i], 1.0 / std::sqrt(prec[i]), rng);
    s.beta.push_back(std::move(beta));
    s.tau2.push_back(tau2);
    s.a.push_back(a);
  }
  return s;
}

/// log pi_h(u_j) for every series (rows) and component (columns).
inline Eigen::MatrixXd log_mixture_weights(const Eigen::MatrixXd& design_rows, const StickState& stick) {
  const int H = stick.components();
  Eigen::MatrixXd odds(design_rows.rows(), H - 1);
  for (int h = 0; h + 1 < H; ++h) odds.col(h) = design_rows * stick.beta[h];
  Eigen::MatrixXd out(design_rows.rows(), H);
  for (Index j = 0; j < design_rows.rows(); ++j) out.row(j) = log_stick_weights(odds.row(j).transpose()).transpose();
  return out;
}

inline Eigen::VectorXd mixture_weights(const Eigen::Ref<const Eigen::VectorXd>& design_row, const StickState& stick) {
  Eigen::VectorXd odds(stick.components() - 1);
  for (int h = 0; h + 1 < stick.components(); ++h) odds[h] = design_row.dot(stick.beta[h]);
  return stick_weights(odds);
}

// ---------------------------------------------------------------------------
// Indicator update

/// Draws z_j with p(z_j = h) proportional to pi_h(u_j) g_h(x_j). Row j of
/// `log_likelihood` holds log g_h(x_j) for every h.
inline std::vector<int> sample_z(const Eigen::MatrixXd& log_likelihood, const Eigen::MatrixXd& log_weights, Rng& rng) {
  require(log_likelihood.rows() == log_weights.rows() && log_likelihood.cols() == log_weights.cols(),
          "likelihood and weight matrices differ in shape");
  std::vector<int> z(log_likelihood.rows());
  for (Index j = 0; j < log_likelihood.rows(); ++j) {
    const Eigen::VectorXd lp = (log_likelihood.row(j) + log_weights.row(j)).transpose();
    if (!std::isfinite(log_sum_exp(lp)))
      throw NumericalFailure("all component probabilities vanish for series " + std::to_string(j));
    z[j] = sample_categorical_log(lp, rng);
  }
  return z;
}

// ---------------------------------------------------------------------------
// beta update by Polya-Gamma augmentation

/// Rows of the design with z_j >= h and their responses 1(z_j = h).
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> stick_subproblem(int h, const std::vector<int>& z,
                                                                    const Eigen::MatrixXd& design_rows) {
  std::vector<Index> rows;
  for (std::size_t j = 0; j < z.size(); ++j)
    if (z[j] >= h) rows.push_back(static_cast<Index>(j));
  Eigen::MatrixXd X(static_cast<Index>(rows.size()), design_rows.cols());
  Eigen::VectorXd y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X.row(static_cast<Index>(i)) = design_rows.row(rows[i]);
    y[static_cast<Index>(i)] = z[rows[i]] == h ? 1.0 : 0.0;
  }
  return {X, y};
}

inline Eigen::VectorXd sample_beta_dagger(int h, const std::vector<int>& z, const CovariateDesign& d,
                                          const StickState& stick, const StickPrior& prior, Rng& rng) {
  require(h >= 0 && h + 1 < stick.components(), "stick index out of range");
  require(static_cast<Index>(z.size()) == d.U_dagger.rows(), "indicator count does not match the design");
  auto [X, y] = stick_subproblem(h, z, d.U_dagger);
  auto [mean, prec] = beta_prior(d, stick.tau2[h], prior);
  const Eigen::VectorXd eta_lin = X * stick.beta[h];
  Eigen::VectorXd omega(X.rows());
  for (Index i = 0; i < X.rows(); ++i) omega[i] = sample_polya_gamma_1(eta_lin[i], rng);
  Eigen::MatrixXd precision = X.transpose() * omega.asDiagonal() * X;
  precision.diagonal() += prec;
  const Eigen::VectorXd kappa = y.array() - 0.5;
  const Eigen::VectorXd rhs = X.transpose() * kappa + (prec.array() * mean.array()).matrix();
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalFailure("beta posterior precision is not positive definite");
  return sample_mvn_precision_factor(llt.solve(rhs), llt, rng);
}

// ---------------------------------------------------------------------------
// Scale update

/// a_h | tau2_h then tau2_h | a_h, beta_gp,h.
inline std::pair<double, double> sample_tau_h(int h, const StickState& stick, int basis, const StickPrior& prior,
                                              Rng& rng) {
  require(h >= 0 && h + 1 < stick.components(), "stick index out of range");
  const double nu = prior.nu_tau;
  const double a = sample_inverse_gamma(0.5 * (nu + 1.0), nu / stick.tau2[h] + 1.0 / (prior.A_tau * prior.A_tau), rng);
  const double ss = basis > 0 ? stick.beta[h].tail(basis).squaredNorm() : 0.0;
  const double tau2 = sample_inverse_gamma(0.5 * (nu + basis), 0.5 * ss + nu / a, rng);
  return {tau2, a};
}

// ---------------------------------------------------------------------------
// Laplace approximation of the logistic conditional of beta_h

struct BetaLaplace {
  Eigen::VectorXd mode;
  Eigen::LLT<Eigen::MatrixXd> precision;
  bool converged = false;

  [[nodiscard]] double log_density(const Eigen::VectorXd& beta) const {
    return mvn_precision_log_density(beta, mode, precision);
  }
};

/// log p(beta | z) up to a constant: Bernoulli-logit likelihood over
/// {j : z_j >= h} plus the Gaussian prior.
inline double beta_log_conditional(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& mean, const Eigen::VectorXd& prec) {
  const Eigen::VectorXd eta = X * beta;
  double value = 0.0;
  for (Index i = 0; i < eta.size(); ++i) value += y[i] * eta[i] - softplus(eta[i]);
  return value - 0.5 * (prec.array() * (beta - mean).array().square()).sum();
}

inline BetaLaplace beta_laplace(int h, const std::vector<int>& z, const CovariateDesign& d, double tau2,
                                const StickPrior& prior) {
  auto [X, y] = stick_subproblem(h, z, d.U_dagger);
  auto [mean, prec] = beta_prior(d, tau2, prior);
  BetaLaplace out;
  Eigen::VectorXd beta = mean;
  double value = beta_log_conditional(beta, X, y, mean, prec);
  auto curvature = [&](const Eigen::VectorXd& b, Eigen::VectorXd& grad) {
    const Eigen::VectorXd eta = X * b;
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      p[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = p[i] * (1.0 - p[i]);
    }
    grad = X.transpose() * (y - p) - (prec.array() * (b - mean).array()).matrix();
    Eigen::MatrixXd neg_h = X.transpose() * w.asDiagonal() * X;
    neg_h.diagonal() += prec;
    return neg_h;
  };
  Eigen::VectorXd grad;
  for (int it = 0; it < 50; ++it) {
    out.precision.compute(curvature(beta, grad));
    if (out.precision.info() != Eigen::Success) break;
    if (grad.cwiseAbs().maxCoeff() < 1e-8) {
      out.converged = true;
      break;
    }
    const Eigen::VectorXd step = out.precision.solve(grad);
    if (grad.dot(step) < 1e-14 * (1.0 + std::abs(value))) {
      out.converged = true;
      break;
    }
    double t = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      const Eigen::VectorXd trial = beta + t * step;
      const double next = beta_log_conditional(trial, X, y, mean, prec);
      if (std::isfinite(next) && next >= value) {
        beta = trial;
        value = next;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  out.mode = beta;
  if (!out.converged) {
    out.precision.compute(curvature(beta, grad));
    out.converged = out.precision.info() == Eigen::Success && grad.cwiseAbs().maxCoeff() < 1e-6;
  }
  return out;
}

}  // namespace adaptspecx
