#include <gtest/gtest.h>

#include <numbers>

#include "adaptspecx/adaptspecx.hpp"
#include "support/oracles.hpp"

using namespace adaptspecx;
using Eigen::VectorXd;

namespace {

VectorXd random_vector(Index n, Rng& rng, double scale = 1.0) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = sample_normal(0.0, scale, rng);
  return v;
}

}  // namespace

TEST(FourierGrid, FrequenciesAndMultiplicities) {
  const VectorXd w = fourier_frequencies(8);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_DOUBLE_EQ(w[4], 0.5);
  EXPECT_DOUBLE_EQ(w[7], 7.0 / 8.0);
  EXPECT_THROW(fourier_frequencies(7), InvalidArgument);
  EXPECT_EQ(half_spectrum_size(8), 5);
  EXPECT_EQ(half_spectrum_size(7), 4);
  // Multiplicities count every Fourier frequency exactly once.
  for (Index n : {2, 3, 7, 8, 31, 64}) EXPECT_DOUBLE_EQ(half_spectrum_weights(n).sum(), static_cast<double>(n));
}

TEST(SplineBasis, MatchesClosedForm) {
  VectorXd omega(4);
  omega << 0.0, 0.1, 0.37, 0.5;
  const Eigen::MatrixXd q = spline_basis(omega, 6);
  for (Index k = 0; k < omega.size(); ++k) {
    EXPECT_DOUBLE_EQ(q(k, 0), 1.0);
    for (int j = 1; j <= 6; ++j)
      EXPECT_NEAR(q(k, j), std::numbers::sqrt2 * std::cos(2.0 * std::numbers::pi * j * omega[k]) / (j * std::numbers::pi),
                  1e-14);
  }
}

TEST(SplineBasis, CachedFourierBasisMatchesDirect) {
  for (Index n : {9, 16, 40}) {
    VectorXd omega(half_spectrum_size(n));
    for (Index k = 0; k < omega.size(); ++k) omega[k] = static_cast<double>(k) / static_cast<double>(n);
    EXPECT_LT((fourier_spline_basis(n, 5) - spline_basis(omega, 5)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Spectrum, FullGridIsSymmetric) {
  Rng rng(3);
  const SplineSpectrum s = oracle::smooth_spectrum(7, rng);
  const VectorXd lf = log_spectral_density(s, 12);
  for (Index k = 1; k < 12; ++k) EXPECT_DOUBLE_EQ(lf[k], lf[12 - k]);
}

TEST(Periodogram, ParsevalIdentity) {
  Rng rng(11);
  for (Index n : {5, 16, 37, 128}) {
    const VectorXd x = random_vector(n, rng, 2.0);
    const double mu = 0.3;
    const VectorXd pg = periodogram(x, mu);
    EXPECT_NEAR(pg.sum(), (x.array() - mu).square().sum(), 1e-9 * n);
    EXPECT_NEAR(pg[0], std::pow((x.array() - mu).sum(), 2) / n, 1e-9);
  }
}

TEST(Periodogram, MatchesDenseTransform) {
  Rng rng(5);
  const Index n = 10;
  const VectorXd x = random_vector(n, rng);
  const Eigen::MatrixXcd v = oracle::dft_matrix(n);
  const Eigen::VectorXcd d = v.adjoint() * x.cast<std::complex<double>>();
  const VectorXd pg = periodogram(x, 0.0);
  for (Index k = 0; k < n; ++k) EXPECT_NEAR(pg[k], std::norm(d[k]), 1e-12);
}

TEST(Whittle, EqualsDenseGaussianDensity) {
  Rng rng(21);
  for (Index n : {4, 6, 8, 16}) {
    for (int rep = 0; rep < 5; ++rep) {
      const SplineSpectrum s = oracle::smooth_spectrum(5, rng);
      const VectorXd lf = log_spectral_density(s, n);
      const VectorXd x = random_vector(n, rng, 1.5);
      const double mu = sample_normal(0.0, 1.0, rng);
      const double dense = oracle::gaussian_log_density(x, mu, oracle::dense_precision(lf));
      EXPECT_NEAR(whittle_log_likelihood(x, mu, lf), dense, 1e-9);
    }
  }
}

TEST(Whittle, FloorsTinySpectra) {
  const VectorXd x = VectorXd::Zero(4);
  VectorXd lf = VectorXd::Constant(4, -100.0);
  const double floored = whittle_log_likelihood(x, 0.0, lf);
  lf.setConstant(kLogSpectrumFloor);
  EXPECT_DOUBLE_EQ(floored, whittle_log_likelihood(x, 0.0, lf));
}

TEST(Whittle, RejectsMismatchedInputs) {
  EXPECT_THROW(whittle_log_likelihood(VectorXd::Zero(4), 0.0, VectorXd::Zero(6)), InvalidArgument);
  VectorXd bad = VectorXd::Zero(4);
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(whittle_log_likelihood(VectorXd::Zero(4), 0.0, bad), InvalidArgument);
  EXPECT_THROW(TimeSeries::make(VectorXd::Zero(5), std::vector<bool>(5, false)), InvalidArgument);
}

TEST(Whittle, SegmentedIsSumOfSegments) {
  Rng rng(8);
  SegmentModel m;
  m.cutpoints = {10, 23, 40};
  for (int s = 0; s < 3; ++s) {
    m.means.push_back(sample_normal(0, 1, rng));
    m.spectra.push_back(oracle::smooth_spectrum(4, rng));
  }
  const VectorXd x = random_vector(40, rng);
  double expected = 0.0;
  for (int s = 0; s < 3; ++s)
    expected += whittle_log_likelihood(x.segment(m.start(s), m.length(s)), m.means[s],
                                       log_spectral_density(m.spectra[s], m.length(s)));
  EXPECT_NEAR(segmented_log_likelihood(x, m), expected, 1e-10);
}

TEST(SegmentStatistics, PooledLikelihoodEqualsSumOverSeries) {
  Rng rng(13);
  for (Index len : {9, 16, 33}) {
    Eigen::MatrixXd data(60, 3);
    for (Index j = 0; j < 3; ++j) data.col(j) = random_vector(60, rng);
    const Index start = 7;
    const SegmentStatistics st = segment_statistics(data, start, len);
    const SplineSpectrum spec = oracle::smooth_spectrum(6, rng);
    const double mu = 0.4;
    double expected = 0.0;
    for (Index j = 0; j < 3; ++j)
      expected += whittle_log_likelihood(data.col(j).segment(start, len), mu, log_spectral_density(spec, len));
    EXPECT_NEAR(segment_log_likelihood(st, mu, spec), expected, 1e-9);
  }
}

TEST(SegmentStatistics, FastIndicatorLikelihoodsMatchDirect) {
  Rng rng(17);
  const int n = 64;
  Eigen::MatrixXd data(n, 5);
  for (Index j = 0; j < 5; ++j) data.col(j) = random_vector(n, rng, 2.0);
  ComponentPrior prior;
  prior.min_segment_length = 8;
  prior.basis_size = 6;
  std::vector<SegmentModel> theta;
  for (int h = 0; h < 4; ++h) theta.push_back(draw_from_prior(n, prior, rng));
  theta[3].spectra[0].coefficients[0] = -40.0;  // exercises the spectrum floor
  for (int threads : {1, 3}) {
    const Eigen::MatrixXd ll = series_log_likelihoods(data, theta, threads);
    for (Index j = 0; j < 5; ++j)
      for (int h = 0; h < 4; ++h)
        EXPECT_NEAR(ll(j, h), segmented_log_likelihood(data.col(j), theta[h]), 1e-8 * (1.0 + std::abs(ll(j, h))));
  }
}

TEST(CirculantPrecision, MatchesDenseProduct) {
  Rng rng(4);
  for (Index n : {4, 7, 8, 12, 16}) {
    const VectorXd lf = log_spectral_density(oracle::smooth_spectrum(6, rng), n);
    double imag = 0.0;
    const Eigen::MatrixXd dense = oracle::dense_precision(lf, &imag);
    EXPECT_LT(imag, 1e-12);
    const CirculantPrecision c = circulant_precision(lf);
    EXPECT_LT((c.dense() - dense).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(c.dense(), c.dense().transpose());
  }
}

TEST(CirculantPrecision, RejectsAsymmetricSpectrum) {
  VectorXd lf = VectorXd::Zero(6);
  lf[1] = 0.5;
  EXPECT_THROW(circulant_precision(lf), InvalidArgument);
}

TEST(MissingConditional, MatchesDenseConditioning) {
  Rng rng(31);
  const Index n = 10;
  const VectorXd lf = log_spectral_density(oracle::smooth_spectrum(4, rng), n);
  const Eigen::MatrixXd lambda = oracle::dense_precision(lf);
  const VectorXd x = random_vector(n, rng);
  const double mu = -0.7;
  // Every pattern of one or two missing entries.
  for (Index a = 0; a < n; ++a) {
    for (Index b = a; b < n; ++b) {
      std::vector<bool> miss(n, false);
      miss[a] = miss[b] = true;
      const MissingConditional got = missing_conditional(TimeSeries{x, miss}, mu, lf);
      const oracle::Conditional want = oracle::dense_conditional(x, miss, mu, lambda);
      EXPECT_LT((got.mean - want.mean).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LT((got.precision - want.precision).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(MissingConditional, ImputationKeepsObservedAndMatchesMoments) {
  Rng rng(41);
  const int n = 16;
  SegmentModel m;
  m.cutpoints = {8, 16};
  m.means = {1.0, -1.0};
  m.spectra = {oracle::smooth_spectrum(3, rng), oracle::smooth_spectrum(3, rng)};
  VectorXd x = random_vector(n, rng);
  std::vector<bool> miss(n, false);
  miss[2] = miss[11] = true;
  const VectorXd lf = log_spectral_density(m.spectra[1], 8);
  std::vector<bool> seg_miss(miss.begin() + 8, miss.end());
  const oracle::Conditional want =
      oracle::dense_conditional(x.segment(8, 8), seg_miss, -1.0, oracle::dense_precision(lf));
  oracle::Moments mom;
  const TimeSeries series{x, miss};
  for (int rep = 0; rep < 20000; ++rep) {
    const TimeSeries filled = sample_missing(series, m, rng);
    for (int t = 0; t < n; ++t)
      if (!miss[t]) ASSERT_EQ(filled.values[t], x[t]);
    mom.add(filled.values[11]);
  }
  const double var = 1.0 / want.precision(0, 0);
  EXPECT_NEAR(mom.mean, want.mean[0], 4.0 * std::sqrt(var / 20000.0));
  EXPECT_NEAR(mom.variance, var, 4.0 * var * std::sqrt(2.0 / 20000.0));
}

TEST(Fft, RealTransformMatchesDense) {
  Rng rng(2);
  for (Index n : {1, 2, 3, 17, 64, 211}) {
    const VectorXd x = random_vector(n, rng);
    const Eigen::VectorXcd half = real_fft_half(x);
    ASSERT_EQ(half.size(), n / 2 + 1);
    for (Index k = 0; k < half.size(); ++k) {
      std::complex<double> d = 0.0;
      for (Index t = 0; t < n; ++t)
        d += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
      EXPECT_LT(std::abs(half[k] - d), 1e-10 * n);
    }
  }
}
