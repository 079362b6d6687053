#pragma once

// Real-input discrete Fourier transforms backed by FFTW.
//
// Plans are created once per length and thread with FFTW_ESTIMATE and
// FFTW_UNALIGNED, so the algorithm chosen for a length never depends on
// timing or on buffer addresses and results are reproducible across runs and
// thread counts. FFTW's planner is not reentrant; plan creation and
// destruction are serialized with a process-wide mutex while execution runs
// concurrently.

#include <complex>
#include <memory>
#include <mutex>
#include <unordered_map>

#include <fftw3.h>

#include <Eigen/Core>

#include "adaptspecx/error.hpp"

namespace adaptspecx {
namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFftPlan {
 public:
  explicit RealFftPlan(int n) : n_(n), in_(n), out_(n / 2 + 1) {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_.data(), reinterpret_cast<fftw_complex*>(out_.data()),
                                 FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_PRESERVE_INPUT);
    if (plan_ == nullptr) throw NumericalFailure("FFTW could not plan a transform of length " + std::to_string(n));
  }
  RealFftPlan(const RealFftPlan&) = delete;
  RealFftPlan& operator=(const RealFftPlan&) = delete;
  ~RealFftPlan() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }

  /// d_k = sum_t x_t exp(-2 pi i k t / n) for k = 0..floor(n/2).
  const Eigen::VectorXcd& run(const Eigen::Ref<const Eigen::VectorXd>& x) {
    in_ = x;
    fftw_execute_dft_r2c(plan_, in_.data(), reinterpret_cast<fftw_complex*>(out_.data()));
    return out_;
  }

 private:
  int n_;
  Eigen::VectorXd in_;
  Eigen::VectorXcd out_;
  fftw_plan plan_ = nullptr;
};

inline RealFftPlan& real_fft_plan(Eigen::Index n) {
  thread_local std::unordered_map<Eigen::Index, std::unique_ptr<RealFftPlan>> plans;
  auto& slot = plans[n];
  if (!slot) slot = std::make_unique<RealFftPlan>(static_cast<int>(n));
  return *slot;
}

}  // namespace detail

/// Non-negative-frequency half of the DFT of a real vector (size n/2 + 1).
/// The returned reference stays valid until the next transform of the same
/// length on this thread.
inline const Eigen::VectorXcd& real_fft_half(const Eigen::Ref<const Eigen::VectorXd>& x) {
  require(x.size() >= 1, "FFT of an empty vector");
  return detail::real_fft_plan(x.size()).run(x);
}

}  // namespace adaptspecx
