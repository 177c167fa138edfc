#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <utility>

#include "pdewb/grid.hpp"

namespace pdewb {

namespace detail {

// FFTW planning is not thread-safe; execution on a plan's own buffers is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class Fft2Plan {
public:
  Fft2Plan(int nx, int ny, int sign) : n_(static_cast<std::size_t>(nx) * ny) {
    std::lock_guard lock(fftw_planner_mutex());
    in_ = fftw_alloc_complex(n_);
    out_ = fftw_alloc_complex(n_);
    // FFTW_ESTIMATE keeps plans (and therefore results) run-to-run deterministic.
    plan_ = fftw_plan_dft_2d(ny, nx, in_, out_, sign, FFTW_ESTIMATE);
  }
  Fft2Plan(const Fft2Plan&) = delete;
  Fft2Plan& operator=(const Fft2Plan&) = delete;
  ~Fft2Plan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }

  std::complex<double>* input() { return reinterpret_cast<std::complex<double>*>(in_); }
  const std::complex<double>* output() const { return reinterpret_cast<const std::complex<double>*>(out_); }
  void execute() { fftw_execute(plan_); }
  std::size_t size() const { return n_; }

private:
  std::size_t n_;
  fftw_complex* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

/// Per-thread plan cache keyed by (nx, ny, direction).
inline Fft2Plan& fft2_plan(int nx, int ny, int sign) {
  thread_local std::map<std::tuple<int, int, int>, std::unique_ptr<Fft2Plan>> cache;
  auto& slot = cache[{nx, ny, sign}];
  if (!slot) slot = std::make_unique<Fft2Plan>(nx, ny, sign);
  return *slot;
}

} // namespace detail

/// Unnormalized forward 2D DFT of a complex array of shape (ny, nx).
inline void fft2_inplace(int nx, int ny, std::complex<double>* data) {
  auto& plan = detail::fft2_plan(nx, ny, FFTW_FORWARD);
  std::copy_n(data, plan.size(), plan.input());
  plan.execute();
  std::copy_n(plan.output(), plan.size(), data);
}

/// Inverse 2D DFT including the 1/(nx*ny) factor.
inline void ifft2_inplace(int nx, int ny, std::complex<double>* data) {
  auto& plan = detail::fft2_plan(nx, ny, FFTW_BACKWARD);
  std::copy_n(data, plan.size(), plan.input());
  plan.execute();
  const double scale = 1.0 / static_cast<double>(plan.size());
  const auto* out = plan.output();
  for (std::size_t i = 0; i < plan.size(); ++i) data[i] = out[i] * scale;
}

} // namespace pdewb
