// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/fft.h"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <utility>

namespace usdr {

namespace {

struct PlanPair {
  fftw_plan forward;
  fftw_plan inverse;
};

// The FFTW planner is not thread-safe; execution of an existing plan with
// the new-array interface is.
std::mutex& PlannerMutex() {
  static std::mutex mu;
  return mu;
}

PlanPair GetPlans(int n) {
  static std::map<int, PlanPair>* cache = new std::map<int, PlanPair>();
  std::lock_guard<std::mutex> lock(PlannerMutex());
  auto it = cache->find(n);
  if (it != cache->end()) return it->second;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  PlanPair plans{fftw_plan_dft_r2c_1d(n, in, out, flags),
                 fftw_plan_dft_c2r_1d(n, out, in, flags)};
  fftw_free(in);
  fftw_free(out);
  cache->emplace(n, plans);
  return plans;
}

int NextFastSize(int n) {
  int size = 1;
  while (size < n) size <<= 1;
  return size;
}

}  // namespace

RealFft::RealFft(int size) : size_(size) {
  if (size < 1) throw ConfigError("FFT size must be positive");
  PlanPair plans = GetPlans(size);
  forward_plan_ = plans.forward;
  inverse_plan_ = plans.inverse;
}

void RealFft::Forward(std::span<const double> in,
                      std::span<Complex> out) const {
  if (static_cast<int>(in.size()) != size_ ||
      static_cast<int>(out.size()) != bins())
    throw ShapeError("RealFft::Forward: buffer size mismatch");
  // r2c never writes its input, the const_cast is only for the C API.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_),
                       const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::Inverse(std::span<const Complex> in,
                      std::span<double> out) const {
  if (static_cast<int>(in.size()) != bins() ||
      static_cast<int>(out.size()) != size_)
    throw ShapeError("RealFft::Inverse: buffer size mismatch");
  // c2r destroys its input.
  std::vector<Complex> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                       reinterpret_cast<fftw_complex*>(scratch.data()),
                       out.data());
  const double scale = 1.0 / size_;
  for (double& v : out) v *= scale;
}

std::vector<double> Convolve(std::span<const double> a,
                             std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const int out_len = static_cast<int>(a.size() + b.size() - 1);
  if (std::min(a.size(), b.size()) <= 32) {
    std::vector<double> out(out_len, 0.0);
    for (size_t i = 0; i < a.size(); ++i) {
      if (a[i] == 0.0) continue;
      for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    }
    return out;
  }
  RealFft fft(NextFastSize(out_len));
  std::vector<double> pa(fft.size(), 0.0), pb(fft.size(), 0.0);
  std::copy(a.begin(), a.end(), pa.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  std::vector<Complex> fa(fft.bins()), fb(fft.bins());
  fft.Forward(pa, fa);
  fft.Forward(pb, fb);
  for (int k = 0; k < fft.bins(); ++k) fa[k] *= fb[k];
  fft.Inverse(fa, pa);
  pa.resize(out_len);
  return pa;
}

}  // namespace usdr
