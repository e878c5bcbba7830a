// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef USDR_FFT_H_
#define USDR_FFT_H_

#include <span>
#include <vector>

#include "usdr/common.h"

namespace usdr {

// Real-input DFT of arbitrary length backed by FFTW. Instances are cheap
// handles onto a process-wide plan cache and are safe to use from several
// threads at once.
class RealFft {
 public:
  explicit RealFft(int size);

  int size() const { return size_; }
  int bins() const { return size_ / 2 + 1; }

  // in.size() == size(), out.size() == bins().
  void Forward(std::span<const double> in, std::span<Complex> out) const;
  // Unnormalized FFTW inverse divided by size(), i.e. Inverse(Forward(x)) == x.
  void Inverse(std::span<const Complex> in, std::span<double> out) const;

 private:
  int size_;
  void* forward_plan_;
  void* inverse_plan_;
};

// Full linear convolution (length a.size() + b.size() - 1) via FFT.
std::vector<double> Convolve(std::span<const double> a,
                             std::span<const double> b);

}  // namespace usdr

#endif  // USDR_FFT_H_
