// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Iterative multi-channel weighted prediction error (WPE) dereverberation.

#ifndef USDR_WPE_H_
#define USDR_WPE_H_

#include <vector>

#include "usdr/common.h"
#include "usdr/spectral.h"
#include "usdr/stacking.h"

namespace usdr {

struct WpeConfig {
  int taps = 10;
  int delay = 3;
  int iterations = 3;
  double psd_floor = 1e-10;  // relative to the PSD maximum

  void Validate() const;  // throws ConfigError
  // Tap counts tuned per array size: 37 / 18 / 10 / 5 for 1 / 2 / 4 / 8
  // channels (other sizes use the next smaller tabulated size).
  static WpeConfig ForChannels(int num_channels);
};

// Past frames t-delay-taps+1 .. t-delay of every channel, channel-major.
StackedTensor WpeStack(const std::vector<CMatrix>& mixtures,
                       const WpeConfig& cfg);

// Channel mean of |Z|^2, floored at psd_floor times its maximum. An
// all-zero estimate gives a unit map flagged degenerate.
WeightMap WpePsd(const std::vector<CMatrix>& estimates, double psd_floor);

// One regression of every channel's mixture onto the joint past stack,
// weighted by 1 / psd. Returns one filter bank per channel.
std::vector<FilterBank> WpeFilterStep(const std::vector<CMatrix>& mixtures,
                                      const WeightMap& psd,
                                      const WpeConfig& cfg);

// Late reverberation predicted by the filters, per channel.
std::vector<CMatrix> WpePredictReverb(const std::vector<CMatrix>& mixtures,
                                      const std::vector<FilterBank>& filters,
                                      const WpeConfig& cfg);

struct WpeResult {
  std::vector<ComplexSpectrogram> output;
  std::vector<ComplexSpectrogram> predicted_reverb;  // output + this == input
  std::vector<FilterBank> filters;                   // last iteration
  double max_condition = 0.0;
  bool degenerate = false;
};

WpeResult WpeDereverb(const std::vector<ComplexSpectrogram>& mixtures,
                      const WpeConfig& cfg);

}  // namespace usdr

#endif  // USDR_WPE_H_
