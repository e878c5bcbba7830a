// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef USDR_SPECTRAL_H_
#define USDR_SPECTRAL_H_

#include <vector>

#include "usdr/common.h"

namespace usdr {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  int size() const { return static_cast<int>(samples.size()); }
  double Energy() const;
  // Throws DomainError on empty or non-finite content.
  void Validate() const;
};

enum class WindowKind { kSqrtHann };

// Defaults: 32 ms window, 8 ms hop, 512-point DFT at 16 kHz.
struct StftConfig {
  int window_len = 512;
  int hop_len = 128;
  int dft_size = 512;
  WindowKind window_kind = WindowKind::kSqrtHann;

  int bins() const { return dft_size / 2 + 1; }
  // Throws ConfigError unless hop divides window with at least 2x overlap
  // and dft_size >= window_len.
  void Validate() const;
  // Frames needed to cover `num_samples` with full windows.
  int FrameCount(int num_samples) const;

  bool operator==(const StftConfig&) const = default;
};

struct ComplexSpectrogram {
  CMatrix data;  // frames x bins; DC first, Nyquist last
  StftConfig config;

  int frames() const { return static_cast<int>(data.rows()); }
  int bins() const { return static_cast<int>(data.cols()); }
};

// Analysis window, scaled so that the squared window overlap-adds to 1 at
// the configured hop (the same window is used for synthesis).
std::vector<double> AnalysisWindow(const StftConfig& cfg);

// Frames start at hop multiples of the signal left-padded by
// (window_len - hop_len) zeros; the tail is zero-padded up to the last frame
// that still touches a sample, so every sample sees window_len / hop_len
// full frames.
ComplexSpectrogram Stft(const Waveform& wave, const StftConfig& cfg);

// Weighted overlap-add inverse of Stft, truncated or zero-padded to out_len.
Waveform Istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
               int out_len, int sample_rate = kDefaultSampleRate);

double RelativeL2Error(const std::vector<double>& estimate,
                       const std::vector<double>& reference);

}  // namespace usdr

#endif  // USDR_SPECTRAL_H_
