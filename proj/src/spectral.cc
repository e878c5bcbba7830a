// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/spectral.h"

#include <cmath>
#include <numbers>
#include <numeric>

#include "usdr/fft.h"

namespace usdr {

double Waveform::Energy() const {
  return std::inner_product(samples.begin(), samples.end(), samples.begin(),
                            0.0);
}

void Waveform::Validate() const {
  if (samples.empty()) throw DomainError("waveform is empty");
  if (sample_rate <= 0) throw DomainError("sample rate must be positive");
  for (double v : samples)
    if (!std::isfinite(v)) throw DomainError("waveform has non-finite samples");
}

void StftConfig::Validate() const {
  if (window_len <= 0 || hop_len <= 0 || dft_size <= 0)
    throw ConfigError("STFT sizes must be positive");
  if (hop_len > window_len)
    throw ConfigError("STFT hop_len exceeds window_len");
  if (window_len % hop_len != 0)
    throw ConfigError("STFT hop_len must divide window_len");
  if (window_len / hop_len < 2)
    throw ConfigError("sqrt-Hann synthesis needs at least 2x overlap");
  if (dft_size < window_len)
    throw ConfigError("STFT dft_size must be >= window_len");
}

int StftConfig::FrameCount(int num_samples) const {
  const int padded = num_samples + window_len - hop_len;
  return (padded + hop_len - 1) / hop_len;
}

std::vector<double> AnalysisWindow(const StftConfig& cfg) {
  cfg.Validate();
  const int n = cfg.window_len;
  // Periodic Hann sums to window_len / (2 * hop_len) over all hop shifts.
  const double norm = 2.0 * cfg.hop_len / n;
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    const double hann = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / n));
    w[i] = std::sqrt(hann * norm);
  }
  return w;
}

ComplexSpectrogram Stft(const Waveform& wave, const StftConfig& cfg) {
  cfg.Validate();
  if (wave.samples.empty()) throw DomainError("stft of an empty waveform");
  const std::vector<double> window = AnalysisWindow(cfg);
  const int num_frames = cfg.FrameCount(wave.size());
  const int offset = cfg.window_len - cfg.hop_len;
  RealFft fft(cfg.dft_size);

  ComplexSpectrogram spec;
  spec.config = cfg;
  spec.data.resize(num_frames, cfg.bins());
  std::vector<double> frame(cfg.dft_size, 0.0);
  std::vector<Complex> bins(cfg.bins());
  for (int t = 0; t < num_frames; ++t) {
    const int start = t * cfg.hop_len - offset;
    for (int i = 0; i < cfg.window_len; ++i) {
      const int n = start + i;
      frame[i] = (n >= 0 && n < wave.size()) ? wave.samples[n] * window[i]
                                             : 0.0;
    }
    fft.Forward(frame, bins);
    for (int f = 0; f < cfg.bins(); ++f) spec.data(t, f) = bins[f];
  }
  return spec;
}

Waveform Istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
               int out_len, int sample_rate) {
  cfg.Validate();
  if (spec.bins() != cfg.bins())
    throw ShapeError("istft: spectrogram has " + std::to_string(spec.bins()) +
                     " bins, config expects " + std::to_string(cfg.bins()));
  if (out_len < 0) throw DomainError("istft: negative output length");
  const std::vector<double> window = AnalysisWindow(cfg);
  const int offset = cfg.window_len - cfg.hop_len;
  RealFft fft(cfg.dft_size);

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(out_len, 0.0);
  std::vector<Complex> bins(cfg.bins());
  std::vector<double> frame(cfg.dft_size);
  for (int t = 0; t < spec.frames(); ++t) {
    const int start = t * cfg.hop_len - offset;
    if (start >= out_len) break;
    for (int f = 0; f < cfg.bins(); ++f) bins[f] = spec.data(t, f);
    // A real signal has real DC and Nyquist bins.
    bins.front() = Complex(bins.front().real(), 0.0);
    if (cfg.dft_size % 2 == 0) bins.back() = Complex(bins.back().real(), 0.0);
    fft.Inverse(bins, frame);
    for (int i = 0; i < cfg.window_len; ++i) {
      const int n = start + i;
      if (n >= 0 && n < out_len) out.samples[n] += frame[i] * window[i];
    }
  }
  return out;
}

double RelativeL2Error(const std::vector<double>& estimate,
                       const std::vector<double>& reference) {
  if (estimate.size() != reference.size())
    throw ShapeError("RelativeL2Error: length mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double d = estimate[i] - reference[i];
    num += d * d;
    den += reference[i] * reference[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : INFINITY;
  return std::sqrt(num / den);
}

}  // namespace usdr
