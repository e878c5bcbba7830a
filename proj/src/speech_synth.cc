// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/speech_synth.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace usdr {

namespace {

constexpr double kPi = std::numbers::pi;

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}
  double Uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  double Gaussian() {
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * Uniform());
  }

 private:
  std::mt19937_64 gen_;
};

// Two-pole resonator with unit gain at its centre frequency.
class Resonator {
 public:
  void Set(double freq, double bandwidth, double fs) {
    const double r = std::exp(-kPi * bandwidth / fs);
    a1_ = 2.0 * r * std::cos(2.0 * kPi * freq / fs);
    a2_ = -r * r;
    gain_ = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(4.0 * kPi * freq / fs) + r * r);
  }
  double Step(double x) {
    const double y = gain_ * x + a1_ * y1_ + a2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a1_ = 0, a2_ = 0, gain_ = 1, y1_ = 0, y2_ = 0;
};

// Raised-cosine attack and release of `ramp` samples.
double Envelope(int i, int n, int ramp) {
  ramp = std::max(1, std::min(ramp, n / 2));
  if (i < ramp) return 0.5 - 0.5 * std::cos(kPi * i / ramp);
  if (i >= n - ramp) return 0.5 - 0.5 * std::cos(kPi * (n - 1 - i) / ramp);
  return 1.0;
}

struct Vowel {
  double f1, f2, f3;
};

Vowel RandomVowel(Rng& rng) {
  return {rng.Uniform(280, 850), rng.Uniform(850, 2300), rng.Uniform(2300, 3200)};
}

void AddVoiced(std::vector<double>& out, int start, int len, double fs,
               const SpeechSynthConfig& cfg, Rng& rng) {
  const double f0_a = rng.Uniform(cfg.f0_min, cfg.f0_max);
  const double f0_b = std::clamp(f0_a * rng.Uniform(0.7, 1.35), 60.0, 400.0);
  const Vowel va = RandomVowel(rng), vb = RandomVowel(rng);
  const double amp = rng.Uniform(0.3, 1.0);
  const double breath = rng.Uniform(0.02, 0.08);
  std::array<Resonator, 3> formants;
  const std::array<double, 3> bw{rng.Uniform(50, 110), rng.Uniform(70, 140),
                                 rng.Uniform(100, 200)};
  double phase = 0.0, wobble = 0.0;
  const double wobble_pole = std::exp(-2.0 * kPi * 30.0 / fs);
  for (int i = 0; i < len; ++i) {
    const double u = static_cast<double>(i) / len;
    if (i % 32 == 0) {
      formants[0].Set(va.f1 + (vb.f1 - va.f1) * u, bw[0], fs);
      formants[1].Set(va.f2 + (vb.f2 - va.f2) * u, bw[1], fs);
      formants[2].Set(va.f3 + (vb.f3 - va.f3) * u, bw[2], fs);
    }
    wobble = wobble_pole * wobble + (1.0 - wobble_pole) * rng.Gaussian() * 8.0;
    const double f0 = (f0_a + (f0_b - f0_a) * u) * (1.0 + cfg.jitter * wobble);
    phase += f0 / fs;
    double x = breath * rng.Gaussian();
    if (phase >= 1.0) {
      phase -= std::floor(phase);
      x += 1.0 + 0.15 * rng.Gaussian();  // pulse with shimmer
    }
    double y = x;
    for (Resonator& r : formants) y = r.Step(y) * 3.0;
    out[start + i] += amp * Envelope(i, len, static_cast<int>(0.02 * fs)) * y;
  }
}

void AddFricative(std::vector<double>& out, int start, int len, double fs,
                  Rng& rng) {
  Resonator band;
  band.Set(rng.Uniform(2500, 6500), rng.Uniform(600, 2000), fs);
  const double amp = rng.Uniform(0.05, 0.25);
  for (int i = 0; i < len; ++i)
    out[start + i] +=
        amp * Envelope(i, len, static_cast<int>(0.01 * fs)) * band.Step(rng.Gaussian());
}

}  // namespace

void SpeechSynthConfig::Validate() const {
  if (!(duration_s > 0.0)) throw ConfigError("synth duration must be positive");
  if (sample_rate < 8000) throw ConfigError("synth sample rate must be >= 8000");
  if (!(peak > 0.0 && peak <= 1.0)) throw ConfigError("synth peak must be in (0, 1]");
  if (voiced_prob < 0 || fricative_prob < 0 || voiced_prob + fricative_prob > 1.0)
    throw ConfigError("synth segment probabilities are invalid");
  if (!(f0_min > 0 && f0_min <= f0_max)) throw ConfigError("invalid f0 range");
  if (jitter < 0) throw ConfigError("jitter must be >= 0");
}

Waveform SynthesizeSpeech(uint64_t seed, const SpeechSynthConfig& cfg) {
  cfg.Validate();
  Rng rng(DeriveSeed(seed, "speech", 0));
  const double fs = cfg.sample_rate;
  const int total = static_cast<int>(std::lround(cfg.duration_s * fs));
  Waveform wave;
  wave.sample_rate = cfg.sample_rate;
  wave.samples.assign(total, 0.0);

  int pos = static_cast<int>(rng.Uniform(0.02, 0.1) * fs);
  while (pos < total) {
    const double pick = rng.Uniform();
    int len;
    if (pick < cfg.voiced_prob) {
      len = std::min(total - pos, static_cast<int>(rng.Uniform(0.08, 0.24) * fs));
      AddVoiced(wave.samples, pos, len, fs, cfg, rng);
    } else if (pick < cfg.voiced_prob + cfg.fricative_prob) {
      len = std::min(total - pos, static_cast<int>(rng.Uniform(0.04, 0.14) * fs));
      AddFricative(wave.samples, pos, len, fs, rng);
    } else {
      len = static_cast<int>(rng.Uniform(0.04, 0.2) * fs);
    }
    // Short gaps (or overlaps) between segments.
    pos += std::max(1, len + static_cast<int>(rng.Uniform(-0.01, 0.03) * fs));
  }
  double peak = 0.0;
  for (double v : wave.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : wave.samples) v *= cfg.peak / peak;
  return wave;
}

}  // namespace usdr
