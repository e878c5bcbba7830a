// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Seeded speech-like dry signals for self-contained corpora: voiced
// syllables (gliding, jittered glottal pulse train through moving formant
// resonators), fricative noise bursts and pauses.

#ifndef USDR_SPEECH_SYNTH_H_
#define USDR_SPEECH_SYNTH_H_

#include <cstdint>

#include "usdr/spectral.h"

namespace usdr {

struct SpeechSynthConfig {
  double duration_s = 3.0;
  int sample_rate = kDefaultSampleRate;
  double peak = 0.5;           // output peak amplitude
  double voiced_prob = 0.6;    // per segment; the rest split between
  double fricative_prob = 0.2; // fricatives and pauses
  double f0_min = 90.0, f0_max = 230.0;
  double jitter = 0.04;        // relative f0 wobble

  void Validate() const;  // throws ConfigError
};

Waveform SynthesizeSpeech(uint64_t seed, const SpeechSynthConfig& cfg = {});

}  // namespace usdr

#endif  // USDR_SPEECH_SYNTH_H_
