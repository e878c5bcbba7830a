// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// The single JSON run configuration shared by the command-line tools.

#ifndef USDR_RUN_CONFIG_H_
#define USDR_RUN_CONFIG_H_

#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"
#include "usdr/audio_io.h"
#include "usdr/mcloss.h"
#include "usdr/roomsim.h"
#include "usdr/speech_synth.h"
#include "usdr/usd_engine.h"
#include "usdr/wpe.h"

namespace usdr {

struct RunConfig {
  uint64_t seed = 0;
  SceneSampler scene;
  std::optional<double> t60_override;  // fixed T60 for every scene
  bool add_noise = true;
  SpeechSynthConfig synth;
  StftConfig stft;
  LossConfig loss;
  bool alpha_auto = true;  // alpha = LossConfig::DefaultAlpha(mics)
  OptimConfig optim;       // its .loss is replaced by `loss` when resolved
  WpeConfig wpe;
  bool wpe_taps_auto = true;  // WpeConfig::ForChannels(mics).taps
  int mics = 8;
  int workers = 1;
  WavEncoding wav_encoding = WavEncoding::kFloat32;

  void Validate() const;  // throws ConfigError
  // Loss / optimizer / WPE settings with the automatic values filled in
  // for a given number of mics.
  LossConfig ResolvedLoss(int num_mics) const;
  OptimConfig ResolvedOptim(int num_mics) const;
  WpeConfig ResolvedWpe(int num_mics) const;

  // Every field, defaults included; "auto" marks automatic values.
  nlohmann::json ToJson() const;
  // Missing keys keep their defaults; unknown keys and wrong types throw
  // ConfigError.
  static RunConfig FromJson(const nlohmann::json& j);
  static RunConfig Load(const std::filesystem::path& path);
};

// Zero-based mic indices for an N-mic subset of the 8-mic circle: 1 -> {1},
// 2 -> {1, 4}, 4 -> {1, 3, 5, 7}, 8 -> all (one-based mic numbers).
std::vector<int> MicSubset(int num_mics);

}  // namespace usdr

#endif  // USDR_RUN_CONFIG_H_
