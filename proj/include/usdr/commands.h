// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Batch commands behind the usdr tool. Each returns a process exit code:
// 0 success, 2 usage or validation error, 3 runtime or data error.

#ifndef USDR_COMMANDS_H_
#define USDR_COMMANDS_H_

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "usdr/audio_io.h"
#include "usdr/roomsim.h"
#include "usdr/run_config.h"

namespace usdr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

// Runs fn(i) for i in [0, n) on `workers` threads. The first exception (by
// index) is rethrown after all workers finish.
void ParallelFor(int n, int workers, const std::function<void(int)>& fn);

struct SimulateOptions {
  std::string config;   // optional RunConfig JSON
  std::string dry_dir;  // mono WAVs, used round-robin in name order
  std::string out_dir;
  int count = 1;
  std::optional<uint64_t> seed;  // overrides the config seed
  std::optional<int> workers;
};

struct SynthDryOptions {
  std::string out_dir;
  int count = 1;
  uint64_t seed = 0;
  double duration_s = 3.0;
};

struct DereverbOptions {
  std::string manifest;
  std::string system;  // "wpe" or "usd"
  std::string config;
  std::string out_dir;
  std::optional<int> mics;
  std::optional<int> workers;
};

struct EvalOptions {
  std::string manifest;
  std::vector<std::string> enhanced_dirs;  // "dir" or "name=dir"
  std::string out;                         // CSV; JSON goes next to it
};

struct LossCurveOptions {
  std::string manifest;
  std::string utt_id;
  std::string config;
  int tau_step = 10;
  std::optional<int> tau_max;  // default: T60 length, capped by the RIR
  std::string out;             // CSV
  std::optional<int> mics;     // default: every mic in the manifest entry
  bool sparkline = false;
  std::optional<int> workers;
};

int CmdSimulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err);
int CmdSynthDry(const SynthDryOptions& opt, std::ostream& out, std::ostream& err);
int CmdDereverb(const DereverbOptions& opt, std::ostream& out, std::ostream& err);
int CmdEval(const EvalOptions& opt, std::ostream& out, std::ostream& err);
int CmdLossCurve(const LossCurveOptions& opt, std::ostream& out, std::ostream& err);

// Simulated utterance for corpus index `index` from a dry signal.
MultichannelUtterance SimulateUtterance(const Waveform& dry, const RunConfig& cfg,
                                        uint64_t index, RoomScene* scene_out = nullptr);

// Mixtures (and, when present in the manifest, direct paths, noise and
// RIRs) of the selected zero-based mics; the first selected mic must be the
// entry's reference mic.
MultichannelUtterance LoadUtterance(const Manifest& manifest,
                                    const ManifestEntry& entry,
                                    const std::vector<int>& mics,
                                    const StftConfig& stft, bool with_truth);

}  // namespace usdr

#endif  // USDR_COMMANDS_H_
