// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef USDR_METRICS_H_
#define USDR_METRICS_H_

#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "usdr/spectral.h"

namespace usdr {

inline constexpr double kInfiniteSiSdr = std::numeric_limits<double>::infinity();

// 10 log10(|a r|^2 / |e - a r|^2) with a = <e, r> / |r|^2. Returns
// kInfiniteSiSdr when the residual energy is below 1e-30 of the reference
// energy. Throws DomainError for a zero reference or unequal lengths.
double SiSdr(std::span<const double> estimate, std::span<const double> reference);
double SiSdr(const Waveform& estimate, const Waveform& reference);

struct EvalRow {
  std::string utt_id;
  std::string system;
  double si_sdr_db = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::map<std::string, double> system_mean;  // over present rows
  std::map<std::string, int> system_count;
  std::vector<std::string> missing;  // "system/utt_id"
  nlohmann::json config;             // echoed into the JSON summary

  bool ok() const { return !rows.empty() && missing.empty(); }
  std::string ToCsv() const;  // header utt_id,system,si_sdr_db
  nlohmann::json ToJson() const;
};

struct EvalReference {
  std::string utt_id;
  Waveform reference;  // direct path at the reference mic
  Waveform mixture;    // mixture at the reference mic
};

struct SystemOutputs {
  std::string name;
  std::map<std::string, Waveform> outputs;  // by utt_id
};

// Scores every system (plus a "mixture" row per utterance) against the
// references. Lengths are trimmed to the shorter signal; there is no time
// alignment search. Missing outputs are listed and left out of the means.
EvalReport EvaluateCorpus(const std::vector<EvalReference>& references,
                          const std::vector<SystemOutputs>& systems);

}  // namespace usdr

#endif  // USDR_METRICS_H_
