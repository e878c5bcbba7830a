// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/metrics.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace usdr {

double SiSdr(std::span<const double> estimate,
             std::span<const double> reference) {
  if (estimate.size() != reference.size())
    throw DomainError("SI-SDR needs equal lengths, got " +
                      std::to_string(estimate.size()) + " and " +
                      std::to_string(reference.size()));
  double dot = 0.0, ref_energy = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    dot += estimate[i] * reference[i];
    ref_energy += reference[i] * reference[i];
  }
  if (!(ref_energy > 0.0)) throw DomainError("SI-SDR reference has zero energy");
  const double scale = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double t = scale * reference[i];
    const double e = estimate[i] - t;
    target += t * t;
    residual += e * e;
  }
  if (residual < 1e-30 * ref_energy) return kInfiniteSiSdr;
  return 10.0 * std::log10(target / residual);
}

double SiSdr(const Waveform& estimate, const Waveform& reference) {
  return SiSdr(std::span<const double>(estimate.samples),
               std::span<const double>(reference.samples));
}

namespace {

double TrimmedSiSdr(const Waveform& est, const Waveform& ref) {
  const size_t n = std::min(est.samples.size(), ref.samples.size());
  return SiSdr(std::span<const double>(est.samples.data(), n),
               std::span<const double>(ref.samples.data(), n));
}

}  // namespace

EvalReport EvaluateCorpus(const std::vector<EvalReference>& references,
                          const std::vector<SystemOutputs>& systems) {
  EvalReport report;
  std::map<std::string, double> sums;
  auto add = [&](const std::string& utt, const std::string& system, double v) {
    report.rows.push_back({utt, system, v});
    sums[system] += v;
    report.system_count[system] += 1;
  };
  for (const EvalReference& ref : references) {
    add(ref.utt_id, "mixture", TrimmedSiSdr(ref.mixture, ref.reference));
    for (const SystemOutputs& sys : systems) {
      auto it = sys.outputs.find(ref.utt_id);
      if (it == sys.outputs.end()) {
        report.missing.push_back(sys.name + "/" + ref.utt_id);
        continue;
      }
      add(ref.utt_id, sys.name, TrimmedSiSdr(it->second, ref.reference));
    }
  }
  for (const auto& [system, sum] : sums)
    report.system_mean[system] = sum / report.system_count[system];
  return report;
}

std::string EvalReport::ToCsv() const {
  std::ostringstream os;
  os << "utt_id,system,si_sdr_db\n" << std::setprecision(10);
  for (const EvalRow& r : rows)
    os << r.utt_id << "," << r.system << "," << r.si_sdr_db << "\n";
  return os.str();
}

nlohmann::json EvalReport::ToJson() const {
  // JSON has no infinity; it is written as a string.
  auto number = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
  };
  nlohmann::json j;
  j["config"] = config;
  nlohmann::json systems = nlohmann::json::object();
  for (const auto& [name, mean] : system_mean)
    systems[name] = {{"mean_si_sdr_db", number(mean)},
                     {"count", system_count.at(name)}};
  j["systems"] = systems;
  nlohmann::json rows_json = nlohmann::json::array();
  for (const EvalRow& r : rows)
    rows_json.push_back(
        {{"utt_id", r.utt_id}, {"system", r.system}, {"si_sdr_db", number(r.si_sdr_db)}});
  j["utterances"] = rows_json;
  j["missing"] = missing;
  return j;
}

}  // namespace usdr
