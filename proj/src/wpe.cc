// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/wpe.h"

#include <algorithm>

namespace usdr {

void WpeConfig::Validate() const {
  if (taps < 1) throw ConfigError("WPE taps must be >= 1");
  if (delay < 0) throw ConfigError("WPE delay must be >= 0");
  if (iterations < 1) throw ConfigError("WPE iterations must be >= 1");
  if (!(psd_floor > 0.0)) throw ConfigError("WPE psd_floor must be positive");
}

WpeConfig WpeConfig::ForChannels(int num_channels) {
  if (num_channels < 1) throw ConfigError("WPE needs at least one channel");
  WpeConfig cfg;
  if (num_channels >= 8)
    cfg.taps = 5;
  else if (num_channels >= 4)
    cfg.taps = 10;
  else if (num_channels >= 2)
    cfg.taps = 18;
  else
    cfg.taps = 37;
  return cfg;
}

StackedTensor WpeStack(const std::vector<CMatrix>& mixtures,
                       const WpeConfig& cfg) {
  cfg.Validate();
  const StackSpec spec = StackSpec::PastDelayed(cfg.delay + cfg.taps, cfg.delay);
  std::vector<StackedTensor> parts;
  for (const CMatrix& y : mixtures) parts.emplace_back(y, spec);
  return StackedTensor::Concat(parts);
}

WeightMap WpePsd(const std::vector<CMatrix>& estimates, double psd_floor) {
  if (estimates.empty()) throw ShapeError("WPE needs at least one channel");
  RMatrix power = RMatrix::Zero(estimates[0].rows(), estimates[0].cols());
  for (const CMatrix& z : estimates) power += z.cwiseAbs2();
  power /= static_cast<double>(estimates.size());
  WeightMap w;
  w.xi = psd_floor;
  const double peak = power.size() ? power.maxCoeff() : 0.0;
  if (!(peak > 0.0)) {
    w.values = RMatrix::Ones(power.rows(), power.cols());
    w.degenerate = true;
    return w;
  }
  w.values = power.cwiseMax(psd_floor * peak);
  return w;
}

std::vector<FilterBank> WpeFilterStep(const std::vector<CMatrix>& mixtures,
                                      const WeightMap& psd,
                                      const WpeConfig& cfg) {
  const StackedTensor stack = WpeStack(mixtures, cfg);
  std::vector<const CMatrix*> targets;
  for (const CMatrix& y : mixtures) targets.push_back(&y);
  std::vector<FilterBank> banks = SolveWlsMulti(targets, stack, psd);
  for (size_t m = 0; m < banks.size(); ++m) banks[m].target_mic = m;
  return banks;
}

std::vector<CMatrix> WpePredictReverb(const std::vector<CMatrix>& mixtures,
                                      const std::vector<FilterBank>& filters,
                                      const WpeConfig& cfg) {
  if (filters.size() != mixtures.size())
    throw ShapeError("need one WPE filter bank per channel");
  const StackedTensor stack = WpeStack(mixtures, cfg);
  std::vector<CMatrix> out;
  for (const FilterBank& bank : filters) out.push_back(ApplyFilter(bank, stack));
  return out;
}

WpeResult WpeDereverb(const std::vector<ComplexSpectrogram>& mixtures,
                      const WpeConfig& cfg) {
  cfg.Validate();
  if (mixtures.empty()) throw ShapeError("WPE needs at least one channel");
  std::vector<CMatrix> y;
  for (const ComplexSpectrogram& s : mixtures) {
    if (s.frames() != mixtures[0].frames() || s.bins() != mixtures[0].bins())
      throw ShapeError("WPE channels differ in geometry");
    y.push_back(s.data);
  }
  if (static_cast<int>(mixtures.size()) * cfg.taps >= mixtures[0].frames())
    throw DomainError("WPE needs more frames than stacked taps");

  WpeResult result;
  std::vector<CMatrix> estimate = y;
  std::vector<CMatrix> reverb;
  for (int it = 0; it < cfg.iterations; ++it) {
    const WeightMap psd = WpePsd(estimate, cfg.psd_floor);
    result.filters = WpeFilterStep(y, psd, cfg);
    reverb = WpePredictReverb(y, result.filters, cfg);
    for (size_t m = 0; m < y.size(); ++m) estimate[m] = y[m] - reverb[m];
  }
  for (size_t m = 0; m < y.size(); ++m) {
    result.output.push_back({estimate[m], mixtures[m].config});
    result.predicted_reverb.push_back({reverb[m], mixtures[m].config});
    result.max_condition =
        std::max(result.max_condition, result.filters[m].MaxCondition());
  }
  result.degenerate = result.filters.front().degenerate;
  return result;
}

}  // namespace usdr
