// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance run: ten criteria on random instances and a 20-utterance
// simulated desk corpus. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.h"
#include "usdr/commands.h"
#include "usdr/mcloss.h"
#include "usdr/metrics.h"
#include "usdr/run_config.h"
#include "usdr/spectral.h"
#include "usdr/stacking.h"
#include "usdr/usd_engine.h"
#include "usdr/wpe.h"

namespace usdr {
namespace {

using oracle::RandomMatrix;
using Clock = std::chrono::steady_clock;

constexpr int kCorpusSize = 20;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// The desk corpus: T60 in [0.3, 0.9] s, 8 mics, SNR in [10, 25] dB, 3 s of
// synthetic speech per utterance.
RunConfig CorpusConfig() {
  RunConfig cfg;
  cfg.seed = 2026;
  cfg.scene.t60_min = 0.3;
  cfg.scene.t60_max = 0.9;
  cfg.scene.snr_min = 10.0;
  cfg.scene.snr_max = 25.0;
  cfg.synth.duration_s = 3.0;
  return cfg;
}

const std::vector<MultichannelUtterance>& Corpus() {
  static const std::vector<MultichannelUtterance> corpus = [] {
    const RunConfig cfg = CorpusConfig();
    std::vector<MultichannelUtterance> out;
    for (int i = 0; i < kCorpusSize; ++i) {
      const Waveform dry = SynthesizeSpeech(DeriveSeed(11, "dry", i), cfg.synth);
      out.push_back(SimulateUtterance(dry, cfg, i));
    }
    return out;
  }();
  return corpus;
}

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

const Waveform& Reference(const MultichannelUtterance& u) { return u.direct_path[u.ref_mic]; }

// 1. Closed-form FCP solves against a dense QR oracle.
Outcome FcpOracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> pick(0, 3), frames(8, 16), bins(1, 4), mics(1, 3);
  double worst = 0.0;
  for (int n = 0; n < 200; ++n) {
    const int t = frames(rng), f = bins(rng), p = mics(rng);
    std::vector<CMatrix> ys;
    for (int m = 0; m < p; ++m) ys.push_back(RandomMatrix(t, f, rng));
    const CMatrix s = RandomMatrix(t, f, rng);
    const WeightMap w = LambdaWeight(ys);
    const ComplexSpectrogram y{ys[0], {}}, sh{s, {}};
    FilterBank got;
    CMatrix ref;
    switch (pick(rng)) {
      case 0: {
        const int k = 2 + n % 4, d = k - 1 - n % std::min(k - 1, 4);
        got = FcpRefSubtracted(y, sh, StackSpec::PastDelayed(k, d), w);
        ref = oracle::WlsFilters(ys[0] - s, s, w.values, oracle::LagsPastDelayed(k, d));
        break;
      }
      case 1: {
        const int k = 4, d = 1 + n % 3;
        got = FcpRefFull(y, sh, StackSpec::PastDelayed(k, d), w);
        ref = oracle::WlsFilters(ys[0], s, w.values, oracle::LagsPastDelayed(k, d));
        break;
      }
      case 2: {
        const int i = 1 + n % 3, j = n % 2;
        const ComplexSpectrogram yp{ys[p - 1], {}};
        got = FcpNonref(yp, sh, StackSpec::Context(i, j), w);
        ref = oracle::WlsFilters(ys[p - 1], s, w.values, oracle::LagsContext(i, j));
        break;
      }
      default: {
        const int l = n % 2;
        got = FcpGarbage(y, sh, StackSpec::Garbage(l), w);
        ref = oracle::WlsFilters(ys[0], s, w.values, oracle::LagsGarbage(l));
      }
    }
    worst = std::max(worst, oracle::RelErr(got.coeffs, ref));
  }
  return {worst <= 1e-8, "max relative error " + Fmt("%.2e", worst)};
}

// 2. Perturbed filters never beat the closed form under L2 and lambda = 1.
Outcome MinimizingTheMinimum() {
  std::mt19937_64 rng(202);
  LossConfig cfg;
  cfg.K = 4;
  cfg.delta = 1;
  cfg.I = 3;
  cfg.J = 1;
  cfg.distance = DistanceKind::kSquared;
  cfg.weighting = WeightingKind::kUniform;
  double worst = 0.0;  // most negative (perturbed - solved)
  for (int n = 0; n < 100; ++n) {
    cfg.ref_variant = n % 4 == 3 ? RefVariant::kFull : RefVariant::kSubtracted;
    const int p = 1 + n % 3;
    std::vector<CMatrix> ys;
    for (int m = 0; m < p; ++m) ys.push_back(RandomMatrix(12, 3, rng));
    const CMatrix s = RandomMatrix(12, 3, rng);
    const FilterSet fs = EstimateFilters(ys, 0, s, nullptr, cfg, LossWeights(ys, cfg));
    const double base = EvaluateLoss(ys, 0, s, nullptr, fs, cfg).total;
    for (int k = 0; k < 20; ++k) {
      FilterSet q = fs;
      // One random direction over every filter that minimizes its own term,
      // norm 1e-3 in total. The full-variant reference filter regresses Y_q
      // rather than Y_q - S, so it is not a minimizer and stays fixed.
      std::vector<CMatrix*> parts;
      if (cfg.ref_variant == RefVariant::kSubtracted) parts.push_back(&q.ref.coeffs);
      for (int m = 1; m < p; ++m) parts.push_back(&q.nonref[m].coeffs);
      if (parts.empty()) continue;
      std::vector<CMatrix> dirs;
      double norm2 = 0.0;
      for (CMatrix* c : parts) {
        dirs.push_back(RandomMatrix(c->rows(), c->cols(), rng));
        norm2 += dirs.back().squaredNorm();
      }
      for (size_t i = 0; i < parts.size(); ++i) *parts[i] += 1e-3 / std::sqrt(norm2) * dirs[i];
      worst = std::min(worst, EvaluateLoss(ys, 0, s, nullptr, q, cfg).total - base);
    }
  }
  return {worst >= -1e-10, "largest loss decrease " + Fmt("%.2e", std::max(0.0, -worst))};
}

// 3. STFT analysis/synthesis round trip.
Outcome StftRoundTrip() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> len(8000, 48000);
  std::normal_distribution<double> g;
  const StftConfig cfg;
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    Waveform w{std::vector<double>(len(rng)), 16000};
    for (double& v : w.samples) v = g(rng);
    worst = std::max(worst, RelativeL2Error(Istft(Stft(w, cfg), cfg, w.size()).samples, w.samples));
  }
  return {worst <= 1e-6, "max relative L2 error " + Fmt("%.2e", worst)};
}

// 4. Analytic mask subgradient against central differences.
Outcome GradientCheck() {
  std::mt19937_64 rng(404);
  LossConfig cfg;
  cfg.K = 3;
  cfg.delta = 1;
  cfg.I = 2;
  cfg.J = 1;
  cfg.alpha = 0.7;
  const double h = 1e-5;
  double worst = 0.0;
  int checked = 0;
  for (int n = 0; n < 50; ++n) {
    cfg.ref_variant = n % 2 ? RefVariant::kFull : RefVariant::kSubtracted;
    const std::vector<CMatrix> ys{RandomMatrix(6, 3, rng), RandomMatrix(6, 3, rng)};
    EstimatorParams p;
    p.values = RandomMatrix(6, 3, rng);
    const FilterSet fs = EstimateFilters(ys, 0, Forward(p, ys[0]), nullptr, cfg, LossWeights(ys, cfg));
    // Skip instances with a residual component near a kink of the distance.
    const McLossReport r = EvaluateLoss(ys, 0, Forward(p, ys[0]), nullptr, fs, cfg);
    double min_res = 1e300;
    for (size_t m = 0; m < ys.size(); ++m) {
      const CMatrix d = r.reconstructions[m] - ys[m];
      for (Eigen::Index i = 0; i < d.size(); ++i)
        min_res = std::min({min_res, std::abs(d(i).real()), std::abs(d(i).imag()),
                            std::abs(std::abs(r.reconstructions[m](i)) - std::abs(ys[m](i)))});
    }
    if (min_res <= 1e-6) continue;
    const MaskGradient g = ComputeMaskGradient(p, ys, 0, fs, cfg);
    double err2 = 0.0, ref2 = 0.0;
    for (Eigen::Index i = 0; i < p.values.size(); ++i)
      for (const Complex dir : {Complex(1, 0), Complex(0, 1)}) {
        EstimatorParams a = p, b = p;
        a.values(i) += h * dir;
        b.values(i) -= h * dir;
        const double fd =
            (FixedFilterLoss(a, ys, 0, fs, cfg) - FixedFilterLoss(b, ys, 0, fs, cfg)) / (2 * h);
        const double an = dir.real() != 0.0 ? g.values(i).real() : g.values(i).imag();
        err2 += (an - fd) * (an - fd);
        ref2 += fd * fd;
      }
    worst = std::max(worst, std::sqrt(err2 / ref2));
    ++checked;
  }
  return {checked >= 40 && worst <= 1e-4,
          std::to_string(checked) + " instances, max relative error " + Fmt("%.2e", worst)};
}

// 5. One single-channel WPE step is the full-variant reference FCP on Y.
Outcome WpeFcpEquivalence() {
  LossConfig cfg;
  WpeConfig wpe;
  wpe.taps = cfg.K - cfg.delta;
  wpe.delay = cfg.delta;
  double worst = 0.0;
  for (const MultichannelUtterance& u : Corpus()) {
    const CMatrix& y = u.mixture_spec[u.ref_mic].data;
    const WeightMap w = LambdaWeight(std::vector<CMatrix>{y});
    const CMatrix wpe_pred = WpePredictReverb({y}, WpeFilterStep({y}, w, wpe), wpe)[0];
    const ComplexSpectrogram ys{y, u.stft};
    const FilterBank g = FcpRefFull(ys, ys, cfg.RefStack(), w);
    const CMatrix fcp_pred = ApplyFilter(g, StackedTensor(y, cfg.RefStack()));
    worst = std::max(worst, oracle::RelErr(wpe_pred, fcp_pred));
  }
  return {worst <= 1e-8, "max relative difference " + Fmt("%.2e", worst)};
}

// 6. WPE improves SI-SDR, and 8 channels beat 1.
Outcome WpeImproves() {
  const auto start = Clock::now();
  std::vector<double> mix, one, eight;
  for (const MultichannelUtterance& u : Corpus()) {
    const Waveform& ref = Reference(u);
    mix.push_back(SiSdr(u.mixture[u.ref_mic], ref));
    const WpeResult r8 = WpeDereverb(u.mixture_spec, WpeConfig::ForChannels(8));
    eight.push_back(SiSdr(Istft(r8.output[u.ref_mic], u.stft, u.num_samples()), ref));
    const WpeResult r1 = WpeDereverb({u.mixture_spec[u.ref_mic]}, WpeConfig::ForChannels(1));
    one.push_back(SiSdr(Istft(r1.output[0], u.stft, u.num_samples()), ref));
  }
  const double secs = Seconds(start);
  const double m = Mean(mix), w1 = Mean(one), w8 = Mean(eight);
  return {w8 - m >= 2.0 && w8 >= w1 && secs < 300.0,
          "mixture " + Fmt("%.2f", m) + " dB, WPE-1ch " + Fmt("%.2f", w1) + " dB, WPE-8ch " +
              Fmt("%.2f", w8) + " dB, " + Fmt("%.0f", secs) + " s"};
}

// 7. Less reverberant hypothesized estimates give a lower loss.
Outcome LossCurveTrend() {
  LossConfig cfg;  // alpha = 1, full variant
  int lower = 0;
  for (const MultichannelUtterance& u : Corpus()) {
    const int fs = u.mixture[0].sample_rate;
    const int t60_len = static_cast<int>(std::lround(u.scene->t60 * fs));
    const LossCurve c = ComputeLossCurve(u, {fs / 100, t60_len}, cfg);
    lower += c.points[0].loss_total < c.points[1].loss_total;
  }
  return {lower >= 0.9 * kCorpusSize,
          std::to_string(lower) + "/" + std::to_string(kCorpusSize) +
              " utterances with L(10 ms) < L(T60)"};
}

// 8. A shifted, scaled-down mixture nearly zeroes the reference loss but is
// not a pointwise mask of the mixture.
Outcome TrivialSolution() {
  LossConfig cfg;
  cfg.ref_variant = RefVariant::kFull;
  double worst_loss = 0.0, worst_collinear = 0.0;
  for (int i = 0; i < 10; ++i) {
    const MultichannelUtterance& u = Corpus()[i];
    const ComplexSpectrogram& y = u.mixture_spec[u.ref_mic];
    std::vector<CMatrix> ys;
    for (const ComplexSpectrogram& m : u.mixture_spec) ys.push_back(m.data);
    const WeightMap w = LossWeights(ys, cfg);
    const ComplexSpectrogram s = ConstructTrivialShiftedEstimate(y, 1e-3, 3);
    worst_loss = std::max(worst_loss, McLossRef(y, s, nullptr, cfg, w).loss);
    worst_collinear = std::max(worst_collinear, CollinearFraction(y.data, s.data, 1e-6));
  }
  // 2% of 2; the actual zero-estimate loss of complex data is at least 2.
  return {worst_loss <= 0.04 && worst_collinear < 0.01,
          "max L_ref " + Fmt("%.4f", worst_loss) + ", max collinear share " +
              Fmt("%.4f", worst_collinear)};
}

// 9. The optimizer lowers the loss monotonically and improves SI-SDR.
Outcome OptimizerDirection() {
  const auto start = Clock::now();
  const OptimConfig cfg = CorpusConfig().ResolvedOptim(8);
  int decreased = 0, monotone = 0, better = 0;
  std::vector<double> gains;
  for (const MultichannelUtterance& u : Corpus()) {
    const DereverbResult r = Optimize(u, cfg);
    decreased += r.final_loss < r.initial_loss;
    bool mono = true;
    for (size_t i = 1; i < r.trajectory.size(); ++i)
      mono = mono && r.trajectory[i] <= r.trajectory[i - 1] + 1e-6;
    monotone += mono;
    const Waveform& ref = Reference(u);
    const double gain = SiSdr(InferDirect(r, u.num_samples()), ref) - SiSdr(u.mixture[u.ref_mic], ref);
    better += gain > 0.0;
    gains.push_back(gain);
  }
  const double secs = Seconds(start);
  return {decreased == kCorpusSize && monotone == kCorpusSize && better >= 0.8 * kCorpusSize &&
              secs < 1800.0,
          "loss down " + std::to_string(decreased) + "/20, monotone " + std::to_string(monotone) +
              "/20, SI-SDR up " + std::to_string(better) + "/20 (mean gain " +
              Fmt("%.2f", Mean(gains)) + " dB), " + Fmt("%.0f", secs) + " s"};
}

// 10. Invariances and determinism.
Outcome Invariances() {
  std::mt19937_64 rng(1010);
  std::vector<std::string> failed;
  const MultichannelUtterance& u = Corpus()[0];
  std::vector<CMatrix> ys;
  for (const ComplexSpectrogram& s : u.mixture_spec) ys.push_back(s.data);
  LossConfig cfg;
  cfg.alpha = LossConfig::DefaultAlpha(8);
  CMatrix mask = RandomMatrix(ys[0].rows(), ys[0].cols(), rng);
  mask = (0.4 * mask.array() + Complex(1.0)).matrix();
  const double base = McLossTotal(ys, 0, mask.cwiseProduct(ys[0]), nullptr, cfg).total;

  double scale_err = 0.0;
  for (double c : {1e-3, 0.37, 42.0}) {
    std::vector<CMatrix> scaled = ys;
    for (CMatrix& m : scaled) m *= c;
    const double l = McLossTotal(scaled, 0, mask.cwiseProduct(scaled[0]), nullptr, cfg).total;
    scale_err = std::max(scale_err, std::abs(l - base) / base);
  }
  if (scale_err > 1e-6) failed.push_back("scale " + Fmt("%.1e", scale_err));

  double perm_err = 0.0;
  for (int k = 0; k < 3; ++k) {
    std::vector<CMatrix> perm = ys;
    std::shuffle(perm.begin() + 1, perm.end(), rng);
    const double l = McLossTotal(perm, 0, mask.cwiseProduct(ys[0]), nullptr, cfg).total;
    perm_err = std::max(perm_err, std::abs(l - base) / base);
  }
  if (perm_err > 1e-12) failed.push_back("permutation " + Fmt("%.1e", perm_err));

  // The same lambda map serves every mic, whatever the mic order.
  const WeightMap w = LambdaWeight(ys);
  bool lambda_same = true;
  for (int k = 0; k < 5; ++k) {
    std::vector<CMatrix> perm = ys;
    std::shuffle(perm.begin(), perm.end(), rng);
    lambda_same = lambda_same && LambdaWeight(perm).values == w.values;
  }
  if (!lambda_same) failed.push_back("lambda");

  const Waveform& ref = Reference(u);
  const Waveform& est = u.mixture[u.ref_mic];
  const double sdr = SiSdr(est, ref);
  bool sdr_exact = true;
  for (double c : {0.25, 8.0, -2.0, 1024.0}) {
    Waveform e = est;
    for (double& v : e.samples) v *= c;
    sdr_exact = sdr_exact && SiSdr(e, ref) == sdr;
  }
  if (!sdr_exact) failed.push_back("SI-SDR scale");

  const RunConfig rc = CorpusConfig();
  const Waveform dry = SynthesizeSpeech(DeriveSeed(11, "dry", 3), rc.synth);
  const MultichannelUtterance a = SimulateUtterance(dry, rc, 3), b = SimulateUtterance(dry, rc, 3);
  bool det = a.mixture[5].samples == b.mixture[5].samples;
  OptimConfig oc = rc.ResolvedOptim(8);
  oc.max_outer_iters = 2;
  det = det && Optimize(a, oc).waveform.samples == Optimize(b, oc).waveform.samples;
  det = det && WpeDereverb(a.mixture_spec, WpeConfig::ForChannels(8)).output[0].data ==
                   WpeDereverb(b.mixture_spec, WpeConfig::ForChannels(8)).output[0].data;
  if (!det) failed.push_back("determinism");

  std::string detail = "scale " + Fmt("%.1e", scale_err) + ", permutation " + Fmt("%.1e", perm_err);
  for (const std::string& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

}  // namespace
}  // namespace usdr

int main() {
  using namespace usdr;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"FCP oracle equivalence", FcpOracle},
      {"minimizing the minimum", MinimizingTheMinimum},
      {"STFT round trip", StftRoundTrip},
      {"mask gradient check", GradientCheck},
      {"WPE/FCP equivalence", WpeFcpEquivalence},
      {"WPE improves", WpeImproves},
      {"loss-curve trend", LossCurveTrend},
      {"trivial shifted solution", TrivialSolution},
      {"USD optimizer direction", OptimizerDirection},
      {"invariance suite", Invariances},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2zu: %s  %-26s %s [%.1f s]\n", i + 1, o.pass ? "PASS" : "FAIL",
                criteria[i].first.c_str(), o.detail.c_str(), Seconds(start));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
