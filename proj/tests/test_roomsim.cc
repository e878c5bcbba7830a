// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "usdr/fft.h"
#include "usdr/roomsim.h"
#include "usdr/speech_synth.h"

namespace usdr {
namespace {

RoomScene TwoMicScene(double t60) {
  RoomScene s;
  s.room_dims = {7.0, 6.0, 3.0};
  s.t60 = t60;
  s.source_pos = {3.5, 4.5, 1.5};
  s.mic_positions = {{3.4, 2.5, 1.5}, {3.6, 2.5, 1.5}};
  return s;
}

double Sum(const Waveform& w) {
  return std::accumulate(w.samples.begin(), w.samples.end(), 0.0);
}

double Energy(const std::vector<double>& v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  return e;
}

Waveform Noise(int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.1);
  Waveform w;
  w.samples.resize(n);
  for (double& v : w.samples) v = g(rng);
  return w;
}

TEST_CASE("Anechoic request gives identical full and direct RIRs") {
  const RIRSet r = SimulateRir(TwoMicScene(0.05), 0);
  for (int m = 0; m < 2; ++m) {
    REQUIRE(r.full_rir[m].size() >= r.direct_rir[m].size());
    for (int i = 0; i < r.full_rir[m].size(); ++i) {
      const double d = i < r.direct_rir[m].size() ? r.direct_rir[m].samples[i] : 0.0;
      CHECK(r.full_rir[m].samples[i] == d);
    }
  }
}

TEST_CASE("Direct path obeys the 1/r law") {
  RoomScene s;
  s.room_dims = {20.0, 20.0, 6.0};
  s.t60 = 0.3;
  s.mic_positions = {{5.0, 10.0, 3.0}};
  s.source_pos = {6.3, 10.0, 3.0};
  const double near = Sum(SimulateRir(s, 0).direct_rir[0]);
  s.source_pos = {7.6, 10.0, 3.0};
  const double far = Sum(SimulateRir(s, 0).direct_rir[0]);
  // The band-limited impulse keeps its area, so the sum is the path gain.
  CHECK(far / near == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("Mics symmetric about the source axis see equal direct delays") {
  const RIRSet r = SimulateRir(TwoMicScene(0.4));
  CHECK(std::abs(r.direct_delay[0] - r.direct_delay[1]) <= 1.0);
  auto peak = [](const Waveform& w) {
    return std::max_element(w.samples.begin(), w.samples.end(),
                            [](double a, double b) { return std::abs(a) < std::abs(b); }) -
           w.samples.begin();
  };
  CHECK(std::abs(peak(r.direct_rir[0]) - peak(r.direct_rir[1])) <= 1);
}

TEST_CASE("Direct path is the first arrival of the full RIR") {
  const RIRSet r = SimulateRir(TwoMicScene(0.6));
  for (int m = 0; m < 2; ++m) {
    const int onset = static_cast<int>(r.direct_delay[m]) - 40;
    const double peak = *std::max_element(r.direct_rir[m].samples.begin(),
                                          r.direct_rir[m].samples.end());
    for (int i = 0; i < std::max(0, onset); ++i)
      CHECK(std::abs(r.full_rir[m].samples[i]) <= 1e-3 * peak);
  }
}

TEST_CASE("Schroeder decay reproduces the requested T60") {
  for (double t60 : {0.2, 0.3, 0.5, 0.8, 1.1}) {
    const RIRSet r = SimulateRir(TwoMicScene(t60));
    const double est = EstimateT60(r.full_rir[0]);
    CAPTURE(t60);
    CAPTURE(est);
    CHECK(std::abs(est - t60) <= 0.2 * t60);
  }
}

TEST_CASE("Sampled scenes decay at their requested T60") {
  SceneSampler sampler;
  sampler.seed = 17;
  sampler.num_mics = 1;
  for (int i = 0; i < 8; ++i) {
    const RoomScene scene = sampler.SampleScene(i);
    const double est = EstimateT60(SimulateRir(scene).full_rir[0]);
    CAPTURE(scene.t60);
    CAPTURE(est);
    CHECK(std::abs(est - scene.t60) <= 0.2 * scene.t60);
  }
}

TEST_CASE("Scene validation rejects geometry outside the room") {
  RoomScene s = TwoMicScene(0.5);
  s.source_pos = {8.0, 1.0, 1.0};
  CHECK_THROWS_AS(SimulateRir(s), DomainError);
  s = TwoMicScene(0.5);
  s.mic_positions.push_back({1.0, 1.0, 3.0});  // on the ceiling
  CHECK_THROWS_AS(SimulateRir(s), DomainError);
  s = TwoMicScene(3.0);
  CHECK_THROWS_AS(SimulateRir(s), DomainError);
}

TEST_CASE("Scene sampling is deterministic and follows the protocol") {
  SceneSampler sampler;
  sampler.seed = 99;
  for (uint64_t i = 0; i < 20; ++i) {
    const RoomScene a = sampler.SampleScene(i), b = sampler.SampleScene(i);
    CHECK(a.source_pos == b.source_pos);
    CHECK(a.mic_positions == b.mic_positions);
    CHECK(a.t60 == b.t60);
    CHECK(a.t60 >= sampler.t60_min);
    CHECK(a.t60 <= sampler.t60_max);
    REQUIRE(a.num_mics() == 8);
    Vec3 c{0, 0, 0};
    for (const Vec3& m : a.mic_positions)
      for (int k = 0; k < 3; ++k) c[k] += m[k] / 8.0;
    for (const Vec3& m : a.mic_positions)
      CHECK(std::hypot(m[0] - c[0], m[1] - c[1]) == doctest::Approx(0.1).epsilon(1e-9));
    const double dist = std::hypot(a.source_pos[0] - c[0], a.source_pos[1] - c[1]);
    CHECK(dist >= sampler.dist_min - 1e-9);
    CHECK(dist <= sampler.dist_max + 1e-9);
    const double snr = sampler.SampleSnr(i);
    CHECK(snr == sampler.SampleSnr(i));
    CHECK(snr >= sampler.snr_min);
    CHECK(snr <= sampler.snr_max);
  }
  CHECK(sampler.SampleScene(0).source_pos != sampler.SampleScene(1).source_pos);
}

TEST_CASE("Rendering decomposes into direct path, reverberation and noise") {
  const Waveform dry = SynthesizeSpeech(5, {.duration_s = 1.0});
  const RIRSet r = SimulateRir(TwoMicScene(0.5));
  const std::vector<Waveform> noise = ColoredNoise(2, dry.size(), 17);

  SUBCASE("no-noise sentinel") {
    const MultichannelUtterance u = RenderMixture(dry, r, {}, kNoNoise, 0);
    for (int m = 0; m < 2; ++m)
      CHECK(u.mixture[m].samples == u.reverberant_image[m].samples);
  }
  SUBCASE("0 dB SNR and the sample-wise decomposition") {
    const MultichannelUtterance u = RenderMixture(dry, r, noise, 0.0, 1);
    const double es = Energy(u.direct_path[1].samples), en = Energy(u.noise[1].samples);
    CHECK(std::abs(es - en) <= 1e-9 * es);
    for (int m = 0; m < 2; ++m)
      for (int i = 0; i < dry.size(); ++i)
        CHECK(std::abs(u.mixture[m].samples[i] - u.noise[m].samples[i] -
                       u.reverberant_image[m].samples[i]) <= 1e-12);
  }
  SUBCASE("images are the dry signal convolved with the RIRs") {
    const MultichannelUtterance u = RenderMixture(dry, r, noise, 10.0, 0);
    const std::vector<double> x = Convolve(dry.samples, r.full_rir[1].samples);
    const std::vector<double> s = Convolve(dry.samples, r.direct_rir[1].samples);
    for (int i = 0; i < dry.size(); i += 97) {
      CHECK(u.reverberant_image[1].samples[i] == doctest::Approx(x[i]).epsilon(1e-9));
      CHECK(u.direct_path[1].samples[i] == doctest::Approx(s[i]).epsilon(1e-9));
    }
    CHECK(u.mixture_spec[0].frames() == u.stft.FrameCount(dry.size()));
  }
  SUBCASE("short noise is tiled") {
    const std::vector<Waveform> shorter = ColoredNoise(2, 1000, 3);
    const MultichannelUtterance u = RenderMixture(dry, r, shorter, 5.0, 0);
    CHECK(u.noise[0].samples[0] / u.noise[0].samples[1000] == doctest::Approx(1.0));
  }
  SUBCASE("zero-energy inputs are rejected") {
    Waveform silent = dry;
    std::fill(silent.samples.begin(), silent.samples.end(), 0.0);
    CHECK_THROWS_AS(RenderMixture(silent, r, noise, 5.0, 0), DomainError);
    std::vector<Waveform> quiet = noise;
    std::fill(quiet[0].samples.begin(), quiet[0].samples.end(), 0.0);
    CHECK_THROWS_AS(RenderMixture(dry, r, quiet, 5.0, 0), DomainError);
  }
}

TEST_CASE("Colored noise is seeded per stream") {
  const auto a = ColoredNoise(3, 500, 7), b = ColoredNoise(3, 500, 7), c = ColoredNoise(3, 500, 8);
  CHECK(a[2].samples == b[2].samples);
  CHECK(a[2].samples != c[2].samples);
  CHECK(a[0].samples != a[1].samples);
}

TEST_CASE("Relative RIR by spectral division") {
  SUBCASE("unit-impulse direct path returns the full RIR") {
    Waveform od{{1.0}, 16000};
    Waveform oi = Noise(50, 1);
    const RelativeRir r = ComputeRelativeRir(od, oi);
    REQUIRE(r.rir.size() == 50);
    for (int i = 0; i < 50; ++i)
      CHECK(r.rir.samples[i] == doctest::Approx(oi.samples[i]).epsilon(1e-12));
  }
  SUBCASE("delayed impulses give an impulse at the lag difference") {
    Waveform od{std::vector<double>(8, 0.0), 16000}, oi{std::vector<double>(12, 0.0), 16000};
    od.samples[3] = 0.5;
    oi.samples[3 + 4] = 0.5;
    const RelativeRir r = ComputeRelativeRir(od, oi);
    REQUIRE(r.rir.size() == 19);
    for (int i = 0; i < 19; ++i) CHECK(std::abs(r.rir.samples[i] - (i == 4 ? 1.0 : 0.0)) <= 1e-12);
  }
  SUBCASE("identical RIRs give a unit impulse") {
    const Waveform o = Noise(30, 2);
    const RelativeRir r = ComputeRelativeRir(o, o);
    for (int i = 0; i < r.rir.size(); ++i)
      CHECK(std::abs(r.rir.samples[i] - (i == 0 ? 1.0 : 0.0)) <= 1e-9);
  }
  SUBCASE("simulated RIRs are reconstructed by convolution") {
    const RIRSet rs = SimulateRir(TwoMicScene(0.6));
    const RelativeRir r = ComputeRelativeRir(rs.direct_rir[0], rs.full_rir[0]);
    CHECK(r.rir.size() == rs.full_rir[0].size() + rs.direct_rir[0].size() - 1);
    std::vector<double> rec = Convolve(rs.direct_rir[0].samples, r.rir.samples);
    rec.resize(rs.full_rir[0].size());
    double err = 0.0;
    for (int i = 0; i < rs.full_rir[0].size(); ++i)
      err += std::pow(rec[i] - rs.full_rir[0].samples[i], 2);
    CHECK(std::sqrt(err / Energy(rs.full_rir[0].samples)) <= 1e-3);
  }
}

TEST_CASE("RIR truncation") {
  Waveform o{{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 16000};
  CHECK(TruncateRir(o, 10).samples == o.samples);
  CHECK(TruncateRir(o, 1).samples == std::vector<double>{1});
  CHECK(TruncateRir(o, 5).samples == std::vector<double>{1, 2, 3, 4, 5});
  CHECK_THROWS_AS(TruncateRir(o, 0), DomainError);
  CHECK_THROWS_AS(TruncateRir(o, 11), DomainError);
}

TEST_CASE("Hypothesized estimates move from the direct path to the image") {
  const Waveform dry = SynthesizeSpeech(9, {.duration_s = 1.0});
  const RIRSet r = SimulateRir(TwoMicScene(0.5));
  const MultichannelUtterance u = RenderMixture(dry, r, {}, kNoNoise, 0);
  const RelativeRir rel = ComputeRelativeRir(r.direct_rir[0], r.full_rir[0]);
  const StftConfig cfg;

  const ComplexSpectrogram full =
      HypothesizedEstimate(u.direct_path[0], rel.rir, rel.rir.size(), cfg);
  CHECK((full.data - u.reverberant_spec[0].data).norm() <=
        1e-2 * u.reverberant_spec[0].data.norm());

  // o_r starts with a unit impulse, so tau = 1 keeps the direct path.
  CHECK(rel.rir.samples[0] == doctest::Approx(1.0).epsilon(1e-3));
  const ComplexSpectrogram first = HypothesizedEstimate(u.direct_path[0], rel.rir, 1, cfg);
  CHECK((first.data - u.direct_spec[0].data).norm() <= 2e-3 * u.direct_spec[0].data.norm());

  // The truncated RIR gains energy with tau. The estimate only does so on
  // the whole: added taps can cancel part of the earlier convolution.
  double prev_rir = 0.0;
  bool rir_monotone = true;
  for (int tau = 1; tau <= rel.rir.size(); tau += 400) {
    double e = 0.0;
    for (double v : TruncateRir(rel.rir, tau).samples) e += v * v;
    rir_monotone = rir_monotone && e >= prev_rir;
    prev_rir = e;
  }
  CHECK(rir_monotone);
  CHECK(full.data.squaredNorm() > 1.5 * first.data.squaredNorm());
}

}  // namespace
}  // namespace usdr
