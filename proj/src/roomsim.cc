// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/roomsim.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "usdr/fft.h"

namespace usdr {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kHalfTaps = kFractionalDelayTaps / 2;

// Uniform double in [0, 1); spelled out so draws do not depend on the
// standard library's distribution implementation.
double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * Uniform01(rng);
}

double Gaussian(std::mt19937_64& rng) {
  double u1 = Uniform01(rng);
  while (u1 <= 0.0) u1 = Uniform01(rng);
  const double u2 = Uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

double Distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool StrictlyInside(const Vec3& p, const Vec3& room, double margin = 0.0) {
  for (int i = 0; i < 3; ++i)
    if (!(p[i] > margin && p[i] < room[i] - margin)) return false;
  return true;
}

std::string Format(const Vec3& p) {
  return "(" + std::to_string(p[0]) + ", " + std::to_string(p[1]) + ", " +
         std::to_string(p[2]) + ")";
}

// Hann-windowed sinc interpolator spanning kFractionalDelayTaps samples
// around a (fractional) delay.
class FractionalDelay {
 public:
  FractionalDelay() {
    const double step = kPi / (kHalfTaps + 1);
    for (int k = 0; k < kFractionalDelayTaps; ++k) {
      cos_table_[k] = std::cos(step * k);
      sin_table_[k] = std::sin(step * k);
    }
  }

  // Adds gain * h(n - delay) to out[n] for the taps inside out.
  void Add(double delay, double gain, std::vector<double>& out) const {
    const int center = static_cast<int>(std::floor(delay));
    const int first = center - kHalfTaps;
    const double x0 = first - delay;  // in (-41, -40]
    // sin(pi * (x0 + k)) alternates sign with k.
    const double sin_x0 = std::sin(kPi * x0);
    const double step = kPi / (kHalfTaps + 1);
    const double cos_a = std::cos(step * x0), sin_a = std::sin(step * x0);
    const int n_out = static_cast<int>(out.size());
    double sign = 1.0;
    for (int k = 0; k < kFractionalDelayTaps; ++k, sign = -sign) {
      const int n = first + k;
      if (n < 0) continue;
      if (n >= n_out) break;
      const double x = x0 + k;
      const double sinc =
          std::abs(x) < 1e-9 ? 1.0 : sign * sin_x0 / (kPi * x);
      const double window =
          0.5 * (1.0 + cos_a * cos_table_[k] - sin_a * sin_table_[k]);
      out[n] += gain * sinc * window;
    }
  }

 private:
  std::array<double, kFractionalDelayTaps> cos_table_{};
  std::array<double, kFractionalDelayTaps> sin_table_{};
};

}  // namespace

void RoomScene::Validate() const {
  for (double d : room_dims)
    if (!(d > 0.0)) throw DomainError("room dimensions must be positive");
  if (!(t60 >= 0.05 && t60 <= 2.0))
    throw DomainError("t60 must lie in [0.05, 2.0] s, got " +
                      std::to_string(t60));
  if (sample_rate <= 0) throw DomainError("sample rate must be positive");
  if (mic_positions.empty()) throw DomainError("scene has no microphones");
  if (!StrictlyInside(source_pos, room_dims))
    throw DomainError("source " + Format(source_pos) + " is outside the room");
  for (const Vec3& m : mic_positions)
    if (!StrictlyInside(m, room_dims))
      throw DomainError("microphone " + Format(m) + " is outside the room");
}

void SceneSampler::Validate() const {
  if (!(t60_min > 0 && t60_min <= t60_max))
    throw ConfigError("invalid t60 range");
  if (!(dist_min > 0 && dist_min <= dist_max))
    throw ConfigError("invalid distance range");
  if (!(snr_min <= snr_max)) throw ConfigError("invalid SNR range");
  if (num_mics < 1) throw ConfigError("num_mics must be >= 1");
  if (!(array_diameter >= 0)) throw ConfigError("invalid array diameter");
  for (int i = 0; i < 3; ++i)
    if (!(room_min[i] > 0 && room_min[i] <= room_max[i]))
      throw ConfigError("invalid room size range");
  if (t60_min < 0.05 || t60_max > 2.0)
    throw ConfigError("t60 range must lie within [0.05, 2.0] s");
}

std::vector<Vec3> CircularArray(const Vec3& center, double diameter,
                                int num_mics, double rotation_rad) {
  std::vector<Vec3> mics(num_mics);
  for (int m = 0; m < num_mics; ++m) {
    const double phi = rotation_rad + 2.0 * kPi * m / num_mics;
    mics[m] = {center[0] + 0.5 * diameter * std::cos(phi),
               center[1] + 0.5 * diameter * std::sin(phi), center[2]};
  }
  if (num_mics == 1) mics[0] = center;
  return mics;
}

RoomScene SceneSampler::SampleScene(uint64_t index) const {
  Validate();
  std::mt19937_64 rng(DeriveSeed(seed, "scene", index));
  RoomScene scene;
  for (int i = 0; i < 3; ++i)
    scene.room_dims[i] = Uniform(rng, room_min[i], room_max[i]);
  scene.t60 = Uniform(rng, t60_min, t60_max);
  const Vec3& room = scene.room_dims;
  const double wall_margin = 0.3;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const Vec3 center{Uniform(rng, 1.0, room[0] - 1.0),
                      Uniform(rng, 1.0, room[1] - 1.0),
                      Uniform(rng, 1.0, std::min(1.5, room[2] - 0.5))};
    const double dist = Uniform(rng, dist_min, dist_max);
    const double azimuth = Uniform(rng, 0.0, 2.0 * kPi);
    const double height = Uniform(rng, 1.3, std::min(1.9, room[2] - 0.5));
    const double dz = height - center[2];
    if (std::abs(dz) >= dist) continue;
    const double horizontal = std::sqrt(dist * dist - dz * dz);
    const Vec3 source{center[0] + horizontal * std::cos(azimuth),
                      center[1] + horizontal * std::sin(azimuth), height};
    if (!StrictlyInside(source, room, wall_margin)) continue;
    scene.source_pos = source;
    scene.mic_positions = CircularArray(center, array_diameter, num_mics,
                                        Uniform(rng, 0.0, 2.0 * kPi));
    scene.Validate();
    return scene;
  }
  throw DomainError("could not place source and array inside sampled room");
}

double SceneSampler::SampleSnr(uint64_t index) const {
  std::mt19937_64 rng(DeriveSeed(seed, "snr", index));
  return Uniform(rng, snr_min, snr_max);
}

namespace {

// Calls fn(distance, reflection_order) for every image of `src` seen from
// `rcv` closer than max_dist.
template <typename Fn>
void ForEachImage(const RoomScene& scene, const Vec3& rcv, double max_dist,
                  int max_order, Fn&& fn) {
  const Vec3& room = scene.room_dims;
  const Vec3& src = scene.source_pos;
  std::array<int, 3> n_max;
  for (int i = 0; i < 3; ++i)
    n_max[i] = static_cast<int>(std::ceil(max_dist / (2.0 * room[i]))) + 1;
  for (int nx = -n_max[0]; nx <= n_max[0]; ++nx) {
    for (int u = 0; u <= 1; ++u) {
      const double dx = (1 - 2 * u) * src[0] + 2 * nx * room[0] - rcv[0];
      const int ox = std::abs(2 * nx - u);
      if (std::abs(dx) > max_dist) continue;
      for (int ny = -n_max[1]; ny <= n_max[1]; ++ny) {
        for (int v = 0; v <= 1; ++v) {
          const double dy = (1 - 2 * v) * src[1] + 2 * ny * room[1] - rcv[1];
          const int oy = std::abs(2 * ny - v);
          const double dxy2 = dx * dx + dy * dy;
          if (dxy2 > max_dist * max_dist) continue;
          for (int nz = -n_max[2]; nz <= n_max[2]; ++nz) {
            for (int w = 0; w <= 1; ++w) {
              const double dz = (1 - 2 * w) * src[2] + 2 * nz * room[2] - rcv[2];
              const int order = ox + oy + std::abs(2 * nz - w);
              if (max_order >= 0 && order > max_order) continue;
              const double dist = std::sqrt(dxy2 + dz * dz);
              if (dist > max_dist) continue;
              fn(dist, order);
            }
          }
        }
      }
    }
  }
}

// Schroeder fit on a per-sample energy sequence.
double T60FromEnergy(const std::vector<double>& energy, double fs) {
  const int n = static_cast<int>(energy.size());
  if (n < 2) throw DomainError("RIR too short for a decay estimate");
  std::vector<double> edc(n);
  double acc = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    acc += energy[i];
    edc[i] = acc;
  }
  if (acc <= 0.0) throw DomainError("RIR has zero energy");
  const double total = edc[0];
  int begin = -1, end = -1;
  for (int i = 0; i < n; ++i) {
    const double db = 10.0 * std::log10(edc[i] / total + 1e-300);
    if (begin < 0 && db <= -5.0) begin = i;
    if (db <= -25.0) {
      end = i;
      break;
    }
  }
  if (begin < 0 || end <= begin)
    throw DomainError("energy decay does not reach -25 dB within the RIR");
  // Least-squares line through the decay curve in dB.
  double st = 0, sd = 0, stt = 0, std_ = 0;
  const int count = end - begin + 1;
  for (int i = begin; i <= end; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double db = 10.0 * std::log10(edc[i] / total);
    st += t;
    sd += db;
    stt += t * t;
    std_ += t * db;
  }
  const double slope = (count * std_ - st * sd) / (count * stt - st * st);
  if (slope >= 0.0) throw DomainError("energy decay is not decreasing");
  return -60.0 / slope;
}

// Energy reflection coefficient whose image-source decay has the requested
// Schroeder T60. Eyring's diffuse-field value overestimates the decay time
// of a shoebox image model (grazing paths hit few walls, and the
// same-sign images pile up coherently), so the exponent is scaled by a
// factor found by bisection on an integer-delay rendering.
double CalibratedReflection(const RoomScene& scene, int length,
                            double max_dist) {
  const Vec3& room = scene.room_dims;
  const double volume = room[0] * room[1] * room[2];
  const double surface =
      2.0 * (room[0] * room[1] + room[1] * room[2] + room[0] * room[2]);
  const double eyring_log =
      -24.0 * std::log(10.0) * volume / (kSpeedOfSound * surface * scene.t60);
  const double fs = scene.sample_rate;

  struct Arrival {
    int sample;
    int order;
    double weight;
  };
  std::vector<Arrival> arrivals;
  int max_order = 0;
  ForEachImage(scene, scene.mic_positions[0], max_dist, -1,
               [&](double dist, int order) {
                 const int i = static_cast<int>(std::lround(dist / kSpeedOfSound * fs));
                 if (i >= length) return;
                 arrivals.push_back({i, order, 1.0 / dist});
                 max_order = std::max(max_order, order);
               });

  std::vector<double> amplitude(length), energy(length), power(max_order + 1);
  auto t60_at = [&](double factor) {
    const double beta = std::exp(0.5 * factor * eyring_log);
    power[0] = 1.0;
    for (int o = 1; o <= max_order; ++o) power[o] = power[o - 1] * beta;
    std::fill(amplitude.begin(), amplitude.end(), 0.0);
    for (const Arrival& a : arrivals) amplitude[a.sample] += power[a.order] * a.weight;
    for (int i = 0; i < length; ++i) energy[i] = amplitude[i] * amplitude[i];
    return T60FromEnergy(energy, fs);
  };

  double lo = 1.0, hi = 1.0;
  try {
    // Larger factors give faster decay.
    if (t60_at(1.0) > scene.t60) {
      hi = 2.0;
      while (hi < 16.0 && t60_at(hi) > scene.t60) hi *= 2.0;
      lo = hi / 2.0;
    } else {
      lo = 0.5;
      while (lo > 1.0 / 16.0 && t60_at(lo) < scene.t60) lo /= 2.0;
      hi = lo * 2.0;
    }
    for (int it = 0; it < 30; ++it) {
      const double mid = 0.5 * (lo + hi);
      (t60_at(mid) > scene.t60 ? lo : hi) = mid;
    }
  } catch (const DomainError&) {
    // Decay too short to fit (tiny T60): fall back to Eyring.
    return std::exp(eyring_log);
  }
  return std::exp(0.5 * (lo + hi) * eyring_log);
}

}  // namespace

RIRSet SimulateRir(const RoomScene& scene, int max_order) {
  scene.Validate();
  const double fs = scene.sample_rate;

  RIRSet out;
  double max_direct = 0.0;
  for (const Vec3& m : scene.mic_positions) {
    const double delay = Distance(scene.source_pos, m) / kSpeedOfSound * fs;
    out.direct_delay.push_back(delay);
    max_direct = std::max(max_direct, delay);
  }
  const int tail = static_cast<int>(std::ceil(max_direct)) + kHalfTaps + 1;
  const int length =
      max_order == 0 ? tail
                     : static_cast<int>(std::ceil(scene.t60 * fs)) + tail;
  const double max_dist = (length + kHalfTaps) * kSpeedOfSound / fs;
  const double beta = max_order == 0
                          ? 0.0
                          : std::sqrt(CalibratedReflection(scene, length, max_dist));

  const FractionalDelay interp;
  const Vec3& src = scene.source_pos;
  for (int mic = 0; mic < scene.num_mics(); ++mic) {
    const Vec3& rcv = scene.mic_positions[mic];
    Waveform full, direct;
    full.sample_rate = direct.sample_rate = scene.sample_rate;
    full.samples.assign(length, 0.0);
    const double d_delay = out.direct_delay[mic];
    direct.samples.assign(static_cast<int>(std::floor(d_delay)) + kHalfTaps + 1,
                          0.0);
    interp.Add(d_delay, 1.0 / (4.0 * kPi * Distance(src, rcv)), direct.samples);
    ForEachImage(scene, rcv, max_dist, max_order, [&](double dist, int order) {
      const double gain = std::pow(beta, order) / (4.0 * kPi * dist);
      interp.Add(dist / kSpeedOfSound * fs, gain, full.samples);
    });
    out.full_rir.push_back(std::move(full));
    out.direct_rir.push_back(std::move(direct));
  }
  return out;
}

double EstimateT60(const Waveform& rir) {
  std::vector<double> energy(rir.samples.size());
  for (size_t i = 0; i < energy.size(); ++i)
    energy[i] = rir.samples[i] * rir.samples[i];
  return T60FromEnergy(energy, rir.sample_rate);
}

void MultichannelUtterance::Validate() const {
  const int p = num_mics();
  if (p < 1) throw DomainError("utterance has no channels");
  if (ref_mic < 0 || ref_mic >= p)
    throw DomainError("reference mic index out of range");
  if (static_cast<int>(mixture_spec.size()) != p)
    throw ShapeError("mixture spectrogram count does not match channels");
  const int len = mixture[0].size();
  for (const Waveform& w : mixture)
    if (w.size() != len) throw ShapeError("channels differ in length");
  for (const ComplexSpectrogram& s : mixture_spec)
    if (s.frames() != mixture_spec[0].frames() ||
        s.bins() != mixture_spec[0].bins())
      throw ShapeError("spectrogram geometry differs across channels");
}

MultichannelUtterance UtteranceFromMixture(std::vector<Waveform> mixture,
                                           const StftConfig& stft,
                                           int ref_mic) {
  MultichannelUtterance utt;
  utt.stft = stft;
  utt.ref_mic = ref_mic;
  utt.mixture = std::move(mixture);
  for (const Waveform& w : utt.mixture) utt.mixture_spec.push_back(Stft(w, stft));
  utt.Validate();
  return utt;
}

MultichannelUtterance SelectMics(const MultichannelUtterance& utt,
                                 const std::vector<int>& mics) {
  auto ref_it = std::find(mics.begin(), mics.end(), utt.ref_mic);
  if (ref_it == mics.end())
    throw DomainError("mic selection must contain the reference mic");
  MultichannelUtterance out;
  out.stft = utt.stft;
  out.scene = utt.scene;
  out.snr_db = utt.snr_db;
  out.ref_mic = static_cast<int>(ref_it - mics.begin());
  auto pick = [&](const auto& src, auto& dst) {
    if (src.empty()) return;
    for (int m : mics) dst.push_back(src.at(m));
  };
  for (int m : mics)
    if (m < 0 || m >= utt.num_mics())
      throw DomainError("mic index " + std::to_string(m) + " out of range");
  pick(utt.mixture, out.mixture);
  pick(utt.mixture_spec, out.mixture_spec);
  pick(utt.direct_path, out.direct_path);
  pick(utt.direct_spec, out.direct_spec);
  pick(utt.reverberant_image, out.reverberant_image);
  pick(utt.reverberant_spec, out.reverberant_spec);
  pick(utt.noise, out.noise);
  if (out.scene) {
    out.scene->mic_positions.clear();
    pick(utt.scene->mic_positions, out.scene->mic_positions);
  }
  if (utt.rirs) {
    RIRSet r;
    pick(utt.rirs->full_rir, r.full_rir);
    pick(utt.rirs->direct_rir, r.direct_rir);
    pick(utt.rirs->direct_delay, r.direct_delay);
    out.rirs = std::move(r);
  }
  return out;
}

MultichannelUtterance RenderMixture(const Waveform& dry, const RIRSet& rirs,
                                    const std::vector<Waveform>& noise,
                                    double snr_db, int ref_mic,
                                    const StftConfig& stft) {
  dry.Validate();
  const int p = static_cast<int>(rirs.full_rir.size());
  if (p < 1 || static_cast<int>(rirs.direct_rir.size()) != p)
    throw ShapeError("RIR set is empty or inconsistent");
  if (ref_mic < 0 || ref_mic >= p) throw DomainError("reference mic out of range");
  if (dry.Energy() <= 0.0) throw DomainError("dry signal has zero energy");
  const bool noisy = std::isfinite(snr_db);
  if (noisy && static_cast<int>(noise.size()) != p)
    throw ShapeError("need one noise waveform per microphone");

  const int len = dry.size();
  MultichannelUtterance utt;
  utt.stft = stft;
  utt.ref_mic = ref_mic;
  utt.snr_db = snr_db;
  utt.rirs = rirs;
  for (int m = 0; m < p; ++m) {
    Waveform x, s;
    x.sample_rate = s.sample_rate = dry.sample_rate;
    x.samples = Convolve(dry.samples, rirs.full_rir[m].samples);
    s.samples = Convolve(dry.samples, rirs.direct_rir[m].samples);
    x.samples.resize(len, 0.0);
    s.samples.resize(len, 0.0);
    utt.reverberant_image.push_back(std::move(x));
    utt.direct_path.push_back(std::move(s));
  }

  double scale = 0.0;
  if (noisy) {
    std::vector<Waveform> tiled(p);
    for (int m = 0; m < p; ++m) {
      if (noise[m].samples.empty()) throw DomainError("empty noise channel");
      tiled[m].sample_rate = dry.sample_rate;
      tiled[m].samples.resize(len);
      for (int i = 0; i < len; ++i)
        tiled[m].samples[i] = noise[m].samples[i % noise[m].size()];
    }
    const double speech_energy = utt.direct_path[ref_mic].Energy();
    const double noise_energy = tiled[ref_mic].Energy();
    if (noise_energy <= 0.0) throw DomainError("noise has zero energy");
    if (speech_energy <= 0.0)
      throw DomainError("direct-path signal has zero energy");
    scale = std::sqrt(speech_energy /
                      (noise_energy * std::pow(10.0, snr_db / 10.0)));
    for (Waveform& w : tiled)
      for (double& v : w.samples) v *= scale;
    utt.noise = std::move(tiled);
  } else {
    for (int m = 0; m < p; ++m) {
      Waveform z;
      z.sample_rate = dry.sample_rate;
      z.samples.assign(len, 0.0);
      utt.noise.push_back(std::move(z));
    }
  }

  for (int m = 0; m < p; ++m) {
    Waveform y = utt.reverberant_image[m];
    if (noisy)
      for (int i = 0; i < len; ++i) y.samples[i] += utt.noise[m].samples[i];
    utt.mixture.push_back(std::move(y));
    utt.mixture_spec.push_back(Stft(utt.mixture[m], stft));
    utt.direct_spec.push_back(Stft(utt.direct_path[m], stft));
    utt.reverberant_spec.push_back(Stft(utt.reverberant_image[m], stft));
  }
  return utt;
}

std::vector<Waveform> ColoredNoise(int channels, int length, uint64_t seed,
                                   int sample_rate, double cutoff_hz) {
  if (channels < 1 || length < 1)
    throw DomainError("noise needs at least one channel and one sample");
  const double a = std::exp(-2.0 * kPi * cutoff_hz / sample_rate);
  std::vector<Waveform> out(channels);
  for (int c = 0; c < channels; ++c) {
    std::mt19937_64 rng(DeriveSeed(seed, "noise", c));
    out[c].sample_rate = sample_rate;
    out[c].samples.resize(length);
    double state = 0.0;
    for (int i = 0; i < length; ++i) {
      state = a * state + (1.0 - a) * Gaussian(rng);
      out[c].samples[i] = state;
    }
  }
  return out;
}

RelativeRir ComputeRelativeRir(const Waveform& direct_rir,
                               const Waveform& full_rir) {
  const int md = direct_rir.size(), mi = full_rir.size();
  if (md < 1 || mi < 1) throw DomainError("relative RIR needs non-empty RIRs");
  const int mr = mi + md - 1;
  RealFft fft(mr);
  std::vector<double> buf(mr, 0.0);
  std::vector<Complex> den(fft.bins()), num(fft.bins());
  std::copy(direct_rir.samples.begin(), direct_rir.samples.end(), buf.begin());
  fft.Forward(buf, den);
  std::fill(buf.begin(), buf.end(), 0.0);
  std::copy(full_rir.samples.begin(), full_rir.samples.end(), buf.begin());
  fft.Forward(buf, num);

  double max_mag = 0.0;
  for (const Complex& d : den) max_mag = std::max(max_mag, std::abs(d));
  if (max_mag <= 0.0) throw DomainError("direct-path RIR has zero spectrum");
  const double floor = 1e-6 * max_mag;
  RelativeRir out;
  for (int k = 0; k < fft.bins(); ++k) {
    Complex d = den[k];
    const double mag = std::abs(d);
    if (mag < floor) {
      d = mag > 0.0 ? d * (floor / mag) : Complex(floor, 0.0);
      ++out.floored_bins;
    }
    num[k] /= d;
  }
  out.rir.sample_rate = full_rir.sample_rate;
  out.rir.samples.resize(mr);
  fft.Inverse(num, out.rir.samples);
  return out;
}

Waveform TruncateRir(const Waveform& rir, int tau) {
  if (tau < 1 || tau > rir.size())
    throw DomainError("truncation length " + std::to_string(tau) +
                      " outside [1, " + std::to_string(rir.size()) + "]");
  Waveform out;
  out.sample_rate = rir.sample_rate;
  out.samples.assign(rir.samples.begin(), rir.samples.begin() + tau);
  return out;
}

ComplexSpectrogram HypothesizedEstimate(const Waveform& direct_path,
                                        const Waveform& relative_rir, int tau,
                                        const StftConfig& cfg) {
  const Waveform truncated = TruncateRir(relative_rir, tau);
  Waveform conv;
  conv.sample_rate = direct_path.sample_rate;
  conv.samples = Convolve(direct_path.samples, truncated.samples);
  conv.samples.resize(direct_path.size());
  return Stft(conv, cfg);
}

}  // namespace usdr
