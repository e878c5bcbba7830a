// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Shoebox room simulation (image-source method) and the construction of
// noisy-reverberant multi-microphone utterances with their direct-path
// references.

#ifndef USDR_ROOMSIM_H_
#define USDR_ROOMSIM_H_

#include <array>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "usdr/common.h"
#include "usdr/spectral.h"

namespace usdr {

using Vec3 = std::array<double, 3>;

inline constexpr double kSpeedOfSound = 343.0;     // m/s
inline constexpr int kFractionalDelayTaps = 81;    // odd, centred
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct RoomScene {
  Vec3 room_dims{6.0, 5.0, 3.0};
  double t60 = 0.5;
  Vec3 source_pos{3.0, 2.5, 1.6};
  std::vector<Vec3> mic_positions;
  int sample_rate = kDefaultSampleRate;

  int num_mics() const { return static_cast<int>(mic_positions.size()); }
  // Throws DomainError when a point is not strictly inside the room, when
  // t60 is outside [0.05, 2.0] s, or when there are no microphones.
  void Validate() const;
};

// Random scene protocol: uniform circular array, speaker-to-array distance
// and T60 drawn uniformly. Room size is not part of the protocol being
// reproduced, so it is drawn from a fixed office-sized range.
struct SceneSampler {
  double t60_min = 0.2, t60_max = 1.3;
  double dist_min = 0.75, dist_max = 2.5;
  int num_mics = 8;
  double array_diameter = 0.20;
  double snr_min = 5.0, snr_max = 25.0;
  Vec3 room_min{5.0, 4.0, 2.6};
  Vec3 room_max{9.0, 7.0, 3.4};
  uint64_t seed = 0;

  void Validate() const;
  // Scene for utterance `index`, drawn from the "scene" sub-stream.
  RoomScene SampleScene(uint64_t index) const;
  // SNR for utterance `index`, drawn from the "snr" sub-stream.
  double SampleSnr(uint64_t index) const;
};

// Mic positions uniformly spaced on a horizontal circle.
std::vector<Vec3> CircularArray(const Vec3& center, double diameter,
                                int num_mics, double rotation_rad = 0.0);

struct RIRSet {
  std::vector<Waveform> full_rir;    // o_i per mic
  std::vector<Waveform> direct_rir;  // o_d per mic, the line-of-sight term
  std::vector<double> direct_delay;  // samples, per mic
};

// Image-source RIRs with a uniform wall reflection coefficient derived from
// t60 by Eyring's formula. max_order < 0 means no order limit (images are
// then limited by the RIR length, which is t60 plus the longest direct
// delay plus the fractional-delay support). max_order == 0 yields only the
// direct path.
RIRSet SimulateRir(const RoomScene& scene, int max_order = -1);

// Reverberation time from the Schroeder backward-integrated energy decay,
// extrapolated from the -5..-25 dB range.
double EstimateT60(const Waveform& rir);

struct MultichannelUtterance {
  std::vector<Waveform> mixture;                    // y_p
  std::vector<ComplexSpectrogram> mixture_spec;     // Y_p
  std::vector<Waveform> direct_path;                // s_p
  std::vector<ComplexSpectrogram> direct_spec;      // S_p
  std::vector<Waveform> reverberant_image;          // x_p
  std::vector<ComplexSpectrogram> reverberant_spec; // X_p
  std::vector<Waveform> noise;                      // eps_p
  std::optional<RoomScene> scene;
  std::optional<RIRSet> rirs;
  StftConfig stft;
  int ref_mic = 0;  // zero-based index of q
  double snr_db = kNoNoise;

  int num_mics() const { return static_cast<int>(mixture.size()); }
  int num_samples() const { return mixture.empty() ? 0 : mixture[0].size(); }
  void Validate() const;
};

// Builds an utterance holding only the observed mixtures and their
// spectrograms (what an unsupervised system gets to see).
MultichannelUtterance UtteranceFromMixture(std::vector<Waveform> mixture,
                                           const StftConfig& stft,
                                           int ref_mic = 0);

// Keeps the given zero-based mics (in that order); the reference mic must be
// among them and keeps its identity.
MultichannelUtterance SelectMics(const MultichannelUtterance& utt,
                                 const std::vector<int>& mics);

// x_p = dry * full_rir_p and s_p = dry * direct_rir_p, truncated to the dry
// length; noise is tiled or truncated to that length and scaled so that
// 10 log10(|s_q|^2 / |eps_q|^2) == snr_db. snr_db == kNoNoise disables
// noise.
MultichannelUtterance RenderMixture(const Waveform& dry, const RIRSet& rirs,
                                    const std::vector<Waveform>& noise,
                                    double snr_db, int ref_mic,
                                    const StftConfig& stft = {});

// Independent low-pass filtered Gaussian noise per channel.
std::vector<Waveform> ColoredNoise(int channels, int length, uint64_t seed,
                                   int sample_rate = kDefaultSampleRate,
                                   double cutoff_hz = 1000.0);

struct RelativeRir {
  Waveform rir;          // o_r, length M_i + M_d - 1
  int floored_bins = 0;  // bins where |FFT(o_d)| hit the regularization floor
};

// o_r = iFFT(FFT(o_i, M) / FFT(o_d, M), M) with M = M_i + M_d - 1. The
// denominator magnitude is floored at 1e-6 of its maximum.
RelativeRir ComputeRelativeRir(const Waveform& direct_rir,
                               const Waveform& full_rir);

// First tau samples of the RIR; throws DomainError unless
// 1 <= tau <= rir length.
Waveform TruncateRir(const Waveform& rir, int tau);

// STFT of the direct-path signal convolved with the relative RIR truncated
// to tau samples, cut to the direct-path length.
ComplexSpectrogram HypothesizedEstimate(const Waveform& direct_path,
                                        const Waveform& relative_rir, int tau,
                                        const StftConfig& cfg);

}  // namespace usdr

#endif  // USDR_ROOMSIM_H_
