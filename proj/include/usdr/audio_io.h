// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// RIFF/WAVE reading and writing, and the JSON corpus manifest.

#ifndef USDR_AUDIO_IO_H_
#define USDR_AUDIO_IO_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "usdr/spectral.h"

namespace usdr {

enum class WavEncoding { kPcm16, kFloat32 };

std::string ToString(WavEncoding e);
WavEncoding ParseWavEncoding(const std::string& s);  // "pcm16" | "float32"

// All channels of a PCM16 or float32 file (format tags 1, 3 and
// WAVE_FORMAT_EXTENSIBLE with either subformat). PCM16 maps to v / 32767.
// Throws ParseError on malformed or truncated files and
// UnsupportedEncodingError for other encodings.
std::vector<Waveform> ReadWav(const std::filesystem::path& path);
// Single-channel convenience; throws ParseError for multi-channel files.
Waveform ReadWavMono(const std::filesystem::path& path);

// PCM16 clips to [-1, 1] and stores lrint(v * 32767).
void WriteWav(const std::filesystem::path& path, const Waveform& wave,
              WavEncoding encoding = WavEncoding::kFloat32);
// Interleaved multi-channel file; channels must share length and rate.
void WriteWav(const std::filesystem::path& path,
              const std::vector<Waveform>& channels,
              WavEncoding encoding = WavEncoding::kFloat32);

inline constexpr int kManifestSchema = 1;

struct ManifestEntry {
  std::string utt_id;
  std::vector<std::string> mixture_paths;     // one mono WAV per mic
  std::vector<std::string> direct_paths;      // direct-path signal per mic
  std::vector<std::string> noise_paths;       // empty when noise-free
  std::vector<std::string> rir_paths;         // optional full RIRs
  std::vector<std::string> direct_rir_paths;  // optional direct-path RIRs
  nlohmann::json scene;                       // room, positions, t60
  uint64_t seed = 0;
  std::optional<double> snr_db;               // null means no noise
  double t60 = 0.0;
  int ref_mic = 0;                            // zero-based
  nlohmann::json extra = nlohmann::json::object();  // unknown keys, kept

  int num_mics() const { return static_cast<int>(mixture_paths.size()); }
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  nlohmann::json extra = nlohmann::json::object();
  std::filesystem::path base_dir;  // relative paths resolve against this

  std::filesystem::path Resolve(const std::string& path) const;
  const ManifestEntry* Find(const std::string& utt_id) const;
};

nlohmann::json ManifestToJson(const Manifest& m);
// Throws SchemaError (schema mismatch or a missing/mistyped key, naming
// it) or ParseError.
Manifest ManifestFromJson(const nlohmann::json& j,
                          const std::filesystem::path& base_dir);

// Loads and, with check_paths, verifies every referenced file exists.
Manifest LoadManifest(const std::filesystem::path& path, bool check_paths = true);
// Keys sorted, two-space indent, trailing newline.
void SaveManifest(const std::filesystem::path& path, const Manifest& m);

}  // namespace usdr

#endif  // USDR_AUDIO_IO_H_
