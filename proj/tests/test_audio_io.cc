// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "usdr/audio_io.h"

namespace usdr {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("usdr_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Waveform RandomWave(int n, std::mt19937_64& rng, int rate = 16000) {
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  Waveform w{std::vector<double>(n), rate};
  for (double& v : w.samples) v = u(rng);
  return w;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void Dump(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

TEST_CASE("float32 round trip is exact for float-representable samples") {
  TempDir tmp;
  std::mt19937_64 rng(1);
  Waveform w = RandomWave(1234, rng, 8000);
  for (double& v : w.samples) v = static_cast<float>(v);
  WriteWav(tmp.path / "a.wav", w, WavEncoding::kFloat32);
  const Waveform back = ReadWavMono(tmp.path / "a.wav");
  CHECK(back.sample_rate == 8000);
  CHECK(back.samples == w.samples);
}

TEST_CASE("PCM16 round trip is within one LSB") {
  TempDir tmp;
  std::mt19937_64 rng(2);
  Waveform w = RandomWave(999, rng);
  w.samples[0] = 1.5;  // clipped
  WriteWav(tmp.path / "a.wav", w, WavEncoding::kPcm16);
  const Waveform back = ReadWavMono(tmp.path / "a.wav");
  REQUIRE(back.size() == w.size());
  CHECK(back.samples[0] == 1.0);
  for (int i = 1; i < w.size(); ++i)
    CHECK(std::abs(back.samples[i] - w.samples[i]) <= 1.0 / 32767);
  CHECK(Slurp(tmp.path / "a.wav").size() == 44 + 2 * 999);
}

TEST_CASE("Multi-channel files interleave") {
  TempDir tmp;
  std::mt19937_64 rng(3);
  const std::vector<Waveform> ch{RandomWave(100, rng), RandomWave(100, rng), RandomWave(100, rng)};
  WriteWav(tmp.path / "m.wav", ch, WavEncoding::kPcm16);
  const std::vector<Waveform> back = ReadWav(tmp.path / "m.wav");
  REQUIRE(back.size() == 3);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 100; ++i) CHECK(std::abs(back[c].samples[i] - ch[c].samples[i]) <= 1.0 / 32767);
  CHECK_THROWS_AS(ReadWavMono(tmp.path / "m.wav"), ParseError);
  CHECK_THROWS_AS(WriteWav(tmp.path / "bad.wav", {ch[0], RandomWave(99, rng)}), ShapeError);
}

TEST_CASE("Malformed and unsupported files") {
  TempDir tmp;
  std::mt19937_64 rng(4);
  WriteWav(tmp.path / "a.wav", RandomWave(500, rng), WavEncoding::kPcm16);
  std::string bytes = Slurp(tmp.path / "a.wav");

  Dump(tmp.path / "trunc.wav", bytes.substr(0, bytes.size() - 101));
  CHECK_THROWS_AS(ReadWav(tmp.path / "trunc.wav"), ParseError);
  Dump(tmp.path / "short.wav", bytes.substr(0, 20));
  CHECK_THROWS_AS(ReadWav(tmp.path / "short.wav"), ParseError);
  Dump(tmp.path / "riff.wav", "RIFX" + bytes.substr(4));
  CHECK_THROWS_AS(ReadWav(tmp.path / "riff.wav"), ParseError);
  CHECK_THROWS_AS(ReadWav(tmp.path / "missing.wav"), ParseError);

  // 24-bit PCM: patch bits-per-sample and the derived rates.
  std::string pcm24 = bytes;
  const uint16_t bits = 24, align = 3;
  const uint32_t rate = 16000 * 3;
  std::memcpy(&pcm24[28], &rate, 4);
  std::memcpy(&pcm24[32], &align, 2);
  std::memcpy(&pcm24[34], &bits, 2);
  Dump(tmp.path / "p24.wav", pcm24);
  try {
    ReadWav(tmp.path / "p24.wav");
    FAIL("expected UnsupportedEncodingError");
  } catch (const UnsupportedEncodingError& e) {
    CHECK(e.encoding() == "pcm24");
  }
  CHECK(ParseWavEncoding("pcm16") == WavEncoding::kPcm16);
  CHECK_THROWS_AS(ParseWavEncoding("mp3"), ConfigError);
}

Manifest SampleManifest() {
  Manifest m;
  ManifestEntry e;
  e.utt_id = "utt0000";
  e.mixture_paths = {"utt0000/mixture_ch1.wav", "utt0000/mixture_ch2.wav"};
  e.direct_paths = {"utt0000/direct_ch1.wav", "utt0000/direct_ch2.wav"};
  e.scene = {{"t60", 0.5}, {"room", {5.0, 4.0, 3.0}}};
  e.seed = 77;
  e.snr_db = 12.5;
  e.t60 = 0.5;
  e.extra["note"] = "kept";
  m.entries.push_back(e);
  e.utt_id = "utt0001";
  e.snr_db.reset();
  e.extra = nlohmann::json::object();
  m.entries.push_back(e);
  m.extra["generator"] = {{"count", 2}};
  return m;
}

TEST_CASE("Manifest round trip keeps unknown keys") {
  TempDir tmp;
  const Manifest m = SampleManifest();
  SaveManifest(tmp.path / "manifest.json", m);
  const std::string first = Slurp(tmp.path / "manifest.json");
  CHECK(first.back() == '\n');
  const Manifest back = LoadManifest(tmp.path / "manifest.json", false);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].snr_db == 12.5);
  CHECK_FALSE(back.entries[1].snr_db.has_value());
  CHECK(back.entries[0].extra["note"] == "kept");
  CHECK(back.extra["generator"]["count"] == 2);
  CHECK(back.entries[1].num_mics() == 2);
  CHECK(back.Find("utt0001") == &back.entries[1]);
  CHECK(back.Find("nope") == nullptr);
  CHECK(back.Resolve("x.wav") == tmp.path / "x.wav");
  SaveManifest(tmp.path / "again.json", back);
  CHECK(Slurp(tmp.path / "again.json") == first);

  CHECK_THROWS_AS(LoadManifest(tmp.path / "manifest.json", true), Error);
}

TEST_CASE("Manifest schema errors name the key") {
  nlohmann::json j = ManifestToJson(SampleManifest());
  j["entries"][0].erase("seed");
  try {
    ManifestFromJson(j, ".");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("seed") != std::string::npos);
  }
  j = ManifestToJson(SampleManifest());
  j["schema"] = 99;
  CHECK_THROWS_AS(ManifestFromJson(j, "."), SchemaError);
  j = ManifestToJson(SampleManifest());
  j["entries"][1]["mixture_paths"] = "one.wav";
  CHECK_THROWS_AS(ManifestFromJson(j, "."), SchemaError);
}

}  // namespace
}  // namespace usdr
