// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/audio_io.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace usdr {

namespace fs = std::filesystem;

std::string ToString(WavEncoding e) {
  return e == WavEncoding::kPcm16 ? "pcm16" : "float32";
}

WavEncoding ParseWavEncoding(const std::string& s) {
  if (s == "pcm16") return WavEncoding::kPcm16;
  if (s == "float32") return WavEncoding::kFloat32;
  throw ConfigError("unknown WAV encoding '" + s + "'");
}

namespace {

constexpr uint16_t kTagPcm = 1;
constexpr uint16_t kTagFloat = 3;
constexpr uint16_t kTagExtensible = 0xFFFE;

uint16_t U16(const unsigned char* p) { return p[0] | (p[1] << 8); }
uint32_t U32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void Put16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void Put32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::string Describe(uint16_t tag, uint16_t bits) {
  if (tag == kTagPcm) return "pcm" + std::to_string(bits);
  if (tag == kTagFloat) return "float" + std::to_string(bits);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "format tag 0x%04X", tag);
  return buf;
}

}  // namespace

std::vector<Waveform> ReadWav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open WAV file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const size_t n = bytes.size();
  const std::string where = " in " + path.string();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw ParseError("not a RIFF/WAVE file" + where);

  bool have_fmt = false;
  uint16_t tag = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t pos = 12;
  while (pos + 8 <= n) {
    const uint32_t size = U32(p + pos + 4);
    const size_t body = pos + 8;
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16 || body + size > n) throw ParseError("truncated fmt chunk" + where);
      tag = U16(p + body);
      channels = U16(p + body + 2);
      rate = U32(p + body + 4);
      bits = U16(p + body + 14);
      if (tag == kTagExtensible) {
        if (size < 40) throw ParseError("truncated extensible fmt chunk" + where);
        tag = U16(p + body + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw ParseError("data chunk before fmt chunk" + where);
      if (!((tag == kTagPcm && bits == 16) || (tag == kTagFloat && bits == 32)))
        throw UnsupportedEncodingError(Describe(tag, bits));
      if (channels == 0) throw ParseError("zero channels" + where);
      if (rate == 0) throw ParseError("zero sample rate" + where);
      if (body + size > n) throw ParseError("truncated data chunk" + where);
      const size_t frame_bytes = static_cast<size_t>(channels) * (bits / 8);
      if (size % frame_bytes != 0) throw ParseError("partial sample frame" + where);
      const size_t frames = size / frame_bytes;
      std::vector<Waveform> out(channels);
      for (Waveform& w : out) {
        w.sample_rate = static_cast<int>(rate);
        w.samples.resize(frames);
      }
      const unsigned char* d = p + body;
      for (size_t i = 0; i < frames; ++i) {
        for (int c = 0; c < channels; ++c) {
          const unsigned char* s = d + (i * channels + c) * (bits / 8);
          if (bits == 16) {
            const auto v = static_cast<int16_t>(U16(s));
            out[c].samples[i] = v / 32767.0;
          } else {
            const uint32_t u = U32(s);
            float f;
            std::memcpy(&f, &u, sizeof(f));
            out[c].samples[i] = f;
          }
        }
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw ParseError("no data chunk" + where);
}

Waveform ReadWavMono(const fs::path& path) {
  std::vector<Waveform> ch = ReadWav(path);
  if (ch.size() != 1)
    throw ParseError("expected a mono WAV, got " + std::to_string(ch.size()) +
                     " channels in " + path.string());
  return std::move(ch[0]);
}

void WriteWav(const fs::path& path, const std::vector<Waveform>& channels,
              WavEncoding encoding) {
  if (channels.empty()) throw DomainError("cannot write a WAV with no channels");
  const size_t frames = channels[0].samples.size();
  const int rate = channels[0].sample_rate;
  for (const Waveform& w : channels)
    if (w.samples.size() != frames || w.sample_rate != rate)
      throw ShapeError("WAV channels differ in length or sample rate");
  if (rate <= 0) throw DomainError("sample rate must be positive");
  const uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const uint16_t nch = static_cast<uint16_t>(channels.size());
  const uint32_t data_size = static_cast<uint32_t>(frames * nch * (bits / 8));

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  Put32(out, 36 + data_size);
  out += "WAVEfmt ";
  Put32(out, 16);
  Put16(out, encoding == WavEncoding::kPcm16 ? kTagPcm : kTagFloat);
  Put16(out, nch);
  Put32(out, rate);
  Put32(out, rate * nch * (bits / 8));
  Put16(out, nch * (bits / 8));
  Put16(out, bits);
  out += "data";
  Put32(out, data_size);
  for (size_t i = 0; i < frames; ++i) {
    for (const Waveform& w : channels) {
      const double v = w.samples[i];
      if (!std::isfinite(v)) throw DomainError("cannot write non-finite samples");
      if (encoding == WavEncoding::kPcm16) {
        const long q = std::lrint(std::clamp(v, -1.0, 1.0) * 32767.0);
        Put16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
      } else {
        const float f = static_cast<float>(v);
        uint32_t u;
        std::memcpy(&u, &f, sizeof(u));
        Put32(out, u);
      }
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error("failed writing " + path.string());
}

void WriteWav(const fs::path& path, const Waveform& wave, WavEncoding encoding) {
  WriteWav(path, std::vector<Waveform>{wave}, encoding);
}

fs::path Manifest::Resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

const ManifestEntry* Manifest::Find(const std::string& utt_id) const {
  for (const ManifestEntry& e : entries)
    if (e.utt_id == utt_id) return &e;
  return nullptr;
}

namespace {

const char* const kEntryKeys[] = {"utt_id",    "mixture_paths", "direct_paths",
                                  "noise_paths", "rir_paths",   "direct_rir_paths",
                                  "scene",     "seed",          "snr_db",
                                  "t60",       "ref_mic"};

const nlohmann::json& Require(const nlohmann::json& obj, const std::string& key,
                              const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw SchemaError("manifest " + where + " is missing required key '" + key + "'");
  return *it;
}

template <typename T>
T As(const nlohmann::json& v, const std::string& key, const std::string& where) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("manifest " + where + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace

nlohmann::json ManifestToJson(const Manifest& m) {
  nlohmann::json j = m.extra;
  j["schema"] = kManifestSchema;
  nlohmann::json entries = nlohmann::json::array();
  for (const ManifestEntry& e : m.entries) {
    nlohmann::json o = e.extra;
    o["utt_id"] = e.utt_id;
    o["mixture_paths"] = e.mixture_paths;
    o["direct_paths"] = e.direct_paths;
    o["noise_paths"] = e.noise_paths;
    o["rir_paths"] = e.rir_paths;
    o["direct_rir_paths"] = e.direct_rir_paths;
    o["scene"] = e.scene;
    o["seed"] = e.seed;
    o["snr_db"] = e.snr_db ? nlohmann::json(*e.snr_db) : nlohmann::json(nullptr);
    o["t60"] = e.t60;
    o["ref_mic"] = e.ref_mic;
    entries.push_back(std::move(o));
  }
  j["entries"] = entries;
  return j;
}

Manifest ManifestFromJson(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw SchemaError("manifest root must be a JSON object");
  const nlohmann::json& schema = Require(j, "schema", "root");
  if (!schema.is_number_integer() || schema.get<int>() != kManifestSchema)
    throw SchemaError("manifest schema " + schema.dump() + " is not supported (expected " +
                      std::to_string(kManifestSchema) + ")");
  Manifest m;
  m.base_dir = base_dir;
  const nlohmann::json& entries = Require(j, "entries", "root");
  if (!entries.is_array()) throw SchemaError("manifest 'entries' must be an array");
  for (const auto& [key, value] : j.items())
    if (key != "schema" && key != "entries") m.extra[key] = value;

  for (size_t i = 0; i < entries.size(); ++i) {
    const nlohmann::json& o = entries[i];
    std::string where = "entry " + std::to_string(i);
    if (!o.is_object()) throw SchemaError("manifest " + where + " is not an object");
    ManifestEntry e;
    e.utt_id = As<std::string>(Require(o, "utt_id", where), "utt_id", where);
    where += " ('" + e.utt_id + "')";
    e.mixture_paths = As<std::vector<std::string>>(
        Require(o, "mixture_paths", where), "mixture_paths", where);
    e.direct_paths = As<std::vector<std::string>>(
        Require(o, "direct_paths", where), "direct_paths", where);
    e.noise_paths = As<std::vector<std::string>>(Require(o, "noise_paths", where),
                                                 "noise_paths", where);
    e.scene = Require(o, "scene", where);
    e.seed = As<uint64_t>(Require(o, "seed", where), "seed", where);
    const nlohmann::json& snr = Require(o, "snr_db", where);
    if (!snr.is_null()) e.snr_db = As<double>(snr, "snr_db", where);
    if (o.contains("rir_paths"))
      e.rir_paths = As<std::vector<std::string>>(o["rir_paths"], "rir_paths", where);
    if (o.contains("direct_rir_paths"))
      e.direct_rir_paths = As<std::vector<std::string>>(o["direct_rir_paths"],
                                                        "direct_rir_paths", where);
    if (o.contains("t60")) e.t60 = As<double>(o["t60"], "t60", where);
    if (o.contains("ref_mic")) e.ref_mic = As<int>(o["ref_mic"], "ref_mic", where);
    for (const auto& [key, value] : o.items())
      if (std::find(std::begin(kEntryKeys), std::end(kEntryKeys), key) ==
          std::end(kEntryKeys))
        e.extra[key] = value;

    const size_t p = e.mixture_paths.size();
    if (p == 0) throw SchemaError("manifest " + where + " has no mixture paths");
    auto consistent = [p](const std::vector<std::string>& v) {
      return v.empty() || v.size() == p;
    };
    if (e.direct_paths.size() != p || !consistent(e.noise_paths) ||
        !consistent(e.rir_paths) || !consistent(e.direct_rir_paths))
      throw SchemaError("manifest " + where + " lists inconsistent channel counts");
    if (e.ref_mic < 0 || e.ref_mic >= static_cast<int>(p))
      throw SchemaError("manifest " + where + " has ref_mic out of range");
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest LoadManifest(const fs::path& path, bool check_paths) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  Manifest m = ManifestFromJson(j, path.parent_path());
  if (check_paths) {
    for (const ManifestEntry& e : m.entries) {
      for (const auto* list : {&e.mixture_paths, &e.direct_paths, &e.noise_paths,
                               &e.rir_paths, &e.direct_rir_paths})
        for (const std::string& f : *list)
          if (!fs::exists(m.Resolve(f)))
            throw ParseError("manifest entry '" + e.utt_id + "' references missing file " +
                             f);
    }
  }
  return m;
}

void SaveManifest(const fs::path& path, const Manifest& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << ManifestToJson(m).dump(2) << "\n";
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace usdr
