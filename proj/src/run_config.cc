// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/run_config.h"

#include <fstream>
#include <set>

namespace usdr {

namespace {

using nlohmann::json;

// Reads optional keys of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config '" + name_ + "' must be an object");
  }

  bool Has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void Get(const std::string& key, T& out) {
    if (!Has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  // Number, or the string "auto" (sets *is_auto).
  template <typename T>
  void GetAuto(const std::string& key, T& out, bool& is_auto) {
    if (!Has(key)) return;
    const json& v = j_.at(key);
    if (v.is_string() && v.get<std::string>() == "auto") {
      is_auto = true;
      return;
    }
    is_auto = false;
    Get(key, out);
  }

  const json& Sub(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void Finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw ConfigError("unknown config key '" + name_ + "." + key + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

json Pair(double a, double b) { return json::array({a, b}); }

void ReadPair(Section& s, const std::string& key, double& lo, double& hi) {
  std::vector<double> v{lo, hi};
  s.Get(key, v);
  if (v.size() != 2) throw ConfigError("config key '" + key + "' needs [min, max]");
  lo = v[0];
  hi = v[1];
}

void ReadVec3(Section& s, const std::string& key, Vec3& out) {
  std::vector<double> v(out.begin(), out.end());
  s.Get(key, v);
  if (v.size() != 3) throw ConfigError("config key '" + key + "' needs 3 values");
  out = {v[0], v[1], v[2]};
}

}  // namespace

std::vector<int> MicSubset(int num_mics) {
  switch (num_mics) {
    case 1: return {0};
    case 2: return {0, 3};
    case 4: return {0, 2, 4, 6};
    case 8: return {0, 1, 2, 3, 4, 5, 6, 7};
  }
  throw ConfigError("mic subset size must be 1, 2, 4 or 8, got " +
                    std::to_string(num_mics));
}

void RunConfig::Validate() const {
  scene.Validate();
  if (t60_override && !(*t60_override >= 0.05 && *t60_override <= 2.0))
    throw ConfigError("t60 override must lie in [0.05, 2.0] s");
  synth.Validate();
  stft.Validate();
  loss.Validate();
  optim.Validate();
  wpe.Validate();
  MicSubset(mics);
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

LossConfig RunConfig::ResolvedLoss(int num_mics) const {
  LossConfig l = loss;
  if (alpha_auto) l.alpha = LossConfig::DefaultAlpha(num_mics);
  return l;
}

OptimConfig RunConfig::ResolvedOptim(int num_mics) const {
  OptimConfig o = optim;
  o.loss = ResolvedLoss(num_mics);
  o.seed = DeriveSeed(seed, "optimizer", 0);
  return o;
}

WpeConfig RunConfig::ResolvedWpe(int num_mics) const {
  WpeConfig w = wpe;
  if (wpe_taps_auto) w.taps = WpeConfig::ForChannels(num_mics).taps;
  return w;
}

json RunConfig::ToJson() const {
  json j;
  j["seed"] = seed;
  j["scene"] = {
      {"t60_range", Pair(scene.t60_min, scene.t60_max)},
      {"dist_range", Pair(scene.dist_min, scene.dist_max)},
      {"snr_range", Pair(scene.snr_min, scene.snr_max)},
      {"num_mics", scene.num_mics},
      {"array_diameter", scene.array_diameter},
      {"room_min", scene.room_min},
      {"room_max", scene.room_max},
      {"t60_override", t60_override ? json(*t60_override) : json(nullptr)},
      {"add_noise", add_noise}};
  j["synth"] = {{"duration_s", synth.duration_s},
                {"sample_rate", synth.sample_rate},
                {"peak", synth.peak},
                {"voiced_prob", synth.voiced_prob},
                {"fricative_prob", synth.fricative_prob},
                {"f0_range", Pair(synth.f0_min, synth.f0_max)},
                {"jitter", synth.jitter}};
  j["stft"] = {{"window_len", stft.window_len},
               {"hop_len", stft.hop_len},
               {"dft_size", stft.dft_size},
               {"window", "sqrt_hann"}};
  j["loss"] = {{"K", loss.K},
               {"delta", loss.delta},
               {"I", loss.I},
               {"J", loss.J},
               {"garbage_L", loss.garbage_L ? json(*loss.garbage_L) : json(nullptr)},
               {"alpha", alpha_auto ? json("auto") : json(loss.alpha)},
               {"ref_variant", ToString(loss.ref_variant)},
               {"xi", loss.xi}};
  j["optim"] = {{"kind", ToString(optim.kind)},
                {"init", ToString(optim.init)},
                {"max_outer_iters", optim.max_outer_iters},
                {"mask_steps", optim.mask_steps},
                {"step_size", optim.step_size},
                {"step_decay", optim.step_decay},
                {"max_halvings", optim.max_halvings},
                {"convergence_tol", optim.convergence_tol},
                {"garbage_init", optim.garbage_init},
                {"init_jitter", optim.init_jitter},
                {"monotone_refresh", optim.monotone_refresh},
                {"increase_tol", optim.increase_tol},
                {"divergence_patience", optim.divergence_patience}};
  j["wpe"] = {{"taps", wpe_taps_auto ? json("auto") : json(wpe.taps)},
              {"delay", wpe.delay},
              {"iterations", wpe.iterations},
              {"psd_floor", wpe.psd_floor}};
  j["mics"] = mics;
  j["workers"] = workers;
  j["wav_encoding"] = ToString(wav_encoding);
  return j;
}

RunConfig RunConfig::FromJson(const json& j) {
  RunConfig c;
  Section root(j, "config");
  root.Get("seed", c.seed);
  root.Get("mics", c.mics);
  root.Get("workers", c.workers);
  if (root.Has("wav_encoding"))
    c.wav_encoding = ParseWavEncoding(j.at("wav_encoding").get<std::string>());
  if (root.Has("scene")) {
    Section s(root.Sub("scene"), "scene");
    ReadPair(s, "t60_range", c.scene.t60_min, c.scene.t60_max);
    ReadPair(s, "dist_range", c.scene.dist_min, c.scene.dist_max);
    ReadPair(s, "snr_range", c.scene.snr_min, c.scene.snr_max);
    s.Get("num_mics", c.scene.num_mics);
    s.Get("array_diameter", c.scene.array_diameter);
    ReadVec3(s, "room_min", c.scene.room_min);
    ReadVec3(s, "room_max", c.scene.room_max);
    if (s.Has("t60_override") && !j["scene"]["t60_override"].is_null()) {
      double t = 0;
      s.Get("t60_override", t);
      c.t60_override = t;
    }
    s.Get("add_noise", c.add_noise);
    s.Finish();
  }
  if (root.Has("synth")) {
    Section s(root.Sub("synth"), "synth");
    s.Get("duration_s", c.synth.duration_s);
    s.Get("sample_rate", c.synth.sample_rate);
    s.Get("peak", c.synth.peak);
    s.Get("voiced_prob", c.synth.voiced_prob);
    s.Get("fricative_prob", c.synth.fricative_prob);
    ReadPair(s, "f0_range", c.synth.f0_min, c.synth.f0_max);
    s.Get("jitter", c.synth.jitter);
    s.Finish();
  }
  if (root.Has("stft")) {
    Section s(root.Sub("stft"), "stft");
    s.Get("window_len", c.stft.window_len);
    s.Get("hop_len", c.stft.hop_len);
    s.Get("dft_size", c.stft.dft_size);
    std::string window = "sqrt_hann";
    s.Get("window", window);
    if (window != "sqrt_hann") throw ConfigError("only the sqrt_hann window is supported");
    s.Finish();
  }
  if (root.Has("loss")) {
    Section s(root.Sub("loss"), "loss");
    s.Get("K", c.loss.K);
    s.Get("delta", c.loss.delta);
    s.Get("I", c.loss.I);
    s.Get("J", c.loss.J);
    if (s.Has("garbage_L") && !j["loss"]["garbage_L"].is_null()) {
      int l = 0;
      s.Get("garbage_L", l);
      c.loss.garbage_L = l;
    }
    s.GetAuto("alpha", c.loss.alpha, c.alpha_auto);
    if (s.Has("ref_variant"))
      c.loss.ref_variant = ParseRefVariant(j["loss"]["ref_variant"].get<std::string>());
    s.Get("xi", c.loss.xi);
    s.Finish();
  }
  if (root.Has("optim")) {
    Section s(root.Sub("optim"), "optim");
    const json& o = j["optim"];
    if (s.Has("kind")) c.optim.kind = ParseEstimatorKind(o["kind"].get<std::string>());
    if (s.Has("init")) c.optim.init = ParseInitKind(o["init"].get<std::string>());
    s.Get("max_outer_iters", c.optim.max_outer_iters);
    s.Get("mask_steps", c.optim.mask_steps);
    s.Get("step_size", c.optim.step_size);
    s.Get("step_decay", c.optim.step_decay);
    s.Get("max_halvings", c.optim.max_halvings);
    s.Get("convergence_tol", c.optim.convergence_tol);
    s.Get("garbage_init", c.optim.garbage_init);
    s.Get("init_jitter", c.optim.init_jitter);
    s.Get("monotone_refresh", c.optim.monotone_refresh);
    s.Get("increase_tol", c.optim.increase_tol);
    s.Get("divergence_patience", c.optim.divergence_patience);
    s.Finish();
  }
  if (root.Has("wpe")) {
    Section s(root.Sub("wpe"), "wpe");
    s.GetAuto("taps", c.wpe.taps, c.wpe_taps_auto);
    s.Get("delay", c.wpe.delay);
    s.Get("iterations", c.wpe.iterations);
    s.Get("psd_floor", c.wpe.psd_floor);
    s.Finish();
  }
  root.Finish();
  c.optim.loss = c.loss;
  c.Validate();
  return c;
}

RunConfig RunConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return FromJson(j);
}

}  // namespace usdr
