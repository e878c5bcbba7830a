// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/commands.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <thread>

#include "usdr/metrics.h"
#include "usdr/spectral.h"
#include "usdr/speech_synth.h"
#include "usdr/usd_engine.h"
#include "usdr/wpe.h"

namespace usdr {

namespace fs = std::filesystem;
using nlohmann::json;

void ParallelFor(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::max(1, std::min(workers, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto run = [&]() {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

template <typename F>
int Guard(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "usdr: invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "usdr: invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "usdr: " << e.what() << "\n";
    return kExitRuntime;
  }
}

RunConfig LoadConfig(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::Load(path);
}

std::string UttId(int index) {
  std::ostringstream os;
  os << "utt" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

std::string ChannelFile(const std::string& stem, int mic) {
  return stem + "_ch" + std::to_string(mic + 1) + ".wav";
}

json Vec3Json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

json SceneJson(const RoomScene& s, const RIRSet& rirs) {
  json mics = json::array();
  for (const Vec3& m : s.mic_positions) mics.push_back(Vec3Json(m));
  return {{"room_dims", Vec3Json(s.room_dims)},
          {"source_pos", Vec3Json(s.source_pos)},
          {"mic_positions", mics},
          {"t60", s.t60},
          {"sample_rate", s.sample_rate},
          {"direct_delay_samples", rirs.direct_delay}};
}

json LossJson(const LossConfig& l) {
  return {{"K", l.K},
          {"delta", l.delta},
          {"I", l.I},
          {"J", l.J},
          {"garbage_L", l.garbage_L ? json(*l.garbage_L) : json(nullptr)},
          {"alpha", l.alpha},
          {"ref_variant", ToString(l.ref_variant)},
          {"xi", l.xi}};
}

void WriteJson(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
}

// Rejects non-finite numbers, which JSON cannot hold.
json Finite(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

MultichannelUtterance SimulateUtterance(const Waveform& dry, const RunConfig& cfg,
                                        uint64_t index, RoomScene* scene_out) {
  SceneSampler sampler = cfg.scene;
  sampler.seed = cfg.seed;
  RoomScene scene = sampler.SampleScene(index);
  scene.sample_rate = dry.sample_rate;
  if (cfg.t60_override) scene.t60 = *cfg.t60_override;
  scene.Validate();
  const RIRSet rirs = SimulateRir(scene);
  double snr = kNoNoise;
  std::vector<Waveform> noise;
  if (cfg.add_noise) {
    snr = sampler.SampleSnr(index);
    noise = ColoredNoise(scene.num_mics(), dry.size(),
                         DeriveSeed(cfg.seed, "noise", index), dry.sample_rate);
  }
  MultichannelUtterance utt = RenderMixture(dry, rirs, noise, snr, 0, cfg.stft);
  utt.scene = scene;
  if (scene_out) *scene_out = scene;
  return utt;
}

MultichannelUtterance LoadUtterance(const Manifest& manifest,
                                    const ManifestEntry& entry,
                                    const std::vector<int>& mics,
                                    const StftConfig& stft, bool with_truth) {
  const int p = entry.num_mics();
  for (int m : mics)
    if (m < 0 || m >= p)
      throw DomainError("utterance '" + entry.utt_id + "' has " + std::to_string(p) +
                        " mics, mic " + std::to_string(m + 1) + " requested");
  auto ref_it = std::find(mics.begin(), mics.end(), entry.ref_mic);
  if (ref_it == mics.end())
    throw DomainError("mic selection must include the reference mic");
  const int ref = static_cast<int>(ref_it - mics.begin());

  auto read = [&](const std::vector<std::string>& paths) {
    std::vector<Waveform> out;
    for (int m : mics) out.push_back(ReadWavMono(manifest.Resolve(paths[m])));
    return out;
  };
  MultichannelUtterance utt = UtteranceFromMixture(read(entry.mixture_paths), stft, ref);
  if (entry.snr_db) utt.snr_db = *entry.snr_db;
  if (!with_truth) return utt;
  utt.direct_path = read(entry.direct_paths);
  for (const Waveform& w : utt.direct_path) utt.direct_spec.push_back(Stft(w, stft));
  if (!entry.noise_paths.empty()) utt.noise = read(entry.noise_paths);
  if (!entry.rir_paths.empty() && !entry.direct_rir_paths.empty()) {
    RIRSet rirs;
    rirs.full_rir = read(entry.rir_paths);
    rirs.direct_rir = read(entry.direct_rir_paths);
    utt.rirs = std::move(rirs);
  }
  return utt;
}

int CmdSynthDry(const SynthDryOptions& opt, std::ostream& out, std::ostream& err) {
  return Guard(err, [&]() {
    if (opt.count < 1) throw ConfigError("--count must be >= 1");
    SpeechSynthConfig sc;
    sc.duration_s = opt.duration_s;
    sc.Validate();
    for (int i = 0; i < opt.count; ++i) {
      const Waveform w = SynthesizeSpeech(DeriveSeed(opt.seed, "dry", i), sc);
      const fs::path path = fs::path(opt.out_dir) / ("dry_" + UttId(i).substr(3) + ".wav");
      WriteWav(path, w, WavEncoding::kFloat32);
    }
    out << "wrote " << opt.count << " dry signals to " << opt.out_dir << "\n";
    return kExitOk;
  });
}

int CmdSimulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err) {
  return Guard(err, [&]() {
    RunConfig cfg = LoadConfig(opt.config);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.workers) cfg.workers = *opt.workers;
    cfg.Validate();
    if (opt.count < 1) throw ConfigError("--count must be >= 1");

    std::vector<fs::path> dry_files;
    if (fs::is_directory(opt.dry_dir))
      for (const auto& e : fs::directory_iterator(opt.dry_dir))
        if (e.is_regular_file() && e.path().extension() == ".wav")
          dry_files.push_back(e.path());
    if (dry_files.empty()) {
      err << "usdr simulate: no .wav files in dry directory '" << opt.dry_dir << "'\n";
      return kExitUsage;
    }
    std::sort(dry_files.begin(), dry_files.end());

    const fs::path out_dir(opt.out_dir);
    Manifest manifest;
    manifest.base_dir = out_dir;
    manifest.entries.resize(opt.count);
    ParallelFor(opt.count, cfg.workers, [&](int i) {
      const fs::path& dry_path = dry_files[i % dry_files.size()];
      const Waveform dry = ReadWavMono(dry_path);
      RoomScene scene;
      const MultichannelUtterance utt = SimulateUtterance(dry, cfg, i, &scene);
      ManifestEntry& e = manifest.entries[i];
      e.utt_id = UttId(i);
      const fs::path rel(e.utt_id);
      for (int m = 0; m < utt.num_mics(); ++m) {
        auto put = [&](const std::string& stem, const Waveform& w,
                       std::vector<std::string>& list, WavEncoding enc) {
          const std::string name = (rel / ChannelFile(stem, m)).string();
          WriteWav(out_dir / name, w, enc);
          list.push_back(name);
        };
        put("mixture", utt.mixture[m], e.mixture_paths, cfg.wav_encoding);
        put("direct", utt.direct_path[m], e.direct_paths, cfg.wav_encoding);
        if (cfg.add_noise) put("noise", utt.noise[m], e.noise_paths, cfg.wav_encoding);
        put("rir", utt.rirs->full_rir[m], e.rir_paths, WavEncoding::kFloat32);
        put("direct_rir", utt.rirs->direct_rir[m], e.direct_rir_paths,
            WavEncoding::kFloat32);
      }
      e.scene = SceneJson(scene, *utt.rirs);
      e.seed = cfg.seed;
      if (cfg.add_noise) e.snr_db = utt.snr_db;
      e.t60 = scene.t60;
      e.ref_mic = 0;
      e.extra["index"] = i;
      e.extra["dry_path"] = fs::absolute(dry_path).lexically_normal().string();
    });
    manifest.extra["config"] = cfg.ToJson();
    SaveManifest(out_dir / "manifest.json", manifest);
    out << "simulated " << opt.count << " utterances into " << opt.out_dir << "\n";
    return kExitOk;
  });
}

int CmdDereverb(const DereverbOptions& opt, std::ostream& out, std::ostream& err) {
  return Guard(err, [&]() {
    RunConfig cfg = LoadConfig(opt.config);
    if (opt.mics) cfg.mics = *opt.mics;
    if (opt.workers) cfg.workers = *opt.workers;
    cfg.Validate();
    if (opt.system != "wpe" && opt.system != "usd") {
      err << "usdr dereverb: unknown system '" << opt.system
          << "' (expected wpe or usd)\n";
      return kExitUsage;
    }
    if (opt.system == "usd" && cfg.mics == 1 &&
        cfg.loss.ref_variant == RefVariant::kSubtracted) {
      err << "usdr dereverb: refusing single-mic USD with the subtracted reference "
             "filter: with one mic the loss is minimized to zero by copying the "
             "mixture (S = Y makes the residual target zero), so training would "
             "fail; use ref_variant \"full\"\n";
      return kExitUsage;
    }
    const std::vector<int> mics = MicSubset(cfg.mics);
    const Manifest manifest = LoadManifest(opt.manifest);
    const fs::path out_dir(opt.out_dir);
    std::mutex log_mu;
    ParallelFor(static_cast<int>(manifest.entries.size()), cfg.workers, [&](int i) {
      const ManifestEntry& e = manifest.entries[i];
      const MultichannelUtterance utt = LoadUtterance(manifest, e, mics, cfg.stft, false);
      const int q = utt.ref_mic;
      json side;
      side["utt_id"] = e.utt_id;
      side["system"] = opt.system;
      side["mics"] = cfg.mics;
      std::vector<int> one_based;
      for (int m : mics) one_based.push_back(m + 1);
      side["mic_numbers"] = one_based;
      json resolved = cfg.ToJson();
      std::string summary;
      if (opt.system == "wpe") {
        const WpeConfig wcfg = cfg.ResolvedWpe(cfg.mics);
        resolved["wpe"]["taps"] = wcfg.taps;
        const WpeResult res = WpeDereverb(utt.mixture_spec, wcfg);
        const Waveform w = Istft(res.output[q], cfg.stft, utt.num_samples(),
                                 utt.mixture[q].sample_rate);
        WriteWav(out_dir / (e.utt_id + ".wav"), w, WavEncoding::kFloat32);
        side["max_condition"] = Finite(res.max_condition);
        side["degenerate"] = res.degenerate;
        summary = "taps=" + std::to_string(wcfg.taps);
      } else {
        const OptimConfig ocfg = cfg.ResolvedOptim(cfg.mics);
        resolved["loss"] = LossJson(ocfg.loss);
        const DereverbResult res = Optimize(utt, ocfg);
        WriteWav(out_dir / (e.utt_id + ".wav"), res.waveform, WavEncoding::kFloat32);
        WriteWav(out_dir / "subtractive" / (e.utt_id + ".wav"),
                 InferSubtractive(utt, res, ocfg.loss), WavEncoding::kFloat32);
        side["variant"] = res.variant;
        side["loss_trajectory"] = res.trajectory;
        side["outer_losses"] = res.outer_losses;
        side["initial_loss"] = res.initial_loss;
        side["final_loss"] = res.final_loss;
        side["final_closed_form_loss"] = res.final_closed_form_loss;
        side["outer_iterations"] = res.outer_iterations;
        side["converged"] = res.converged;
        side["diverged"] = res.diverged;
        side["max_condition"] = Finite(res.max_condition);
        std::ostringstream os;
        os << "loss " << res.initial_loss << " -> " << res.final_loss;
        summary = os.str();
      }
      side["config"] = resolved;
      WriteJson(out_dir / (e.utt_id + ".json"), side);
      std::lock_guard<std::mutex> lock(log_mu);
      out << e.utt_id << ": " << opt.system << " " << summary << "\n";
    });
    return kExitOk;
  });
}

int CmdEval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return Guard(err, [&]() {
    const Manifest manifest = LoadManifest(opt.manifest);
    if (manifest.entries.empty()) {
      err << "usdr eval: manifest has no utterances\n";
      return kExitRuntime;
    }
    std::vector<EvalReference> refs;
    for (const ManifestEntry& e : manifest.entries) {
      EvalReference r;
      r.utt_id = e.utt_id;
      r.reference = ReadWavMono(manifest.Resolve(e.direct_paths[e.ref_mic]));
      r.mixture = ReadWavMono(manifest.Resolve(e.mixture_paths[e.ref_mic]));
      refs.push_back(std::move(r));
    }
    std::vector<SystemOutputs> systems;
    json sys_json = json::object();
    for (const std::string& spec : opt.enhanced_dirs) {
      SystemOutputs s;
      fs::path dir;
      const auto eq = spec.find('=');
      if (eq != std::string::npos) {
        s.name = spec.substr(0, eq);
        dir = spec.substr(eq + 1);
      } else {
        dir = spec;
        s.name = fs::path(spec).lexically_normal().filename().string();
        if (s.name.empty()) s.name = fs::path(spec).parent_path().filename().string();
      }
      if (s.name.empty() || s.name == "mixture")
        throw ConfigError("invalid system name for '" + spec + "'");
      for (const EvalReference& r : refs) {
        const fs::path f = dir / (r.utt_id + ".wav");
        if (fs::exists(f)) s.outputs[r.utt_id] = ReadWavMono(f);
      }
      sys_json[s.name] = dir.string();
      systems.push_back(std::move(s));
    }
    EvalReport report = EvaluateCorpus(refs, systems);
    report.config = {{"manifest", opt.manifest},
                     {"systems", sys_json},
                     {"reference", "direct path at the reference mic"},
                     {"time_alignment", "none"}};
    const fs::path csv(opt.out);
    WriteText(csv, report.ToCsv());
    fs::path json_path = csv;
    json_path.replace_extension(".json");
    WriteJson(json_path, report.ToJson());
    for (const auto& [name, mean] : report.system_mean)
      out << std::left << std::setw(16) << name << " mean SI-SDR " << std::fixed
          << std::setprecision(2) << mean << " dB over " << report.system_count[name]
          << " utterances\n";
    if (!report.missing.empty()) {
      err << "usdr eval: missing outputs:";
      for (const std::string& m : report.missing) err << " " << m;
      err << "\n";
      return kExitRuntime;
    }
    return kExitOk;
  });
}

namespace {

std::string Sparkline(const std::vector<LossCurvePoint>& pts) {
  static const char* const kBars[] = {"▁", "▂", "▃", "▄",
                                      "▅", "▆", "▇", "█"};
  if (pts.empty()) return "";
  double lo = pts[0].loss_total, hi = lo;
  for (const LossCurvePoint& p : pts) {
    lo = std::min(lo, p.loss_total);
    hi = std::max(hi, p.loss_total);
  }
  const size_t width = 60;
  std::string s;
  for (size_t i = 0; i < std::min(width, pts.size()); ++i) {
    const size_t k = pts.size() <= width ? i : i * (pts.size() - 1) / (width - 1);
    const double u = hi > lo ? (pts[k].loss_total - lo) / (hi - lo) : 0.0;
    s += kBars[std::min(7, static_cast<int>(u * 8.0))];
  }
  return s;
}

}  // namespace

int CmdLossCurve(const LossCurveOptions& opt, std::ostream& out, std::ostream& err) {
  return Guard(err, [&]() {
    RunConfig cfg = LoadConfig(opt.config);
    if (opt.workers) cfg.workers = *opt.workers;
    cfg.Validate();
    if (opt.tau_step < 1) throw ConfigError("--tau-step must be >= 1");
    LossConfig loss = cfg.loss;
    // Defaults follow the reference configuration of the loss-curve
    // experiment: unit mic weight, full reference filter, no garbage.
    if (cfg.alpha_auto) loss.alpha = 1.0;
    loss.garbage_L.reset();

    const Manifest manifest = LoadManifest(opt.manifest);
    const ManifestEntry* e = manifest.Find(opt.utt_id);
    if (!e) {
      err << "usdr losscurve: unknown utterance id '" << opt.utt_id << "'\n";
      return kExitUsage;
    }
    if (e->rir_paths.empty() || e->direct_rir_paths.empty())
      throw DomainError("utterance '" + e->utt_id + "' has no ground-truth RIRs");
    std::vector<int> mics;
    if (opt.mics) {
      mics = MicSubset(*opt.mics);
    } else {
      for (int m = 0; m < e->num_mics(); ++m) mics.push_back(m);
    }
    const MultichannelUtterance utt = LoadUtterance(manifest, *e, mics, cfg.stft, true);
    const int q = utt.ref_mic;
    const int rel_len = utt.rirs->full_rir[q].size() + utt.rirs->direct_rir[q].size() - 1;
    int tau_max = opt.tau_max.value_or(
        std::max(1, static_cast<int>(std::lround(e->t60 * utt.mixture[q].sample_rate))));
    tau_max = std::clamp(tau_max, 1, rel_len);
    const std::vector<int> grid = TauGrid(tau_max, opt.tau_step);

    // Split the grid into contiguous chunks, one per worker.
    const int chunks = std::max(1, std::min<int>(cfg.workers, grid.size()));
    std::vector<LossCurve> parts(chunks);
    ParallelFor(chunks, cfg.workers, [&](int c) {
      const size_t b = grid.size() * c / chunks, end = grid.size() * (c + 1) / chunks;
      parts[c] = ComputeLossCurve(
          utt, std::vector<int>(grid.begin() + b, grid.begin() + end), loss);
    });
    LossCurve curve = parts[0];
    for (int c = 1; c < chunks; ++c)
      curve.points.insert(curve.points.end(), parts[c].points.begin(),
                          parts[c].points.end());

    const fs::path csv(opt.out);
    WriteText(csv, curve.ToCsv());
    fs::path meta = csv;
    meta.replace_extension(".json");
    WriteJson(meta, {{"utt_id", e->utt_id},
                     {"loss", LossJson(loss)},
                     {"mics", mics.size()},
                     {"tau_step", opt.tau_step},
                     {"tau_max", tau_max},
                     {"t60", e->t60},
                     {"relative_rir_length", curve.relative_rir_length},
                     {"floored_bins", curve.floored_bins},
                     {"points", curve.points.size()}});
    out << "wrote " << curve.points.size() << " points to " << opt.out << "\n";
    if (opt.sparkline) out << Sparkline(curve.points) << "\n";
    return kExitOk;
  });
}

}  // namespace usdr
