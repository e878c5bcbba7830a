// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// usdr: simulate reverberant corpora, dereverberate them and score results.

#include <iostream>

#include "CLI11.hpp"
#include "usdr/commands.h"

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised multi-microphone speech dereverberation"};
  app.require_subcommand(1);

  usdr::SimulateOptions sim;
  std::optional<uint64_t> sim_seed;
  CLI::App* simulate = app.add_subcommand("simulate", "render a reverberant corpus");
  simulate->add_option("--config", sim.config, "run configuration JSON");
  simulate->add_option("--dry-dir", sim.dry_dir, "directory of dry mono WAVs")->required();
  simulate->add_option("--out-dir", sim.out_dir, "output directory")->required();
  simulate->add_option("--count", sim.count, "number of utterances");
  simulate->add_option("--seed", sim_seed, "overrides the config seed");
  simulate->add_option("--workers", sim.workers, "parallel workers");

  usdr::SynthDryOptions dry;
  CLI::App* synth = app.add_subcommand("synth-dry", "write synthetic dry speech-like signals");
  synth->add_option("--out-dir", dry.out_dir, "output directory")->required();
  synth->add_option("--count", dry.count, "number of signals");
  synth->add_option("--seed", dry.seed, "random seed");
  synth->add_option("--duration", dry.duration_s, "seconds per signal");

  usdr::DereverbOptions der;
  CLI::App* dereverb = app.add_subcommand("dereverb", "dereverberate every manifest entry");
  dereverb->add_option("--manifest", der.manifest, "corpus manifest")->required();
  dereverb->add_option("--system", der.system, "wpe or usd")->required();
  dereverb->add_option("--config", der.config, "run configuration JSON");
  dereverb->add_option("--out-dir", der.out_dir, "output directory")->required();
  dereverb->add_option("--mics", der.mics, "mic subset size: 1, 2, 4 or 8");
  dereverb->add_option("--workers", der.workers, "parallel workers");

  usdr::EvalOptions ev;
  CLI::App* eval = app.add_subcommand("eval", "SI-SDR of enhanced outputs");
  eval->add_option("--manifest", ev.manifest, "corpus manifest")->required();
  eval->add_option("--enhanced-dir", ev.enhanced_dirs, "output directory, or name=dir")
      ->required();
  eval->add_option("--out", ev.out, "CSV report (a JSON summary is written next to it)")
      ->required();

  usdr::LossCurveOptions lc;
  CLI::App* losscurve =
      app.add_subcommand("losscurve", "loss of truncated-RIR estimates versus tau");
  losscurve->add_option("--manifest", lc.manifest, "corpus manifest")->required();
  losscurve->add_option("--utt-id", lc.utt_id, "utterance id")->required();
  losscurve->add_option("--config", lc.config, "run configuration JSON");
  losscurve->add_option("--tau-step", lc.tau_step, "tau spacing in samples");
  losscurve->add_option("--tau-max", lc.tau_max, "largest tau in samples");
  losscurve->add_option("--mics", lc.mics, "mic subset size: 1, 2, 4 or 8");
  losscurve->add_option("--out", lc.out, "CSV output")->required();
  losscurve->add_flag("--sparkline", lc.sparkline, "print a text sparkline");
  losscurve->add_option("--workers", lc.workers, "parallel workers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : usdr::kExitUsage;
  }

  if (*simulate) {
    sim.seed = sim_seed;
    return usdr::CmdSimulate(sim, std::cout, std::cerr);
  }
  if (*synth) return usdr::CmdSynthDry(dry, std::cout, std::cerr);
  if (*dereverb) return usdr::CmdDereverb(der, std::cout, std::cerr);
  if (*eval) return usdr::CmdEval(ev, std::cout, std::cerr);
  return usdr::CmdLossCurve(lc, std::cout, std::cerr);
}
