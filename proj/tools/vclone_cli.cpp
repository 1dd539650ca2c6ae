// Copyright (c) 2026 The vclone Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// vclone command line: one subcommand per pipeline stage.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vclone/pipeline.hpp"

namespace {

using vclone::RunConfig;
using vclone::Stage;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::int64_t> steps;
  std::string speaker;
  std::string checkpoint;
  std::string vqvae_checkpoint;
  std::string output;
  std::string phonemes;
  std::string wav;
  std::vector<std::string> mcd_pairs;
};

/// defaults <- --config file <- flags; the chain is echoed to stderr.
RunConfig resolve(const Flags& f, const char* command) {
  RunConfig cfg = vclone::default_run_config();
  std::ostringstream chain;
  chain << "config: defaults";
  if (!f.config.empty()) {
    vclone::read_json(vclone::load_json_file(f.config), f.config, cfg);
    chain << " <- " << f.config;
  }
  if (f.seed) {
    cfg.seed = *f.seed;
    chain << " <- --seed " << *f.seed;
  }
  if (f.out) {
    cfg.out = *f.out;
    chain << " <- --out " << *f.out;
  }
  if (f.steps) {
    if (*f.steps < 0) throw vclone::ConfigError("--steps must be >= 0");
    const std::string c = command;
    vclone::TrainPlan* plan = c == "train-vqvae"     ? &cfg.train_vqvae
                              : c == "train-seq2seq" ? &cfg.train_seq2seq
                              : c == "finetune-tts"  ? &cfg.finetune_tts
                              : c == "finetune-vc"   ? &cfg.finetune_vc
                                                     : nullptr;
    if (!plan) throw vclone::ConfigError(std::string("--steps has no effect on ") + command);
    plan->steps = *f.steps;
    chain << " <- --steps " << *f.steps;
  }
  std::cerr << chain.str() << " (seed " << cfg.seed << ", out " << cfg.out << ")\n";
  return cfg;
}

void write_resolved(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  std::ofstream os(std::filesystem::path(cfg.out) / "config.json");
  os << vclone::to_json(cfg).dump(2) << '\n';
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

std::string output_path(const Flags& f, const RunConfig& cfg, const std::string& stem) {
  if (!f.output.empty()) return f.output;
  const vclone::RunLayout layout(cfg.out);
  std::filesystem::create_directories(layout.synth_dir());
  return (layout.synth_dir() / (stem + ".wav")).string();
}

void report_output(const vclone::Rendered& r, const std::string& path) {
  vclone::save_wav(r.wav, path);
  std::cerr << "wrote " << path << " (" << r.mel.frames << " frames"
            << (r.hit_max_steps ? ", hit the step cap" : "") << ")\n";
}

int run(const std::string& cmd, const Flags& f) {
  if (cmd == "eval-mcd") {
    if (f.mcd_pairs.empty() || f.mcd_pairs.size() % 2 != 0) {
      throw std::invalid_argument("eval-mcd expects REF HYP pairs");
    }
    const RunConfig cfg = resolve(f, cmd.c_str());
    std::cout << "ref,hyp,mcd_db\n" << std::fixed << std::setprecision(4);
    double sum = 0;
    for (std::size_t i = 0; i < f.mcd_pairs.size(); i += 2) {
      const auto a = vclone::mel_spectrogram(vclone::load_wav(f.mcd_pairs[i]), cfg.mel);
      const auto b = vclone::mel_spectrogram(vclone::load_wav(f.mcd_pairs[i + 1]), cfg.mel);
      const double d = vclone::mcd_dtw(a, b);
      sum += d;
      std::cout << f.mcd_pairs[i] << ',' << f.mcd_pairs[i + 1] << ',' << d << '\n';
    }
    std::cout << "mean,," << sum / static_cast<double>(f.mcd_pairs.size() / 2) << '\n';
    return 0;
  }

  const RunConfig cfg = resolve(f, cmd.c_str());
  const vclone::RunLayout layout(cfg.out);
  if (cmd == "gen-corpus") {
    write_resolved(cfg);
    vclone::run_gen_corpus(cfg, std::cerr);
  } else if (cmd == "train-vqvae") {
    vclone::run_train_vqvae<float>(cfg, std::cerr);
  } else if (cmd == "extract-units") {
    vclone::run_extract_units<float>(cfg, std::cerr);
  } else if (cmd == "train-seq2seq") {
    vclone::run_train_seq2seq<float>(cfg, std::cerr);
  } else if (cmd == "finetune-tts" || cmd == "finetune-vc") {
    const Stage st = cmd == "finetune-tts" ? Stage::kFinetuneTts : Stage::kFinetuneVc;
    const auto rep = vclone::run_finetune<float>(cfg, st, std::cerr, f.checkpoint);
    std::cerr << cmd << ": wrote " << rep.final_checkpoint << '\n';
  } else if (cmd == "tts") {
    const auto ckpt = f.checkpoint.empty() ? layout.final_checkpoint(Stage::kFinetuneTts)
                                           : std::filesystem::path(f.checkpoint);
    const auto model = vclone::load_model<vclone::Seq2Seq<float>>(ckpt, Stage::kFinetuneTts);
    const auto r = vclone::run_tts(cfg, model, split_ws(f.phonemes), f.speaker);
    report_output(r, output_path(f, cfg, "tts_" + f.speaker));
  } else if (cmd == "convert") {
    const auto ckpt = f.checkpoint.empty() ? layout.final_checkpoint(Stage::kFinetuneVc)
                                           : std::filesystem::path(f.checkpoint);
    const auto vq_ckpt = f.vqvae_checkpoint.empty() ? layout.final_checkpoint(Stage::kVqVae)
                                                    : std::filesystem::path(f.vqvae_checkpoint);
    const auto model = vclone::load_model<vclone::Seq2Seq<float>>(ckpt, Stage::kFinetuneVc);
    const auto vq = vclone::load_model<vclone::VqVae<float>>(vq_ckpt, Stage::kVqVae);
    const auto r = vclone::run_convert(cfg, vq, model, vclone::load_wav(f.wav), f.speaker);
    report_output(r, output_path(f, cfg,
                                 "vc_" + std::filesystem::path(f.wav).stem().string() + "_" + f.speaker));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vclone: few-shot voice cloning with discrete acoustic units"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "run seed (overrides the config)");
    sub->add_option("--out", f.out, "run directory (overrides the config)");
  };
  auto training = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--steps", f.steps, "number of updates (overrides the config)");
  };

  training(app.add_subcommand("train-vqvae", "train the VQ-VAE on the pretrain split"));
  training(app.add_subcommand("train-seq2seq", "pre-train the seq2seq on phoneme and unit pairs"));
  for (const char* name : {"finetune-tts", "finetune-vc"}) {
    auto* sub = app.add_subcommand(name, std::string(name) == "finetune-tts"
                                             ? "adapt to the target speakers from phoneme pairs"
                                             : "adapt to the target speakers from unit pairs");
    training(sub);
    sub->add_option("--checkpoint", f.checkpoint, "pre-trained seq2seq checkpoint");
  }
  auto* gen = app.add_subcommand("gen-corpus", "synthesize the corpus and split manifests");
  common(gen);
  auto* ext = app.add_subcommand("extract-units", "write per-frame units for every utterance");
  common(ext);

  auto* tts = app.add_subcommand("tts", "synthesize speech from phonemes");
  common(tts);
  tts->add_option("--phonemes", f.phonemes, "space separated phoneme symbols")->required();
  tts->add_option("--speaker", f.speaker, "speaker id")->required();
  tts->add_option("--checkpoint", f.checkpoint, "fine-tuned TTS checkpoint");
  tts->add_option("-o,--output", f.output, "output wav");

  auto* conv = app.add_subcommand("convert", "convert a recording to a target speaker");
  common(conv);
  conv->add_option("--wav", f.wav, "source wav")->required()->check(CLI::ExistingFile);
  conv->add_option("--speaker", f.speaker, "target speaker id")->required();
  conv->add_option("--checkpoint", f.checkpoint, "fine-tuned VC checkpoint");
  conv->add_option("--vqvae", f.vqvae_checkpoint, "VQ-VAE checkpoint");
  conv->add_option("-o,--output", f.output, "output wav");

  auto* mcd = app.add_subcommand("eval-mcd", "mel cepstral distortion between wav pairs");
  common(mcd);
  mcd->add_option("pairs", f.mcd_pairs, "REF HYP [REF HYP ...]")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return run(cmd, f);
  } catch (const vclone::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const vclone::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
