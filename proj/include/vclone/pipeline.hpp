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

// Run configuration, on-disk layout and one entry point per pipeline stage.

#ifndef VCLONE_PIPELINE_HPP_
#define VCLONE_PIPELINE_HPP_

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "vclone/config.hpp"
#include "vclone/corpus.hpp"
#include "vclone/dsp.hpp"
#include "vclone/seq2seq.hpp"
#include "vclone/serialize.hpp"
#include "vclone/trainer.hpp"
#include "vclone/units.hpp"
#include "vclone/vqvae.hpp"

namespace vclone {

class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SplitConfig {
  std::vector<std::string> pretrain = {"spk00", "spk01", "spk02", "spk03"};
  std::vector<std::string> target = {"spk04", "spk05"};
  std::vector<std::string> source = {"spk06", "spk07"};
  double seconds_per_target = 120.0;
};

inline Json to_json(const SplitConfig& s) {
  return {{"pretrain", s.pretrain},
          {"target", s.target},
          {"source", s.source},
          {"seconds_per_target", s.seconds_per_target}};
}

inline void read_json(const Json& j, const std::string& where, SplitConfig& s) {
  StrictReader(j, where)
      .get("pretrain", s.pretrain)
      .get("target", s.target)
      .get("source", s.source)
      .get("seconds_per_target", s.seconds_per_target)
      .finish();
}

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "run";
  SyntheticSpec corpus;
  SplitConfig split;
  MelConfig mel;
  VqVaeConfig vqvae;
  Seq2SeqConfig seq2seq;
  TrainPlan train_vqvae, train_seq2seq, finetune_tts, finetune_vc;
  int griffin_lim_iters = 60;
};

/// Desk-scale defaults.
inline RunConfig default_run_config() {
  RunConfig c;
  c.corpus.utts_per_speaker = 80;
  c.mel.n_mels = 40;
  c.train_vqvae.stage = Stage::kVqVae;
  c.train_vqvae.steps = 2000;
  c.train_seq2seq.stage = Stage::kSeq2Seq;
  c.train_seq2seq.steps = 2000;
  for (TrainPlan* p : {&c.finetune_tts, &c.finetune_vc}) {
    p->steps = 300;
    p->schedule = LrSchedule::constant(1e-4);
    p->checkpoint_every = 100;
  }
  c.finetune_tts.stage = Stage::kFinetuneTts;
  c.finetune_tts.frozen = default_frozen(Stage::kFinetuneTts);
  c.finetune_vc.stage = Stage::kFinetuneVc;
  c.finetune_vc.frozen = default_frozen(Stage::kFinetuneVc);
  return c;
}

inline Json to_json(const RunConfig& c) {
  Json corpus = to_json(c.corpus);
  corpus.erase("seed");
  return {{"seed", c.seed},
          {"out", c.out},
          {"corpus", corpus},
          {"split", to_json(c.split)},
          {"mel", to_json(c.mel)},
          {"vqvae", to_json(c.vqvae)},
          {"seq2seq", to_json(c.seq2seq)},
          {"train_vqvae", to_json(c.train_vqvae)},
          {"train_seq2seq", to_json(c.train_seq2seq)},
          {"finetune_tts", to_json(c.finetune_tts)},
          {"finetune_vc", to_json(c.finetune_vc)},
          {"griffin_lim_iters", c.griffin_lim_iters}};
}

inline void validate(const RunConfig& c) {
  if (c.vqvae.n_mels != c.mel.n_mels || c.seq2seq.n_mels != c.mel.n_mels) {
    throw ConfigError("mel.n_mels (" + std::to_string(c.mel.n_mels) + "), vqvae.n_mels (" +
                      std::to_string(c.vqvae.n_mels) + ") and seq2seq.n_mels (" +
                      std::to_string(c.seq2seq.n_mels) + ") must agree");
  }
  if (c.mel.sample_rate != c.corpus.sample_rate || c.mel.hop_length != c.corpus.hop_length) {
    throw ConfigError("mel and corpus disagree on sample_rate or hop_length");
  }
  const std::pair<const TrainPlan*, Stage> plans[] = {{&c.train_vqvae, Stage::kVqVae},
                                                      {&c.train_seq2seq, Stage::kSeq2Seq},
                                                      {&c.finetune_tts, Stage::kFinetuneTts},
                                                      {&c.finetune_vc, Stage::kFinetuneVc}};
  for (const auto& [p, st] : plans) {
    if (p->stage != st) {
      throw ConfigError(std::string("plan for ") + stage_name(st) + " declares stage " +
                        stage_name(p->stage));
    }
  }
  if (c.griffin_lim_iters < 1) throw ConfigError("griffin_lim_iters must be >= 1");
}

/// Overrides `c` with the keys present in `j`; unknown keys are rejected.
inline void read_json(const Json& j, const std::string& where, RunConfig& c) {
  auto plan = [](TrainPlan& p) {
    return [&p](const Json& s, const std::string& w) { read_json(s, w, p); };
  };
  StrictReader(j, where)
      .get("seed", c.seed)
      .get("out", c.out)
      .nested("corpus",
              [&](const Json& s, const std::string& w) {
                if (s.contains("seed")) throw ConfigError(w + ".seed: use the top-level seed");
                read_json(s, w, c.corpus);
              })
      .nested("split", [&](const Json& s, const std::string& w) { read_json(s, w, c.split); })
      .nested("mel", [&](const Json& s, const std::string& w) { read_json(s, w, c.mel); })
      .nested("vqvae", [&](const Json& s, const std::string& w) { read_json(s, w, c.vqvae); })
      .nested("seq2seq", [&](const Json& s, const std::string& w) { read_json(s, w, c.seq2seq); })
      .nested("train_vqvae", plan(c.train_vqvae))
      .nested("train_seq2seq", plan(c.train_seq2seq))
      .nested("finetune_tts", plan(c.finetune_tts))
      .nested("finetune_vc", plan(c.finetune_vc))
      .get("griffin_lim_iters", c.griffin_lim_iters)
      .finish();
  validate(c);
}

/// Seed for one consumer of randomness within a stage.
inline std::uint64_t stage_seed(std::uint64_t run_seed, Stage s, std::uint64_t purpose = 0) {
  return mix_seed(run_seed, 100 + static_cast<std::uint64_t>(s), purpose);
}

// ------------------------------------------------------------------ layout

/// Artifact locations under the run directory, with the subcommand that
/// produces each.
class RunLayout {
 public:
  explicit RunLayout(const std::string& root) : root_(std::filesystem::absolute(root)) {}

  std::filesystem::path root() const { return root_; }
  std::filesystem::path corpus_dir() const { return root_ / "corpus"; }
  std::filesystem::path manifest() const { return corpus_dir() / "manifest.jsonl"; }
  std::filesystem::path split_manifest(const std::string& part) const {
    return corpus_dir() / (part + ".jsonl");
  }
  std::filesystem::path units() const { return root_ / "units" / "units.jsonl"; }
  std::filesystem::path stage_dir(Stage s) const {
    switch (s) {
      case Stage::kVqVae: return root_ / "vqvae";
      case Stage::kSeq2Seq: return root_ / "seq2seq";
      case Stage::kFinetuneTts: return root_ / "finetune_tts";
      case Stage::kFinetuneVc: return root_ / "finetune_vc";
    }
    return root_;
  }
  std::filesystem::path final_checkpoint(Stage s) const { return stage_dir(s) / "final.vclt"; }
  std::filesystem::path synth_dir() const { return root_ / "synth"; }

 private:
  std::filesystem::path root_;
};

inline const char* producer(Stage s) {
  switch (s) {
    case Stage::kVqVae: return "train-vqvae";
    case Stage::kSeq2Seq: return "train-seq2seq";
    case Stage::kFinetuneTts: return "finetune-tts";
    case Stage::kFinetuneVc: return "finetune-vc";
  }
  return "?";
}

inline void require_artifact(const std::filesystem::path& p, const std::string& producing_command) {
  if (!std::filesystem::exists(p)) {
    throw MissingArtifact("missing " + p.string() + "; run `vclone " + producing_command +
                          "` first (or point --checkpoint/--config at an existing run)");
  }
}

// -------------------------------------------------------------- utilities

inline std::vector<std::string> speakers_in(const std::vector<ManifestEntry>& entries) {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (std::find(out.begin(), out.end(), e.speaker) == out.end()) out.push_back(e.speaker);
  }
  return out;
}

/// Sorted set of transcript symbols.
inline PhonemeInventory inventory_of(const std::vector<ManifestEntry>& entries) {
  std::set<std::string> symbols;
  for (const auto& e : entries) {
    if (e.phonemes) symbols.insert(e.phonemes->begin(), e.phonemes->end());
  }
  return PhonemeInventory(std::vector<std::string>(symbols.begin(), symbols.end()));
}

inline std::map<std::string, std::vector<int>> units_by_utt(const std::vector<UnitRecord>& recs) {
  std::map<std::string, std::vector<int>> out;
  for (const auto& r : recs) out[r.utt_id] = r.units;
  return out;
}

template <typename T>
std::function<LossTerms<T>(Tape<T>&, Rng&)> seq2seq_step(const Seq2Seq<T>& model,
                                                         const PairedDataset& data,
                                                         const TrainPlan& plan) {
  if (data.size() == 0) throw std::invalid_argument("seq2seq training: no pairs");
  return [&model, &data, plan](Tape<T>& tape, Rng& rng) {
    const BatchDraw draw = sample_batch(data.size(), plan.batch_size, rng);
    std::vector<const PairedExample*> items;
    items.reserve(draw.indices.size());
    for (auto i : draw.indices) items.push_back(&data.pairs[i]);
    const Seq2SeqBatch<T> b = make_batch(items, model);
    const DecoderOutput<T> out = model.forward(tape, b, rng);
    Seq2SeqLoss<T> l = seq2seq_loss(tape, out.mels, b.mels, out.stop_logits, b.stop_targets, b.frame_mask);
    return LossTerms<T>{{"total", l.total}, {"mel", l.mel}, {"stop", l.stop}};
  };
}

/// Model + optimizer + plan in one archive.
template <typename Model, typename T>
void save_checkpoint(const std::string& path, const Model& model, const OptimizerState<T>& state,
                     const TrainPlan& plan) {
  TensorArchive ar;
  model.save(ar);
  state.save(ar);
  ar.put_string("meta/stage", stage_name(plan.stage));
  ar.put_string("meta/plan", to_json(plan).dump());
  ar.save(path);
}

struct StageReport {
  TrainResult result;
  std::string final_checkpoint;
  double seconds = 0;
  std::size_t codes_used = 0;  // VQ-VAE: codes hit during the last 100 steps
};

// ------------------------------------------------------------------ stages

/// gen-corpus: synthesize the corpus and write the split manifests.
inline CorpusSplit run_gen_corpus(const RunConfig& cfg, std::ostream& log) {
  const RunLayout layout(cfg.out);
  SyntheticSpec spec = cfg.corpus;
  spec.seed = cfg.seed;
  auto entries = generate_corpus(spec, layout.corpus_dir().string());
  CorpusSplit split = split_corpus(entries, cfg.split.pretrain, cfg.split.target, cfg.split.source,
                                   cfg.split.seconds_per_target);
  write_manifest(split.pretrain, layout.split_manifest("pretrain").string());
  write_manifest(split.target, layout.split_manifest("target").string());
  write_manifest(split.source, layout.split_manifest("source").string());
  log << "corpus: " << entries.size() << " utterances; pretrain " << split.pretrain.size()
      << ", target " << split.target.size() << ", source " << split.source.size() << '\n';
  return split;
}

inline std::vector<ManifestEntry> read_split(const RunLayout& layout, const std::string& part) {
  const auto p = layout.split_manifest(part);
  require_artifact(p, "gen-corpus");
  return read_manifest(p.string());
}

template <typename Model>
Model load_model(const std::filesystem::path& path, Stage producing) {
  require_artifact(path, producer(producing));
  TensorArchive ar = TensorArchive::load(path.string());
  return Model::load(ar);
}

/// train-vqvae on the pretrain split.
template <typename T>
StageReport run_train_vqvae(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunLayout layout(cfg.out);
  const auto entries = read_split(layout, "pretrain");
  const auto mels = load_mels(entries, cfg.mel);
  VqVae<T> model(cfg.vqvae, speakers_in(entries), stage_seed(cfg.seed, Stage::kVqVae, 1));
  std::vector<VqExample<T>> data;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    data.push_back({model.features(mels[i]), model.speakers().index(entries[i].speaker)});
  }
  TrainPlan plan = cfg.train_vqvae;
  plan.seed = stage_seed(cfg.seed, Stage::kVqVae);
  plan.out_dir = layout.stage_dir(Stage::kVqVae).string();
  OptimizerState<T> state;
  const std::int64_t window_start = std::max<std::int64_t>(1, plan.steps - 99);
  StageReport rep;
  rep.result = run_training<T>(
      model.params(), state, plan, vqvae_step(model, data, plan),
      [&](const std::string& path, const OptimizerState<T>& s) { save_checkpoint(path, model, s, plan); },
      [&](const TraceRow& row) {
        if (row.step + 1 == window_start) model.reset_usage();
        if (row.step % 100 == 0) log << "vqvae step " << row.step << " loss " << row.terms[0].second << '\n';
      });
  rep.codes_used = model.codes_used();
  rep.final_checkpoint = layout.final_checkpoint(Stage::kVqVae).string();
  save_checkpoint(rep.final_checkpoint, model, state, plan);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log << "vqvae: " << rep.codes_used << "/" << cfg.vqvae.codebook_size << " codes used in the last "
      << (plan.steps - window_start + 1) << " steps; wrote " << rep.final_checkpoint << '\n';
  return rep;
}

/// extract-units for every utterance of the corpus manifest.
template <typename T>
std::vector<UnitRecord> run_extract_units(const RunConfig& cfg, std::ostream& log) {
  const RunLayout layout(cfg.out);
  const VqVae<T> model = load_model<VqVae<T>>(layout.final_checkpoint(Stage::kVqVae), Stage::kVqVae);
  require_artifact(layout.manifest(), "gen-corpus");
  const auto entries = read_manifest(layout.manifest().string());
  const auto mels = load_mels(entries, cfg.mel);
  std::vector<UnitRecord> recs;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    recs.push_back({entries[i].utt_id, model.extract_units(mels[i])});
  }
  std::filesystem::create_directories(layout.units().parent_path());
  write_units(recs, layout.units().string());
  log << "units: " << recs.size() << " utterances -> " << layout.units().string() << '\n';
  return recs;
}

template <typename T>
PairedDataset paired_split(const RunConfig& cfg, const RunLayout& layout, const std::string& part,
                           const TokenVocabulary& vocab, const PhonemeInventory& inventory,
                           const BuildOptions& opt) {
  const auto entries = read_split(layout, part);
  std::map<std::string, std::vector<int>> units;
  if (opt.include_units) {
    require_artifact(layout.units(), "extract-units");
    units = units_by_utt(read_units(layout.units().string()));
  }
  return build_paired_dataset(entries, load_mels(entries, cfg.mel), units, vocab, inventory, opt);
}

/// train-seq2seq on phoneme and unit pairs of the pretrain split.
template <typename T>
StageReport run_train_seq2seq(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunLayout layout(cfg.out);
  require_artifact(layout.final_checkpoint(Stage::kVqVae), "train-vqvae");
  require_artifact(layout.manifest(), "gen-corpus");
  const PhonemeInventory inventory = inventory_of(read_manifest(layout.manifest().string()));
  const TokenVocabulary vocab(cfg.vqvae.codebook_size, inventory.size());
  const PairedDataset ds = paired_split<T>(cfg, layout, "pretrain", vocab, inventory, {});
  Seq2Seq<T> model(cfg.seq2seq, vocab, inventory, speakers_in(read_split(layout, "pretrain")),
                   stage_seed(cfg.seed, Stage::kSeq2Seq, 1));
  TrainPlan plan = cfg.train_seq2seq;
  plan.seed = stage_seed(cfg.seed, Stage::kSeq2Seq);
  plan.out_dir = layout.stage_dir(Stage::kSeq2Seq).string();
  OptimizerState<T> state;
  StageReport rep;
  log << "seq2seq: " << ds.count(Modality::kPhoneme) << " phoneme pairs, " << ds.count(Modality::kUlu)
      << " unit pairs\n";
  rep.result = run_training<T>(
      model.params(), state, plan, seq2seq_step(model, ds, plan),
      [&](const std::string& path, const OptimizerState<T>& s) { save_checkpoint(path, model, s, plan); },
      [&](const TraceRow& row) {
        if (row.step % 100 == 0) log << "seq2seq step " << row.step << " loss " << row.terms[0].second << '\n';
      });
  rep.final_checkpoint = layout.final_checkpoint(Stage::kSeq2Seq).string();
  save_checkpoint(rep.final_checkpoint, model, state, plan);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// finetune-tts (target phoneme pairs) or finetune-vc (target unit pairs),
/// starting from the pre-trained seq2seq checkpoint with a fresh optimizer.
template <typename T>
StageReport run_finetune(const RunConfig& cfg, Stage stage, std::ostream& log,
                         const std::string& checkpoint = {}) {
  if (stage != Stage::kFinetuneTts && stage != Stage::kFinetuneVc) {
    throw std::invalid_argument("run_finetune: not a fine-tune stage");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const RunLayout layout(cfg.out);
  Seq2Seq<T> model = load_model<Seq2Seq<T>>(
      checkpoint.empty() ? layout.final_checkpoint(Stage::kSeq2Seq) : std::filesystem::path(checkpoint),
      Stage::kSeq2Seq);
  BuildOptions opt;
  opt.include_phonemes = stage == Stage::kFinetuneTts;
  opt.include_units = stage == Stage::kFinetuneVc;
  const PairedDataset ds = paired_split<T>(cfg, layout, "target", model.vocab(), model.inventory(), opt);
  for (const auto& spk : speakers_in(read_split(layout, "target"))) {
    if (!model.speakers().contains(spk)) model.speakers().register_speaker(spk);
  }
  TrainPlan plan = stage == Stage::kFinetuneTts ? cfg.finetune_tts : cfg.finetune_vc;
  plan.seed = stage_seed(cfg.seed, stage);
  plan.out_dir = layout.stage_dir(stage).string();
  OptimizerState<T> state;
  StageReport rep;
  log << stage_name(stage) << ": " << ds.size() << " target pairs, frozen [";
  for (std::size_t i = 0; i < plan.frozen.size(); ++i) log << (i ? ", " : "") << plan.frozen[i];
  log << "]\n";
  rep.result = run_training<T>(
      model.params(), state, plan, seq2seq_step(model, ds, plan),
      [&](const std::string& path, const OptimizerState<T>& s) { save_checkpoint(path, model, s, plan); },
      [&](const TraceRow& row) {
        if (row.step % 50 == 0) log << stage_name(stage) << " step " << row.step << " loss " << row.terms[0].second << '\n';
      });
  rep.final_checkpoint = layout.final_checkpoint(stage).string();
  save_checkpoint(rep.final_checkpoint, model, state, plan);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct Rendered {
  Waveform wav;
  MelSpectrogram mel;
  bool hit_max_steps = false;
};

template <typename T>
Rendered render(const Seq2Seq<T>& model, const TokenSequence& seq, const std::string& speaker,
                const RunConfig& cfg, std::uint64_t seed) {
  Rendered r;
  Synthesis s = model.synthesize(seq, speaker, mix_seed(seed, 1));
  r.mel = std::move(s.mel);
  r.hit_max_steps = s.hit_max_steps;
  r.mel.hop_length = cfg.mel.hop_length;
  r.mel.sample_rate = cfg.mel.sample_rate;
  if (r.mel.frames > 0) r.wav = griffin_lim(r.mel, cfg.griffin_lim_iters, cfg.mel, nullptr, mix_seed(seed, 2));
  r.wav.sample_rate = cfg.mel.sample_rate;
  return r;
}

/// tts: phoneme symbols -> waveform with the fine-tuned TTS model.
template <typename T>
Rendered run_tts(const RunConfig& cfg, const Seq2Seq<T>& model, const std::vector<std::string>& phonemes,
                 const std::string& speaker) {
  if (phonemes.empty()) throw std::invalid_argument("tts: empty phoneme sequence");
  TokenSequence seq = map_to_vocab(model.inventory().indices(phonemes), Modality::kPhoneme, model.vocab());
  return render(model, seq, speaker, cfg, cfg.seed);
}

/// convert: waveform -> units -> target-speaker waveform.
template <typename T>
Rendered run_convert(const RunConfig& cfg, const VqVae<T>& vqvae, const Seq2Seq<T>& model,
                     const Waveform& source, const std::string& speaker) {
  if (vqvae.config().codebook_size != model.vocab().n_ulus()) {
    throw std::invalid_argument("VQ-VAE codebook size does not match the seq2seq vocabulary");
  }
  const MelSpectrogram mel = mel_spectrogram(source, cfg.mel);
  if (mel.frames == 0) throw std::invalid_argument("convert: source audio shorter than one frame");
  TokenSequence seq = map_to_vocab(dedup(vqvae.extract_units(mel)), Modality::kUlu, model.vocab());
  return render(model, seq, speaker, cfg, cfg.seed);
}

}  // namespace vclone

#endif  // VCLONE_PIPELINE_HPP_
