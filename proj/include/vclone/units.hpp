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

// Discrete units, the joint unit/phoneme token vocabulary, manifests and the
// paired <tokens, mel> dataset.

#ifndef VCLONE_UNITS_HPP_
#define VCLONE_UNITS_HPP_

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vclone/config.hpp"
#include "vclone/dsp.hpp"
#include "vclone/vqvae.hpp"

namespace vclone {

/// Collapses runs of equal adjacent values.
inline std::vector<int> dedup(const std::vector<int>& raw) {
  std::vector<int> out;
  out.reserve(raw.size());
  for (int v : raw) {
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  return out;
}

enum class Modality { kUlu, kPhoneme };

inline const char* modality_name(Modality m) {
  return m == Modality::kUlu ? "ulu" : "phoneme";
}

/// Id layout: units [0, n_ulus), phonemes [n_ulus, n_ulus + n_phones),
/// then PAD and EOS.
class TokenVocabulary {
 public:
  TokenVocabulary() = default;
  TokenVocabulary(std::size_t n_ulus, std::size_t n_phones)
      : n_ulus_(n_ulus), n_phones_(n_phones) {}

  std::size_t n_ulus() const { return n_ulus_; }
  std::size_t n_phones() const { return n_phones_; }
  std::size_t size() const { return n_ulus_ + n_phones_ + 2; }
  int pad() const { return static_cast<int>(size()) - 2; }
  int eos() const { return static_cast<int>(size()) - 1; }

  std::size_t range(Modality m) const { return m == Modality::kUlu ? n_ulus_ : n_phones_; }

  int encode(int local, Modality m) const {
    if (local < 0 || static_cast<std::size_t>(local) >= range(m)) {
      throw std::out_of_range(std::string(modality_name(m)) + " id " + std::to_string(local) +
                              " outside [0, " + std::to_string(range(m)) + ")");
    }
    return m == Modality::kUlu ? local : local + static_cast<int>(n_ulus_);
  }

  struct Decoded {
    enum Kind { kUlu, kPhoneme, kPad, kEos } kind;
    int local;
  };

  Decoded decode(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside [0, " +
                              std::to_string(size()) + ")");
    }
    if (static_cast<std::size_t>(id) < n_ulus_) return {Decoded::kUlu, id};
    if (id == pad()) return {Decoded::kPad, 0};
    if (id == eos()) return {Decoded::kEos, 0};
    return {Decoded::kPhoneme, id - static_cast<int>(n_ulus_)};
  }

 private:
  std::size_t n_ulus_ = 0, n_phones_ = 0;
};

struct TokenSequence {
  std::vector<int> ids;
  Modality modality = Modality::kPhoneme;
  std::string utt_id;
  std::string speaker;
};

/// Offsets modality-local ids into the joint vocabulary and appends EOS.
inline TokenSequence map_to_vocab(const std::vector<int>& local, Modality m,
                                  const TokenVocabulary& vocab) {
  TokenSequence out;
  out.modality = m;
  out.ids.reserve(local.size() + 1);
  for (int v : local) out.ids.push_back(vocab.encode(v, m));
  out.ids.push_back(vocab.eos());
  return out;
}

/// Ordered phoneme symbol set.
class PhonemeInventory {
 public:
  PhonemeInventory() = default;
  explicit PhonemeInventory(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {}

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  int index(const std::string& s) const {
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      if (symbols_[i] == s) return static_cast<int>(i);
    }
    throw std::out_of_range("unknown phoneme '" + s + "'");
  }

  std::vector<int> indices(const std::vector<std::string>& seq) const {
    std::vector<int> out;
    out.reserve(seq.size());
    for (const auto& s : seq) out.push_back(index(s));
    return out;
  }

 private:
  std::vector<std::string> symbols_;
};

// ------------------------------------------------------------------ manifest

struct ManifestEntry {
  std::string utt_id;
  std::string wav;  // absolute after read_manifest
  std::string speaker;
  std::optional<std::vector<std::string>> phonemes;
};

/// JSON lines; relative wav paths are resolved against the manifest's folder.
inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest '" + path + "'");
  const auto base = std::filesystem::absolute(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    ManifestEntry e;
    std::vector<std::string> phonemes;
    StrictReader r(j, where);
    r.get("utt_id", e.utt_id).get("wav", e.wav).get("speaker", e.speaker);
    if (j.contains("phonemes") && !j.at("phonemes").is_null()) {
      r.get("phonemes", phonemes);
      e.phonemes = std::move(phonemes);
    } else {
      r.nested("phonemes", [](const Json&, const std::string&) {});
    }
    r.finish();
    if (e.utt_id.empty() || e.wav.empty() || e.speaker.empty()) {
      throw ConfigError(where + ": utt_id, wav and speaker are required");
    }
    std::filesystem::path w(e.wav);
    if (w.is_relative()) w = base / w;
    e.wav = w.lexically_normal().string();
    out.push_back(std::move(e));
  }
  return out;
}

/// Writes wav paths relative to the manifest's folder when they live below it.
inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  const auto base = std::filesystem::absolute(path).parent_path();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest '" + path + "'");
  for (const auto& e : entries) {
    std::filesystem::path w = std::filesystem::absolute(e.wav);
    auto rel = w.lexically_relative(base);
    const bool below = !rel.empty() && rel.begin()->string() != "..";
    Json j = {{"utt_id", e.utt_id}, {"wav", below ? rel.string() : w.string()},
              {"speaker", e.speaker}};
    if (e.phonemes) j["phonemes"] = *e.phonemes;
    os << j.dump() << '\n';
  }
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

struct UnitRecord {
  std::string utt_id;
  std::vector<int> units;
};

inline void write_units(const std::vector<UnitRecord>& recs, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& r : recs) os << Json{{"utt_id", r.utt_id}, {"units", r.units}}.dump() << '\n';
}

inline std::vector<UnitRecord> read_units(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<UnitRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    UnitRecord r;
    const std::string where = path + ":" + std::to_string(lineno);
    try {
      StrictReader(Json::parse(line), where).get("utt_id", r.utt_id).get("units", r.units).finish();
    } catch (const Json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ------------------------------------------------------------ paired data

struct PairedExample {
  TokenSequence tokens;
  MelSpectrogram mel;
};

struct PairedDataset {
  std::vector<PairedExample> pairs;

  std::size_t size() const { return pairs.size(); }
  std::size_t count(Modality m) const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.tokens.modality == m;
    return n;
  }
};

struct BuildOptions {
  bool include_phonemes = true;
  bool include_units = true;
  bool permissive = false;  // skip utterances without a transcript
};

/// Mel for every entry, failing with the full list of unreadable files.
inline std::vector<MelSpectrogram> load_mels(const std::vector<ManifestEntry>& entries,
                                             const MelConfig& cfg) {
  std::vector<std::string> missing;
  for (const auto& e : entries) {
    if (!std::filesystem::exists(e.wav)) missing.push_back(e.utt_id + " (" + e.wav + ")");
  }
  if (!missing.empty()) {
    std::string msg = "missing audio for " + std::to_string(missing.size()) + " utterance(s):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }
  std::vector<MelSpectrogram> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(mel_spectrogram(load_wav(e.wav), cfg));
  return out;
}

/// One phoneme pair (from the transcript) and one unit pair (collapse runs,
/// map) per utterance. `mels` parallels `entries`; `units` maps utt_id to
/// raw per-frame codes and is only consulted when units are included.
inline PairedDataset build_paired_dataset(const std::vector<ManifestEntry>& entries,
                                          const std::vector<MelSpectrogram>& mels,
                                          const std::map<std::string, std::vector<int>>& units,
                                          const TokenVocabulary& vocab,
                                          const PhonemeInventory& inventory,
                                          const BuildOptions& opt = {}) {
  if (mels.size() != entries.size()) throw std::invalid_argument("entries/mels size mismatch");
  auto fail_listing = [](const std::string& what, const std::vector<std::string>& ids) {
    std::string msg = what + " for " + std::to_string(ids.size()) + " utterance(s):";
    for (const auto& o : ids) msg += " " + o;
    throw std::runtime_error(msg);
  };
  std::vector<std::string> offenders;
  if (opt.include_phonemes && !opt.permissive) {
    for (const auto& e : entries) {
      if (!e.phonemes) offenders.push_back(e.utt_id);
    }
    if (!offenders.empty()) fail_listing("missing transcript", offenders);
  }
  if (opt.include_units) {
    for (const auto& e : entries) {
      if (!units.count(e.utt_id)) offenders.push_back(e.utt_id);
    }
    if (!offenders.empty()) fail_listing("missing units", offenders);
  }
  PairedDataset ds;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (mels[i].empty()) throw std::runtime_error("empty audio for " + e.utt_id);
    if (opt.include_phonemes && e.phonemes) {
      TokenSequence t = map_to_vocab(inventory.indices(*e.phonemes), Modality::kPhoneme, vocab);
      t.utt_id = e.utt_id;
      t.speaker = e.speaker;
      ds.pairs.push_back({std::move(t), mels[i]});
    }
    if (opt.include_units) {
      TokenSequence t = map_to_vocab(dedup(units.at(e.utt_id)), Modality::kUlu, vocab);
      t.utt_id = e.utt_id;
      t.speaker = e.speaker;
      ds.pairs.push_back({std::move(t), mels[i]});
    }
  }
  return ds;
}

/// As above, extracting units with `vqvae`.
template <typename T>
PairedDataset build_paired_dataset(const std::vector<ManifestEntry>& entries,
                                   const std::vector<MelSpectrogram>& mels,
                                   const VqVae<T>& vqvae, const TokenVocabulary& vocab,
                                   const PhonemeInventory& inventory,
                                   const BuildOptions& opt = {}) {
  if (mels.size() != entries.size()) throw std::invalid_argument("entries/mels size mismatch");
  if (opt.include_units && vqvae.config().codebook_size != vocab.n_ulus()) {
    throw std::invalid_argument("vocabulary has " + std::to_string(vocab.n_ulus()) +
                                " unit ids, codebook has " +
                                std::to_string(vqvae.config().codebook_size));
  }
  std::map<std::string, std::vector<int>> units;
  if (opt.include_units) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!mels[i].empty()) units[entries[i].utt_id] = vqvae.extract_units(mels[i]);
    }
  }
  return build_paired_dataset(entries, mels, units, vocab, inventory, opt);
}

/// Levenshtein distance divided by the longer length (0 for two empties).
inline double normalized_edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[b.size()]) / static_cast<double>(std::max(a.size(), b.size()));
}

}  // namespace vclone

#endif  // VCLONE_UNITS_HPP_
