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

// Deterministic pseudo-speech corpus.
//
// A speaker is a harmonic series (fundamental plus amplitude profile); a
// pseudo-phoneme is a pair of formant sinusoids. An utterance is a random
// phoneme string, each phoneme held for a jittered number of frames, voiced
// by the speaker's harmonics with a little background noise.

#ifndef VCLONE_CORPUS_HPP_
#define VCLONE_CORPUS_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "vclone/config.hpp"
#include "vclone/dsp.hpp"
#include "vclone/nn.hpp"
#include "vclone/units.hpp"

namespace vclone {

struct SyntheticSpec {
  std::uint64_t seed = 1234;
  std::size_t n_speakers = 8;
  std::size_t utts_per_speaker = 40;
  std::size_t n_phonemes = 12;
  int sample_rate = 16000;
  std::size_t hop_length = 200;      // duration unit (samples per frame)
  double duration_mean = 8.0;        // frames per phoneme
  double duration_jitter = 3.0;      // +- frames, uniform
  double min_seconds = 1.0;
  double max_seconds = 3.0;
  double f0_min = 100.0;
  double f0_max = 250.0;
  std::size_t harmonics = 12;
  double harmonic_level = 0.35;      // sum of harmonic amplitudes
  double formant_level = 0.2;        // amplitude of each formant sinusoid
  double noise_level = 0.002;
};

inline Json to_json(const SyntheticSpec& s) {
  return {{"seed", s.seed},
          {"n_speakers", s.n_speakers},
          {"utts_per_speaker", s.utts_per_speaker},
          {"n_phonemes", s.n_phonemes},
          {"sample_rate", s.sample_rate},
          {"hop_length", s.hop_length},
          {"duration_mean", s.duration_mean},
          {"duration_jitter", s.duration_jitter},
          {"min_seconds", s.min_seconds},
          {"max_seconds", s.max_seconds},
          {"f0_min", s.f0_min},
          {"f0_max", s.f0_max},
          {"harmonics", s.harmonics},
          {"harmonic_level", s.harmonic_level},
          {"formant_level", s.formant_level},
          {"noise_level", s.noise_level}};
}

inline void read_json(const Json& j, const std::string& where, SyntheticSpec& s) {
  StrictReader(j, where)
      .get("seed", s.seed)
      .get("n_speakers", s.n_speakers)
      .get("utts_per_speaker", s.utts_per_speaker)
      .get("n_phonemes", s.n_phonemes)
      .get("sample_rate", s.sample_rate)
      .get("hop_length", s.hop_length)
      .get("duration_mean", s.duration_mean)
      .get("duration_jitter", s.duration_jitter)
      .get("min_seconds", s.min_seconds)
      .get("max_seconds", s.max_seconds)
      .get("f0_min", s.f0_min)
      .get("f0_max", s.f0_max)
      .get("harmonics", s.harmonics)
      .get("harmonic_level", s.harmonic_level)
      .get("formant_level", s.formant_level)
      .get("noise_level", s.noise_level)
      .finish();
}

/// splitmix64 finalizer; derives independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0xbf58476d1ce4e5b9ULL * (c + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SpeakerVoice {
  std::string id;
  double f0 = 0;
  std::vector<double> amplitudes;  // per harmonic
};

struct PhonemeSound {
  std::string symbol;
  double f1 = 0, f2 = 0;
};

/// Voices and phoneme sounds, a pure function of the spec.
class SyntheticLanguage {
 public:
  explicit SyntheticLanguage(const SyntheticSpec& spec) : spec_(spec) {
    if (spec.n_speakers == 0 || spec.n_phonemes == 0) {
      throw std::invalid_argument("corpus needs at least one speaker and one phoneme");
    }
    const double step = spec.n_speakers > 1
                            ? (spec.f0_max - spec.f0_min) / static_cast<double>(spec.n_speakers - 1)
                            : 0.0;
    if (spec.n_speakers > 1 && step < 20.0) {
      throw std::invalid_argument("f0 range too narrow: speakers would be " +
                                  std::to_string(step) + " Hz apart (need >= 20)");
    }
    Rng rng(mix_seed(spec.seed, 1));
    for (std::size_t s = 0; s < spec.n_speakers; ++s) {
      SpeakerVoice v;
      v.id = speaker_id(s);
      v.f0 = spec.f0_min + step * static_cast<double>(s);
      const double tilt = 0.4 + 1.2 * uniform01(rng);
      double total = 0;
      for (std::size_t h = 1; h <= spec.harmonics; ++h) {
        const double a = std::pow(static_cast<double>(h), -tilt) * (0.3 + 1.4 * uniform01(rng));
        v.amplitudes.push_back(a);
        total += a;
      }
      for (auto& a : v.amplitudes) a *= spec.harmonic_level / total;
      voices_.push_back(std::move(v));
    }
    // formant pairs on a jittered grid, so every pair is distinct
    const std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(double(spec.n_phonemes))));
    const std::size_t rows = (spec.n_phonemes + cols - 1) / cols;
    std::vector<std::size_t> order(spec.n_phonemes);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform01(rng) * double(i))]);
    }
    for (std::size_t p = 0; p < spec.n_phonemes; ++p) {
      const std::size_t cell = order[p], r = cell / cols, c = cell % cols;
      PhonemeSound ph;
      ph.symbol = (p < 10 ? "ph0" : "ph") + std::to_string(p);
      const double w1 = 700.0 / double(cols), w2 = 2000.0 / double(rows);
      ph.f1 = 300.0 + w1 * (double(c) + 0.2 + 0.6 * uniform01(rng));
      ph.f2 = 1100.0 + w2 * (double(r) + 0.2 + 0.6 * uniform01(rng));
      phonemes_.push_back(ph);
    }
  }

  static std::string speaker_id(std::size_t s) {
    return (s < 10 ? "spk0" : "spk") + std::to_string(s);
  }

  const SyntheticSpec& spec() const { return spec_; }
  const std::vector<SpeakerVoice>& voices() const { return voices_; }
  const std::vector<PhonemeSound>& phonemes() const { return phonemes_; }

  PhonemeInventory inventory() const {
    std::vector<std::string> s;
    for (const auto& p : phonemes_) s.push_back(p.symbol);
    return PhonemeInventory(s);
  }

  std::size_t speaker_index(const std::string& id) const {
    for (std::size_t i = 0; i < voices_.size(); ++i) {
      if (voices_[i].id == id) return i;
    }
    throw std::out_of_range("unknown synthetic speaker '" + id + "'");
  }

  /// Phoneme ids and per-phoneme frame counts for one utterance.
  struct Script {
    std::vector<int> phonemes;
    std::vector<std::size_t> durations;

    std::size_t frames() const {
      std::size_t n = 0;
      for (auto d : durations) n += d;
      return n;
    }
  };

  std::size_t draw_duration(Rng& rng) const {
    const double lo = std::max(1.0, spec_.duration_mean - spec_.duration_jitter);
    const double hi = spec_.duration_mean + spec_.duration_jitter;
    return static_cast<std::size_t>(std::floor(lo + (hi - lo + 1.0) * uniform01(rng)));
  }

  /// Random phoneme string whose length lands in [min_seconds, max_seconds].
  Script draw_script(Rng& rng) const {
    const double fps = double(spec_.sample_rate) / double(spec_.hop_length);
    const double seconds = spec_.min_seconds + (spec_.max_seconds - spec_.min_seconds) * uniform01(rng);
    const auto target = static_cast<std::size_t>(std::ceil(seconds * fps));
    const auto cap = std::max(target, static_cast<std::size_t>(std::floor(spec_.max_seconds * fps)));
    Script s;
    int prev = -1;
    while (s.frames() < target) {
      int p;
      do {
        p = static_cast<int>(uniform01(rng) * double(spec_.n_phonemes));
      } while (p == prev && spec_.n_phonemes > 1);
      const std::size_t d = std::min(draw_duration(rng), cap - s.frames());
      s.phonemes.push_back(p);
      s.durations.push_back(d);
      prev = p;
    }
    return s;
  }

  /// Same phonemes, freshly jittered durations.
  Script rejitter(const Script& s, Rng& rng) const {
    Script out = s;
    for (auto& d : out.durations) d = draw_duration(rng);
    return out;
  }

  /// Exactly frames() * hop_length samples.
  Waveform render(const Script& script, std::size_t speaker, std::uint64_t noise_seed) const {
    const SpeakerVoice& v = voices_.at(speaker);
    Waveform w;
    w.sample_rate = spec_.sample_rate;
    w.samples.resize(script.frames() * spec_.hop_length);
    const double dt = 1.0 / spec_.sample_rate, two_pi = 2.0 * std::numbers::pi;
    Rng noise(noise_seed);
    std::size_t pos = 0;
    double ph1 = 0, ph2 = 0;
    for (std::size_t i = 0; i < script.phonemes.size(); ++i) {
      const PhonemeSound& p = phonemes_.at(static_cast<std::size_t>(script.phonemes[i]));
      const std::size_t n = script.durations[i] * spec_.hop_length;
      for (std::size_t k = 0; k < n; ++k, ++pos) {
        const double t = double(pos) * dt;
        double x = 0;
        for (std::size_t h = 0; h < v.amplitudes.size(); ++h) {
          x += v.amplitudes[h] * std::sin(two_pi * v.f0 * double(h + 1) * t);
        }
        x += spec_.formant_level * (std::sin(ph1) + std::sin(ph2));
        x += spec_.noise_level * (2.0 * uniform01(noise) - 1.0);
        ph1 = std::fmod(ph1 + two_pi * p.f1 * dt, two_pi);
        ph2 = std::fmod(ph2 + two_pi * p.f2 * dt, two_pi);
        w.samples[pos] = static_cast<float>(x);
      }
    }
    return w;
  }

  std::vector<std::string> symbols(const Script& s) const {
    std::vector<std::string> out;
    for (int p : s.phonemes) out.push_back(phonemes_.at(static_cast<std::size_t>(p)).symbol);
    return out;
  }

 private:
  SyntheticSpec spec_;
  std::vector<SpeakerVoice> voices_;
  std::vector<PhonemeSound> phonemes_;
};

/// Script of utterance `u` of speaker `s`: a pure function of the seed.
inline SyntheticLanguage::Script utterance_script(const SyntheticLanguage& lang, std::size_t s,
                                                  std::size_t u) {
  Rng rng(mix_seed(lang.spec().seed, 2 + s, u));
  return lang.draw_script(rng);
}

inline std::uint64_t utterance_noise_seed(const SyntheticSpec& spec, std::size_t s, std::size_t u) {
  return mix_seed(spec.seed, 1000 + s, u);
}

/// Writes wavs/<utt>.wav, manifest.jsonl and spec.json under out_dir.
inline std::vector<ManifestEntry> generate_corpus(const SyntheticSpec& spec,
                                                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  SyntheticLanguage lang(spec);
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wavs", ec);
  if (ec) throw std::runtime_error("cannot create '" + out_dir + "': " + ec.message());
  std::vector<ManifestEntry> entries;
  for (std::size_t s = 0; s < spec.n_speakers; ++s) {
    for (std::size_t u = 0; u < spec.utts_per_speaker; ++u) {
      const auto script = utterance_script(lang, s, u);
      ManifestEntry e;
      std::string num = std::to_string(u);
      e.utt_id = lang.voices()[s].id + "_" + std::string(num.size() < 4 ? 4 - num.size() : 0, '0') + num;
      e.speaker = lang.voices()[s].id;
      e.wav = (fs::absolute(out_dir) / "wavs" / (e.utt_id + ".wav")).string();
      e.phonemes = lang.symbols(script);
      save_wav(lang.render(script, s, utterance_noise_seed(spec, s, u)), e.wav);
      entries.push_back(std::move(e));
    }
  }
  write_manifest(entries, (fs::path(out_dir) / "manifest.jsonl").string());
  std::ofstream os(fs::path(out_dir) / "spec.json");
  os << to_json(spec).dump(2) << '\n';
  if (!os) throw std::runtime_error("cannot write spec.json in '" + out_dir + "'");
  return entries;
}

inline double wav_seconds(const std::string& path) { return load_wav(path).seconds(); }

struct CorpusSplit {
  std::vector<ManifestEntry> pretrain;
  std::vector<ManifestEntry> target;   // truncated per speaker
  std::vector<ManifestEntry> source;
};

/// Speaker-disjoint split. Target speakers keep utterances, in manifest
/// order, until `seconds_per_target` is reached.
inline CorpusSplit split_corpus(const std::vector<ManifestEntry>& manifest,
                                const std::vector<std::string>& pretrain_speakers,
                                const std::vector<std::string>& target_speakers,
                                const std::vector<std::string>& source_speakers,
                                double seconds_per_target) {
  std::set<std::string> pre(pretrain_speakers.begin(), pretrain_speakers.end());
  std::set<std::string> tgt(target_speakers.begin(), target_speakers.end());
  std::set<std::string> src(source_speakers.begin(), source_speakers.end());
  for (const auto& s : tgt) {
    if (pre.count(s) || src.count(s)) throw std::invalid_argument("speaker '" + s + "' in two sets");
  }
  for (const auto& s : src) {
    if (pre.count(s)) throw std::invalid_argument("speaker '" + s + "' in two sets");
  }
  CorpusSplit out;
  std::map<std::string, double> seconds;
  for (const auto& e : manifest) {
    if (pre.count(e.speaker)) out.pretrain.push_back(e);
    if (src.count(e.speaker)) out.source.push_back(e);
    if (tgt.count(e.speaker) && seconds[e.speaker] < seconds_per_target) {
      seconds[e.speaker] += wav_seconds(e.wav);
      out.target.push_back(e);
    }
  }
  for (const auto& s : tgt) {
    if (seconds[s] < seconds_per_target) {
      throw std::runtime_error("target speaker '" + s + "' has " + std::to_string(seconds[s]) +
                               " s of audio, " + std::to_string(seconds_per_target) +
                               " s requested (short by " +
                               std::to_string(seconds_per_target - seconds[s]) + " s)");
    }
  }
  return out;
}

}  // namespace vclone

#endif  // VCLONE_CORPUS_HPP_
