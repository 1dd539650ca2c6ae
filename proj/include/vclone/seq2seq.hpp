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

// Token-to-mel network: embedding + conv + BLSTM encoder, per-speaker rows
// concatenated onto the memory, GMM attention and an autoregressive LSTM
// decoder emitting one frame and one stop logit per step.

#ifndef VCLONE_SEQ2SEQ_HPP_
#define VCLONE_SEQ2SEQ_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vclone/config.hpp"
#include "vclone/dsp.hpp"
#include "vclone/nn.hpp"
#include "vclone/serialize.hpp"
#include "vclone/tape.hpp"
#include "vclone/units.hpp"

namespace vclone {

struct Seq2SeqConfig {
  std::size_t n_mels = 40;
  std::size_t embed_dim = 64;
  std::size_t conv_channels = 64;
  std::size_t conv_kernel = 5;
  std::size_t conv_layers = 3;
  std::size_t encoder_hidden = 32;
  std::size_t speaker_dim = 16;
  std::size_t mixtures = 5;
  std::size_t attention_hidden = 64;
  std::size_t decoder_hidden = 64;
  std::size_t prenet_dim = 32;
  std::size_t prenet_layers = 2;
  double prenet_dropout = 0.8;
  double delta_bias = -1.5;   // initial softplus(.) ~ 0.2 positions per step
  double sigma_bias = 0.0;    // initial softplus(.) ~ 0.7 positions
  double stop_threshold = 0.5;
  std::size_t max_steps_per_token = 10;
  FeatureNorm norm;

  std::size_t memory_dim() const { return 2 * encoder_hidden + speaker_dim; }

  static Seq2SeqConfig full_scale() {
    Seq2SeqConfig c;
    c.n_mels = 80;
    c.embed_dim = 512;
    c.conv_channels = 512;
    c.encoder_hidden = 256;
    c.speaker_dim = 64;
    c.attention_hidden = 1024;
    c.decoder_hidden = 1024;
    c.prenet_dim = 256;
    c.prenet_dropout = 0.5;
    return c;
  }
};

inline Json to_json(const Seq2SeqConfig& c) {
  return {{"n_mels", c.n_mels},
          {"embed_dim", c.embed_dim},
          {"conv_channels", c.conv_channels},
          {"conv_kernel", c.conv_kernel},
          {"conv_layers", c.conv_layers},
          {"encoder_hidden", c.encoder_hidden},
          {"speaker_dim", c.speaker_dim},
          {"mixtures", c.mixtures},
          {"attention_hidden", c.attention_hidden},
          {"decoder_hidden", c.decoder_hidden},
          {"prenet_dim", c.prenet_dim},
          {"prenet_layers", c.prenet_layers},
          {"prenet_dropout", c.prenet_dropout},
          {"delta_bias", c.delta_bias},
          {"sigma_bias", c.sigma_bias},
          {"stop_threshold", c.stop_threshold},
          {"max_steps_per_token", c.max_steps_per_token},
          {"norm", to_json(c.norm)}};
}

inline void read_json(const Json& j, const std::string& where, Seq2SeqConfig& c) {
  StrictReader(j, where)
      .get("n_mels", c.n_mels)
      .get("embed_dim", c.embed_dim)
      .get("conv_channels", c.conv_channels)
      .get("conv_kernel", c.conv_kernel)
      .get("conv_layers", c.conv_layers)
      .get("encoder_hidden", c.encoder_hidden)
      .get("speaker_dim", c.speaker_dim)
      .get("mixtures", c.mixtures)
      .get("attention_hidden", c.attention_hidden)
      .get("decoder_hidden", c.decoder_hidden)
      .get("prenet_dim", c.prenet_dim)
      .get("prenet_layers", c.prenet_layers)
      .get("prenet_dropout", c.prenet_dropout)
      .get("delta_bias", c.delta_bias)
      .get("sigma_bias", c.sigma_bias)
      .get("stop_threshold", c.stop_threshold)
      .get("max_steps_per_token", c.max_steps_per_token)
      .nested("norm", [&](const Json& n, const std::string& w) { read_json(n, w, c.norm); })
      .finish();
  if (c.conv_kernel % 2 == 0) throw ConfigError(where + ".conv_kernel must be odd");
  if (c.mixtures == 0) throw ConfigError(where + ".mixtures must be positive");
  if (c.prenet_dropout < 0 || c.prenet_dropout >= 1) {
    throw ConfigError(where + ".prenet_dropout must be in [0, 1)");
  }
}

// ------------------------------------------------------------------ batching

/// Padded teacher-forcing batch. Mels are normalized; padding frames hold the
/// normalized floor value and carry zero mask.
template <typename T>
struct Seq2SeqBatch {
  std::vector<int> tokens;                 // [B * max_tokens], PAD-filled
  std::vector<std::size_t> token_lengths;
  std::size_t max_tokens = 0;
  std::vector<int> speakers;
  Tensor<T> mels;                          // [B, max_frames, n_mels]
  std::vector<std::size_t> frame_lengths;
  std::size_t max_frames = 0;
  std::vector<T> frame_mask;               // [B * max_frames]
  std::vector<T> stop_targets;             // 1 at each final frame
  std::size_t batch() const { return token_lengths.size(); }
};

// --------------------------------------------------------------- attention

template <typename T>
struct AttentionState {
  Tensor<T> mu;     // [B, K]
  Tensor<T> sigma;  // [B, K]
  Tensor<T> w;      // [B, K]
};

template <typename T>
struct AttentionOutput {
  AttentionState<T> state;
  Tensor<T> alpha;    // [B, T]
  Tensor<T> context;  // [B, D]
};

/// One GMM attention step from the raw [B, 3K] projection: softplus offsets
/// added to the previous means, softplus scales, softmax mixture weights.
template <typename T>
AttentionOutput<T> gmm_attention_step(Tape<T>& tape, const Tensor<T>& projection,
                                      const Tensor<T>& prev_mu, const Tensor<T>& memory,
                                      const std::vector<std::size_t>& lengths) {
  const std::size_t k = prev_mu.dim(1);
  detail::require(projection.rank() == 2 && projection.dim(1) == 3 * k,
                  "gmm attention: projection " + shape_str(projection.shape()) + " for " +
                      std::to_string(k) + " mixtures");
  AttentionOutput<T> out;
  Tensor<T> delta = tape.softplus(tape.slice(projection, 1, 0, k));
  out.state.mu = tape.add(prev_mu, delta);
  out.state.sigma = tape.softplus(tape.slice(projection, 1, k, 2 * k));
  out.state.w = tape.softmax(tape.slice(projection, 1, 2 * k, 3 * k), 1);
  out.alpha = tape.gmm_alignment(out.state.mu, out.state.sigma, out.state.w, memory.dim(1), lengths);
  out.context = tape.attend(out.alpha, memory);
  return out;
}

// ------------------------------------------------------------------- model

template <typename T>
struct DecoderState {
  LstmStep<T> att, dec;
  Tensor<T> mu;       // [B, K]
  Tensor<T> context;  // [B, D]
};

template <typename T>
struct DecoderOutput {
  Tensor<T> mels;                  // [B, L, n_mels]
  Tensor<T> stop_logits;           // [B, L]
  std::vector<Tensor<T>> alphas;   // L x [B, T]
  std::vector<Tensor<T>> means;    // L x [B, K]
};

template <typename T>
struct Seq2SeqLoss {
  Tensor<T> mel, stop, total;
};

struct Synthesis {
  MelSpectrogram mel;
  bool hit_max_steps = false;
  std::vector<std::vector<double>> means;  // per step, per mixture
};

template <typename T>
class Seq2Seq {
 public:
  static constexpr const char* kKind = "seq2seq";

  Seq2Seq(const Seq2SeqConfig& cfg, const TokenVocabulary& vocab, PhonemeInventory inventory,
          std::vector<std::string> speakers, std::uint64_t seed)
      : cfg_(cfg), vocab_(vocab), inventory_(std::move(inventory)) {
    Rng rng(seed);
    embedding_ = params_.create("encoder.embedding", {vocab.size(), cfg.embed_dim},
                                std::sqrt(3.0 / static_cast<double>(cfg.embed_dim)), rng);
    std::size_t width = cfg.embed_dim;
    for (std::size_t i = 0; i < cfg.conv_layers; ++i) {
      convs_.emplace_back(params_, "encoder.conv" + std::to_string(i), width, cfg.conv_channels,
                          cfg.conv_kernel, rng);
      width = cfg.conv_channels;
    }
    blstm_ = BiLstm<T>(params_, "encoder.blstm", width, cfg.encoder_hidden, rng);
    speakers_ = SpeakerTable<T>(params_, "speakers", std::move(speakers), cfg.speaker_dim, rng);
    width = cfg.n_mels;
    for (std::size_t i = 0; i < cfg.prenet_layers; ++i) {
      prenet_.emplace_back(params_, "decoder.prenet" + std::to_string(i), width, cfg.prenet_dim, rng);
      width = cfg.prenet_dim;
    }
    const std::size_t mem = cfg.memory_dim();
    att_rnn_ = Lstm<T>(params_, "attention.lstm", width + mem, cfg.attention_hidden, rng);
    att_proj_ = Linear<T>(params_, "attention.proj", cfg.attention_hidden, 3 * cfg.mixtures, rng);
    {
      auto b = att_proj_.bias().data();
      for (std::size_t i = 0; i < cfg.mixtures; ++i) {
        b[i] = static_cast<T>(cfg.delta_bias);
        b[cfg.mixtures + i] = static_cast<T>(cfg.sigma_bias);
      }
    }
    dec_rnn_ = Lstm<T>(params_, "decoder.lstm", cfg.attention_hidden + mem, cfg.decoder_hidden, rng);
    mel_proj_ = Linear<T>(params_, "decoder.mel_proj", cfg.decoder_hidden + mem, cfg.n_mels, rng);
    stop_proj_ = Linear<T>(params_, "decoder.stop_proj", cfg.decoder_hidden + mem, 1, rng);
  }

  const Seq2SeqConfig& config() const { return cfg_; }
  const TokenVocabulary& vocab() const { return vocab_; }
  const PhonemeInventory& inventory() const { return inventory_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  SpeakerTable<T>& speakers() { return speakers_; }
  const SpeakerTable<T>& speakers() const { return speakers_; }
  Tensor<T> embedding() const { return embedding_; }

  // --------------------------------------------------------------- encoder

  /// Encoder output before the speaker concat: [B, T, 2H].
  Tensor<T> encode_text(Tape<T>& tape, const std::vector<int>& tokens, std::size_t max_tokens,
                        const std::vector<std::size_t>& lengths) const {
    const std::size_t batch = lengths.size();
    detail::require(batch >= 1 && tokens.size() == batch * max_tokens,
                    "encode: token buffer does not match lengths");
    for (auto l : lengths) {
      if (l == 0) throw std::invalid_argument("encode: empty token sequence");
      detail::require(l <= max_tokens, "encode: length exceeds padded width");
    }
    for (int id : tokens) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside [0, " +
                                std::to_string(vocab_.size()) + ")");
      }
    }
    bool padded = false;
    for (auto l : lengths) padded |= l < max_tokens;
    Tensor<T> h = tape.reshape(tape.embedding(embedding_, tokens), {batch, max_tokens, cfg_.embed_dim});
    if (padded) h = tape.mul(h, time_mask(lengths, max_tokens, cfg_.embed_dim));
    for (const auto& conv : convs_) {
      h = tape.relu(conv(tape, h));
      if (padded) h = tape.mul(h, time_mask(lengths, max_tokens, h.dim(2)));
    }
    return blstm_(tape, h, lengths);
  }

  /// Memory [B, T, 2H + S]: encoder output with the speaker row on every
  /// position.
  Tensor<T> encode_tokens(Tape<T>& tape, const std::vector<int>& tokens, std::size_t max_tokens,
                          const std::vector<std::size_t>& lengths,
                          const std::vector<int>& speakers) const {
    Tensor<T> text = encode_text(tape, tokens, max_tokens, lengths);
    return tape.concat({text, speaker_rows(tape, speakers, max_tokens)}, 2);
  }

  Tensor<T> encode_tokens(Tape<T>& tape, const TokenSequence& seq, const std::string& speaker) const {
    const int s = speakers_.index(speaker);
    return encode_tokens(tape, seq.ids, seq.ids.size(), {seq.ids.size()}, {s});
  }

  // --------------------------------------------------------------- decoder

  DecoderState<T> initial_state(std::size_t batch) const {
    DecoderState<T> s;
    s.att = att_rnn_.zero_state(batch);
    s.dec = dec_rnn_.zero_state(batch);
    s.mu = Tensor<T>({batch, cfg_.mixtures});
    s.context = Tensor<T>({batch, cfg_.memory_dim()});
    return s;
  }

  /// Prenet over previous frames [B, L, n_mels] with dropout masks drawn
  /// from `rng` (always active).
  Tensor<T> prenet(Tape<T>& tape, const Tensor<T>& frames, Rng& rng) const {
    Tensor<T> h = frames;
    const T keep = static_cast<T>(1.0 / (1.0 - cfg_.prenet_dropout));
    for (const auto& layer : prenet_) {
      h = tape.relu(layer(tape, h));
      if (cfg_.prenet_dropout > 0) {
        std::vector<T> mask(h.size());
        for (auto& m : mask) m = uniform01(rng) < cfg_.prenet_dropout ? T(0) : keep;
        h = tape.mul(h, Tensor<T>(h.shape(), std::move(mask)));
      }
    }
    return h;
  }

  struct StepOutput {
    DecoderState<T> state;
    Tensor<T> features;  // [B, H_dec + D], input of both output projections
    AttentionOutput<T> attention;
  };

  /// One decoder step from a prenet output [B, P].
  StepOutput decode_step(Tape<T>& tape, const Tensor<T>& pre, const DecoderState<T>& state,
                         const Tensor<T>& memory, const std::vector<std::size_t>& lengths) const {
    StepOutput out;
    out.state.att = att_rnn_.step(tape, tape.concat({pre, state.context}, 1), state.att);
    out.attention =
        gmm_attention_step(tape, att_proj_(tape, out.state.att.h), state.mu, memory, lengths);
    out.state.mu = out.attention.state.mu;
    out.state.context = out.attention.context;
    out.state.dec =
        dec_rnn_.step(tape, tape.concat({out.state.att.h, out.state.context}, 1), state.dec);
    out.features = tape.concat({out.state.dec.h, out.state.context}, 1);
    return out;
  }

  /// Teacher-forced pass: exactly one output frame per target frame.
  DecoderOutput<T> forward(Tape<T>& tape, const Seq2SeqBatch<T>& b, Rng& rng) const {
    const std::size_t batch = b.batch(), frames = b.max_frames, m = cfg_.n_mels;
    detail::require(b.mels.rank() == 3 && b.mels.dim(0) == batch && b.mels.dim(1) == frames &&
                        b.mels.dim(2) == m,
                    "seq2seq forward: mels " + shape_str(b.mels.shape()));
    Tensor<T> memory = encode_tokens(tape, b.tokens, b.max_tokens, b.token_lengths, b.speakers);
    // previous frames: zero go-frame, then the targets shifted by one
    std::vector<T> prev(batch * frames * m, T(0));
    auto y = b.mels.data();
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t t = 1; t < frames; ++t) {
        std::copy_n(y.data() + (i * frames + t - 1) * m, m, prev.data() + (i * frames + t) * m);
      }
    }
    Tensor<T> pre = prenet(tape, Tensor<T>({batch, frames, m}, std::move(prev)), rng);
    DecoderState<T> state = initial_state(batch);
    std::vector<Tensor<T>> feats;
    DecoderOutput<T> out;
    feats.reserve(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      Tensor<T> p = tape.reshape(tape.slice(pre, 1, t, t + 1), {batch, cfg_.prenet_dim});
      StepOutput s = decode_step(tape, p, state, memory, b.token_lengths);
      feats.push_back(s.features);
      out.alphas.push_back(s.attention.alpha);
      out.means.push_back(s.state.mu);
      state = std::move(s.state);
    }
    Tensor<T> f = tape.stack(feats, 1);  // [B, L, H + D]
    out.mels = mel_proj_(tape, f);
    out.stop_logits = tape.reshape(stop_proj_(tape, f), {batch, frames});
    return out;
  }

  /// Autoregressive synthesis for one sequence. Stops once sigmoid(stop)
  /// exceeds the threshold (that frame is kept) or after max_steps frames;
  /// max_steps < 0 means max_steps_per_token * tokens.
  Synthesis synthesize(const TokenSequence& seq, const std::string& speaker, std::uint64_t seed,
                       long max_steps = -1) const {
    if (seq.ids.empty()) throw std::invalid_argument("synthesize: empty token sequence");
    const std::size_t limit = max_steps < 0 ? cfg_.max_steps_per_token * seq.ids.size()
                                            : static_cast<std::size_t>(max_steps);
    Tape<T> tape(Tape<T>::Mode::kNoGrad);
    Rng rng(seed);
    Tensor<T> memory = encode_tokens(tape, seq, speaker);
    const std::vector<std::size_t> lengths = {seq.ids.size()};
    DecoderState<T> state = initial_state(1);
    Tensor<T> prev({1, 1, cfg_.n_mels});
    Synthesis out;
    out.mel.n_mels = cfg_.n_mels;
    out.hit_max_steps = true;
    for (std::size_t t = 0; t < limit; ++t) {
      Tensor<T> p = tape.reshape(prenet(tape, prev, rng), {1, cfg_.prenet_dim});
      StepOutput s = decode_step(tape, p, state, memory, lengths);
      Tensor<T> frame = mel_proj_(tape, s.features);
      const double stop = static_cast<double>(stop_proj_(tape, s.features).item());
      for (T v : frame.data()) out.mel.data.push_back(cfg_.norm.inverse(static_cast<double>(v)));
      out.mel.frames += 1;
      out.means.emplace_back(s.state.mu.values().begin(), s.state.mu.values().end());
      prev = Tensor<T>({1, 1, cfg_.n_mels}, frame.values());
      state = std::move(s.state);
      if (1.0 / (1.0 + std::exp(-stop)) > cfg_.stop_threshold) {
        out.hit_max_steps = false;
        break;
      }
    }
    return out;
  }

  // ---------------------------------------------------------- persistence

  void save(TensorArchive& ar) const {
    const std::string cfg = to_json(cfg_).dump();
    ar.put_string("meta/kind", kKind);
    ar.put_string("meta/config", cfg);
    ar.put_i64("meta/config_hash", {static_cast<std::int64_t>(fnv1a64(cfg))});
    ar.put_string("meta/speakers", join_lines(speakers_.ids()));
    ar.put_i64("vocab/sizes", {static_cast<std::int64_t>(vocab_.n_ulus()),
                               static_cast<std::int64_t>(vocab_.n_phones())});
    ar.put_string("vocab/inventory", join_lines(inventory_.symbols()));
    params_.save(ar, "param/");
  }

  static Seq2Seq load(const TensorArchive& ar) {
    if (!ar.contains("meta/kind") || ar.get_string("meta/kind") != kKind) {
      throw FormatError("checkpoint is not a seq2seq checkpoint");
    }
    Seq2SeqConfig cfg;
    read_json(Json::parse(ar.get_string("meta/config")), "checkpoint config", cfg);
    const auto sizes = ar.get_i64("vocab/sizes");
    if (sizes.size() != 2) throw FormatError("malformed vocab/sizes");
    TokenVocabulary vocab(static_cast<std::size_t>(sizes[0]), static_cast<std::size_t>(sizes[1]));
    Seq2Seq model(cfg, vocab, PhonemeInventory(split_lines(ar.get_string("vocab/inventory"))),
                  split_lines(ar.get_string("meta/speakers")), 0);
    model.params_.load(ar, "param/");
    return model;
  }

 private:
  static Tensor<T> time_mask(const std::vector<std::size_t>& lengths, std::size_t steps,
                             std::size_t width) {
    std::vector<T> m(lengths.size() * steps * width, T(0));
    for (std::size_t b = 0; b < lengths.size(); ++b) {
      std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(b * steps * width), lengths[b] * width, T(1));
    }
    return Tensor<T>({lengths.size(), steps, width}, std::move(m));
  }

  Tensor<T> speaker_rows(Tape<T>& tape, const std::vector<int>& speakers, std::size_t steps) const {
    std::vector<int> ids;
    ids.reserve(speakers.size() * steps);
    for (int s : speakers) {
      if (s < 0 || static_cast<std::size_t>(s) >= speakers_.size()) {
        throw std::out_of_range("unknown speaker index " + std::to_string(s));
      }
      ids.insert(ids.end(), steps, s);
    }
    return tape.reshape(tape.embedding(speakers_.table(), ids),
                        {speakers.size(), steps, cfg_.speaker_dim});
  }

  Seq2SeqConfig cfg_;
  TokenVocabulary vocab_;
  PhonemeInventory inventory_;
  ParameterSet<T> params_;
  Tensor<T> embedding_;
  std::vector<Conv1d<T>> convs_;
  BiLstm<T> blstm_;
  SpeakerTable<T> speakers_;
  std::vector<Linear<T>> prenet_;
  Lstm<T> att_rnn_;
  Linear<T> att_proj_;
  Lstm<T> dec_rnn_;
  Linear<T> mel_proj_, stop_proj_;
};

/// Masked MSE over valid frames plus masked stop BCE.
template <typename T>
Seq2SeqLoss<T> seq2seq_loss(Tape<T>& tape, const Tensor<T>& predicted, const Tensor<T>& target,
                            const Tensor<T>& stop_logits, const std::vector<T>& stop_targets,
                            const std::vector<T>& frame_mask) {
  if (predicted.shape() != target.shape()) {
    throw std::invalid_argument("seq2seq loss: predicted " + shape_str(predicted.shape()) +
                                " vs target " + shape_str(target.shape()));
  }
  const std::size_t frames = predicted.size() / predicted.shape().back();
  if (stop_logits.size() != frames || stop_targets.size() != frames || frame_mask.size() != frames) {
    throw std::invalid_argument("seq2seq loss: " + std::to_string(frames) + " frames but " +
                                std::to_string(stop_logits.size()) + " stop logits, " +
                                std::to_string(stop_targets.size()) + " stop targets, " +
                                std::to_string(frame_mask.size()) + " mask entries");
  }
  Seq2SeqLoss<T> l;
  l.mel = tape.masked_mse(predicted, target, frame_mask);
  l.stop = tape.bce_with_logits(stop_logits, stop_targets, frame_mask);
  l.total = tape.add(l.mel, l.stop);
  return l;
}

/// Pads examples into a teacher-forcing batch. Speaker strings are resolved
/// against the model's table.
template <typename T>
Seq2SeqBatch<T> make_batch(const std::vector<const PairedExample*>& items, const Seq2Seq<T>& model) {
  if (items.empty()) throw std::invalid_argument("make_batch: no examples");
  const auto& cfg = model.config();
  Seq2SeqBatch<T> b;
  for (const auto* p : items) {
    if (p->tokens.ids.empty()) throw std::invalid_argument("empty token sequence in " + p->tokens.utt_id);
    if (p->mel.frames == 0) throw std::invalid_argument("empty spectrogram in " + p->tokens.utt_id);
    if (p->mel.n_mels != cfg.n_mels) {
      throw std::invalid_argument(p->tokens.utt_id + ": mel has " + std::to_string(p->mel.n_mels) +
                                  " bins, model expects " + std::to_string(cfg.n_mels));
    }
    b.max_tokens = std::max(b.max_tokens, p->tokens.ids.size());
    b.max_frames = std::max(b.max_frames, p->mel.frames);
  }
  const std::size_t batch = items.size(), m = cfg.n_mels;
  const T floor_value = static_cast<T>(cfg.norm.forward(std::log(MelConfig{}.floor)));
  b.tokens.assign(batch * b.max_tokens, model.vocab().pad());
  std::vector<T> mels(batch * b.max_frames * m, floor_value);
  b.frame_mask.assign(batch * b.max_frames, T(0));
  b.stop_targets.assign(batch * b.max_frames, T(0));
  for (std::size_t i = 0; i < batch; ++i) {
    const auto& p = *items[i];
    std::copy(p.tokens.ids.begin(), p.tokens.ids.end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(i * b.max_tokens));
    b.token_lengths.push_back(p.tokens.ids.size());
    b.speakers.push_back(model.speakers().index(p.tokens.speaker));
    for (std::size_t j = 0; j < p.mel.data.size(); ++j) {
      mels[i * b.max_frames * m + j] = static_cast<T>(cfg.norm.forward(p.mel.data[j]));
    }
    b.frame_lengths.push_back(p.mel.frames);
    std::fill_n(b.frame_mask.begin() + static_cast<std::ptrdiff_t>(i * b.max_frames), p.mel.frames, T(1));
    b.stop_targets[i * b.max_frames + p.mel.frames - 1] = T(1);
  }
  b.mels = Tensor<T>({batch, b.max_frames, m}, std::move(mels));
  return b;
}

}  // namespace vclone

#endif  // VCLONE_SEQ2SEQ_HPP_
