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

// Vector-quantized autoencoder over log-mel frames.
//
//   mel -> conv x3 (ReLU) -> BLSTM x2 -> linear -> z        (encoder)
//   z   -> nearest codebook row e_k                          (quantizer)
//   [e_k ; speaker] -> BLSTM x3 -> linear -> mel             (decoder)
//
// The decoder sees e_k through a straight-through connection, so the
// reconstruction gradient reaches the encoder as if quantization were the
// identity. The codebook learns only from ||sg(z) - e_k||^2.

#ifndef VCLONE_VQVAE_HPP_
#define VCLONE_VQVAE_HPP_

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vclone/config.hpp"
#include "vclone/dsp.hpp"
#include "vclone/nn.hpp"
#include "vclone/serialize.hpp"
#include "vclone/tape.hpp"

namespace vclone {

struct VqVaeConfig {
  std::size_t n_mels = 40;
  std::size_t codebook_size = 32;
  std::size_t code_dim = 16;
  std::size_t conv_channels = 64;
  std::size_t conv_kernel = 5;
  std::size_t conv_layers = 3;
  std::size_t encoder_hidden = 32;
  std::size_t encoder_layers = 1;
  std::size_t decoder_hidden = 32;
  std::size_t decoder_layers = 1;
  std::size_t speaker_dim = 16;
  double beta = 0.25;
  FeatureNorm norm;

  /// Widths used in the original full-scale system.
  static VqVaeConfig full_scale() {
    VqVaeConfig c;
    c.n_mels = 80;
    c.codebook_size = 256;
    c.code_dim = 64;
    c.conv_channels = 512;
    c.encoder_hidden = 256;
    c.encoder_layers = 2;
    c.decoder_hidden = 256;
    c.decoder_layers = 3;
    c.speaker_dim = 64;
    return c;
  }
};

inline Json to_json(const VqVaeConfig& c) {
  return {{"n_mels", c.n_mels},
          {"codebook_size", c.codebook_size},
          {"code_dim", c.code_dim},
          {"conv_channels", c.conv_channels},
          {"conv_kernel", c.conv_kernel},
          {"conv_layers", c.conv_layers},
          {"encoder_hidden", c.encoder_hidden},
          {"encoder_layers", c.encoder_layers},
          {"decoder_hidden", c.decoder_hidden},
          {"decoder_layers", c.decoder_layers},
          {"speaker_dim", c.speaker_dim},
          {"beta", c.beta},
          {"norm", to_json(c.norm)}};
}

inline void read_json(const Json& j, const std::string& where, VqVaeConfig& c) {
  StrictReader(j, where)
      .get("n_mels", c.n_mels)
      .get("codebook_size", c.codebook_size)
      .get("code_dim", c.code_dim)
      .get("conv_channels", c.conv_channels)
      .get("conv_kernel", c.conv_kernel)
      .get("conv_layers", c.conv_layers)
      .get("encoder_hidden", c.encoder_hidden)
      .get("encoder_layers", c.encoder_layers)
      .get("decoder_hidden", c.decoder_hidden)
      .get("decoder_layers", c.decoder_layers)
      .get("speaker_dim", c.speaker_dim)
      .get("beta", c.beta)
      .nested("norm", [&](const Json& n, const std::string& w) { read_json(n, w, c.norm); })
      .finish();
  if (c.conv_kernel % 2 == 0) throw ConfigError(where + ".conv_kernel must be odd");
  if (c.codebook_size == 0 || c.code_dim == 0) {
    throw ConfigError(where + ": codebook must be non-empty");
  }
}

/// Index of the nearest row of `table` (rows of width `dim`) for each row of
/// `z`, by squared Euclidean distance. Ties go to the smaller index.
template <typename T>
std::vector<int> nearest_codes(std::span<const T> z, std::span<const T> table,
                               std::size_t dim) {
  if (table.empty() || dim == 0) throw std::invalid_argument("quantize: empty codebook");
  if (z.size() % dim != 0 || table.size() % dim != 0) {
    throw ShapeError("quantize: latent width does not match codebook width " +
                     std::to_string(dim));
  }
  const std::size_t rows = z.size() / dim, entries = table.size() / dim;
  std::vector<int> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const T* zi = z.data() + i * dim;
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t j = 0; j < entries; ++j) {
      const T* ej = table.data() + j * dim;
      double d = 0.0;
      for (std::size_t q = 0; q < dim; ++q) {
        const double e = static_cast<double>(zi[q]) - static_cast<double>(ej[q]);
        d += e * e;
      }
      if (d < best) {
        best = d;
        arg = static_cast<int>(j);
      }
    }
    out[i] = arg;
  }
  return out;
}

template <typename T>
struct QuantizationResult {
  std::vector<int> indices;   // one per frame, row-major over [B, N]
  Tensor<T> quantized;        // e[k], [B, N, D]; gradient reaches the codebook
  Tensor<T> decoder_input;    // value of `quantized`, gradient of z
};

template <typename T>
struct VqLossBreakdown {
  Tensor<T> recon, codebook, commitment, total;
  double beta = 0.25;
};

/// recon + codebook + beta * commitment, each a mean over elements.
template <typename T>
VqLossBreakdown<T> vq_loss(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& x_hat,
                           const Tensor<T>& z, const Tensor<T>& quantized, double beta) {
  VqLossBreakdown<T> out;
  out.beta = beta;
  out.recon = tape.mse_loss(x_hat, x);
  out.codebook = tape.mse_loss(tape.stop_gradient(z), quantized);
  out.commitment = tape.mse_loss(z, tape.stop_gradient(quantized));
  out.total = tape.add(tape.add(out.recon, out.codebook),
                       tape.scale(out.commitment, static_cast<T>(beta)));
  return out;
}

template <typename T>
struct VqForward {
  Tensor<T> z;
  QuantizationResult<T> q;
  Tensor<T> reconstruction;
  VqLossBreakdown<T> loss;
};

template <typename T>
class VqVae {
 public:
  VqVae(const VqVaeConfig& cfg, std::vector<std::string> speakers, std::uint64_t seed)
      : cfg_(cfg) {
    Rng rng(seed);
    std::size_t width = cfg.n_mels;
    for (std::size_t i = 0; i < cfg.conv_layers; ++i) {
      convs_.emplace_back(params_, "encoder.conv" + std::to_string(i), width,
                          cfg.conv_channels, cfg.conv_kernel, rng);
      width = cfg.conv_channels;
    }
    for (std::size_t i = 0; i < cfg.encoder_layers; ++i) {
      enc_rnn_.emplace_back(params_, "encoder.blstm" + std::to_string(i), width,
                            cfg.encoder_hidden, rng);
      width = 2 * cfg.encoder_hidden;
    }
    enc_proj_ = Linear<T>(params_, "encoder.proj", width, cfg.code_dim, rng);
    codebook_ = params_.create("codebook", {cfg.codebook_size, cfg.code_dim},
                               1.0 / static_cast<double>(cfg.codebook_size), rng);
    speakers_ = SpeakerTable<T>(params_, "speakers", std::move(speakers), cfg.speaker_dim, rng);
    width = cfg.code_dim + cfg.speaker_dim;
    for (std::size_t i = 0; i < cfg.decoder_layers; ++i) {
      dec_rnn_.emplace_back(params_, "decoder.blstm" + std::to_string(i), width,
                            cfg.decoder_hidden, rng);
      width = 2 * cfg.decoder_hidden;
    }
    dec_proj_ = Linear<T>(params_, "decoder.proj", width, cfg.n_mels, rng);
    usage_.assign(cfg.codebook_size, 0);
  }

  const VqVaeConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  Tensor<T> codebook() const { return codebook_; }
  SpeakerTable<T>& speakers() { return speakers_; }
  const SpeakerTable<T>& speakers() const { return speakers_; }

  /// x [B, N, n_mels] (normalized) -> z [B, N, D].
  Tensor<T> encode(Tape<T>& tape, const Tensor<T>& x) const {
    detail::require(x.rank() == 3 && x.dim(2) == cfg_.n_mels && x.dim(1) >= 1,
                    "vqvae encode: expected [B, N, " + std::to_string(cfg_.n_mels) +
                        "], got " + shape_str(x.shape()));
    Tensor<T> h = x;
    for (const auto& conv : convs_) h = tape.relu(conv(tape, h));
    for (const auto& rnn : enc_rnn_) h = rnn(tape, h);
    return enc_proj_(tape, h);
  }

  QuantizationResult<T> quantize(Tape<T>& tape, const Tensor<T>& z) const {
    detail::require(z.rank() == 3 && z.dim(2) == cfg_.code_dim,
                    "quantize: latent " + shape_str(z.shape()) + " vs code width " +
                        std::to_string(cfg_.code_dim));
    QuantizationResult<T> r;
    r.indices = nearest_codes<T>(z.data(), codebook_.data(), cfg_.code_dim);
    r.quantized = tape.reshape(tape.embedding(codebook_, r.indices), z.shape());
    r.decoder_input = tape.straight_through(z, r.quantized);
    return r;
  }

  /// codes [B, N, D], one speaker row index per batch item -> [B, N, n_mels].
  Tensor<T> decode(Tape<T>& tape, const Tensor<T>& codes,
                   const std::vector<int>& speakers) const {
    const std::size_t batch = codes.dim(0), frames = codes.dim(1);
    detail::require(speakers.size() == batch, "decode: one speaker per batch item");
    std::vector<int> per_frame;
    per_frame.reserve(batch * frames);
    for (int s : speakers) {
      if (s < 0 || static_cast<std::size_t>(s) >= speakers_.size()) {
        throw std::out_of_range("decode: unknown speaker index " + std::to_string(s));
      }
      per_frame.insert(per_frame.end(), frames, s);
    }
    Tensor<T> spk = tape.reshape(tape.embedding(speakers_.table(), per_frame),
                                 {batch, frames, cfg_.speaker_dim});
    Tensor<T> h = tape.concat({codes, spk}, 2);
    for (const auto& rnn : dec_rnn_) h = rnn(tape, h);
    return dec_proj_(tape, h);
  }

  VqForward<T> forward(Tape<T>& tape, const Tensor<T>& x,
                       const std::vector<int>& speakers) const {
    VqForward<T> f;
    f.z = encode(tape, x);
    f.q = quantize(tape, f.z);
    f.reconstruction = decode(tape, f.q.decoder_input, speakers);
    f.loss = vq_loss(tape, x, f.reconstruction, f.z, f.q.quantized, cfg_.beta);
    return f;
  }

  /// Mel (natural log) -> normalized [1, N, n_mels] tensor.
  Tensor<T> features(const MelSpectrogram& m) const {
    if (m.n_mels != cfg_.n_mels) {
      throw std::invalid_argument("mel has " + std::to_string(m.n_mels) +
                                  " bins, model expects " + std::to_string(cfg_.n_mels));
    }
    std::vector<T> v(m.data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(cfg_.norm.forward(m.data[i]));
    return Tensor<T>({1, m.frames, m.n_mels}, std::move(v));
  }

  /// Raw per-frame code indices (before run-length collapse).
  std::vector<int> extract_units(const MelSpectrogram& m) const {
    if (m.frames == 0) throw std::invalid_argument("extract_units: empty spectrogram");
    Tape<T> tape(Tape<T>::Mode::kNoGrad);
    Tensor<T> z = encode(tape, features(m));
    return nearest_codes<T>(z.data(), codebook_.data(), cfg_.code_dim);
  }

  /// Reconstruction of `m` as speaker `speaker` (natural-log mel).
  MelSpectrogram reconstruct(const MelSpectrogram& m, const std::string& speaker) const {
    const int s = speakers_.index(speaker);
    Tape<T> tape(Tape<T>::Mode::kNoGrad);
    Tensor<T> z = encode(tape, features(m));
    QuantizationResult<T> q = quantize(tape, z);
    Tensor<T> y = decode(tape, q.quantized, {s});
    MelSpectrogram out = m;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      out.data[i] = cfg_.norm.inverse(static_cast<double>(y.data()[i]));
    }
    return out;
  }

  // ------------------------------------------------------------ usage stats

  void count_usage(const std::vector<int>& indices) {
    for (int k : indices) ++usage_.at(static_cast<std::size_t>(k));
  }
  void reset_usage() { std::fill(usage_.begin(), usage_.end(), 0); }
  const std::vector<std::uint64_t>& usage() const { return usage_; }
  std::size_t codes_used() const {
    return static_cast<std::size_t>(
        std::count_if(usage_.begin(), usage_.end(), [](std::uint64_t u) { return u > 0; }));
  }

  // ------------------------------------------------------------ persistence

  static constexpr const char* kKind = "vqvae";

  void save(TensorArchive& ar) const {
    const std::string cfg = to_json(cfg_).dump();
    ar.put_string("meta/kind", kKind);
    ar.put_string("meta/config", cfg);
    ar.put_i64("meta/config_hash", {static_cast<std::int64_t>(fnv1a64(cfg))});
    ar.put_string("meta/speakers", join_lines(speakers_.ids()));
    params_.save(ar, "param/");
  }

  static VqVae load(const TensorArchive& ar) {
    if (!ar.contains("meta/kind") || ar.get_string("meta/kind") != kKind) {
      throw FormatError("checkpoint is not a VQ-VAE checkpoint");
    }
    VqVaeConfig cfg;
    read_json(Json::parse(ar.get_string("meta/config")), "checkpoint config", cfg);
    auto speakers = split_lines(ar.get_string("meta/speakers"));
    VqVae model(cfg, speakers, 0);
    model.params_.load(ar, "param/");
    return model;
  }

 private:
  VqVaeConfig cfg_;
  ParameterSet<T> params_;
  std::vector<Conv1d<T>> convs_;
  std::vector<BiLstm<T>> enc_rnn_;
  Linear<T> enc_proj_;
  Tensor<T> codebook_;
  SpeakerTable<T> speakers_;
  std::vector<BiLstm<T>> dec_rnn_;
  Linear<T> dec_proj_;
  std::vector<std::uint64_t> usage_;
};

}  // namespace vclone

#endif  // VCLONE_VQVAE_HPP_
