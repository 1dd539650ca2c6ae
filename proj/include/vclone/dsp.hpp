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

// Audio I/O, log-mel analysis, Griffin-Lim resynthesis and DTW-aligned mel
// cepstral distortion.

#ifndef VCLONE_DSP_HPP_
#define VCLONE_DSP_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "vclone/serialize.hpp"

namespace vclone {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  double seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct MelConfig {
  int sample_rate = 16000;
  std::size_t n_fft = 1024;
  std::size_t win_length = 800;
  std::size_t hop_length = 200;
  std::size_t n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double floor = 1e-5;

  std::size_t n_bins() const { return n_fft / 2 + 1; }
};

/// frames x n_mels natural-log magnitudes, row-major.
struct MelSpectrogram {
  std::size_t frames = 0;
  std::size_t n_mels = 0;
  std::size_t hop_length = 200;
  int sample_rate = 16000;
  std::vector<double> data;

  double& at(std::size_t t, std::size_t m) { return data[t * n_mels + m]; }
  double at(std::size_t t, std::size_t m) const { return data[t * n_mels + m]; }
  bool empty() const { return frames == 0; }
};

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------------ WAV I/O

namespace wav_detail {

inline std::uint32_t u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace wav_detail

/// Reads RIFF/WAVE PCM16 or float32; multi-channel files keep channel 0.
inline Waveform load_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw WavError("cannot open wav '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  using wav_detail::u16;
  using wav_detail::u32;
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw WavError("'" + path + "': missing RIFF/WAVE header");
  }
  std::size_t pos = 12;
  int format = -1, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const std::uint32_t size = u32(chunk + 4);
    if (pos + 8 + size > buf.size()) {
      throw WavError("'" + path + "': chunk overruns file");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw WavError("'" + path + "': short fmt chunk");
      format = u16(chunk + 8);
      channels = u16(chunk + 10);
      rate = u32(chunk + 12);
      bits = u16(chunk + 22);
      if (format == 0xFFFE && size >= 40) format = u16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      pcm = chunk + 8;
      pcm_bytes = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (format < 0 || !pcm) throw WavError("'" + path + "': missing fmt or data chunk");
  if (channels < 1 || rate == 0) throw WavError("'" + path + "': malformed fmt chunk");
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const std::size_t frame = 2 * static_cast<std::size_t>(channels);
    const std::size_t n = pcm_bytes / frame;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = static_cast<std::int16_t>(u16(pcm + i * frame));
      w.samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t frame = 4 * static_cast<std::size_t>(channels);
    const std::size_t n = pcm_bytes / frame;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, pcm + i * frame, 4);
      if (!std::isfinite(v)) throw WavError("'" + path + "': non-finite sample");
      w.samples[i] = std::clamp(v, -1.0f, 1.0f);
    }
  } else {
    throw WavError("'" + path + "': unsupported encoding (format " +
                   std::to_string(format) + ", " + std::to_string(bits) +
                   " bits); expected PCM16 or float32");
  }
  return w;
}

/// Writes mono PCM16.
inline void save_wav(const Waveform& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw WavError("cannot open '" + path + "' for writing");
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  auto put32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  os.write("RIFF", 4);
  put32(36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(w.sample_rate));
  put32(static_cast<std::uint32_t>(w.sample_rate) * 2);
  put16(2);
  put16(16);
  os.write("data", 4);
  put32(data_bytes);
  for (float s : w.samples) {
    const double scaled = std::nearbyint(static_cast<double>(std::clamp(s, -1.0f, 1.0f)) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put16(static_cast<std::uint16_t>(v));
  }
  if (!os) throw WavError("write failed for '" + path + "'");
}

// -------------------------------------------------------------- filterbank

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Center frequency (Hz) of each triangular mel filter.
inline std::vector<double> mel_centers(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> c(cfg.n_mels);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    c[m] = mel_to_hz(lo + (hi - lo) * static_cast<double>(m + 1) /
                              static_cast<double>(cfg.n_mels + 1));
  }
  return c;
}

/// Unnormalized triangular filters, n_mels x n_bins (peak weight 1).
inline std::vector<double> mel_filterbank(const MelConfig& cfg) {
  const std::size_t bins = cfg.n_bins();
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(cfg.n_mels + 1));
  }
  std::vector<double> fb(cfg.n_mels * bins, 0.0);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      double w = 0.0;
      if (f > l && f <= c) w = (f - l) / (c - l);
      else if (f > c && f < r) w = (r - f) / (r - c);
      fb[m * bins + k] = w;
    }
  }
  return fb;
}

// -------------------------------------------------------------------- STFT

namespace stft_detail {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

/// Owns FFTW buffers and plans for one transform size. FFTW's planner is not
/// reentrant, so plan creation and destruction are serialized.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_, FFTW_ESTIMATE);
  }
  ~Fft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  double* real() { return real_; }
  fftw_complex* spec() { return spec_; }
  void forward() { fftw_execute(fwd_); }
  /// Unnormalized inverse (scaled by n).
  void inverse() { fftw_execute(inv_); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan fwd_, inv_;
};

inline std::size_t frame_count(std::size_t len, const MelConfig& cfg) {
  return len < cfg.win_length ? 0 : 1 + (len - cfg.win_length) / cfg.hop_length;
}

/// Complex STFT, frames x bins.
inline std::vector<std::complex<double>> stft(const std::vector<double>& x,
                                              const MelConfig& cfg, Fft& fft) {
  const std::size_t frames = frame_count(x.size(), cfg), bins = cfg.n_bins();
  const std::size_t offset = (cfg.n_fft - cfg.win_length) / 2;
  const auto window = hann(cfg.win_length);
  std::vector<std::complex<double>> out(frames * bins);
  for (std::size_t t = 0; t < frames; ++t) {
    double* buf = fft.real();
    std::fill_n(buf, cfg.n_fft, 0.0);
    for (std::size_t i = 0; i < cfg.win_length; ++i) {
      buf[offset + i] = x[t * cfg.hop_length + i] * window[i];
    }
    fft.forward();
    for (std::size_t k = 0; k < bins; ++k) {
      out[t * bins + k] = {fft.spec()[k][0], fft.spec()[k][1]};
    }
  }
  return out;
}

/// Weighted overlap-add inverse of stft().
inline std::vector<double> istft(const std::vector<std::complex<double>>& spec,
                                 std::size_t frames, const MelConfig& cfg, Fft& fft) {
  const std::size_t bins = cfg.n_bins();
  const std::size_t offset = (cfg.n_fft - cfg.win_length) / 2;
  const std::size_t len = frames ? (frames - 1) * cfg.hop_length + cfg.win_length : 0;
  const auto window = hann(cfg.win_length);
  std::vector<double> out(len, 0.0), norm(len, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k) {
      fft.spec()[k][0] = spec[t * bins + k].real();
      fft.spec()[k][1] = spec[t * bins + k].imag();
    }
    fft.inverse();
    const double scale = 1.0 / static_cast<double>(cfg.n_fft);
    for (std::size_t i = 0; i < cfg.win_length; ++i) {
      const std::size_t pos = t * cfg.hop_length + i;
      out[pos] += fft.real()[offset + i] * scale * window[i];
      norm[pos] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < len; ++i) {
    if (norm[i] > 1e-8) out[i] /= norm[i];
  }
  return out;
}

}  // namespace stft_detail

inline MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  if (w.samples.size() < cfg.win_length) {
    throw std::invalid_argument("mel_spectrogram: " + std::to_string(w.samples.size()) +
                                " samples is shorter than one window (" +
                                std::to_string(cfg.win_length) + ")");
  }
  if (w.sample_rate != cfg.sample_rate) {
    throw std::invalid_argument("mel_spectrogram: waveform rate " +
                                std::to_string(w.sample_rate) + " != configured " +
                                std::to_string(cfg.sample_rate));
  }
  std::vector<double> x(w.samples.begin(), w.samples.end());
  stft_detail::Fft fft(cfg.n_fft);
  const auto spec = stft_detail::stft(x, cfg, fft);
  const auto fb = mel_filterbank(cfg);
  const std::size_t bins = cfg.n_bins();
  MelSpectrogram m;
  m.frames = stft_detail::frame_count(x.size(), cfg);
  m.n_mels = cfg.n_mels;
  m.hop_length = cfg.hop_length;
  m.sample_rate = cfg.sample_rate;
  m.data.resize(m.frames * m.n_mels);
  std::vector<double> mag(bins);
  for (std::size_t t = 0; t < m.frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k) mag[k] = std::abs(spec[t * bins + k]);
    for (std::size_t j = 0; j < cfg.n_mels; ++j) {
      double acc = 0.0;
      const double* row = fb.data() + j * bins;
      for (std::size_t k = 0; k < bins; ++k) acc += row[k] * mag[k];
      m.at(t, j) = std::log(std::max(cfg.floor, acc));
    }
  }
  return m;
}

/// Griffin-Lim resynthesis from a log-mel spectrogram. The mel magnitudes are
/// mapped back to linear bins with the filterbank pseudo-inverse (negative
/// values clamped to zero). If `error_curve` is given it receives, after each
/// iteration, ||(|STFT(x)| - S)||_F / ||S||_F.
inline Waveform griffin_lim(const MelSpectrogram& mel, int iterations,
                            const MelConfig& cfg,
                            std::vector<double>* error_curve = nullptr,
                            std::uint64_t phase_seed = 0) {
  if (iterations < 1) throw std::invalid_argument("griffin_lim: iterations must be >= 1");
  if (mel.n_mels != cfg.n_mels) {
    throw std::invalid_argument("griffin_lim: mel has " + std::to_string(mel.n_mels) +
                                " bins, config expects " + std::to_string(cfg.n_mels));
  }
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  if (mel.frames == 0) return out;
  const std::size_t bins = cfg.n_bins(), frames = mel.frames;

  const auto fb = mel_filterbank(cfg);
  Eigen::MatrixXd f(cfg.n_mels, bins);
  for (std::size_t j = 0; j < cfg.n_mels; ++j) {
    for (std::size_t k = 0; k < bins; ++k) f(j, k) = fb[j * bins + k];
  }
  const Eigen::MatrixXd pinv = f.completeOrthogonalDecomposition().pseudoInverse();
  std::vector<double> target(frames * bins);
  Eigen::VectorXd mags(cfg.n_mels);
  double target_norm = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < cfg.n_mels; ++j) mags(j) = std::exp(mel.at(t, j));
    const Eigen::VectorXd lin = pinv * mags;
    for (std::size_t k = 0; k < bins; ++k) {
      target[t * bins + k] = std::max(0.0, lin(k));
      target_norm += target[t * bins + k] * target[t * bins + k];
    }
  }
  target_norm = std::sqrt(target_norm);

  std::mt19937_64 rng(phase_seed);
  std::vector<std::complex<double>> spec(frames * bins);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const double phase = 2.0 * std::numbers::pi *
                         (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    spec[i] = std::polar(target[i], phase);
  }
  stft_detail::Fft fft(cfg.n_fft);
  std::vector<double> x;
  for (int it = 0; it < iterations; ++it) {
    x = stft_detail::istft(spec, frames, cfg, fft);
    const auto re = stft_detail::stft(x, cfg, fft);
    double err = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const double mag = std::abs(re[i]);
      err += (mag - target[i]) * (mag - target[i]);
      spec[i] = mag > 0.0 ? re[i] * (target[i] / mag) : std::complex<double>(target[i], 0.0);
    }
    if (error_curve) {
      error_curve->push_back(target_norm > 0.0 ? std::sqrt(err) / target_norm : std::sqrt(err));
    }
  }
  x = stft_detail::istft(spec, frames, cfg, fft);
  out.samples.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.samples[i] = static_cast<float>(std::clamp(x[i], -1.0, 1.0));
  }
  return out;
}

// --------------------------------------------------------------------- MCD

/// Orthonormal DCT-II of each log-mel frame, c0 dropped: frames x (n_mels-1).
inline std::vector<double> mel_cepstra(const MelSpectrogram& m) {
  const std::size_t n = m.n_mels, d = n - 1;
  std::vector<double> out(m.frames * d);
  const double scale = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t t = 0; t < m.frames; ++t) {
    for (std::size_t q = 1; q < n; ++q) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += m.at(t, j) * std::cos(std::numbers::pi * static_cast<double>(q) *
                                     (static_cast<double>(j) + 0.5) / static_cast<double>(n));
      }
      out[t * d + q - 1] = scale * acc;
    }
  }
  return out;
}

/// Mel cepstral distortion (dB) averaged along the DTW path.
///
/// The path minimizes the summed Euclidean cepstral distance under steps
/// (1,0), (0,1), (1,1); among equal-cost paths the shortest wins, which makes
/// the value independent of argument order.
inline double mcd_dtw(const MelSpectrogram& a, const MelSpectrogram& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mcd_dtw: empty spectrogram");
  if (a.n_mels != b.n_mels || a.sample_rate != b.sample_rate) {
    throw std::invalid_argument("mcd_dtw: spectrograms differ in n_mels or sample rate");
  }
  if (a.n_mels < 2) throw std::invalid_argument("mcd_dtw: need at least 2 mel bins");
  const auto ca = mel_cepstra(a), cb = mel_cepstra(b);
  const std::size_t d = a.n_mels - 1, n = a.frames, m = b.frames;
  auto dist = [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t q = 0; q < d; ++q) {
      const double e = ca[i * d + q] - cb[j * d + q];
      acc += e * e;
    }
    return std::sqrt(acc);
  };
  struct Cell {
    double cost;
    std::size_t len;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Cell> acc(n * m, {inf, 0});
  auto better = [](const Cell& x, const Cell& y) {
    return x.cost < y.cost || (x.cost == y.cost && x.len < y.len);
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      Cell best{inf, 0};
      if (i == 0 && j == 0) {
        best = {0.0, 0};
      } else {
        if (i > 0 && j > 0 && better(acc[(i - 1) * m + j - 1], best)) best = acc[(i - 1) * m + j - 1];
        if (i > 0 && better(acc[(i - 1) * m + j], best)) best = acc[(i - 1) * m + j];
        if (j > 0 && better(acc[i * m + j - 1], best)) best = acc[i * m + j - 1];
      }
      acc[i * m + j] = {best.cost + dist(i, j), best.len + 1};
    }
  }
  const Cell& end = acc[n * m - 1];
  const double k = 10.0 / std::numbers::ln10 * std::sqrt(2.0);
  return k * end.cost / static_cast<double>(end.len);
}

// ------------------------------------------------------------ persistence

inline void put_mel(TensorArchive& ar, const std::string& name, const MelSpectrogram& m) {
  ar.put(name, Tensor<double>({m.frames, m.n_mels}, m.data));
  ar.put_i64(name + ".meta", {static_cast<std::int64_t>(m.hop_length),
                              static_cast<std::int64_t>(m.sample_rate)});
}

inline MelSpectrogram get_mel(const TensorArchive& ar, const std::string& name) {
  const auto t = ar.get<double>(name);
  const auto meta = ar.get_i64(name + ".meta");
  if (t.rank() != 2 || meta.size() != 2) throw FormatError("malformed mel '" + name + "'");
  MelSpectrogram m;
  m.frames = t.dim(0);
  m.n_mels = t.dim(1);
  m.data = t.values();
  m.hop_length = static_cast<std::size_t>(meta[0]);
  m.sample_rate = static_cast<int>(meta[1]);
  return m;
}

}  // namespace vclone

#endif  // VCLONE_DSP_HPP_
