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

// Adam with a step-decay schedule, batch sampling and the generic training
// loop shared by every stage.

#ifndef VCLONE_TRAINER_HPP_
#define VCLONE_TRAINER_HPP_

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vclone/config.hpp"
#include "vclone/nn.hpp"
#include "vclone/serialize.hpp"
#include "vclone/tape.hpp"
#include "vclone/vqvae.hpp"

namespace vclone {

enum class Stage { kVqVae, kSeq2Seq, kFinetuneTts, kFinetuneVc };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kVqVae: return "VQVAE";
    case Stage::kSeq2Seq: return "SEQ2SEQ";
    case Stage::kFinetuneTts: return "FINETUNE_TTS";
    case Stage::kFinetuneVc: return "FINETUNE_VC";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  for (Stage st : {Stage::kVqVae, Stage::kSeq2Seq, Stage::kFinetuneTts, Stage::kFinetuneVc}) {
    if (s == stage_name(st)) return st;
  }
  throw ConfigError("unknown stage '" + s + "'");
}

/// "step": base_lr until decay_start, then halved (decay_rate) at
/// decay_start and every decay_interval steps after. "constant": base_lr.
struct LrSchedule {
  std::string kind = "step";
  double base_lr = 1e-3;
  std::int64_t decay_start = 10000;
  std::int64_t decay_interval = 15000;
  double decay_rate = 0.5;

  static LrSchedule constant(double lr) {
    LrSchedule s;
    s.kind = "constant";
    s.base_lr = lr;
    return s;
  }

  double lr(std::int64_t step) const {
    if (kind == "constant" || step < decay_start) return base_lr;
    const std::int64_t k = 1 + (step - decay_start) / decay_interval;
    return base_lr * std::pow(decay_rate, static_cast<double>(k));
  }
};

inline Json to_json(const LrSchedule& s) {
  return {{"kind", s.kind},
          {"base_lr", s.base_lr},
          {"decay_start", s.decay_start},
          {"decay_interval", s.decay_interval},
          {"decay_rate", s.decay_rate}};
}

inline void read_json(const Json& j, const std::string& where, LrSchedule& s) {
  StrictReader(j, where)
      .get("kind", s.kind)
      .get("base_lr", s.base_lr)
      .get("decay_start", s.decay_start)
      .get("decay_interval", s.decay_interval)
      .get("decay_rate", s.decay_rate)
      .finish();
  if (s.kind != "step" && s.kind != "constant") {
    throw ConfigError(where + ".kind must be 'step' or 'constant'");
  }
  if (s.decay_interval <= 0) throw ConfigError(where + ".decay_interval must be positive");
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 1.0;  // global-norm clip; 0 disables
};

inline Json to_json(const AdamConfig& a) {
  return {{"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}, {"max_grad_norm", a.max_grad_norm}};
}

inline void read_json(const Json& j, const std::string& where, AdamConfig& a) {
  StrictReader(j, where)
      .get("beta1", a.beta1)
      .get("beta2", a.beta2)
      .get("eps", a.eps)
      .get("max_grad_norm", a.max_grad_norm)
      .finish();
}

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool matches_any(const std::string& name, const std::vector<std::string>& patterns) {
  for (const auto& p : patterns) {
    if (fnmatch(p.c_str(), name.c_str(), 0) == 0) return true;
  }
  return false;
}

template <typename T>
struct OptimizerState {
  std::map<std::string, std::vector<T>> m, v;
  std::int64_t step = 0;  // updates applied so far

  void save(TensorArchive& ar) const {
    for (const auto& [name, buf] : m) ar.put("adam/m/" + name, Tensor<T>({buf.size()}, buf));
    for (const auto& [name, buf] : v) ar.put("adam/v/" + name, Tensor<T>({buf.size()}, buf));
    ar.put_i64("meta/step", {step});
  }

  static OptimizerState load(const TensorArchive& ar) {
    OptimizerState s;
    for (const auto& r : ar.records()) {
      if (r.name.rfind("adam/m/", 0) == 0) s.m[r.name.substr(7)] = ar.get<T>(r.name).values();
      if (r.name.rfind("adam/v/", 0) == 0) s.v[r.name.substr(7)] = ar.get<T>(r.name).values();
    }
    if (ar.contains("meta/step")) s.step = ar.get_i64("meta/step").at(0);
    return s;
  }
};

/// One Adam update at learning rate schedule.lr(state.step + 1). Parameters
/// matching `frozen` are left untouched; parameters without a gradient
/// buffer are skipped. Returns the pre-clip global gradient norm.
template <typename T>
double adam_step(ParameterSet<T>& params, OptimizerState<T>& state, const LrSchedule& schedule,
                 const AdamConfig& cfg, const std::vector<std::string>& frozen = {}) {
  std::vector<std::pair<const std::string*, Tensor<T>>> active;
  double sq = 0.0;
  for (const auto& [name, handle] : params.items()) {
    Tensor<T> p = handle;
    if (matches_any(name, frozen) || !p.has_grad()) continue;
    for (T g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NonFiniteError("non-finite gradient in parameter '" + name + "'");
      }
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
    active.emplace_back(&name, p);
  }
  const double norm = std::sqrt(sq);
  const double clip = (cfg.max_grad_norm > 0 && norm > cfg.max_grad_norm) ? cfg.max_grad_norm / norm : 1.0;
  state.step += 1;
  const double lr = schedule.lr(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : active) {
    auto& m = state.m[*name];
    auto& v = state.v[*name];
    // rows appended to a table (new speakers) start with zero moments
    if (m.size() != p.size()) m.resize(p.size(), T(0));
    if (v.size() != p.size()) v.resize(p.size(), T(0));
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * clip;
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
  }
  return norm;
}

// ------------------------------------------------------------------ sampling

struct BatchDraw {
  std::vector<std::size_t> indices;
  bool with_replacement = false;
};

/// Uniform draw over [0, n): distinct indices when size <= n, otherwise with
/// replacement (flagged).
inline BatchDraw sample_batch(std::size_t n, std::size_t size, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample_batch: empty dataset");
  BatchDraw d;
  d.with_replacement = size > n;
  while (d.indices.size() < size) {
    const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    if (!d.with_replacement &&
        std::find(d.indices.begin(), d.indices.end(), i) != d.indices.end()) {
      continue;
    }
    d.indices.push_back(i);
  }
  return d;
}

// -------------------------------------------------------------------- loop

struct TrainPlan {
  Stage stage = Stage::kVqVae;
  std::int64_t steps = 2000;
  std::size_t batch_size = 8;
  std::vector<std::string> frozen;
  std::uint64_t seed = 1;                // set from the run seed, not from JSON
  LrSchedule schedule;
  AdamConfig adam;
  std::int64_t checkpoint_every = 500;   // 0: only at the end
  std::size_t crop_frames = 64;          // VQ-VAE training crops
  std::string out_dir;                   // checkpoints + trace; empty: none
};

inline Json to_json(const TrainPlan& p) {
  return {{"stage", stage_name(p.stage)},   {"steps", p.steps},
          {"batch_size", p.batch_size},     {"frozen", p.frozen},
          {"schedule", to_json(p.schedule)},
          {"adam", to_json(p.adam)},        {"checkpoint_every", p.checkpoint_every},
          {"crop_frames", p.crop_frames}};
}

inline void read_json(const Json& j, const std::string& where, TrainPlan& p) {
  std::string stage = stage_name(p.stage);
  StrictReader(j, where)
      .get("stage", stage)
      .get("steps", p.steps)
      .get("batch_size", p.batch_size)
      .get("frozen", p.frozen)
      .nested("schedule", [&](const Json& s, const std::string& w) { read_json(s, w, p.schedule); })
      .nested("adam", [&](const Json& s, const std::string& w) { read_json(s, w, p.adam); })
      .get("checkpoint_every", p.checkpoint_every)
      .get("crop_frames", p.crop_frames)
      .finish();
  p.stage = parse_stage(stage);
  if (p.batch_size == 0) throw ConfigError(where + ".batch_size must be positive");
}

/// Frozen patterns for a stage, per the fine-tuning protocol.
inline std::vector<std::string> default_frozen(Stage s) {
  if (s == Stage::kFinetuneTts) return {"encoder.*"};
  return {};
}

template <typename T>
using LossTerms = std::vector<std::pair<std::string, Tensor<T>>>;  // first is the total

struct TraceRow {
  std::int64_t step = 0;
  double lr = 0;
  double grad_norm = 0;
  std::vector<std::pair<std::string, double>> terms;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  std::vector<std::string> checkpoints;

  double mean_total(std::size_t last_n) const {
    if (trace.empty()) return 0.0;
    const std::size_t n = std::min(last_n, trace.size());
    double s = 0;
    for (std::size_t i = trace.size() - n; i < trace.size(); ++i) s += trace[i].terms.at(0).second;
    return s / static_cast<double>(n);
  }
};

/// Runs `plan.steps` updates. `step_fn(tape, rng)` builds the loss terms for
/// one batch; `save_fn(path, state)` writes a checkpoint. The trace is
/// appended to out_dir/trace.csv as it is produced.
template <typename T>
TrainResult run_training(ParameterSet<T>& params, OptimizerState<T>& state, const TrainPlan& plan,
                         const std::function<LossTerms<T>(Tape<T>&, Rng&)>& step_fn,
                         const std::function<void(const std::string&, const OptimizerState<T>&)>& save_fn,
                         const std::function<void(const TraceRow&)>& on_step = {}) {
  namespace fs = std::filesystem;
  TrainResult result;
  Rng rng(plan.seed);
  std::ofstream csv;
  if (!plan.out_dir.empty()) {
    fs::create_directories(plan.out_dir);
    csv.open(fs::path(plan.out_dir) / "trace.csv");
    if (!csv) throw std::runtime_error("cannot write trace in '" + plan.out_dir + "'");
    csv << std::setprecision(9);
  }
  const std::int64_t first = state.step;
  for (std::int64_t i = 1; i <= plan.steps; ++i) {
    params.zero_grad();
    Tape<T> tape;
    LossTerms<T> terms = step_fn(tape, rng);
    TraceRow row;
    for (const auto& [name, t] : terms) row.terms.emplace_back(name, static_cast<double>(t.item()));
    if (!std::isfinite(row.terms.at(0).second)) {
      throw NonFiniteError("non-finite loss at step " + std::to_string(state.step + 1));
    }
    tape.backward(terms.at(0).second);
    row.lr = plan.schedule.lr(state.step + 1);
    row.grad_norm = adam_step(params, state, plan.schedule, plan.adam, plan.frozen);
    row.step = state.step;
    if (!params.all_finite()) {
      throw NonFiniteError("non-finite parameter after step " + std::to_string(state.step));
    }
    if (csv.is_open()) {
      if (i == 1) {
        csv << "step,lr,grad_norm";
        for (const auto& [name, _] : row.terms) csv << ',' << name;
        csv << '\n';
      }
      csv << row.step << ',' << row.lr << ',' << row.grad_norm;
      for (const auto& [_, v] : row.terms) csv << ',' << v;
      csv << '\n';
      csv.flush();
    }
    if (on_step) on_step(row);
    result.trace.push_back(std::move(row));
    const bool periodic = plan.checkpoint_every > 0 && (state.step - first) % plan.checkpoint_every == 0;
    if (!plan.out_dir.empty() && (periodic || i == plan.steps)) {
      const std::string path =
          (fs::path(plan.out_dir) / ("step_" + std::to_string(state.step) + ".vclt")).string();
      save_fn(path, state);
      result.checkpoints.push_back(path);
    }
  }
  return result;
}

// ------------------------------------------------------------------- VQ-VAE

/// One normalized utterance for VQ-VAE training.
template <typename T>
struct VqExample {
  Tensor<T> features;  // [1, N, n_mels]
  int speaker = 0;
};

/// Random crops of `crop` frames (shortened to the shortest utterance in
/// the batch when needed) stacked into [B, L, n_mels].
template <typename T>
std::pair<Tensor<T>, std::vector<int>> vq_batch(const std::vector<VqExample<T>>& data,
                                                std::size_t batch_size, std::size_t crop, Rng& rng) {
  const BatchDraw draw = sample_batch(data.size(), batch_size, rng);
  std::size_t len = crop;
  for (auto i : draw.indices) len = std::min(len, data[i].features.dim(1));
  const std::size_t m = data.front().features.dim(2);
  std::vector<T> buf;
  buf.reserve(draw.indices.size() * len * m);
  std::vector<int> speakers;
  for (auto i : draw.indices) {
    const auto& f = data[i].features;
    const std::size_t slack = f.dim(1) - len;
    const auto start = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(slack + 1));
    const auto* src = f.data().data() + start * m;
    buf.insert(buf.end(), src, src + len * m);
    speakers.push_back(data[i].speaker);
  }
  return {Tensor<T>({draw.indices.size(), len, m}, std::move(buf)), std::move(speakers)};
}

template <typename T>
std::function<LossTerms<T>(Tape<T>&, Rng&)> vqvae_step(VqVae<T>& model,
                                                       const std::vector<VqExample<T>>& data,
                                                       const TrainPlan& plan) {
  if (data.empty()) throw std::invalid_argument("VQ-VAE training: no utterances");
  return [&model, &data, plan](Tape<T>& tape, Rng& rng) {
    auto [x, speakers] = vq_batch(data, plan.batch_size, plan.crop_frames, rng);
    VqForward<T> f = model.forward(tape, x, speakers);
    model.count_usage(f.q.indices);
    return LossTerms<T>{{"total", f.loss.total},
                        {"recon", f.loss.recon},
                        {"codebook", f.loss.codebook},
                        {"commitment", f.loss.commitment}};
  };
}

}  // namespace vclone

#endif  // VCLONE_TRAINER_HPP_
