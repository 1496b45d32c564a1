// Copyright 2026 The Capy Authors.
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

#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "capy/corpus.hpp"
#include "capy/error.hpp"
#include "capy/genclient.hpp"
#include "capy/rng.hpp"
#include "capy/rouge.hpp"

namespace capy {

// A correctness estimate in [0,1].
class Score {
 public:
  constexpr Score() = default;
  explicit Score(double v) : value_(v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("score " + std::to_string(v) + " outside [0,1]");
  }
  static Score clamped(double v) { return Score(std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0)); }
  constexpr double value() const noexcept { return value_; }
  constexpr auto operator<=>(const Score&) const = default;

 private:
  double value_ = 0.0;
};

// ---------------------------------------------------------------------------
// Features

inline constexpr std::uint32_t kFeaturizerVersion = 1;
inline constexpr std::uint64_t kDefaultFeatureDim = std::uint64_t{1} << 20;
inline constexpr std::size_t kMaxCrossPairs = 512;

struct SparseFeatures {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;

  std::size_t size() const noexcept { return indices.size(); }
  bool operator==(const SparseFeatures&) const = default;
};

namespace detail {

struct HashedKey {
  std::uint64_t hash;
};

inline HashedKey feature_key(std::string_view prefix, std::string_view a, std::string_view b = {}) {
  std::uint64_t h = fnv1a(prefix);
  h = fnv1a(a, h);
  if (!b.empty()) {
    h = fnv1a("\x1f", h);
    h = fnv1a(b, h);
  }
  return {h};
}

inline std::string length_bucket(std::size_t instruction_len, std::size_t response_len) {
  if (response_len == 0) return "empty";
  const double ratio = static_cast<double>(response_len) / std::max<std::size_t>(1, instruction_len);
  const long b = std::clamp(std::lround(2.0 * std::log2(ratio)), -8L, 8L);
  return std::to_string(b);
}

}  // namespace detail

// 64-bit keys of every feature occurrence, before bucketing: field-tagged
// unigrams and bigrams of both sides, up to kMaxCrossPairs instruction x
// response unigram pairs (lowest hashes first), a length-ratio bucket and a
// constant bias feature.
inline std::vector<std::uint64_t> feature_hashes(std::string_view instruction, std::string_view response) {
  const auto it = rouge::tokenize(instruction);
  const auto rt = rouge::tokenize(response);

  std::vector<std::uint64_t> keys;
  keys.push_back(detail::feature_key("bias", "").hash);
  keys.push_back(detail::feature_key("len=", detail::length_bucket(it.size(), rt.size())).hash);
  auto ngrams = [&](const rouge::TokenSequence& t, std::string_view uni, std::string_view bi) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      keys.push_back(detail::feature_key(uni, t[i]).hash);
      if (i + 1 < t.size()) keys.push_back(detail::feature_key(bi, t[i], t[i + 1]).hash);
    }
  };
  ngrams(it, "i1=", "i2=");
  ngrams(rt, "r1=", "r2=");

  const std::unordered_set<std::string> iu(it.begin(), it.end());
  const std::unordered_set<std::string> ru(rt.begin(), rt.end());
  std::vector<std::uint64_t> cross;
  cross.reserve(iu.size() * ru.size());
  for (const auto& a : iu)
    for (const auto& b : ru) cross.push_back(detail::feature_key("x=", a, b).hash);
  if (cross.size() > kMaxCrossPairs) {
    std::nth_element(cross.begin(), cross.begin() + kMaxCrossPairs, cross.end());
    cross.resize(kMaxCrossPairs);
  }
  std::sort(cross.begin(), cross.end());
  keys.insert(keys.end(), cross.begin(), cross.end());
  return keys;
}

// Signed feature hashing of feature_hashes() into `feature_dim` buckets. An
// independent hash bit picks each occurrence's sign; collisions add up.
inline SparseFeatures featurize(std::string_view instruction, std::string_view response,
                                std::uint64_t feature_dim = kDefaultFeatureDim) {
  if (feature_dim == 0 || !std::has_single_bit(feature_dim) || feature_dim > (std::uint64_t{1} << 32))
    throw PreconditionError("feature_dim must be a power of two no larger than 2^32");
  const auto keys = feature_hashes(instruction, response);
  std::vector<std::pair<std::uint32_t, double>> entries;
  entries.reserve(keys.size());
  const std::uint64_t mask = feature_dim - 1;
  for (auto k : keys) {
    const double sign = (mix64(k) >> 63) ? -1.0 : 1.0;
    entries.emplace_back(static_cast<std::uint32_t>(k & mask), sign);
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseFeatures f;
  for (const auto& [idx, v] : entries) {
    if (!f.indices.empty() && f.indices.back() == idx) {
      f.values.back() += v;
    } else {
      f.indices.push_back(idx);
      f.values.push_back(v);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Model

// Linear regressor behind a sigmoid. `Real` is float for stored models and
// double where exact arithmetic matters (gradient checks).
template <typename Real>
struct BasicScorerModel {
  std::uint64_t feature_dim = kDefaultFeatureDim;
  std::vector<Real> weights;
  Real bias = 0;
  std::uint32_t featurizer_version = kFeaturizerVersion;

  static BasicScorerModel fresh(std::uint64_t dim = kDefaultFeatureDim) {
    if (dim == 0 || !std::has_single_bit(dim)) throw PreconditionError("feature_dim must be a power of two");
    BasicScorerModel m;
    m.feature_dim = dim;
    m.weights.assign(dim, Real{0});
    return m;
  }

  bool operator==(const BasicScorerModel&) const = default;
};

using ScorerModel = BasicScorerModel<float>;

inline double sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <typename Real>
double logit(const BasicScorerModel<Real>& model, const SparseFeatures& f) {
  if (!f.indices.empty() && f.indices.back() >= model.feature_dim)
    throw PreconditionError("feature index " + std::to_string(f.indices.back()) +
                            " out of range for feature_dim " + std::to_string(model.feature_dim));
  double z = model.bias;
  for (std::size_t i = 0; i < f.indices.size(); ++i) z += double(model.weights[f.indices[i]]) * f.values[i];
  return z;
}

template <typename Real>
Score predict(const BasicScorerModel<Real>& model, const SparseFeatures& f) {
  return Score::clamped(sigmoid(logit(model, f)));
}

struct TrainingPair {
  SparseFeatures features;
  double target = 0.0;
};

// Gradient of the loss w.r.t. weights (sparse, sorted indices) and bias.
struct SparseGradient {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
  double bias = 0.0;
};

namespace detail {

inline SparseGradient merge_gradient(std::vector<std::pair<std::uint32_t, double>>& entries,
                                     double bias) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseGradient g;
  g.bias = bias;
  for (const auto& [idx, v] : entries) {
    if (!g.indices.empty() && g.indices.back() == idx) {
      g.values.back() += v;
    } else {
      g.indices.push_back(idx);
      g.values.push_back(v);
    }
  }
  return g;
}

}  // namespace detail

// Mean squared error of sigmoid outputs and its exact gradient.
template <typename Real>
std::pair<double, SparseGradient> loss_and_grad(const BasicScorerModel<Real>& model,
                                                std::span<const TrainingPair> batch) {
  if (batch.empty()) throw PreconditionError("loss_and_grad needs a non-empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  double bias_grad = 0.0;
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (const auto& ex : batch) {
    if (!(ex.target >= 0.0 && ex.target <= 1.0))
      throw PreconditionError("target " + std::to_string(ex.target) + " outside [0,1]");
    const double p = sigmoid(logit(model, ex.features));
    const double err = p - ex.target;
    loss += err * err * inv_n;
    const double dz = 2.0 * err * p * (1.0 - p) * inv_n;
    bias_grad += dz;
    for (std::size_t i = 0; i < ex.features.indices.size(); ++i)
      entries.emplace_back(ex.features.indices[i], dz * ex.features.values[i]);
  }
  return {loss, detail::merge_gradient(entries, bias_grad)};
}

// ---------------------------------------------------------------------------
// Optimizer

struct TrainConfig {
  double learning_rate = 1e-3;
  double warmup_rate = 0.1;
  std::size_t batch_size = 1024;
  std::size_t total_steps = 1000;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t micro_batch = 256;  // gradient accumulation granularity
  std::uint64_t seed = 0;

  // Pretraining-style run: batch 1024, lr 1e-3. Transformer encoders train
  // near lr 1e-6; the hashed linear model needs a larger step.
  static TrainConfig pretraining() { return {}; }

  // Downstream finetuning: 400 steps, lr 2e-5, batch 256.
  static TrainConfig adaptation() {
    TrainConfig c;
    c.learning_rate = 2e-5;
    c.batch_size = 256;
    c.total_steps = 400;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(warmup_rate >= 0.0 && warmup_rate <= 1.0)) throw ValidationError("warmup_rate must lie in [0,1]");
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ValidationError("adam_beta1 must lie in (0,1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ValidationError("adam_beta2 must lie in (0,1)");
    if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
    if (micro_batch == 0) throw ValidationError("micro_batch must be positive");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["warmup_rate"] = c.warmup_rate;
  j["batch_size"] = c.batch_size;
  j["total_steps"] = c.total_steps;
  j["weight_decay"] = c.weight_decay;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["micro_batch"] = c.micro_batch;
  j["seed"] = c.seed;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw ValidationError("train config must be an object");
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.warmup_rate = j.value("warmup_rate", base.warmup_rate);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.total_steps = j.value("total_steps", base.total_steps);
  base.weight_decay = j.value("weight_decay", base.weight_decay);
  base.adam_beta1 = j.value("adam_beta1", base.adam_beta1);
  base.adam_beta2 = j.value("adam_beta2", base.adam_beta2);
  base.adam_eps = j.value("adam_eps", base.adam_eps);
  base.micro_batch = j.value("micro_batch", base.micro_batch);
  base.seed = j.value("seed", base.seed);
  base.validate();
  return base;
}

inline std::size_t warmup_steps(const TrainConfig& c) {
  return static_cast<std::size_t>(std::ceil(c.warmup_rate * static_cast<double>(c.total_steps)));
}

// Learning rate for the `step`-th update (1-based): linear ramp to the
// configured rate over the warmup steps, constant afterwards. Step 0 is 0.
inline double learning_rate_at(std::size_t step, const TrainConfig& c) {
  if (step == 0) return 0.0;
  const std::size_t w = warmup_steps(c);
  if (w == 0 || step >= w) return c.learning_rate;
  return c.learning_rate * static_cast<double>(step) / static_cast<double>(w);
}

// First and second moments for every weight, with the bias last.
template <typename Real>
struct BasicOptimizerState {
  std::uint64_t step = 0;
  std::vector<Real> m;
  std::vector<Real> v;

  static BasicOptimizerState fresh(std::uint64_t feature_dim) {
    return {0, std::vector<Real>(feature_dim + 1, Real{0}), std::vector<Real>(feature_dim + 1, Real{0})};
  }
  bool operator==(const BasicOptimizerState&) const = default;
};

using OptimizerState = BasicOptimizerState<float>;

// One decoupled-weight-decay Adam update over every parameter.
template <typename Real>
void adamw_step(BasicScorerModel<Real>& model, BasicOptimizerState<Real>& state,
                const SparseGradient& grad, const TrainConfig& c) {
  const std::uint64_t n = model.feature_dim;
  if (model.weights.size() != n || state.m.size() != n + 1 || state.v.size() != n + 1)
    throw PreconditionError("optimizer state does not match the model shape");
  if (grad.indices.size() != grad.values.size()) throw PreconditionError("malformed gradient");
  if (!std::isfinite(grad.bias)) throw Error("non-finite gradient; training aborted");
  for (std::size_t i = 0; i < grad.indices.size(); ++i) {
    if (!std::isfinite(grad.values[i])) throw Error("non-finite gradient; training aborted");
    if (grad.indices[i] >= n) throw PreconditionError("gradient index out of range");
  }

  const std::uint64_t t = state.step + 1;
  const double lr = learning_rate_at(t, c);
  const double b1 = c.adam_beta1, b2 = c.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));

  auto update = [&](Real& theta, Real& m, Real& v, double g) {
    const double m1 = b1 * double(m) + (1.0 - b1) * g;
    const double v1 = b2 * double(v) + (1.0 - b2) * g * g;
    const double mhat = m1 / bc1;
    const double vhat = v1 / bc2;
    const double th = double(theta);
    theta = static_cast<Real>(th - lr * (mhat / (std::sqrt(vhat) + c.adam_eps) + c.weight_decay * th));
    m = static_cast<Real>(m1);
    v = static_cast<Real>(v1);
  };

  std::size_t k = 0;
  for (std::uint64_t j = 0; j < n; ++j) {
    double g = 0.0;
    if (k < grad.indices.size() && grad.indices[k] == j) g = grad.values[k++];
    update(model.weights[j], state.m[j], state.v[j], g);
  }
  update(model.bias, state.m[n], state.v[n], grad.bias);
  state.step = t;
}

// ---------------------------------------------------------------------------
// Training

template <typename Real>
struct TrainResult {
  BasicScorerModel<Real> model;
  BasicOptimizerState<Real> state;
  std::vector<double> loss_history;  // mean batch loss per step
};

// Runs `total_steps` AdamW updates over minibatches drawn from a seeded
// per-epoch shuffle. Batches larger than `micro_batch` accumulate gradients
// micro-batch by micro-batch in a fixed order.
template <typename Real>
TrainResult<Real> train(BasicScorerModel<Real> model, std::span<const TrainingPair> data,
                        const TrainConfig& config,
                        std::optional<BasicOptimizerState<Real>> resume = std::nullopt) {
  config.validate();
  if (data.empty()) throw PreconditionError("training needs a non-empty dataset");
  TrainResult<Real> r{std::move(model), {}, {}};
  // A resumed state keeps its step count, so the schedule continues from it.
  r.state = resume ? std::move(*resume) : BasicOptimizerState<Real>::fresh(r.model.feature_dim);

  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0;
  auto reshuffle = [&] {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(config.seed, std::string_view("epoch"), epoch++));
    rng.shuffle(order);
    cursor = 0;
  };

  std::vector<TrainingPair> micro;
  std::vector<std::pair<std::uint32_t, double>> acc;
  for (std::size_t s = 0; s < config.total_steps; ++s) {
    acc.clear();
    double loss = 0.0, bias_grad = 0.0;
    std::size_t remaining = config.batch_size;
    while (remaining > 0) {
      micro.clear();
      while (micro.size() < std::min(remaining, config.micro_batch)) {
        if (cursor == order.size()) reshuffle();
        micro.push_back(data[order[cursor++]]);
      }
      const double w = static_cast<double>(micro.size()) / static_cast<double>(config.batch_size);
      auto [l, g] = loss_and_grad(r.model, std::span<const TrainingPair>(micro));
      loss += w * l;
      bias_grad += w * g.bias;
      for (std::size_t i = 0; i < g.indices.size(); ++i) acc.emplace_back(g.indices[i], w * g.values[i]);
      remaining -= micro.size();
    }
    auto grad = detail::merge_gradient(acc, bias_grad);
    adamw_step(r.model, r.state, grad, config);
    r.loss_history.push_back(loss);
  }
  return r;
}

inline std::vector<TrainingPair> featurize_dataset(const std::vector<RegressionExample>& rows,
                                                   std::uint64_t feature_dim) {
  std::vector<TrainingPair> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({featurize(r.instruction, r.response, feature_dim), r.score});
  return out;
}

inline TrainResult<float> train(ScorerModel model, const std::vector<RegressionExample>& rows,
                                const TrainConfig& config,
                                std::optional<OptimizerState> resume = std::nullopt) {
  const auto data = featurize_dataset(rows, model.feature_dim);
  return train<float>(std::move(model), std::span<const TrainingPair>(data), config, std::move(resume));
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "CAPY" | u32 version | u32 featurizer_version | u64 feature_dim
//   | f32 weights[feature_dim] | f32 bias
//   | u8 has_optimizer [ | u64 step | f32 m[feature_dim+1] | f32 v[feature_dim+1] ]
//
// All little-endian. A JSON sidecar (<path>.json) records training provenance.

inline constexpr char kCheckpointMagic[4] = {'C', 'A', 'P', 'Y'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  ScorerModel model;
  std::optional<OptimizerState> state;
  bool featurizer_mismatch = false;
};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(b), std::end(b));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& path) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw Error("checkpoint '" + path + "' is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(b), std::end(b));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline void put_floats(std::ostream& out, const std::vector<float>& xs) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(xs.data()), static_cast<std::streamsize>(xs.size() * sizeof(float)));
  } else {
    for (float x : xs) put_le(out, x);
  }
}

inline void get_floats(std::istream& in, std::vector<float>& xs, const std::string& path) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(xs.data()), static_cast<std::streamsize>(xs.size() * sizeof(float))))
      throw Error("checkpoint '" + path + "' is truncated");
  } else {
    for (float& x : xs) x = get_le<float>(in, path);
  }
}

}  // namespace detail

inline void save_checkpoint(const ScorerModel& model, const OptimizerState* state, const std::string& path,
                            const nlohmann::ordered_json* provenance = nullptr) {
  if (model.weights.size() != model.feature_dim) throw PreconditionError("model weights do not match feature_dim");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kCheckpointMagic, 4);
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, model.featurizer_version);
  detail::put_le(out, model.feature_dim);
  detail::put_floats(out, model.weights);
  detail::put_le(out, model.bias);
  detail::put_le<std::uint8_t>(out, state ? 1 : 0);
  if (state) {
    if (state->m.size() != model.feature_dim + 1 || state->v.size() != model.feature_dim + 1)
      throw PreconditionError("optimizer state does not match the model shape");
    detail::put_le(out, state->step);
    detail::put_floats(out, state->m);
    detail::put_floats(out, state->v);
  }
  if (!out) throw IoError("write failure on '" + path + "'");
  if (provenance) {
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) throw IoError("cannot open '" + path + ".json' for writing");
    side << provenance->dump(2) << '\n';
  }
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  char magic[4];
  if (!in.read(magic, 4)) throw Error("checkpoint '" + path + "' is truncated");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ParseError("'" + path + "' is not a CAPY checkpoint (expected magic \"CAPY\")");
  const auto version = detail::get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  LoadedCheckpoint ck;
  ck.model.featurizer_version = detail::get_le<std::uint32_t>(in, path);
  ck.model.feature_dim = detail::get_le<std::uint64_t>(in, path);
  if (ck.model.feature_dim == 0 || !std::has_single_bit(ck.model.feature_dim) ||
      ck.model.feature_dim > (std::uint64_t{1} << 32))
    throw ParseError("checkpoint '" + path + "' has an invalid feature_dim");
  ck.model.weights.resize(ck.model.feature_dim);
  detail::get_floats(in, ck.model.weights, path);
  ck.model.bias = detail::get_le<float>(in, path);
  const auto flag = detail::get_le<std::uint8_t>(in, path);
  if (flag > 1) throw ParseError("checkpoint '" + path + "' has a corrupt optimizer flag");
  if (flag == 1) {
    OptimizerState s;
    s.step = detail::get_le<std::uint64_t>(in, path);
    s.m.resize(ck.model.feature_dim + 1);
    s.v.resize(ck.model.feature_dim + 1);
    detail::get_floats(in, s.m, path);
    detail::get_floats(in, s.v, path);
    ck.state = std::move(s);
  }
  ck.featurizer_mismatch = ck.model.featurizer_version != kFeaturizerVersion;
  return ck;
}

// ---------------------------------------------------------------------------
// Scorers

// Maps (instruction, response) to a Score. Implementations must be
// deterministic and safe to call concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual Score score(const std::string& instruction, const std::string& response) const = 0;
  virtual std::vector<Score> score_batch(const std::string& instruction,
                                         const std::vector<std::string>& responses) const {
    std::vector<Score> out;
    out.reserve(responses.size());
    for (const auto& r : responses) out.push_back(score(instruction, r));
    return out;
  }
  virtual std::string name() const = 0;
};

using ScorerHandle = std::shared_ptr<const Scorer>;

class LinearScorer final : public Scorer {
 public:
  explicit LinearScorer(ScorerModel model) : model_(std::make_shared<const ScorerModel>(std::move(model))) {}
  Score score(const std::string& instruction, const std::string& response) const override {
    return predict(*model_, featurize(instruction, response, model_->feature_dim));
  }
  std::string name() const override { return "linear"; }
  const ScorerModel& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const ScorerModel> model_;
};

// Wraps any callable; handy for oracles and fixed-score tests.
class FunctionScorer final : public Scorer {
 public:
  using Fn = std::function<double(const std::string&, const std::string&)>;
  FunctionScorer(Fn fn, std::string name = "function") : fn_(std::move(fn)), name_(std::move(name)) {}
  Score score(const std::string& instruction, const std::string& response) const override {
    return Score::clamped(fn_(instruction, response));
  }
  std::string name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

// Rouge-L F1 against the hidden reference for the instruction. Instructions
// with no reference score 0.
class OracleScorer final : public Scorer {
 public:
  explicit OracleScorer(ReferenceMap refs) : refs_(std::make_shared<const ReferenceMap>(std::move(refs))) {}
  Score score(const std::string& instruction, const std::string& response) const override {
    auto it = refs_->find(instruction);
    if (it == refs_->end()) return Score(0.0);
    return Score::clamped(rouge::rouge_l(response, it->second).f1);
  }
  std::string name() const override { return "oracle"; }

 private:
  std::shared_ptr<const ReferenceMap> refs_;
};

// exp(mean token log-likelihood) from the backbone: the likelihood rule as a
// Scorer, so classification can use it through the same selection path.
class LikelihoodScorer final : public Scorer {
 public:
  explicit LikelihoodScorer(GeneratorHandle gen) : gen_(std::move(gen)) {}
  Score score(const std::string& instruction, const std::string& response) const override {
    const auto lp = gen_->loglikelihood(instruction, response);
    if (lp.empty()) return Score(0.0);
    double s = 0.0;
    for (double x : lp) s += x;
    return Score::clamped(std::exp(s / static_cast<double>(lp.size())));
  }
  std::string name() const override { return "likelihood"; }

 private:
  GeneratorHandle gen_;
};

struct RemoteScore {
  Score score;
  bool clamped = false;
};

struct RemoteScorerOptions {
  std::string endpoint;
  std::string token;
  std::chrono::milliseconds timeout{10000};
  int max_retries = 1;
};

namespace detail {
inline RemoteScore parse_remote_score(const nlohmann::json& v, const std::string& endpoint) {
  if (!v.is_number()) throw TransportError(endpoint, "non-numeric score payload: " + v.dump());
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw TransportError(endpoint, "non-finite score payload");
  return {Score::clamped(x), x < 0.0 || x > 1.0};
}
}  // namespace detail

// POST /score {"instruction", "response"} -> {"score"}; out-of-range values
// are clamped and flagged.
inline RemoteScore remote_score(const RemoteScorerOptions& opts, const std::string& instruction,
                                const std::string& response) {
  const auto res = detail::post_json(opts.endpoint, "/score", opts.token, opts.timeout, opts.max_retries,
                                     {{"instruction", instruction}, {"response", response}});
  if (!res.is_object() || !res.contains("score"))
    throw TransportError(opts.endpoint, "response lacks 'score'");
  return detail::parse_remote_score(res["score"], opts.endpoint);
}

// POST /score_batch {"instruction", "responses": [...]} -> {"scores": [...]}.
inline std::vector<RemoteScore> remote_score_batch(const RemoteScorerOptions& opts,
                                                   const std::string& instruction,
                                                   const std::vector<std::string>& responses) {
  const auto res = detail::post_json(opts.endpoint, "/score_batch", opts.token, opts.timeout,
                                     opts.max_retries, {{"instruction", instruction}, {"responses", responses}});
  if (!res.is_object() || !res.contains("scores") || !res["scores"].is_array() ||
      res["scores"].size() != responses.size())
    throw TransportError(opts.endpoint, "response lacks a 'scores' array of matching length");
  std::vector<RemoteScore> out;
  for (const auto& v : res["scores"]) out.push_back(detail::parse_remote_score(v, opts.endpoint));
  return out;
}

class RemoteScorer final : public Scorer {
 public:
  explicit RemoteScorer(RemoteScorerOptions opts) : opts_(std::move(opts)) {
    if (opts_.endpoint.empty()) throw PreconditionError("remote scorer needs an endpoint");
  }
  Score score(const std::string& instruction, const std::string& response) const override {
    auto r = remote_score(opts_, instruction, response);
    if (r.clamped) ++clamp_count_;
    return r.score;
  }
  std::vector<Score> score_batch(const std::string& instruction,
                                 const std::vector<std::string>& responses) const override {
    std::vector<Score> out;
    for (auto& r : remote_score_batch(opts_, instruction, responses)) {
      if (r.clamped) ++clamp_count_;
      out.push_back(r.score);
    }
    return out;
  }
  std::string name() const override { return "remote:" + opts_.endpoint; }
  // Number of out-of-range backend values clamped so far.
  std::size_t clamp_count() const noexcept { return clamp_count_.load(); }

 private:
  RemoteScorerOptions opts_;
  mutable std::atomic<std::size_t> clamp_count_{0};
};

}  // namespace capy
