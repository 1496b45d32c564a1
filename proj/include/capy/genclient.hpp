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
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "capy/corpus.hpp"
#include "capy/error.hpp"
#include "capy/rng.hpp"
#include "capy/rouge.hpp"

namespace capy {

enum class Strategy { plain_sampling, temperature, top_k, nucleus, beam };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::plain_sampling: return "plain_sampling";
    case Strategy::temperature: return "temperature";
    case Strategy::top_k: return "top_k";
    case Strategy::nucleus: return "nucleus";
    case Strategy::beam: return "beam";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "plain_sampling" || s == "sampling") return Strategy::plain_sampling;
  if (s == "temperature") return Strategy::temperature;
  if (s == "top_k") return Strategy::top_k;
  if (s == "nucleus") return Strategy::nucleus;
  if (s == "beam") return Strategy::beam;
  throw PreconditionError("unknown decoding strategy '" + std::string(s) + "'");
}

// Decoding settings. Fields the strategy does not use stay at their neutral
// values (temperature 1, k 0 = unrestricted, p 1, beam width 1).
struct DecodingConfig {
  Strategy strategy = Strategy::plain_sampling;
  double temperature = 1.0;
  int k = 0;
  double p = 1.0;
  int beam_width = 1;
  int max_tokens = 128;
  std::uint64_t seed = 0;

  static DecodingConfig sampling() { return {}; }
  static DecodingConfig with_temperature(double t = 0.9) {
    DecodingConfig c;
    c.strategy = Strategy::temperature;
    c.temperature = t;
    return c;
  }
  static DecodingConfig top_k(int k = 40) {
    DecodingConfig c;
    c.strategy = Strategy::top_k;
    c.k = k;
    return c;
  }
  static DecodingConfig nucleus(double p = 0.95) {
    DecodingConfig c;
    c.strategy = Strategy::nucleus;
    c.p = p;
    return c;
  }
  static DecodingConfig beam(int width = 4) {
    DecodingConfig c;
    c.strategy = Strategy::beam;
    c.beam_width = width;
    return c;
  }
  // Paper-default settings for a strategy.
  static DecodingConfig for_strategy(Strategy s) {
    switch (s) {
      case Strategy::plain_sampling: return sampling();
      case Strategy::temperature: return with_temperature();
      case Strategy::top_k: return top_k();
      case Strategy::nucleus: return nucleus();
      case Strategy::beam: return beam();
    }
    throw PreconditionError("unknown decoding strategy");
  }

  bool operator==(const DecodingConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const DecodingConfig& c) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(c.strategy);
  j["temperature"] = c.temperature;
  j["k"] = c.k;
  j["p"] = c.p;
  j["beam_width"] = c.beam_width;
  j["max_tokens"] = c.max_tokens;
  j["seed"] = c.seed;
  return j;
}

// Reads a strategy name or a full object; missing fields take the
// strategy's defaults.
inline DecodingConfig decoding_from_json(const nlohmann::json& j) {
  if (j.is_string()) return DecodingConfig::for_strategy(parse_strategy(j.get<std::string>()));
  if (!j.is_object() || !j.contains("strategy"))
    throw ValidationError("decoding config needs a 'strategy'");
  auto c = DecodingConfig::for_strategy(parse_strategy(j.at("strategy").get<std::string>()));
  c.temperature = j.value("temperature", c.temperature);
  c.k = j.value("k", c.k);
  c.p = j.value("p", c.p);
  c.beam_width = j.value("beam_width", c.beam_width);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.seed = j.value("seed", c.seed);
  if (!(c.temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (c.k < 0) throw ValidationError("k must be non-negative");
  if (!(c.p > 0.0 && c.p <= 1.0)) throw ValidationError("p must lie in (0,1]");
  if (c.beam_width < 1) throw ValidationError("beam_width must be positive");
  if (c.max_tokens < 1) throw ValidationError("max_tokens must be positive");
  return c;
}

struct Candidate {
  std::string text;
  std::optional<std::vector<double>> token_logprobs;
  DecodingConfig origin;
  std::size_t rank_in_origin = 0;

  bool operator==(const Candidate&) const = default;
};

// A candidate-producing backbone. Subclasses implement the do_* hooks; the
// public entry points enforce the shared contract.
class Generator {
 public:
  virtual ~Generator() = default;

  std::vector<Candidate> generate(const std::string& instruction, const DecodingConfig& config,
                                  std::size_t n) const {
    if (n == 0) return {};
    if (config.strategy == Strategy::beam && n > 1)
      throw PreconditionError("beam search returns only its top sample; requested n = " +
                              std::to_string(n) + ", must be 1");
    auto out = do_generate(instruction, config, n);
    if (out.size() != n)
      throw Error(name() + ": backend returned " + std::to_string(out.size()) +
                  " candidates, expected " + std::to_string(n));
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].origin = config;
      out[i].rank_in_origin = i;
      if (out[i].token_logprobs) check_logprobs(*out[i].token_logprobs);
    }
    return out;
  }

  std::vector<double> loglikelihood(const std::string& instruction,
                                    const std::string& response) const {
    if (response.empty())
      throw PreconditionError("loglikelihood of an empty response is undefined");
    auto lp = do_loglikelihood(instruction, response);
    check_logprobs(lp);
    return lp;
  }

  virtual std::string name() const = 0;

 protected:
  virtual std::vector<Candidate> do_generate(const std::string& instruction,
                                             const DecodingConfig& config, std::size_t n) const = 0;
  virtual std::vector<double> do_loglikelihood(const std::string& instruction,
                                               const std::string& response) const = 0;

 private:
  void check_logprobs(const std::vector<double>& lp) const {
    for (double x : lp)
      if (!std::isfinite(x) || x > 0.0)
        throw Error(name() + ": token log-probability " + std::to_string(x) +
                    " is not finite and non-positive");
  }
};

using GeneratorHandle = std::shared_ptr<const Generator>;

// ---------------------------------------------------------------------------
// Stub backend: perturbs a hidden reference answer.

// Bump when the perturbation recipe changes; test expectations key on it.
inline constexpr int kStubRecipeVersion = 1;

enum class Perturbation { echo, token_dropout, adjacent_swap, truncation, prefix_duplication, empty };

using ReferenceMap = std::unordered_map<std::string, std::string>;

inline ReferenceMap reference_map(const Corpus& corpus) {
  ReferenceMap m;
  for (const auto& t : corpus.instances()) m.emplace(t.instruction, t.ground_truth);
  return m;
}

namespace detail {

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && !(s[j] == ' ' || s[j] == '\t' || s[j] == '\n' || s[j] == '\r')) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join_words(const std::vector<std::string>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out.push_back(' ');
    out += w[i];
  }
  return out;
}

}  // namespace detail

class StubGenerator final : public Generator {
 public:
  // `model_seed` distinguishes stub "models"; two stubs with different seeds
  // behave like two different backbones.
  StubGenerator(ReferenceMap references, std::uint64_t model_seed = 0)
      : refs_(std::make_shared<const ReferenceMap>(std::move(references))), model_seed_(model_seed) {}

  std::string name() const override { return "stub/" + std::to_string(model_seed_); }

  // Perturbation mix per strategy; beam leans toward faithful output.
  static const std::array<double, 6>& perturbation_weights(Strategy s) {
    // echo, dropout, swap, truncation, prefix_dup, empty
    static const std::array<double, 6> sampling{1, 3, 2, 2, 2, 1};
    static const std::array<double, 6> temperature{2, 3, 2, 2, 1, 1};
    static const std::array<double, 6> top_k{2, 3, 2, 1, 2, 1};
    static const std::array<double, 6> nucleus{2, 2, 2, 2, 1, 1};
    static const std::array<double, 6> beam{4, 2, 1, 1, 1, 0};
    switch (s) {
      case Strategy::plain_sampling: return sampling;
      case Strategy::temperature: return temperature;
      case Strategy::top_k: return top_k;
      case Strategy::nucleus: return nucleus;
      case Strategy::beam: return beam;
    }
    return sampling;
  }

  static std::string perturb(const std::vector<std::string>& words, Perturbation kind, Rng& rng) {
    std::vector<std::string> w = words;
    switch (kind) {
      case Perturbation::echo:
        break;
      case Perturbation::empty:
        return {};
      case Perturbation::token_dropout: {
        if (w.size() < 2) break;
        std::vector<std::string> kept;
        const std::size_t forced = rng.uniform_index(w.size());
        for (std::size_t i = 0; i < w.size(); ++i)
          if (i != forced && !rng.bernoulli(0.25)) kept.push_back(w[i]);
        w = std::move(kept);
        break;
      }
      case Perturbation::adjacent_swap: {
        if (w.size() < 2) break;
        const std::size_t swaps = 1 + rng.uniform_index(2);
        for (std::size_t s = 0; s < swaps; ++s) {
          const std::size_t i = rng.uniform_index(w.size() - 1);
          std::swap(w[i], w[i + 1]);
        }
        break;
      }
      case Perturbation::truncation: {
        if (w.empty()) break;
        const double frac = 0.3 + 0.6 * rng.uniform01();
        w.resize(std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(frac * w.size()))));
        if (w.size() == words.size() && w.size() > 1) w.pop_back();
        break;
      }
      case Perturbation::prefix_duplication: {
        if (w.empty()) break;
        const std::size_t j = 1 + rng.uniform_index(w.size() / 2 + 1);
        std::vector<std::string> out(w.begin(), w.begin() + std::min(j, w.size()));
        out.insert(out.end(), w.begin(), w.end());
        w = std::move(out);
        break;
      }
    }
    return detail::join_words(w);
  }

 protected:
  std::vector<Candidate> do_generate(const std::string& instruction, const DecodingConfig& config,
                                     std::size_t n) const override {
    const auto words = detail::split_words(reference_for(instruction));
    const auto& weights = perturbation_weights(config.strategy);
    double total = 0;
    for (double x : weights) total += x;
    std::vector<Candidate> out;
    out.reserve(n);
    for (std::size_t rank = 0; rank < n; ++rank) {
      // Keyed on rank alone so a smaller request is a prefix of a larger one.
      Rng rng(derive_seed(model_seed_, config.seed, std::string_view(instruction),
                          static_cast<std::uint64_t>(config.strategy),
                          static_cast<std::uint64_t>(rank),
                          static_cast<std::uint64_t>(kStubRecipeVersion)));
      double u = rng.uniform01() * total;
      std::size_t kind = 0;
      while (kind + 1 < weights.size() && u >= weights[kind]) u -= weights[kind++];
      std::string text = perturb(words, static_cast<Perturbation>(kind), rng);
      auto tw = detail::split_words(text);
      if (tw.size() > static_cast<std::size_t>(config.max_tokens)) {
        tw.resize(config.max_tokens);
        text = detail::join_words(tw);
      }
      Candidate c;
      if (!text.empty()) c.token_logprobs = do_loglikelihood(instruction, text);
      c.text = std::move(text);
      out.push_back(std::move(c));
    }
    return out;
  }

  // Pseudo-likelihood: hashed per-token values in [-2.6, -0.1], shrunk for
  // tokens that occur in the hidden reference.
  std::vector<double> do_loglikelihood(const std::string& instruction,
                                       const std::string& response) const override {
    auto words = detail::split_words(response);
    if (words.empty()) words.push_back(response);
    const auto ref = rouge::tokenize(reference_for(instruction));
    const std::unordered_set<std::string> ref_set(ref.begin(), ref.end());
    std::vector<double> lp;
    lp.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
      Rng rng(derive_seed(model_seed_, std::string_view("loglik"), std::string_view(instruction),
                          std::string_view(response), static_cast<std::uint64_t>(i)));
      double x = -(0.1 + 2.5 * rng.uniform01());
      const auto toks = rouge::tokenize(words[i]);
      const bool known = !toks.empty() && std::all_of(toks.begin(), toks.end(), [&](const auto& t) {
        return ref_set.contains(t);
      });
      if (known) x *= 0.35;
      lp.push_back(x);
    }
    return lp;
  }

 private:
  const std::string& reference_for(const std::string& instruction) const {
    auto it = refs_->find(instruction);
    return it == refs_->end() ? instruction : it->second;
  }

  std::shared_ptr<const ReferenceMap> refs_;
  std::uint64_t model_seed_;
};

// ---------------------------------------------------------------------------
// Scripted backend: replays candidates from a JSONL file.

struct ScriptedCandidate {
  std::string text;
  std::optional<std::vector<double>> token_logprobs;
  std::optional<Strategy> strategy;
};

class ScriptedGenerator final : public Generator {
 public:
  using Script = std::unordered_map<std::string, std::vector<ScriptedCandidate>>;

  explicit ScriptedGenerator(Script script,
                             std::string source = "inline")
      : script_(std::move(script)), source_(std::move(source)) {}

  // {"instruction": "...", "candidates": [{"text": "...", "token_logprobs": [...]?,
  //  "strategy": "..."?}]} per line. Repeated instructions append.
  static ScriptedGenerator from_file(const std::string& path) {
    Script script;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line) {
      const auto instruction = detail::require_string(j, "instruction", line);
      const auto& cands = detail::require(j, "candidates", line);
      if (!cands.is_array()) throw ParseError("'candidates' must be an array", line);
      auto& dst = script[instruction];
      for (const auto& c : cands) {
        ScriptedCandidate sc;
        sc.text = detail::require_string(c, "text", line);
        if (auto it = c.find("token_logprobs"); it != c.end() && !it->is_null())
          sc.token_logprobs = it->get<std::vector<double>>();
        if (auto it = c.find("strategy"); it != c.end() && !it->is_null())
          sc.strategy = parse_strategy(it->get<std::string>());
        dst.push_back(std::move(sc));
      }
    });
    return ScriptedGenerator(std::move(script), path);
  }

  std::string name() const override { return "scripted:" + source_; }

 protected:
  std::vector<Candidate> do_generate(const std::string& instruction, const DecodingConfig& config,
                                     std::size_t n) const override {
    auto it = script_.find(instruction);
    if (it == script_.end()) throw Error(name() + ": no candidates for instruction");
    const bool tagged = std::any_of(it->second.begin(), it->second.end(),
                                    [](const auto& c) { return c.strategy.has_value(); });
    std::vector<Candidate> out;
    for (const auto& sc : it->second) {
      if (out.size() == n) break;
      if (tagged && sc.strategy != config.strategy) continue;
      Candidate c;
      c.text = sc.text;
      c.token_logprobs = sc.token_logprobs;
      out.push_back(std::move(c));
    }
    if (out.size() < n)
      throw Error(name() + ": only " + std::to_string(out.size()) + " scripted candidates for " +
                  std::string(to_string(config.strategy)) + ", requested " + std::to_string(n));
    return out;
  }

  std::vector<double> do_loglikelihood(const std::string& instruction,
                                       const std::string& response) const override {
    if (auto it = script_.find(instruction); it != script_.end())
      for (const auto& sc : it->second)
        if (sc.text == response && sc.token_logprobs) return *sc.token_logprobs;
    throw Error(name() + ": no scripted log-probabilities for response '" + response + "'");
  }

 private:
  Script script_;
  std::string source_;
};

// ---------------------------------------------------------------------------
// HTTP backend: completion-style protocol.
//
//   POST /v1/completions {prompt, n, max_tokens, temperature, top_k, top_p,
//                         num_beams, seed, logprobs}
//     -> {"choices": [{"text": ..., "logprobs": {"token_logprobs": [...]}}]}
//   POST /v1/completions {prompt, completion, echo: true, max_tokens: 0, logprobs: 1}
//     -> {"choices": [{"logprobs": {"token_logprobs": [...]}}]}
//
// Unknown response fields are ignored. Null log-probabilities (some servers
// emit one for the first echoed token) are skipped.

struct HttpOptions {
  std::string endpoint;  // scheme://host:port
  std::string token;     // bearer credential, optional
  std::string path = "/v1/completions";
  std::string model;     // forwarded when non-empty
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  int max_in_flight = 8;
};

namespace detail {

using Semaphore = std::counting_semaphore<1024>;

// Sends a JSON POST with bounded retry on connection errors and 5xx.
inline nlohmann::json post_json(const std::string& endpoint, const std::string& path,
                                const std::string& token, std::chrono::milliseconds timeout,
                                int max_retries, const nlohmann::json& body,
                                Semaphore* limiter = nullptr) {
  struct Permit {
    Semaphore* s;
    explicit Permit(Semaphore* s) : s(s) {
      if (s) s->acquire();
    }
    ~Permit() {
      if (s) s->release();
    }
  } permit(limiter);

  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    httplib::Client cli(endpoint);
    if (!cli.is_valid()) throw TransportError(endpoint, "invalid endpoint");
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw TransportError(endpoint, "HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      throw TransportError(endpoint, "response is not JSON");
    }
  }
  throw TransportError(endpoint, last_error);
}

inline std::vector<double> parse_token_logprobs(const nlohmann::json& choice) {
  std::vector<double> out;
  auto lp = choice.find("logprobs");
  if (lp == choice.end() || !lp->is_object()) return out;
  auto tl = lp->find("token_logprobs");
  if (tl == lp->end() || !tl->is_array()) return out;
  for (const auto& x : *tl)
    if (x.is_number()) out.push_back(x.get<double>());
  return out;
}

}  // namespace detail

class HttpGenerator final : public Generator {
 public:
  explicit HttpGenerator(HttpOptions opts)
      : opts_(std::move(opts)),
        limiter_(std::make_shared<detail::Semaphore>(std::max(1, std::min(opts_.max_in_flight, 1024)))) {
    if (opts_.endpoint.empty()) throw PreconditionError("HTTP generator needs an endpoint");
  }

  // Reads CAPPY_LLM_ENDPOINT and CAPPY_LLM_TOKEN.
  static HttpGenerator from_env() {
    HttpOptions o;
    if (const char* e = std::getenv("CAPPY_LLM_ENDPOINT")) o.endpoint = e;
    if (const char* t = std::getenv("CAPPY_LLM_TOKEN")) o.token = t;
    if (o.endpoint.empty()) throw PreconditionError("CAPPY_LLM_ENDPOINT is not set");
    return HttpGenerator(std::move(o));
  }

  std::string name() const override { return "http:" + opts_.endpoint; }
  const HttpOptions& options() const noexcept { return opts_; }

 protected:
  std::vector<Candidate> do_generate(const std::string& instruction, const DecodingConfig& config,
                                     std::size_t n) const override {
    nlohmann::json body = {{"prompt", instruction},
                           {"n", n},
                           {"max_tokens", config.max_tokens},
                           {"temperature", config.temperature},
                           {"top_k", config.k},
                           {"top_p", config.p},
                           {"num_beams", config.beam_width},
                           {"seed", config.seed},
                           {"logprobs", 1}};
    if (!opts_.model.empty()) body["model"] = opts_.model;
    const auto res = call(body);
    const auto it = res.find("choices");
    if (it == res.end() || !it->is_array())
      throw TransportError(opts_.endpoint, "response lacks a 'choices' array");
    std::vector<Candidate> out;
    for (const auto& ch : *it) {
      if (out.size() == n) break;
      if (!ch.contains("text") || !ch["text"].is_string())
        throw TransportError(opts_.endpoint, "choice without text");
      Candidate c;
      c.text = ch["text"].get<std::string>();
      auto lp = detail::parse_token_logprobs(ch);
      if (!lp.empty()) c.token_logprobs = std::move(lp);
      out.push_back(std::move(c));
    }
    return out;
  }

  std::vector<double> do_loglikelihood(const std::string& instruction,
                                       const std::string& response) const override {
    nlohmann::json body = {{"prompt", instruction}, {"completion", response}, {"echo", true},
                           {"max_tokens", 0},       {"logprobs", 1}};
    if (!opts_.model.empty()) body["model"] = opts_.model;
    const auto res = call(body);
    const auto it = res.find("choices");
    if (it == res.end() || !it->is_array() || it->empty())
      throw TransportError(opts_.endpoint, "response lacks a 'choices' array");
    auto lp = detail::parse_token_logprobs(it->front());
    if (lp.empty()) throw TransportError(opts_.endpoint, "no token log-probabilities returned");
    return lp;
  }

 private:
  nlohmann::json call(const nlohmann::json& body) const {
    return detail::post_json(opts_.endpoint, opts_.path, opts_.token, opts_.timeout,
                             opts_.max_retries, body, limiter_.get());
  }

  HttpOptions opts_;
  std::shared_ptr<detail::Semaphore> limiter_;
};

// Builds a handle from {"backend": "stub"|"scripted"|"http", ...}. The stub
// backend draws its hidden references from `refs`.
inline GeneratorHandle make_generator(const nlohmann::json& cfg, const ReferenceMap& refs = {}) {
  const std::string backend = cfg.value("backend", "stub");
  if (backend == "stub") return std::make_shared<StubGenerator>(refs, cfg.value("seed", 0ULL));
  if (backend == "scripted") {
    if (!cfg.contains("path")) throw ValidationError("scripted backend needs 'path'");
    return std::make_shared<ScriptedGenerator>(
        ScriptedGenerator::from_file(cfg.at("path").get<std::string>()));
  }
  if (backend == "http") {
    HttpOptions o;
    o.endpoint = cfg.value("endpoint", "");
    o.token = cfg.value("token", "");
    if (o.endpoint.empty())
      if (const char* e = std::getenv("CAPPY_LLM_ENDPOINT")) o.endpoint = e;
    if (o.token.empty())
      if (const char* t = std::getenv("CAPPY_LLM_TOKEN")) o.token = t;
    o.model = cfg.value("model", "");
    o.timeout = std::chrono::milliseconds(cfg.value("timeout_ms", 30000));
    o.max_retries = cfg.value("max_retries", 2);
    o.max_in_flight = cfg.value("max_in_flight", 8);
    return std::make_shared<HttpGenerator>(std::move(o));
  }
  throw ValidationError("unknown generator backend '" + backend + "'");
}

// ---------------------------------------------------------------------------
// Candidate pools

struct PoolEntry {
  DecodingConfig config;
  std::size_t n = 0;
};

using PoolSpec = std::vector<PoolEntry>;

// Four samples from each sampling strategy plus the top beam: 4 x 4 + 1 = 17.
inline PoolSpec default_pool_spec() {
  return {{DecodingConfig::sampling(), 4},
          {DecodingConfig::with_temperature(0.9), 4},
          {DecodingConfig::top_k(40), 4},
          {DecodingConfig::nucleus(0.95), 4},
          {DecodingConfig::beam(4), 1}};
}

inline std::vector<Candidate> collect_candidate_pool(const Generator& gen,
                                                     const std::string& instruction,
                                                     std::uint64_t seed,
                                                     const PoolSpec& spec = default_pool_spec()) {
  std::vector<Candidate> pool;
  for (const auto& e : spec) {
    auto cfg = e.config;
    cfg.seed = seed;
    auto part = gen.generate(instruction, cfg, e.n);
    pool.insert(pool.end(), std::make_move_iterator(part.begin()),
                std::make_move_iterator(part.end()));
  }
  return pool;
}

}  // namespace capy
