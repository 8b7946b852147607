#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotprobe/errors.hpp"
#include "cotprobe/prompt_kit.hpp"
#include "cotprobe/sha256.hpp"
#include "cotprobe/util.hpp"

namespace cotprobe {

// ---------------------------------------------------------------------------
// Sampling parameters

struct SamplingParams {
  double temperature = 0.8;
  double nucleus_p = 0.95;
  int max_tokens = 512;
  std::vector<std::string> stop_sequences = {"\n\nHuman:"};
  std::optional<uint64_t> seed;

  // Stable textual form used in cache keys and params hashes.
  std::string canonical() const {
    std::string s = "t=" + format_double(temperature, 17) + ";p=" + format_double(nucleus_p, 17) +
                    ";max=" + std::to_string(max_tokens) + ";stop=";
    for (const auto& stop : stop_sequences) s += sha256_hex(stop).substr(0, 12) + ",";
    s += ";seed=" + (seed ? std::to_string(*seed) : std::string("none"));
    return s;
  }

  std::string hash() const { return sha256_hex(canonical()).substr(0, 16); }

  json to_json() const {
    json j;
    j["temperature"] = temperature;
    j["nucleus_p"] = nucleus_p;
    j["max_tokens"] = max_tokens;
    j["stop_sequences"] = stop_sequences;
    if (seed) j["seed"] = *seed;
    return j;
  }

  static SamplingParams from_json(const json& j) {
    SamplingParams p;
    if (j.contains("temperature")) p.temperature = j.at("temperature").get<double>();
    if (j.contains("nucleus_p")) p.nucleus_p = j.at("nucleus_p").get<double>();
    if (j.contains("max_tokens")) p.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("stop_sequences"))
      p.stop_sequences = j.at("stop_sequences").get<std::vector<std::string>>();
    if (j.contains("seed")) p.seed = j.at("seed").get<uint64_t>();
    return p;
  }
};

inline void validate_params(const SamplingParams& p) {
  if (p.temperature < 0) throw ValidationError("temperature must be >= 0");
  if (p.nucleus_p <= 0 || p.nucleus_p > 1) throw ValidationError("nucleus_p must be in (0,1]");
  if (p.max_tokens <= 0) throw ValidationError("max_tokens must be positive");
}

// Mistake generation caps completions at 30 tokens.
inline SamplingParams mistake_params(const SamplingParams& base) {
  SamplingParams p = base;
  p.max_tokens = 30;
  return p;
}

// ---------------------------------------------------------------------------
// Answer distributions

struct AnswerDistribution {
  // Probability per label, in label order; sums to 1 after renormalization.
  std::vector<std::pair<std::string, double>> entries;
  std::string chosen;
  bool renormalized = false;
  std::string method;  // "token_scores" or "sampling_vote"

  double probability(const std::string& label) const {
    for (const auto& [l, p] : entries)
      if (l == label) return p;
    return 0.0;
  }

  json to_json() const {
    json e = json::object();
    for (const auto& [l, p] : entries) e[l] = p;
    return json{{"entries", e},
                {"chosen", chosen},
                {"renormalized", renormalized},
                {"method", method}};
  }

  static AnswerDistribution from_json(const json& j) {
    AnswerDistribution d;
    for (const auto& [k, v] : j.at("entries").items()) d.entries.emplace_back(k, v.get<double>());
    std::sort(d.entries.begin(), d.entries.end());
    d.chosen = j.at("chosen").get<std::string>();
    d.renormalized = j.value("renormalized", false);
    d.method = j.value("method", "");
    return d;
  }
};

// Renormalizes raw scores over the label set and picks the argmax, breaking
// ties toward the lowest label index. Returns nullopt when no mass exists.
inline std::optional<AnswerDistribution> make_answer_distribution(
    const std::vector<std::string>& labels, const std::map<std::string, double>& raw,
    const std::string& method) {
  double sum = 0;
  for (const auto& label : labels) {
    auto it = raw.find(label);
    if (it != raw.end() && it->second > 0) sum += it->second;
  }
  if (sum <= 0) return std::nullopt;
  AnswerDistribution d;
  d.method = method;
  d.renormalized = true;
  size_t best = 0;
  double best_p = -1;
  for (size_t i = 0; i < labels.size(); ++i) {
    auto it = raw.find(labels[i]);
    double p = (it != raw.end() && it->second > 0) ? it->second / sum : 0.0;
    d.entries.emplace_back(labels[i], p);
    if (p > best_p + 1e-15) {
      best_p = p;
      best = i;
    }
  }
  d.chosen = labels[best];
  return d;
}

// ---------------------------------------------------------------------------
// Backends

enum class BackendKind { remote_http, scripted };

struct BackendDescriptor {
  BackendKind kind = BackendKind::scripted;
  std::string name;       // display name and cache namespace
  std::string script_id;  // scripted: "oracle" or "oracle:k=v,..."
  json config;            // remote_http: wire configuration
  uint64_t seed = 0;
  int parallelism = 4;

  // "scripted:<oracle>[:k=v,...]" or "http:<config.json path>"
  static BackendDescriptor parse(const std::string& text);

  std::string cache_namespace() const { return name; }

  json to_json() const {
    json j;
    j["kind"] = kind == BackendKind::scripted ? "scripted" : "remote_http";
    j["name"] = name;
    if (kind == BackendKind::scripted) j["script_id"] = script_id;
    else j["config"] = config;
    j["seed"] = seed;
    j["parallelism"] = parallelism;
    return j;
  }

  static BackendDescriptor from_json(const json& j) {
    BackendDescriptor d;
    d.kind = j.at("kind").get<std::string>() == "scripted" ? BackendKind::scripted
                                                           : BackendKind::remote_http;
    d.name = j.at("name").get<std::string>();
    d.script_id = j.value("script_id", "");
    if (j.contains("config")) d.config = j.at("config");
    d.seed = j.value("seed", uint64_t{0});
    d.parallelism = j.value("parallelism", 4);
    return d;
  }
};

inline BackendDescriptor BackendDescriptor::parse(const std::string& text) {
  BackendDescriptor d;
  if (text.starts_with("scripted:")) {
    d.kind = BackendKind::scripted;
    d.script_id = text.substr(9);
    if (d.script_id.empty()) throw ConfigError("scripted backend needs an oracle id");
    d.name = "scripted/" + d.script_id;
    d.parallelism = 8;
  } else if (text.starts_with("http:")) {
    d.kind = BackendKind::remote_http;
    const std::string path = text.substr(5);
    try {
      d.config = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ConfigError("backend config " + path + ": " + e.what());
    }
    if (!d.config.contains("endpoint"))
      throw ConfigError("backend config " + path + " missing 'endpoint'");
    d.name = d.config.value("name", path);
    d.parallelism = d.config.value("parallelism", 4);
  } else {
    throw ConfigError("backend must be 'scripted:<oracle>' or 'http:<config.json>': " + text);
  }
  return d;
}

// Uniform surface over text models. Implementations must be safe for
// concurrent calls; scripted ones must be pure functions of their inputs.
class Backend {
 public:
  virtual ~Backend() = default;

  // Continuation text after the prompt's open prefix.
  virtual std::string complete(const std::string& prompt, const SamplingParams& params,
                               uint64_t sample_index) = 0;

  // Next-token probability mass per label; nullopt when unsupported.
  virtual std::optional<std::map<std::string, double>> next_token_scores(
      const std::string& prompt, const std::vector<std::string>& labels) = 0;

  // Backend tokenizer count; nullopt when there is no tokenizer surface.
  virtual std::optional<int64_t> token_count(const std::string& text) = 0;

  virtual const BackendDescriptor& descriptor() const = 0;
};

struct Completion {
  std::string text;
  int attempts = 0;       // backend attempts consumed (0 on cache hit)
  bool from_cache = false;
};

struct TokenCount {
  int64_t count = 0;
  bool whitespace_fallback = false;
};

struct RetryPolicy {
  int max_attempts = 3;
  int base_delay_ms = 200;
  double multiplier = 2.0;
  int max_delay_ms = 10000;
};

// ---------------------------------------------------------------------------
// Disk cache: one JSON file per content-hash key, atomic writes.

class DiskCache {
 public:
  DiskCache() = default;
  explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  bool enabled() const { return !dir_.empty(); }

  std::optional<json> get(const std::string& key) const {
    if (!enabled()) return std::nullopt;
    auto path = key_path(key);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
      return json::parse(read_file(path));
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable entries are treated as misses
    }
  }

  void put(const std::string& key, const json& value) const {
    if (!enabled()) return;
    auto path = key_path(key);
    std::filesystem::create_directories(path.parent_path());
    static std::atomic<uint64_t> counter{0};
    std::filesystem::path tmp = path;
    tmp += ".tmp" + std::to_string(counter.fetch_add(1));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << value.dump();
    }
    std::filesystem::rename(tmp, path);
  }

 private:
  std::filesystem::path key_path(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
  }

  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Gateway

struct GatewayOptions {
  std::filesystem::path cache_dir;  // empty disables caching
  RetryPolicy retry;
  int vote_count = 5;  // constrained-sampling fallback votes for score_choices
};

namespace detail {

class Semaphore {
 public:
  explicit Semaphore(int limit) : available_(limit < 1 ? 1 : limit) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [this] { return available_ > 0; });
    --available_;
  }

  void release() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int available_;
};

struct SemaphoreGuard {
  explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  Semaphore& sem;
};

}  // namespace detail

// Caching, retrying front-end over a Backend. Cache keys cover the full
// request content including an explicit sample index, so repeated samples of
// one dialogue stay distinct.
class ModelGateway {
 public:
  ModelGateway(std::shared_ptr<Backend> backend, GatewayOptions options = {})
      : backend_(std::move(backend)),
        options_(std::move(options)),
        cache_(options_.cache_dir),
        limiter_(backend_->descriptor().parallelism) {}

  const BackendDescriptor& descriptor() const { return backend_->descriptor(); }

  Completion sample(const Dialogue& d, const SamplingParams& params, uint64_t sample_index) {
    validate_params(params);
    const std::string prompt = d.serialize();
    const std::string key =
        cache_key("sample", prompt + "\x1f" + params.canonical(), sample_index);
    if (auto hit = cache_.get(key)) {
      ++cache_hits;
      return {hit->at("text").get<std::string>(), 0, true};
    }
    Completion c;
    c.text = apply_stops(with_retries([&] {
      detail::SemaphoreGuard guard(limiter_);
      ++backend_calls;
      return backend_->complete(prompt, params, sample_index);
    }, c.attempts), params.stop_sequences);
    cache_.put(key, json{{"text", c.text}});
    return c;
  }

  std::optional<AnswerDistribution> score_choices(const Dialogue& d,
                                                  const std::vector<std::string>& labels) {
    if (labels.empty()) throw ValidationError("score_choices needs labels");
    const std::string prompt = d.serialize();
    const std::string key = cache_key("score", prompt + "\x1f" + join(labels, ","), 0);
    if (auto hit = cache_.get(key)) {
      ++cache_hits;
      if (hit->at("abstain").get<bool>()) return std::nullopt;
      return AnswerDistribution::from_json(hit->at("distribution"));
    }
    std::optional<AnswerDistribution> result;
    int attempts = 0;
    auto scores = with_retries([&] {
      detail::SemaphoreGuard guard(limiter_);
      ++backend_calls;
      return backend_->next_token_scores(prompt, labels);
    }, attempts);
    if (scores) {
      result = make_answer_distribution(labels, *scores, "token_scores");
    } else {
      result = vote_fallback(d, labels);
    }
    json entry;
    entry["abstain"] = !result.has_value();
    if (result) entry["distribution"] = result->to_json();
    cache_.put(key, entry);
    return result;
  }

  TokenCount count_tokens(const std::string& text) {
    const std::string key = cache_key("tokens", text, 0);
    if (auto hit = cache_.get(key)) {
      ++cache_hits;
      return {hit->at("count").get<int64_t>(), hit->at("fallback").get<bool>()};
    }
    TokenCount tc;
    int attempts = 0;
    auto counted = with_retries([&] {
      detail::SemaphoreGuard guard(limiter_);
      ++backend_calls;
      return backend_->token_count(text);
    }, attempts);
    if (counted) {
      tc.count = *counted;
    } else {
      tc.count = whitespace_token_count(text);
      tc.whitespace_fallback = true;
    }
    cache_.put(key, json{{"count", tc.count}, {"fallback", tc.whitespace_fallback}});
    return tc;
  }

  // Observable for tests; not part of any persisted record.
  std::atomic<uint64_t> backend_calls{0};
  std::atomic<uint64_t> cache_hits{0};

 private:
  template <typename Fn>
  auto with_retries(Fn&& fn, int& attempts) -> decltype(fn()) {
    int delay = options_.retry.base_delay_ms;
    std::string last_error;
    for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
      attempts = attempt;
      try {
        return fn();
      } catch (const TransportError& e) {
        last_error += "attempt " + std::to_string(attempt) + ": " + e.what() + "; ";
        if (attempt == options_.retry.max_attempts) break;
        if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay = std::min<int>(options_.retry.max_delay_ms,
                              static_cast<int>(delay * options_.retry.multiplier));
      }
    }
    throw BackendError("backend '" + descriptor().name + "' exhausted retries: " + last_error);
  }

  // Constrained sampling at temperature zero, one vote per sample index.
  std::optional<AnswerDistribution> vote_fallback(const Dialogue& d,
                                                  const std::vector<std::string>& labels) {
    SamplingParams vote_params;
    vote_params.temperature = 0.0;
    vote_params.nucleus_p = 1.0;
    vote_params.max_tokens = 4;
    std::map<std::string, double> counts;
    for (int v = 0; v < options_.vote_count; ++v) {
      Completion c = sample(d, vote_params, 0x766f7465ULL + static_cast<uint64_t>(v));
      auto label = parse_vote_label(c.text, labels);
      if (label) counts[*label] += 1.0;
    }
    return make_answer_distribution(labels, counts, "sampling_vote");
  }

  static std::optional<std::string> parse_vote_label(const std::string& completion,
                                                     const std::vector<std::string>& labels) {
    for (char ch : completion) {
      if (std::isalnum(static_cast<unsigned char>(ch))) {
        std::string label(1, static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
        for (const auto& l : labels)
          if (l == label) return label;
        return std::nullopt;
      }
    }
    return std::nullopt;
  }

  static std::string apply_stops(std::string text, const std::vector<std::string>& stops) {
    size_t cut = std::string::npos;
    for (const auto& stop : stops) {
      if (stop.empty()) continue;
      size_t pos = text.find(stop);
      if (pos != std::string::npos) cut = std::min(cut, pos);
    }
    if (cut != std::string::npos) text.resize(cut);
    return text;
  }

  std::string cache_key(std::string_view op, std::string_view content, uint64_t index) const {
    Sha256 h;
    h.update(op);
    h.update("\x1f");
    h.update(descriptor().cache_namespace());
    h.update("\x1f");
    h.update(content);
    h.update("\x1f");
    h.update(std::to_string(index));
    return h.hex();
  }

  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  DiskCache cache_;
  detail::Semaphore limiter_;
};

}  // namespace cotprobe
