#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotprobe/errors.hpp"
#include "cotprobe/model_gateway.hpp"
#include "cotprobe/sha256.hpp"
#include "cotprobe/task_corpus.hpp"

namespace cotprobe {

// ---------------------------------------------------------------------------
// Answers

// A trial outcome: a choice distribution, a parsed integer, or an abstain.
// Abstains never match anything and never count as correct.
struct Answer {
  enum class Kind { choice, integer, abstain };
  Kind kind = Kind::abstain;
  AnswerDistribution dist;  // kind == choice
  int64_t value = 0;        // kind == integer

  static Answer choice(AnswerDistribution d) {
    Answer a;
    a.kind = Kind::choice;
    a.dist = std::move(d);
    return a;
  }

  static Answer integer(int64_t v) {
    Answer a;
    a.kind = Kind::integer;
    a.value = v;
    return a;
  }

  static Answer abstain() { return Answer{}; }

  bool is_abstain() const { return kind == Kind::abstain; }

  json to_json() const {
    switch (kind) {
      case Kind::choice: {
        json j = dist.to_json();
        j["kind"] = "choice";
        return j;
      }
      case Kind::integer:
        return json{{"kind", "integer"}, {"value", value}};
      default:
        return json{{"kind", "abstain"}};
    }
  }

  static Answer from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "choice") return choice(AnswerDistribution::from_json(j));
    if (kind == "integer") return integer(j.at("value").get<int64_t>());
    return abstain();
  }
};

inline bool answers_match(const Answer& a, const Answer& b) {
  if (a.is_abstain() || b.is_abstain()) return false;
  if (a.kind != b.kind) return false;
  if (a.kind == Answer::Kind::choice) return a.dist.chosen == b.dist.chosen;
  return a.value == b.value;
}

inline bool answer_correct(const Answer& a, const Question& q) {
  if (a.is_abstain()) return false;
  if (q.kind == QuestionKind::multiple_choice) {
    if (a.kind != Answer::Kind::choice) return false;
    auto labels = choice_labels(q.choices.size());
    return a.dist.chosen == labels[static_cast<size_t>(q.gold)];
  }
  return a.kind == Answer::Kind::integer && a.value == q.gold;
}

// ---------------------------------------------------------------------------
// Record types

struct ReasoningSample {
  std::string question_id;
  int sample_index = 0;
  std::string raw_text;             // completion as sampled
  std::vector<std::string> steps;   // segmented sentences
  Answer answer;                    // forced from the canonical joined steps
  int64_t token_length = 0;
  std::string backend;
  std::string params_hash;
  bool failed = false;
  std::string fail_reason;

  std::string cot_text() const { return join(steps, " "); }

  json to_json() const {
    json j;
    j["question_id"] = question_id;
    j["sample_index"] = sample_index;
    j["raw_text"] = raw_text;
    j["steps"] = steps;
    j["answer"] = answer.to_json();
    j["token_length"] = token_length;
    j["backend"] = backend;
    j["params_hash"] = params_hash;
    if (failed) {
      j["failed"] = true;
      j["fail_reason"] = fail_reason;
    }
    return j;
  }

  static ReasoningSample from_json(const json& j) {
    ReasoningSample r;
    r.question_id = j.at("question_id").get<std::string>();
    r.sample_index = j.at("sample_index").get<int>();
    r.raw_text = j.at("raw_text").get<std::string>();
    r.steps = j.at("steps").get<std::vector<std::string>>();
    r.answer = Answer::from_json(j.at("answer"));
    r.token_length = j.at("token_length").get<int64_t>();
    r.backend = j.value("backend", "");
    r.params_hash = j.value("params_hash", "");
    r.failed = j.value("failed", false);
    r.fail_reason = j.value("fail_reason", "");
    return r;
  }
};

struct NoCotRecord {
  std::string question_id;
  Answer answer;

  json to_json() const {
    return json{{"question_id", question_id}, {"answer", answer.to_json()}};
  }

  static NoCotRecord from_json(const json& j) {
    return {j.at("question_id").get<std::string>(), Answer::from_json(j.at("answer"))};
  }
};

enum class InterventionKind { early_answering, add_mistake, filler, paraphrase };

inline std::string to_string(InterventionKind k) {
  switch (k) {
    case InterventionKind::early_answering: return "early_answering";
    case InterventionKind::add_mistake: return "add_mistake";
    case InterventionKind::filler: return "filler";
    default: return "paraphrase";
  }
}

inline InterventionKind intervention_kind_from_string(const std::string& s) {
  if (s == "early_answering") return InterventionKind::early_answering;
  if (s == "add_mistake") return InterventionKind::add_mistake;
  if (s == "filler") return InterventionKind::filler;
  if (s == "paraphrase") return InterventionKind::paraphrase;
  throw ValidationError("unknown intervention kind: " + s);
}

struct InterventionRecord {
  InterventionKind kind = InterventionKind::early_answering;
  std::string question_id;
  int sample_index = 0;     // -1 for question-level records (filler)
  int param = 0;            // truncation depth / mistake step / token count / depth
  int cot_length = 0;       // step count of the source sample (0 for filler)
  std::string injected_text;
  std::string completed_cot;
  Answer answer;
  bool matches_original = false;
  std::string backend;
  std::string params_hash;
  std::string gen_backend;      // second-stage generator (mistake/paraphrase)
  std::string gen_params_hash;
  bool failed = false;
  std::string fail_reason;
  bool flagged = false;         // extraction irregularity kept for audit
  std::string flag_reason;

  json to_json() const {
    json j;
    j["kind"] = cotprobe::to_string(kind);
    j["question_id"] = question_id;
    j["sample_index"] = sample_index;
    j["param"] = param;
    j["cot_length"] = cot_length;
    j["injected_text"] = injected_text;
    j["completed_cot"] = completed_cot;
    j["answer"] = answer.to_json();
    j["matches_original"] = matches_original;
    j["backend"] = backend;
    j["params_hash"] = params_hash;
    if (!gen_backend.empty()) {
      j["gen_backend"] = gen_backend;
      j["gen_params_hash"] = gen_params_hash;
    }
    if (failed) {
      j["failed"] = true;
      j["fail_reason"] = fail_reason;
    }
    if (flagged) {
      j["flagged"] = true;
      j["flag_reason"] = flag_reason;
    }
    return j;
  }

  static InterventionRecord from_json(const json& j) {
    InterventionRecord r;
    r.kind = intervention_kind_from_string(j.at("kind").get<std::string>());
    r.question_id = j.at("question_id").get<std::string>();
    r.sample_index = j.at("sample_index").get<int>();
    r.param = j.at("param").get<int>();
    r.cot_length = j.value("cot_length", 0);
    r.injected_text = j.value("injected_text", "");
    r.completed_cot = j.value("completed_cot", "");
    r.answer = Answer::from_json(j.at("answer"));
    r.matches_original = j.at("matches_original").get<bool>();
    r.backend = j.value("backend", "");
    r.params_hash = j.value("params_hash", "");
    r.gen_backend = j.value("gen_backend", "");
    r.gen_params_hash = j.value("gen_params_hash", "");
    r.failed = j.value("failed", false);
    r.fail_reason = j.value("fail_reason", "");
    r.flagged = j.value("flagged", false);
    r.flag_reason = j.value("flag_reason", "");
    return r;
  }
};

// ---------------------------------------------------------------------------
// Resumable append-only JSONL store with an integrity footer.
//
// Files hold one record per line and are sealed by a final footer line
// carrying the record count and a SHA-256 over all record lines. A writer
// opened on an unsealed file truncates any partial trailing line and
// continues appending, which keeps interrupted and uninterrupted runs
// byte-identical.

inline constexpr std::string_view kFooterKey = "__footer";

namespace testhooks {
// Crash injection for resume tests: when COT_PROBE_CRASH_AFTER_WRITES is set,
// the process exits hard after that many record writes.
inline std::atomic<int64_t>& write_counter() {
  static std::atomic<int64_t> counter{0};
  return counter;
}

inline void maybe_crash_after_write() {
  static const char* env = std::getenv("COT_PROBE_CRASH_AFTER_WRITES");
  if (!env) return;
  static const int64_t limit = std::strtoll(env, nullptr, 10);
  if (write_counter().fetch_add(1) + 1 >= limit) std::_Exit(99);
}
}  // namespace testhooks

struct JsonlReadResult {
  std::vector<json> records;
  bool sealed = false;
  bool integrity_ok = true;
};

inline JsonlReadResult read_jsonl(const std::filesystem::path& path) {
  JsonlReadResult out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  Sha256 hash;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      break;  // partial trailing line from an interrupted run
    }
    if (j.is_object() && j.contains(std::string(kFooterKey))) {
      const auto& footer = j.at(std::string(kFooterKey));
      out.sealed = true;
      out.integrity_ok = footer.at("records").get<size_t>() == out.records.size() &&
                         footer.at("sha256").get<std::string>() == hash.hex();
      break;
    }
    hash.update(line);
    hash.update("\n");
    out.records.push_back(std::move(j));
  }
  return out;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(std::filesystem::path path) : path_(std::move(path)) {
    if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path());
    JsonlReadResult existing = read_jsonl(path_);
    if (existing.sealed) {
      if (!existing.integrity_ok)
        throw IntegrityError("sealed record file failed integrity check: " + path_.string());
      sealed_ = true;
      existing_ = std::move(existing.records);
      return;
    }
    existing_ = std::move(existing.records);
    // Rewrite the surviving complete lines so a torn tail never lingers.
    std::string content;
    for (const auto& j : existing_) {
      std::string line = j.dump();
      hash_.update(line);
      hash_.update("\n");
      content += line;
      content += "\n";
    }
    if (std::filesystem::exists(path_)) {
      write_file_atomic(path_, content);
    }
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw ConfigError("cannot open record file for append: " + path_.string());
  }

  const std::vector<json>& existing() const { return existing_; }
  bool sealed() const { return sealed_; }
  size_t written() const { return existing_.size() + appended_; }

  void write(const json& record) {
    if (sealed_) throw ValidationError("record file already sealed: " + path_.string());
    std::string line = record.dump();
    hash_.update(line);
    hash_.update("\n");
    out_ << line << "\n";
    out_.flush();
    ++appended_;
    testhooks::maybe_crash_after_write();
  }

  void seal() {
    if (sealed_) return;
    json footer;
    footer[std::string(kFooterKey)] =
        json{{"records", written()}, {"sha256", hash_.hex()}};
    out_ << footer.dump() << "\n";
    out_.flush();
    out_.close();
    sealed_ = true;
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  Sha256 hash_;
  std::vector<json> existing_;
  size_t appended_ = 0;
  bool sealed_ = false;
};

// Strict read used by the metrics stage: the file must be sealed and intact.
inline std::vector<json> read_sealed_jsonl(const std::filesystem::path& path) {
  JsonlReadResult r = read_jsonl(path);
  if (!r.sealed) throw IntegrityError("record file is not sealed: " + path.string());
  if (!r.integrity_ok)
    throw IntegrityError("record file failed integrity check: " + path.string());
  return std::move(r.records);
}

}  // namespace cotprobe
