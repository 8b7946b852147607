#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cotprobe/model_gateway.hpp"
#include "cotprobe/prompt_kit.hpp"
#include "cotprobe/segment.hpp"
#include "cotprobe/util.hpp"

namespace cotprobe::scripted {

// ---------------------------------------------------------------------------
// Prompt introspection shared by the oracles. Scripted models read the same
// serialized dialogues a remote backend would, which keeps the wire format
// honest.

enum class PromptType { cot, final_choice, final_int, mistake, paraphrase, other };

struct PromptView {
  PromptType type = PromptType::other;
  std::string question;            // bare question text (choices stripped)
  std::vector<std::string> labels; // choice labels rendered in the prompt
  std::string cot_block;           // reasoning text after the step-by-step prefix
  std::string mistake_sentence;    // mistake prompts: the target sentence
  std::string paraphrase_text;     // paraphrase prompts: the quoted text

  static PromptView parse(const std::string& prompt) {
    PromptView v;
    std::vector<Turn> turns = parse_dialogue(prompt);
    if (turns.empty()) return v;
    const Turn& last = turns.back();

    std::string last_human;
    for (const auto& t : turns)
      if (t.speaker == Speaker::human) last_human = t.text;

    auto extract_cot = [](const std::string& text) -> std::string {
      size_t pos = text.find(kCotPrefix);
      if (pos == std::string::npos) return "";
      return text.substr(pos + kCotPrefix.size());
    };

    auto parse_question = [&v](const std::string& human_text) {
      std::string body = human_text;
      if (body.starts_with("Question: ")) body = body.substr(10);
      size_t choices = body.find("\n\nChoices:");
      if (choices != std::string::npos) {
        v.question = body.substr(0, choices);
        std::string block = body.substr(choices + 2);
        for (const auto& line : split(block, '\n')) {
          if (line.size() >= 3 && line[0] == '(' && line[2] == ')')
            v.labels.emplace_back(1, line[1]);
        }
      } else {
        v.question = body;
      }
    };

    if (last.speaker == Speaker::assistant && last.text.starts_with(kParaphraseAnswerPrefix) &&
        turns.size() >= 2 && turns[0].text.starts_with(kParaphraseRequest)) {
      v.type = PromptType::paraphrase;
      std::string body = turns[0].text.substr(kParaphraseRequest.size());
      if (!body.empty() && body.back() == '"') body.pop_back();
      v.paraphrase_text = body;
      return v;
    }

    if (last.speaker == Speaker::assistant && last.text == kMistakeAnswerPrefix) {
      v.type = PromptType::mistake;
      size_t marker = last_human.rfind("\n\nOriginal sentence: ");
      if (marker != std::string::npos) {
        v.mistake_sentence = last_human.substr(marker + 21);
        std::string head = last_human.substr(0, marker);
        size_t instr_end = head.find("\n\n");
        parse_question(instr_end == std::string::npos ? head : head.substr(instr_end + 2));
      }
      return v;
    }

    if (last_human == kFinalQuestionChoice || last_human == kFinalQuestionFreeInt) {
      v.type = last_human == kFinalQuestionChoice ? PromptType::final_choice
                                                  : PromptType::final_int;
      parse_question(turns[0].text);
      if (turns.size() >= 2) v.cot_block = extract_cot(turns[1].text);
      return v;
    }

    if (last.speaker == Speaker::assistant &&
        last.text.find(kCotPrefix) != std::string::npos) {
      v.type = PromptType::cot;
      parse_question(turns[0].text);
      v.cot_block = extract_cot(last.text);
      return v;
    }

    parse_question(turns[0].text);
    return v;
  }
};

inline std::vector<int64_t> parse_numbers(std::string_view text) {
  std::vector<int64_t> out;
  size_t i = 0;
  while (i < text.size()) {
    if (std::isdigit(static_cast<unsigned char>(text[i]))) {
      size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back(std::stoll(std::string(text.substr(i, j - i))));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

inline std::optional<int64_t> last_number(std::string_view text) {
  auto nums = parse_numbers(text);
  if (nums.empty()) return std::nullopt;
  return nums.back();
}

// "oracle" or "oracle:k=v,k=v"
struct ScriptSpec {
  std::string name;
  std::map<std::string, std::string> params;

  static ScriptSpec parse(const std::string& script_id) {
    ScriptSpec spec;
    size_t colon = script_id.find(':');
    spec.name = script_id.substr(0, colon);
    if (colon != std::string::npos) {
      for (const auto& field : split(script_id.substr(colon + 1), ',')) {
        if (trim(field).empty()) continue;
        auto kv = split(field, '=');
        if (kv.size() != 2) throw ConfigError("bad scripted param: " + field);
        spec.params[trim(kv[0])] = trim(kv[1]);
      }
    }
    return spec;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }

  int64_t get_int(const std::string& key, int64_t fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : std::stoll(it->second);
  }
};

// ---------------------------------------------------------------------------
// Base: enforces the max-token cap and the whitespace token rule. Every
// oracle is a pure function of (prompt, params, seed, sample index).

class ScriptedModel : public Backend {
 public:
  ScriptedModel(BackendDescriptor desc, const ScriptSpec& spec)
      : desc_(std::move(desc)),
        seed_(static_cast<uint64_t>(spec.get_int("seed", 0))),
        no_scores_(spec.get_int("no_scores", 0) != 0) {
    desc_.seed = seed_;
  }

  std::string complete(const std::string& prompt, const SamplingParams& params,
                       uint64_t sample_index) final {
    PromptView view = PromptView::parse(prompt);
    return truncate_to_tokens(respond(view, prompt, sample_index), params.max_tokens);
  }

  std::optional<std::map<std::string, double>> next_token_scores(
      const std::string& prompt, const std::vector<std::string>& labels) final {
    if (no_scores_) return std::nullopt;
    return scores(PromptView::parse(prompt), prompt, labels);
  }

  std::optional<int64_t> token_count(const std::string& text) final {
    return whitespace_token_count(text);
  }

  const BackendDescriptor& descriptor() const final { return desc_; }

 protected:
  virtual std::string respond(const PromptView& view, const std::string& prompt,
                              uint64_t sample_index) = 0;

  virtual std::optional<std::map<std::string, double>> scores(
      const PromptView& view, const std::string& prompt,
      const std::vector<std::string>& labels) {
    (void)view;
    (void)prompt;
    std::map<std::string, double> uniform;
    for (const auto& l : labels) uniform[l] = 1.0;
    return uniform;
  }

  // Biased distribution: `favored` gets 0.9, the rest split the remainder.
  static std::map<std::string, double> biased(const std::vector<std::string>& labels,
                                              const std::string& favored) {
    std::map<std::string, double> out;
    for (const auto& l : labels)
      out[l] = labels.size() == 1 ? 1.0 : 0.1 / static_cast<double>(labels.size() - 1);
    out[favored] = labels.size() == 1 ? 1.0 : 0.9;
    return out;
  }

  size_t pick_index(std::string_view key, size_t n) const {
    return n == 0 ? 0 : static_cast<size_t>(mix64(fnv1a(key), seed_) % n);
  }

  // Leading separator for text appended after existing reasoning.
  static std::string continuation_pad(const PromptView& view) {
    return trim(view.cot_block).empty() ? "" : " ";
  }

  BackendDescriptor desc_;
  uint64_t seed_;
  bool no_scores_;
};

// ---------------------------------------------------------------------------
// Oracles

// Always returns the same completion; scores are uniform (ties resolve to the
// first label).
class EchoFixedModel final : public ScriptedModel {
 public:
  EchoFixedModel(BackendDescriptor d, const ScriptSpec& s)
      : ScriptedModel(std::move(d), s),
        text_(s.get("text",
                    "First consider the problem. Then weigh the options. Next compare the "
                    "leading candidates. Conclude with the best supported option.")) {}

 protected:
  std::string respond(const PromptView&, const std::string&, uint64_t) override {
    return text_;
  }

 private:
  std::string text_;
};

// Ignores the reasoning entirely: the answer is a fixed function of the
// question, so every intervention leaves it unchanged.
class CotIgnoringModel final : public ScriptedModel {
 public:
  using ScriptedModel::ScriptedModel;

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t) override {
    switch (view.type) {
      case PromptType::final_int:
        return std::to_string(1000 + static_cast<int64_t>(pick_index(view.question, 9000))) +
               "</answer>";
      case PromptType::cot:
        return continuation_pad(view) +
               "Restate the question. Recall the relevant fact. Weigh each option. Settle "
               "on the answer.";
      default:
        return "Understood.";
    }
  }

  std::optional<std::map<std::string, double>> scores(
      const PromptView& view, const std::string&,
      const std::vector<std::string>& labels) override {
    return biased(labels, labels[pick_index(view.question, labels.size())]);
  }
};

// Commits to its answer only in the final reasoning step; truncate that step
// away and the answer reverts to a different default.
class LastStepDecidesModel final : public ScriptedModel {
 public:
  LastStepDecidesModel(BackendDescriptor d, const ScriptSpec& s)
      : ScriptedModel(std::move(d), s), cot_len_(s.get_int("cot_len", 4)) {}

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t) override {
    if (view.type != PromptType::cot) return "Understood.";
    size_t existing = segment(view.cot_block).size();
    std::string out;
    for (int64_t step = static_cast<int64_t>(existing); step < cot_len_; ++step) {
      if (!out.empty()) out += " ";
      if (step + 1 == cot_len_) {
        out += "Commit to " + target_label(view) + ".";
      } else {
        out += "Consider aspect " + std::to_string(step + 1) + " of the question.";
      }
    }
    return continuation_pad(view) + out;
  }

  std::optional<std::map<std::string, double>> scores(
      const PromptView& view, const std::string&,
      const std::vector<std::string>& labels) override {
    size_t marker = view.cot_block.rfind("Commit to ");
    if (marker != std::string::npos && marker + 10 < view.cot_block.size()) {
      std::string label(1, view.cot_block[marker + 10]);
      for (const auto& l : labels)
        if (l == label) return biased(labels, label);
    }
    // No commitment visible: fall back to a different default answer.
    size_t target = pick_index(view.question, labels.size());
    return biased(labels, labels[(target + 1) % labels.size()]);
  }

 private:
  std::string target_label(const PromptView& view) const {
    size_t n = view.labels.empty() ? 4 : view.labels.size();
    return std::string(1, static_cast<char>('A' + pick_index(view.question, n)));
  }

  int64_t cot_len_;
};

// Works addition problems step by step and believes whatever running total
// the reasoning ends with; a poisoned step therefore propagates to the final
// answer. Without reasoning, accuracy is gated by `capacity` (operand count
// times digit width), and `format_fail=1` drops the answer tags entirely.
class ArithmeticModel final : public ScriptedModel {
 public:
  ArithmeticModel(BackendDescriptor d, const ScriptSpec& s)
      : ScriptedModel(std::move(d), s),
        capacity_(s.get_int("capacity", 1 << 30)),
        format_fail_(s.get_int("format_fail", 0) != 0) {}

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t) override {
    const std::vector<int64_t> operands = parse_numbers(view.question);
    if (operands.empty()) return "Understood.";
    const size_t m = operands.size();
    if (view.type == PromptType::final_int) {
      int64_t value;
      if (auto believed = last_number(view.cot_block)) {
        value = *believed;
      } else {
        value = no_cot_answer(operands);
      }
      if (format_fail_) return "I believe the answer is " + std::to_string(value) + ".";
      return std::to_string(value) + "</answer>";
    }
    if (view.type != PromptType::cot) return "Understood.";

    const size_t existing = segment(view.cot_block).size();
    int64_t total = last_number(view.cot_block).value_or(0);
    std::string out;
    auto emit = [&out](const std::string& sentence) {
      if (!out.empty()) out += " ";
      out += sentence;
    };
    for (size_t step = existing; step < m + 1; ++step) {
      if (step == 0) {
        total = operands[0];
        emit("Start with " + std::to_string(total) + ".");
      } else if (step < m) {
        total += operands[step];
        emit("Add " + std::to_string(operands[step]) + " to get " + std::to_string(total) +
             ".");
      } else {
        emit("So the solution is " + std::to_string(total) + ".");
      }
    }
    return out.empty() ? "" : continuation_pad(view) + out;
  }

 private:
  int64_t no_cot_answer(const std::vector<int64_t>& operands) const {
    int64_t sum = 0;
    int64_t widest = 0;
    for (int64_t v : operands) {
      sum += v;
      widest = std::max<int64_t>(widest, static_cast<int64_t>(std::to_string(v).size()));
    }
    const int64_t difficulty = static_cast<int64_t>(operands.size()) * widest;
    return difficulty <= capacity_ ? sum : sum + 13;
  }

  int64_t capacity_;
  bool format_fail_;
};

// Answer is a hash of the question plus the reasoning text, approximately
// uniform over the labels; distinct samples answer independently.
class UniformAnswersModel final : public ScriptedModel {
 public:
  using ScriptedModel::ScriptedModel;

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t sample_index) override {
    if (view.type != PromptType::cot) return "Understood.";
    // 89 of every 100 samples have three to six steps; the rest 2 or 7.
    const uint64_t slot = sample_index % 100;
    const size_t len = slot < 89 ? 3 + slot % 4 : (slot % 2 ? 2 : 7);
    size_t existing = segment(view.cot_block).size();
    std::string out;
    for (size_t step = existing; step < len; ++step) {
      if (!out.empty()) out += " ";
      uint64_t tag = mix64(fnv1a(view.question), mix64(sample_index, step + seed_));
      out += "Note observation " + std::to_string(tag % 9973) + ".";
    }
    return out.empty() ? "" : continuation_pad(view) + out;
  }

  std::optional<std::map<std::string, double>> scores(
      const PromptView& view, const std::string&,
      const std::vector<std::string>& labels) override {
    size_t idx = pick_index(view.question + "\x1f" + trim(view.cot_block), labels.size());
    return biased(labels, labels[idx]);
  }
};

// Answers the first label with certainty, always.
class DegenerateModel final : public ScriptedModel {
 public:
  using ScriptedModel::ScriptedModel;

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t) override {
    if (view.type == PromptType::final_int) return "7</answer>";
    if (view.type == PromptType::cot)
      return continuation_pad(view) +
             "Read the question. Think carefully. Check the options. Choose the first.";
    return "Understood.";
  }

  std::optional<std::map<std::string, double>> scores(
      const PromptView&, const std::string&, const std::vector<std::string>& labels) override {
    std::map<std::string, double> out;
    for (const auto& l : labels) out[l] = 0.0;
    out[labels[0]] = 1.0;
    return out;
  }
};

// Answers its preferred label while the reasoning context stays short, then
// degrades to a different label once the context passes the threshold.
class ContextDegradingModel final : public ScriptedModel {
 public:
  ContextDegradingModel(BackendDescriptor d, const ScriptSpec& s)
      : ScriptedModel(std::move(d), s), threshold_chars_(s.get_int("threshold_chars", 160)) {}

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t) override {
    if (view.type == PromptType::cot)
      return continuation_pad(view) +
             "Look at the facts. Rule out the weak options. Keep the strongest. Done.";
    return "Understood.";
  }

  std::optional<std::map<std::string, double>> scores(
      const PromptView& view, const std::string&,
      const std::vector<std::string>& labels) override {
    size_t preferred = pick_index(view.question, labels.size());
    if (static_cast<int64_t>(view.cot_block.size()) <= threshold_chars_)
      return biased(labels, labels[preferred]);
    return biased(labels, labels[(preferred + 1) % labels.size()]);
  }

 private:
  int64_t threshold_chars_;
};

// Mistake generators -----------------------------------------------------

// Wraps the target sentence in NOT(...).
class MistakeNotModel final : public ScriptedModel {
 public:
  using ScriptedModel::ScriptedModel;

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t) override {
    return " NOT(" + view.mistake_sentence + ")";
  }
};

// Increments the last number in the target sentence; numeric poison that an
// arithmetic continuation will propagate.
class MistakePlusOneModel final : public ScriptedModel {
 public:
  using ScriptedModel::ScriptedModel;

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t) override {
    const std::string& s = view.mistake_sentence;
    size_t end = s.find_last_of("0123456789");
    if (end == std::string::npos) return " " + s + " (which is wrong)";
    size_t begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(s[begin - 1]))) --begin;
    int64_t value = std::stoll(s.substr(begin, end - begin + 1));
    return " " + s.substr(0, begin) + std::to_string(value + 1) + s.substr(end + 1);
  }
};

// Produces nothing; exercises the retry-then-skip path.
class MistakeEmptyModel final : public ScriptedModel {
 public:
  using ScriptedModel::ScriptedModel;

 protected:
  std::string respond(const PromptView&, const std::string&, uint64_t) override { return ""; }
};

// Echoes the quoted text back, closing the quote unless told not to.
class ParaphraseIdentityModel final : public ScriptedModel {
 public:
  ParaphraseIdentityModel(BackendDescriptor d, const ScriptSpec& s)
      : ScriptedModel(std::move(d), s), terminate_(s.get_int("terminate", 1) != 0) {}

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t) override {
    return view.paraphrase_text + (terminate_ ? "\"" : "");
  }

 private:
  bool terminate_;
};

// Deterministic rewording: stable token substitutions that keep numbers and
// sentence structure intact.
class ParaphraseRewordModel final : public ScriptedModel {
 public:
  using ScriptedModel::ScriptedModel;

 protected:
  std::string respond(const PromptView& view, const std::string&, uint64_t) override {
    std::string text = view.paraphrase_text;
    auto replace_all = [&text](std::string_view from, std::string_view to) {
      size_t pos = 0;
      while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
      }
    };
    replace_all("Start with", "Begin from");
    replace_all("Add ", "Then include ");
    replace_all("Consider", "Examine");
    replace_all("So the solution is", "Hence the result equals");
    return "In other words: " + text + "\"";
  }
};

// ---------------------------------------------------------------------------

inline std::shared_ptr<Backend> make_scripted_backend(const BackendDescriptor& desc) {
  ScriptSpec spec = ScriptSpec::parse(desc.script_id);
  if (spec.name == "echo-fixed") return std::make_shared<EchoFixedModel>(desc, spec);
  if (spec.name == "cot-ignoring") return std::make_shared<CotIgnoringModel>(desc, spec);
  if (spec.name == "last-step-decides")
    return std::make_shared<LastStepDecidesModel>(desc, spec);
  if (spec.name == "arithmetic") return std::make_shared<ArithmeticModel>(desc, spec);
  if (spec.name == "uniform-answers") return std::make_shared<UniformAnswersModel>(desc, spec);
  if (spec.name == "degenerate") return std::make_shared<DegenerateModel>(desc, spec);
  if (spec.name == "context-degrading")
    return std::make_shared<ContextDegradingModel>(desc, spec);
  if (spec.name == "mistake-not") return std::make_shared<MistakeNotModel>(desc, spec);
  if (spec.name == "mistake-plus-one") return std::make_shared<MistakePlusOneModel>(desc, spec);
  if (spec.name == "mistake-empty") return std::make_shared<MistakeEmptyModel>(desc, spec);
  if (spec.name == "paraphrase-identity")
    return std::make_shared<ParaphraseIdentityModel>(desc, spec);
  if (spec.name == "paraphrase-reword")
    return std::make_shared<ParaphraseRewordModel>(desc, spec);
  throw ConfigError("unknown scripted oracle: " + spec.name);
}

}  // namespace cotprobe::scripted
