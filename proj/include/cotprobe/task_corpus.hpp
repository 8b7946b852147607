#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotprobe/errors.hpp"
#include "cotprobe/util.hpp"

namespace cotprobe {

using json = nlohmann::json;

enum class QuestionKind { multiple_choice, free_integer };

inline std::string to_string(QuestionKind k) {
  return k == QuestionKind::multiple_choice ? "multiple_choice" : "free_integer";
}

inline QuestionKind question_kind_from_string(const std::string& s) {
  if (s == "multiple_choice") return QuestionKind::multiple_choice;
  if (s == "free_integer") return QuestionKind::free_integer;
  throw ValidationError("unknown question kind: " + s);
}

struct Question {
  std::string id;
  std::string task;
  std::string text;
  QuestionKind kind = QuestionKind::multiple_choice;
  std::vector<std::string> choices;  // empty for free_integer
  int64_t gold = 0;                  // choice index or integer value
  std::map<std::string, std::string> meta;

  json to_json() const {
    json j;
    j["id"] = id;
    j["task"] = task;
    j["text"] = text;
    j["kind"] = to_string(kind);
    j["choices"] = choices;
    j["gold"] = gold;
    j["meta"] = meta;
    return j;
  }

  static Question from_json(const json& j) {
    Question q;
    q.id = j.at("id").get<std::string>();
    q.task = j.at("task").get<std::string>();
    q.text = j.at("text").get<std::string>();
    q.kind = question_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("choices")) q.choices = j.at("choices").get<std::vector<std::string>>();
    q.gold = j.at("gold").get<int64_t>();
    if (j.contains("meta")) q.meta = j.at("meta").get<std::map<std::string, std::string>>();
    return q;
  }
};

// Labels are positional: question 0..25 -> "A".."Z".
inline constexpr size_t kMaxChoices = 26;

inline void validate_question(const Question& q) {
  if (q.id.empty()) throw ValidationError("question has empty id");
  if (q.kind == QuestionKind::multiple_choice) {
    if (q.choices.empty())
      throw ValidationError("question " + q.id + ": multiple_choice needs choices");
    if (q.choices.size() > kMaxChoices)
      throw ValidationError("question " + q.id + ": more than 26 choices");
    if (q.gold < 0 || static_cast<size_t>(q.gold) >= q.choices.size())
      throw ValidationError("question " + q.id + ": gold index " + std::to_string(q.gold) +
                            " out of range for " + std::to_string(q.choices.size()) +
                            " choices");
  } else {
    if (!q.choices.empty())
      throw ValidationError("question " + q.id + ": free_integer must not have choices");
  }
}

// Loads newline-delimited JSON task records. When task_name is non-empty only
// records of that task are returned; either way the result is validated as a
// whole (no partial loads).
inline std::vector<Question> load_tasks(const std::filesystem::path& path,
                                        const std::string& task_name = "") {
  std::ifstream in(path);
  if (!in) throw ConfigError("task file not found: " + path.string());
  std::vector<Question> out;
  std::set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    Question q;
    try {
      q = Question::from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      validate_question(q);
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!task_name.empty() && q.task != task_name) continue;
    if (!seen_ids.insert(q.id).second)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": duplicate question id " + q.id);
    out.push_back(std::move(q));
  }
  return out;
}

inline void save_tasks(const std::filesystem::path& path, const std::vector<Question>& qs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write task file: " + path.string());
  for (const auto& q : qs) out << q.to_json().dump() << "\n";
}

// ---------------------------------------------------------------------------
// Synthetic addition tasks

struct AdditionSpec {
  int operand_count = 2;  // one of 2, 4, 8, 16
  int digits = 2;         // 2 or 3
  int count = 1;
  uint64_t seed = 0;
};

inline void validate_addition_spec(const AdditionSpec& spec) {
  if (spec.operand_count != 2 && spec.operand_count != 4 && spec.operand_count != 8 &&
      spec.operand_count != 16)
    throw ValidationError("addition operand_count must be one of 2, 4, 8, 16");
  if (spec.digits != 2 && spec.digits != 3)
    throw ValidationError("addition digits must be 2 or 3");
  if (spec.count <= 0) throw ValidationError("addition count must be positive");
}

// "operands=8,digits=2,count=200,seed=7"
inline AdditionSpec parse_addition_spec(const std::string& text) {
  AdditionSpec spec;
  for (const auto& field : split(text, ',')) {
    if (trim(field).empty()) continue;
    auto kv = split(field, '=');
    if (kv.size() != 2) throw ConfigError("bad addition spec field: " + field);
    const std::string key = trim(kv[0]);
    long long value = 0;
    try {
      value = std::stoll(trim(kv[1]));
    } catch (const std::exception&) {
      throw ConfigError("bad addition spec value: " + field);
    }
    if (key == "operands") spec.operand_count = static_cast<int>(value);
    else if (key == "digits") spec.digits = static_cast<int>(value);
    else if (key == "count") spec.count = static_cast<int>(value);
    else if (key == "seed") spec.seed = static_cast<uint64_t>(value);
    else throw ConfigError("unknown addition spec key: " + key);
  }
  validate_addition_spec(spec);
  return spec;
}

inline std::string addition_task_name(const AdditionSpec& spec) {
  return "add_" + std::to_string(spec.operand_count) + "op_" + std::to_string(spec.digits) + "d";
}

inline Question make_addition_question(const std::vector<int64_t>& operands,
                                       const std::string& id, const std::string& task) {
  Question q;
  q.id = id;
  q.task = task;
  q.kind = QuestionKind::free_integer;
  std::string expr;
  int64_t sum = 0;
  for (size_t i = 0; i < operands.size(); ++i) {
    if (i) expr += " + ";
    expr += std::to_string(operands[i]);
    sum += operands[i];
  }
  q.text = "What is the solution to the following? " + expr + " =";
  q.gold = sum;
  return q;
}

// Pure function of the spec: identical specs yield identical question lists.
inline std::vector<Question> generate_addition(const AdditionSpec& spec) {
  validate_addition_spec(spec);
  const int64_t lo = spec.digits == 2 ? 10 : 100;
  const int64_t hi = spec.digits == 2 ? 99 : 999;
  std::mt19937_64 rng(mix64(spec.seed, 0x61646431ULL));
  const std::string task = addition_task_name(spec);
  std::vector<Question> out;
  out.reserve(static_cast<size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    std::vector<int64_t> operands(static_cast<size_t>(spec.operand_count));
    for (auto& v : operands) v = uniform_in(rng, lo, hi);
    out.push_back(make_addition_question(
        operands, task + "-s" + std::to_string(spec.seed) + "-" + std::to_string(i), task));
  }
  return out;
}

}  // namespace cotprobe
