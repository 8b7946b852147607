#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cotprobe/model_gateway.hpp"
#include "cotprobe/prompt_kit.hpp"
#include "cotprobe/records.hpp"
#include "cotprobe/segment.hpp"
#include "cotprobe/task_corpus.hpp"
#include "cotprobe/util.hpp"

namespace cotprobe {

// First integer strictly between <answer> and </answer>; nullopt is an
// abstain (missing tags, empty or non-integer payload).
inline std::optional<int64_t> parse_int_answer(const std::string& text) {
  const std::string open = "<answer>";
  const std::string close = "</answer>";
  size_t begin = text.find(open);
  if (begin == std::string::npos) return std::nullopt;
  begin += open.size();
  size_t end = text.find(close, begin);
  if (end == std::string::npos) return std::nullopt;
  std::string payload = trim(text.substr(begin, end - begin));
  if (payload.empty()) return std::nullopt;
  size_t i = payload[0] == '+' || payload[0] == '-' ? 1 : 0;
  if (i == payload.size()) return std::nullopt;
  for (size_t j = i; j < payload.size(); ++j) {
    if (!std::isdigit(static_cast<unsigned char>(payload[j]))) return std::nullopt;
  }
  try {
    return std::stoll(payload);
  } catch (const std::exception&) {
    return std::nullopt;  // out of range
  }
}

// Forces a final answer given reasoning text; empty cot_text is the no-CoT
// condition. Multiple choice goes through next-token scoring, free integers
// through one sampled completion plus tag parsing. Cache keys depend only on
// the dialogue content, so identical conditions are answered identically.
inline Answer answer_with_cot(const Question& q, const std::string& cot_text,
                              ModelGateway& gateway, const SamplingParams& params) {
  Dialogue d = build_final_answer_dialogue(q, cot_text);
  if (q.kind == QuestionKind::multiple_choice) {
    auto dist = gateway.score_choices(d, choice_labels(q.choices.size()));
    if (!dist) return Answer::abstain();
    return Answer::choice(std::move(*dist));
  }
  SamplingParams answer_params = params;
  answer_params.max_tokens = 32;
  Completion c = gateway.sample(d, answer_params, 0);
  auto value = parse_int_answer(*d.open_prefix + c.text);
  if (!value) return Answer::abstain();
  return Answer::integer(*value);
}

// Samples one reasoning chain, segments it, and forces its answer from the
// canonical joined steps (so the full-prefix truncation reuses the very same
// dialogue, and therefore the very same answer).
inline ReasoningSample make_reasoning_sample(const Question& q, int sample_index,
                                             ModelGateway& gateway,
                                             const SamplingParams& params) {
  ReasoningSample s;
  s.question_id = q.id;
  s.sample_index = sample_index;
  s.backend = gateway.descriptor().name;
  s.params_hash = params.hash();
  try {
    Dialogue d = build_cot_dialogue(q);
    s.raw_text = gateway.sample(d, params, static_cast<uint64_t>(sample_index)).text;
    s.steps = segment(s.raw_text);
    s.token_length = gateway.count_tokens(s.cot_text()).count;
    s.answer = answer_with_cot(q, s.cot_text(), gateway, params);
  } catch (const BackendError& e) {
    s.failed = true;
    s.fail_reason = e.what();
  }
  return s;
}

// n reasoning samples for one question, fanned out to the gateway's
// parallelism budget; failed samples are marked, not dropped.
inline std::vector<ReasoningSample> collect_samples(const Question& q, int n,
                                                    const SamplingParams& params,
                                                    ModelGateway& gateway) {
  if (n < 1) throw ValidationError("collect_samples needs n >= 1");
  return parallel_ordered_map<ReasoningSample>(
      static_cast<size_t>(n), gateway.descriptor().parallelism,
      [&](size_t i) { return make_reasoning_sample(q, static_cast<int>(i), gateway, params); });
}

// ---------------------------------------------------------------------------
// CoT length histogram; weights are the AOC aggregation weights.

struct LengthHistogram {
  std::map<int, int64_t> counts;      // step count -> samples
  std::map<int, double> weights;      // normalized fractions, sum 1
  int64_t total = 0;

  static LengthHistogram from_lengths(const std::vector<int>& lengths) {
    LengthHistogram h;
    for (int l : lengths) {
      ++h.counts[l];
      ++h.total;
    }
    for (const auto& [l, c] : h.counts)
      h.weights[l] = static_cast<double>(c) / static_cast<double>(h.total);
    return h;
  }
};

inline LengthHistogram length_histogram(const std::vector<ReasoningSample>& samples) {
  std::vector<int> lengths;
  lengths.reserve(samples.size());
  for (const auto& s : samples)
    if (!s.failed) lengths.push_back(static_cast<int>(s.steps.size()));
  return LengthHistogram::from_lengths(lengths);
}

// Token-length histogram over the sampled CoTs, for filler percentiles.
inline std::vector<int64_t> token_lengths(const std::vector<ReasoningSample>& samples) {
  std::vector<int64_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    if (!s.failed) out.push_back(s.token_length);
  return out;
}

}  // namespace cotprobe
