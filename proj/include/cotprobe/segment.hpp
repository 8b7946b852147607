#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotprobe/util.hpp"

namespace cotprobe {

// Deterministic rule-based sentence splitter. A boundary is a run of
// terminal punctuation (plus trailing closers) followed by whitespace or end
// of text, unless the token ending in '.' is on the guard list. Decimal
// points never qualify because the next character is a digit, not
// whitespace. The identity string below is recorded in run manifests.
inline constexpr std::string_view kSegmenterId = "rule_v1";
inline constexpr std::string_view kStepJoiner = " ";

struct SegmenterOptions {
  std::vector<std::string> guard_tokens;
};

inline const SegmenterOptions& default_segmenter_options() {
  static const SegmenterOptions opts{{
      "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "St.", "Mt.", "vs.", "etc.",
      "e.g.", "i.e.", "cf.", "Fig.", "Eq.", "No.", "approx.",
  }};
  return opts;
}

namespace detail {

inline bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

inline bool is_closer(char c) {
  return c == ')' || c == ']' || c == '"' || c == '\'';
}

inline bool is_guarded(std::string_view text, size_t dot, const SegmenterOptions& opts) {
  size_t tok_start = dot;
  while (tok_start > 0 && !is_ws(text[tok_start - 1])) --tok_start;
  std::string_view token = text.substr(tok_start, dot - tok_start + 1);
  for (const auto& g : opts.guard_tokens) {
    if (token == g) return true;
  }
  return false;
}

}  // namespace detail

struct SentenceSpan {
  size_t begin = 0;       // first byte of the sentence
  size_t end = 0;         // one past the last byte
  bool terminated = false;  // ended at terminal punctuation, not end-of-text
};

inline std::vector<SentenceSpan> segment_spans(
    std::string_view text, const SegmenterOptions& opts = default_segmenter_options()) {
  std::vector<SentenceSpan> spans;
  const size_t n = text.size();
  size_t start = 0;
  while (start < n && is_ws(text[start])) ++start;
  size_t i = start;
  while (i < n) {
    if (!detail::is_terminal(text[i])) {
      ++i;
      continue;
    }
    size_t run_begin = i;
    size_t j = i;
    while (j + 1 < n && detail::is_terminal(text[j + 1])) ++j;
    const bool single_dot = (j == run_begin && text[run_begin] == '.');
    while (j + 1 < n && detail::is_closer(text[j + 1])) ++j;
    const size_t next = j + 1;
    const bool at_end = next >= n;
    if (at_end || is_ws(text[next])) {
      if (single_dot && !at_end && detail::is_guarded(text, run_begin, opts)) {
        i = j + 1;
        continue;
      }
      spans.push_back({start, j + 1, true});
      start = next;
      while (start < n && is_ws(text[start])) ++start;
      i = start;
    } else {
      i = j + 1;
    }
  }
  if (start < n) {
    size_t end = n;
    while (end > start && is_ws(text[end - 1])) --end;
    if (end > start) spans.push_back({start, end, false});
  }
  return spans;
}

// Sentences, each trimmed; joining them with kStepJoiner reproduces the
// input up to inter-sentence whitespace normalization.
inline std::vector<std::string> segment(
    std::string_view text, const SegmenterOptions& opts = default_segmenter_options()) {
  std::vector<std::string> out;
  for (const auto& span : segment_spans(text, opts)) {
    out.emplace_back(text.substr(span.begin, span.end - span.begin));
  }
  return out;
}

// End offset of the first sentence when the text contains a recognized
// terminal-punctuation ending; nullopt for fragments without one.
inline std::optional<size_t> first_sentence_end(
    std::string_view text, const SegmenterOptions& opts = default_segmenter_options()) {
  auto spans = segment_spans(text, opts);
  if (spans.empty() || !spans.front().terminated) return std::nullopt;
  return spans.front().end;
}

inline std::string join_steps(const std::vector<std::string>& steps) {
  return join(steps, kStepJoiner);
}

}  // namespace cotprobe
