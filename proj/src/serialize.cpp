#include "graphix/serialize.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace graphix {

namespace {

bool is_separator_word(const std::string& w) {
  return w == "|" || w == ":" || w == ",";
}

}  // namespace

SerializedInput serialize(const Question& question, const Database& db) {
  if (question.tokens.empty())
    throw std::invalid_argument("serialize: empty question");
  question.validate();
  db.validate();

  SerializedInput out;
  auto push_word = [&](const std::string& w, bool owned) {
    if (!owned) out.separator_positions.push_back(out.tokens.size());
    out.tokens.push_back(w);
  };
  auto push_span = [&](const std::vector<std::string>& words) {
    const std::size_t begin = out.tokens.size();
    for (const std::string& w : words) push_word(w, true);
    out.node_spans.emplace_back(begin, out.tokens.size());
  };

  for (const QuestionToken& t : question.tokens) {
    if (is_separator_word(t.surface) || t.surface.find(' ') != std::string::npos ||
        t.surface.empty())
      throw std::invalid_argument("serialize: question token '" + t.surface +
                                  "' is not serializable");
    push_span({t.surface});
  }
  push_word("|", false);
  for (const std::string& w : split_name(db.name)) push_word(w, false);

  // Star node span is reserved now (canonical order puts it right after the
  // question) but its token is the trailing "*".
  const std::size_t star_span_index = out.node_spans.size();
  out.node_spans.emplace_back(0, 0);

  for (const Table& t : db.tables) {
    push_word("|", false);
    push_span(t.name_tokens);
    push_word(":", false);
    for (std::size_t k = 0; k < t.column_ids.size(); ++k) {
      if (k) push_word(",", false);
      push_span(db.columns[t.column_ids[k]].name_tokens);
    }
  }
  push_word("|", false);
  out.node_spans[star_span_index] = {out.tokens.size(), out.tokens.size() + 1};
  push_word("*", true);

  std::ostringstream text;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    if (i) text << ' ';
    text << out.tokens[i];
  }
  out.text = text.str();
  return out;
}

SerializedInput parse_serialized(const std::string& text) {
  std::vector<std::string> tokens;
  {
    std::istringstream is(text);
    std::string w;
    while (is >> w) tokens.push_back(w);
  }
  if (tokens.empty()) throw std::invalid_argument("parse_serialized: empty input");

  // Split into |-delimited sections.
  std::vector<std::vector<std::pair<std::string, std::size_t>>> sections(1);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == "|")
      sections.emplace_back();
    else
      sections.back().emplace_back(tokens[i], i);
  }
  if (sections.size() < 3)
    throw std::invalid_argument("parse_serialized: expected question | db name | ... | *");

  SerializedInput out;
  out.tokens = tokens;
  out.text = text;
  auto mark_separator = [&](std::size_t pos) { out.separator_positions.push_back(pos); };
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == "|") mark_separator(i);

  const auto& question_sec = sections.front();
  if (question_sec.empty())
    throw std::invalid_argument("parse_serialized: empty question section");
  for (const auto& [w, pos] : question_sec) {
    if (w == ":" || w == ",")
      throw std::invalid_argument("parse_serialized: separator inside question section");
    out.node_spans.emplace_back(pos, pos + 1);
  }

  const auto& db_sec = sections[1];
  if (db_sec.empty())
    throw std::invalid_argument("parse_serialized: empty database name section");
  for (const auto& [w, pos] : db_sec) {
    if (w == ":" || w == ",")
      throw std::invalid_argument("parse_serialized: separator inside database name");
    mark_separator(pos);
  }

  const auto& star_sec = sections.back();
  if (star_sec.size() != 1 || star_sec[0].first != "*")
    throw std::invalid_argument("parse_serialized: input must end with '| *'");
  const std::size_t star_span_index = out.node_spans.size();
  out.node_spans.emplace_back(star_sec[0].second, star_sec[0].second + 1);

  for (std::size_t s = 2; s + 1 < sections.size(); ++s) {
    const auto& sec = sections[s];
    // table name tokens : col tokens , col tokens , ...
    std::size_t colon = sec.size();
    for (std::size_t i = 0; i < sec.size(); ++i)
      if (sec[i].first == ":") {
        colon = i;
        break;
      }
    if (colon == 0 || colon == sec.size())
      throw std::invalid_argument("parse_serialized: table section without ':'");
    out.node_spans.emplace_back(sec[0].second, sec[colon - 1].second + 1);
    mark_separator(sec[colon].second);

    std::size_t col_begin = colon + 1;
    for (std::size_t i = colon + 1; i <= sec.size(); ++i) {
      if (i < sec.size() && sec[i].first != ",") continue;
      if (i == col_begin)
        throw std::invalid_argument("parse_serialized: empty column name");
      out.node_spans.emplace_back(sec[col_begin].second, sec[i - 1].second + 1);
      if (i < sec.size()) mark_separator(sec[i].second);
      col_begin = i + 1;
    }
  }

  // Restore canonical separator order and verify coverage.
  std::sort(out.separator_positions.begin(), out.separator_positions.end());
  std::vector<bool> owned(tokens.size(), false);
  for (const auto& [b, e] : out.node_spans)
    for (std::size_t p = b; p < e; ++p) owned[p] = true;
  for (std::size_t p : out.separator_positions) {
    if (owned[p])
      throw std::invalid_argument("parse_serialized: overlapping spans");
    owned[p] = true;
  }
  for (std::size_t p = 0; p < tokens.size(); ++p)
    if (!owned[p])
      throw std::invalid_argument("parse_serialized: position " + std::to_string(p) +
                                  " belongs to no node");

  // Spans were appended question, star, then tables/columns; the canonical
  // order interleaves star right after the question, which is already the
  // case here because the star span was inserted before table sections.
  (void)star_span_index;
  return out;
}

}  // namespace graphix
