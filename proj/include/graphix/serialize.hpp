#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "graphix/schema.hpp"

namespace graphix {

// Flat word-level rendering of a question and schema:
//   q1 ... qn | db name | table : col , col | table : col | *
// node_spans follow the canonical node order (question tokens, star, tables
// with their columns); the star span is the final "*" token. Positions not
// owned by any node (separators and the database name) are listed in
// separator_positions.
struct SerializedInput {
  std::vector<std::string> tokens;
  std::string text;
  std::vector<std::pair<std::size_t, std::size_t>> node_spans;  // [begin, end)
  std::vector<std::size_t> separator_positions;

  bool operator==(const SerializedInput&) const = default;
};

SerializedInput serialize(const Question& question, const Database& db);

// Inverse of serialize on its image; throws on malformed input.
SerializedInput parse_serialized(const std::string& text);

}  // namespace graphix
