#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace graphix {

enum class DataType { Text, Number, Time, Boolean, Other };

std::string_view data_type_name(DataType t);
DataType data_type_from_name(std::string_view name);

struct Column {
  std::size_t id = 0;
  std::optional<std::size_t> table_id;  // absent for the star column
  std::vector<std::string> name_tokens;
  DataType type = DataType::Other;
  bool is_primary = false;
  std::vector<std::string> candidate_values;

  bool is_star() const { return !table_id.has_value() && name_tokens.empty(); }
  std::string display_name() const;
};

struct Table {
  std::size_t id = 0;
  std::vector<std::string> name_tokens;
  std::vector<std::size_t> column_ids;

  std::string display_name() const;
};

struct Database {
  std::string name;
  std::vector<Table> tables;
  std::vector<Column> columns;  // includes exactly one star column
  std::vector<std::pair<std::size_t, std::size_t>> foreign_keys;  // (source, referenced)

  std::size_t star_id() const;
  std::size_t real_column_count() const { return columns.size() - 1; }
  void validate() const;
};

struct QuestionToken {
  std::size_t index = 0;
  std::string surface;
  std::string lemma;
};

struct DepEdge {
  std::size_t head = 0;
  std::size_t dep = 0;
  std::string label;
};

struct Question {
  std::vector<QuestionToken> tokens;
  std::vector<DepEdge> dep_edges;

  void validate() const;
};

// Lowercases and splits on any non-alphanumeric character and on
// lower-to-upper case boundaries: "StuID" -> {"stu", "id"},
// "concert_singer" -> {"concert", "singer"}. Idempotent on its own output.
std::vector<std::string> split_name(std::string_view name);

std::string to_lower(std::string_view s);

Database database_from_json(const nlohmann::json& j, const std::string& where);
Database load_database(const std::string& path);

Question question_from_json(const nlohmann::json& j, const std::string& where);
Question load_question(const std::string& path);

// Optional CSV ingestion of candidate cell values: lines of "column_id,value".
void load_candidate_values_csv(Database& db, const std::string& path);

}  // namespace graphix
