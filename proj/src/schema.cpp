#include "graphix/schema.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace graphix {

std::string_view data_type_name(DataType t) {
  switch (t) {
    case DataType::Text: return "text";
    case DataType::Number: return "number";
    case DataType::Time: return "time";
    case DataType::Boolean: return "boolean";
    case DataType::Other: return "other";
  }
  return "other";
}

DataType data_type_from_name(std::string_view name) {
  if (name == "text") return DataType::Text;
  if (name == "number") return DataType::Number;
  if (name == "time") return DataType::Time;
  if (name == "boolean") return DataType::Boolean;
  return DataType::Other;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_name(std::string_view name) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(to_lower(cur));
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < name.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(name[i]);
    if (!std::isalnum(c)) {
      flush();
      continue;
    }
    if (i > 0 && std::isupper(c) &&
        std::islower(static_cast<unsigned char>(name[i - 1])))
      flush();
    cur.push_back(name[i]);
  }
  flush();
  return out;
}

static std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

std::string Column::display_name() const {
  return is_star() ? "*" : join_tokens(name_tokens);
}

std::string Table::display_name() const { return join_tokens(name_tokens); }

std::size_t Database::star_id() const {
  for (const Column& c : columns)
    if (c.is_star()) return c.id;
  throw std::logic_error("Database: missing star column");
}

void Database::validate() const {
  std::size_t stars = 0;
  std::size_t owned = 0;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const Column& c = columns[i];
    if (c.id != i) throw std::logic_error("Database: column ids must be positional");
    if (c.is_star()) {
      ++stars;
      if (c.is_primary) throw std::logic_error("Database: star column cannot be primary");
      continue;
    }
    if (c.name_tokens.empty())
      throw std::logic_error("Database: column " + std::to_string(i) + " has no name tokens");
    if (!c.table_id.has_value())
      throw std::logic_error("Database: non-star column " + std::to_string(i) +
                             " has no table");
    if (*c.table_id >= tables.size())
      throw std::logic_error("Database: column " + std::to_string(i) +
                             " references missing table");
  }
  if (stars != 1)
    throw std::logic_error("Database: expected exactly one star column, found " +
                           std::to_string(stars));
  std::set<std::string> table_names;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    const Table& tab = tables[t];
    if (tab.id != t) throw std::logic_error("Database: table ids must be positional");
    if (tab.column_ids.empty())
      throw std::logic_error("Database: table '" + tab.display_name() + "' has no columns");
    if (!table_names.insert(tab.display_name()).second)
      throw std::logic_error("Database: duplicate table name '" + tab.display_name() + "'");
    for (std::size_t cid : tab.column_ids) {
      if (cid >= columns.size() || columns[cid].table_id != t)
        throw std::logic_error("Database: table '" + tab.display_name() +
                               "' lists column " + std::to_string(cid) +
                               " it does not own");
      ++owned;
    }
  }
  if (owned + 1 != columns.size())
    throw std::logic_error("Database: column/table bookkeeping mismatch");
  for (const auto& [src, dst] : foreign_keys) {
    if (src >= columns.size() || dst >= columns.size())
      throw std::logic_error("Database: dangling foreign key (" + std::to_string(src) +
                             ", " + std::to_string(dst) + ")");
    const Column& a = columns[src];
    const Column& b = columns[dst];
    if (a.is_star() || b.is_star())
      throw std::logic_error("Database: foreign key may not involve the star column");
    if (a.table_id == b.table_id)
      throw std::logic_error("Database: foreign key endpoints share a table (" +
                             std::to_string(src) + ", " + std::to_string(dst) + ")");
  }
}

void Question::validate() const {
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].index != i)
      throw std::logic_error("Question: token indices must be contiguous from 0");
  for (const DepEdge& e : dep_edges) {
    if (e.head >= tokens.size() || e.dep >= tokens.size())
      throw std::logic_error("Question: dependency edge (" + std::to_string(e.head) +
                             ", " + std::to_string(e.dep) + ") out of range for " +
                             std::to_string(tokens.size()) + " tokens");
    if (e.head == e.dep)
      throw std::logic_error("Question: dependency edge may not be a self loop (token " +
                             std::to_string(e.head) + ")");
  }
}

Database database_from_json(const nlohmann::json& j, const std::string& where) {
  Database db;
  try {
    db.name = j.at("db_id").get<std::string>();

    const auto& raw_tables = j.at("table_names_original");
    for (std::size_t t = 0; t < raw_tables.size(); ++t) {
      Table tab;
      tab.id = t;
      tab.name_tokens = split_name(raw_tables[t].get<std::string>());
      if (tab.name_tokens.empty())
        throw std::runtime_error("table " + std::to_string(t) +
                                 " has no alphanumeric name characters");
      db.tables.push_back(std::move(tab));
    }

    const auto& raw_cols = j.at("column_names_original");
    const auto types = j.value("column_types", nlohmann::json::array());
    bool has_star = false;
    for (std::size_t c = 0; c < raw_cols.size(); ++c) {
      const auto& rc = raw_cols[c];
      const long long tidx = rc.at(0).get<long long>();
      const std::string raw_name = rc.at(1).get<std::string>();
      Column col;
      col.id = c;
      if (c < types.size())
        col.type = data_type_from_name(to_lower(types[c].get<std::string>()));
      if (tidx < 0) {
        if (raw_name != "*")
          throw std::runtime_error("column " + std::to_string(c) +
                                   " ('" + raw_name + "') has no table");
        if (has_star) throw std::runtime_error("duplicate star column");
        has_star = true;
        col.type = DataType::Other;
      } else {
        if (static_cast<std::size_t>(tidx) >= db.tables.size())
          throw std::runtime_error("column " + std::to_string(c) +
                                   " references missing table " + std::to_string(tidx));
        col.table_id = static_cast<std::size_t>(tidx);
        col.name_tokens = split_name(raw_name);
        if (col.name_tokens.empty())
          throw std::runtime_error("column " + std::to_string(c) +
                                   " ('" + raw_name + "') has no alphanumeric name characters");
        db.tables[*col.table_id].column_ids.push_back(c);
      }
      db.columns.push_back(std::move(col));
    }
    if (!has_star) {
      Column star;
      star.id = db.columns.size();
      db.columns.push_back(std::move(star));
    }

    for (const auto& pk : j.value("primary_keys", nlohmann::json::array())) {
      const std::size_t cid = pk.get<std::size_t>();
      if (cid >= db.columns.size() || db.columns[cid].is_star())
        throw std::runtime_error("primary key references invalid column " +
                                 std::to_string(cid));
      db.columns[cid].is_primary = true;
    }

    for (const auto& fk : j.value("foreign_keys", nlohmann::json::array())) {
      const std::size_t src = fk.at(0).get<std::size_t>();
      const std::size_t dst = fk.at(1).get<std::size_t>();
      if (src >= db.columns.size() || dst >= db.columns.size() ||
          db.columns[src].is_star() || db.columns[dst].is_star())
        throw std::runtime_error("dangling foreign key (" + std::to_string(src) + ", " +
                                 std::to_string(dst) + ")");
      db.foreign_keys.emplace_back(src, dst);
    }

    if (j.contains("candidate_values")) {
      for (const auto& [key, vals] : j.at("candidate_values").items()) {
        const std::size_t cid = static_cast<std::size_t>(std::stoull(key));
        if (cid >= db.columns.size() || db.columns[cid].is_star())
          throw std::runtime_error("candidate_values references invalid column " + key);
        for (const auto& v : vals)
          db.columns[cid].candidate_values.push_back(v.get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(where + ": malformed schema JSON: " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(where + ": " + e.what());
  }

  try {
    db.validate();
  } catch (const std::logic_error& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  return db;
}

static nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path + ": cannot open file");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": JSON parse failure: " + e.what());
  }
}

Database load_database(const std::string& path) {
  return database_from_json(parse_json_file(path), path);
}

Question question_from_json(const nlohmann::json& j, const std::string& where) {
  Question q;
  try {
    const auto& toks = j.at("tokens");
    for (std::size_t i = 0; i < toks.size(); ++i) {
      QuestionToken tok;
      tok.index = i;
      tok.surface = toks[i].at("surface").get<std::string>();
      tok.lemma = toks[i].contains("lemma") ? toks[i].at("lemma").get<std::string>()
                                            : to_lower(tok.surface);
      q.tokens.push_back(std::move(tok));
    }
    for (const auto& d : j.value("deps", nlohmann::json::array())) {
      DepEdge e;
      e.head = d.at("head").get<std::size_t>();
      e.dep = d.at("dep").get<std::size_t>();
      e.label = d.at("label").get<std::string>();
      q.dep_edges.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(where + ": malformed question JSON: " + e.what());
  }
  try {
    q.validate();
  } catch (const std::logic_error& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  return q;
}

Question load_question(const std::string& path) {
  return question_from_json(parse_json_file(path), path);
}

void load_candidate_values_csv(Database& db, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path + ": cannot open file");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 'column_id,value'");
    std::size_t cid = 0;
    try {
      cid = std::stoull(line.substr(0, comma));
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad column id");
    }
    if (cid >= db.columns.size() || db.columns[cid].is_star())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": invalid column id " + std::to_string(cid));
    db.columns[cid].candidate_values.push_back(line.substr(comma + 1));
  }
}

}  // namespace graphix
