#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "graphix/graph.hpp"
#include "graphix/serialize.hpp"
#include "testgen.hpp"

using namespace graphix;

namespace {

Question make_question(const std::vector<std::string>& words) {
  Question q;
  for (std::size_t i = 0; i < words.size(); ++i)
    q.tokens.push_back({i, words[i], words[i]});
  return q;
}

Database concert_db() {
  Database db;
  db.name = "concert";
  db.tables.push_back({0, {"singer"}, {0}});
  db.columns = {{0, 0, {"name"}, DataType::Text, false, {}}};
  Column star;
  star.id = 1;
  db.columns.push_back(star);
  db.validate();
  return db;
}

}  // namespace

TEST_CASE("serialize renders the joint sequence template") {
  const SerializedInput x = serialize(make_question({"how", "many", "singer"}),
                                      concert_db());
  CHECK(x.text == "how many singer | concert | singer : name | *");
  REQUIRE(x.tokens.size() == 11);

  // spans follow canonical node order: question tokens, star, table, column
  REQUIRE(x.node_spans.size() == 3 + 1 + 1 + 1);
  CHECK(x.node_spans[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(x.node_spans[2] == std::pair<std::size_t, std::size_t>{2, 3});
  CHECK(x.node_spans[3] == std::pair<std::size_t, std::size_t>{10, 11});  // star
  CHECK(x.node_spans[4] == std::pair<std::size_t, std::size_t>{6, 7});   // singer
  CHECK(x.node_spans[5] == std::pair<std::size_t, std::size_t>{8, 9});   // name

  // separators: two pipes around the db name, the colon, the final pipe and
  // the db-name token itself
  CHECK(x.separator_positions == std::vector<std::size_t>{3, 4, 5, 7, 9});
}

TEST_CASE("multi-word names occupy multi-token spans") {
  Database db = concert_db();
  db.name = "concert_singer";
  db.columns[0].name_tokens = {"stu", "id"};
  db.tables[0].column_ids = {0};
  const SerializedInput x = serialize(make_question({"hi"}), db);
  CHECK(x.text == "hi | concert singer | singer : stu id | *");
  // node order: hi, star, singer, stu id
  CHECK(x.node_spans[2] == std::pair<std::size_t, std::size_t>{5, 6});
  CHECK(x.node_spans[3] == std::pair<std::size_t, std::size_t>{7, 9});
}

TEST_CASE("spans cover all non-separator positions disjointly") {
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    const auto inst = testgen::random_instance(rng);
    const SerializedInput x = serialize(inst.question, inst.db);
    std::vector<int> owner(x.tokens.size(), 0);
    for (const auto& [b, e] : x.node_spans) {
      CHECK(b < e);
      for (std::size_t p = b; p < e; ++p) ++owner[p];
    }
    for (std::size_t p : x.separator_positions) ++owner[p];
    for (std::size_t p = 0; p < owner.size(); ++p) {
      CAPTURE(p);
      CHECK(owner[p] == 1);
    }
    // one span per canonical node
    CHECK(x.node_spans.size() == build_nodes(inst.question, inst.db).size());
  }
}

TEST_CASE("round trip: parse(serialize(x)) == x") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const auto inst = testgen::random_instance(rng);
    const SerializedInput x = serialize(inst.question, inst.db);
    CAPTURE(x.text);
    CHECK(parse_serialized(x.text) == x);
  }
}

TEST_CASE("empty question is rejected") {
  CHECK_THROWS_AS(serialize(Question{}, concert_db()), std::invalid_argument);
}

TEST_CASE("malformed serialized inputs are rejected") {
  CHECK_THROWS_AS(parse_serialized(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_serialized("   "), std::invalid_argument);
  CHECK_THROWS_AS(parse_serialized("a | b"), std::invalid_argument);
  CHECK_THROWS_AS(parse_serialized("a | b | c"), std::invalid_argument);        // no '*'
  CHECK_THROWS_AS(parse_serialized("a | b | t c | *"), std::invalid_argument);  // no ':'
  CHECK_THROWS_AS(parse_serialized("a | b | : c | *"), std::invalid_argument);  // no name
  CHECK_THROWS_AS(parse_serialized("a | b | t : | *"), std::invalid_argument);  // no cols
  CHECK_THROWS_AS(parse_serialized("a | b | t : c , | *"), std::invalid_argument);
}

TEST_CASE("question tokens that collide with separators are rejected") {
  CHECK_THROWS_AS(serialize(make_question({"a", "|"}), concert_db()),
                  std::invalid_argument);
}
