#include "graphix/graph.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <limits>
#include <map>
#include <stdexcept>

namespace graphix {

std::string_view node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Question: return "question";
    case NodeKind::Table: return "table";
    case NodeKind::Column: return "column";
    case NodeKind::Star: return "star";
  }
  return "?";
}

namespace {

constexpr std::string_view kForwardNames[] = {
    "modifier", "argument", "distance_1", "foreign_key", "same_table", "has",
    "primary_key", "exact_match_table", "partial_match_table",
    "exact_match_column", "partial_match_column", "value_match", "bridge",
    "no_match", "self_loop",
};

}  // namespace

bool is_inverse_relation(RelationType r) {
  return static_cast<int>(r) > kSelfLoopId;
}

RelationType inverse_of(RelationType r) {
  const int id = static_cast<int>(r);
  if (id == kSelfLoopId) return RelationType::SelfLoop;
  if (id < kSelfLoopId) return static_cast<RelationType>(id + kSelfLoopId + 1);
  return static_cast<RelationType>(id - kSelfLoopId - 1);
}

std::string_view relation_name(RelationType r) {
  static std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& n : kForwardNames) out.emplace_back(n);
    for (int i = 0; i < kSelfLoopId; ++i)
      out.push_back(std::string(kForwardNames[i]) + "_inv");
    return out;
  }();
  return names[static_cast<std::size_t>(r)];
}

std::optional<RelationType> relation_from_name(std::string_view name) {
  for (int i = 0; i < kNumRelationTypes; ++i)
    if (relation_name(static_cast<RelationType>(i)) == name)
      return static_cast<RelationType>(i);
  return std::nullopt;
}

bool relation_row_allowed(NodeKind src, NodeKind dst, RelationType rel) {
  if (rel == RelationType::SelfLoop) return src == dst;
  if (is_inverse_relation(rel))
    return relation_row_allowed(dst, src, inverse_of(rel));
  using K = NodeKind;
  using R = RelationType;
  switch (rel) {
    case R::Modifier:
    case R::Argument:
    case R::Distance1:
      return src == K::Question && dst == K::Question;
    case R::ForeignKey:
    case R::SameTable:
      return src == K::Column && dst == K::Column;
    case R::Has:
    case R::PrimaryKey:
      return src == K::Table && dst == K::Column;
    case R::ExactMatchTable:
    case R::PartialMatchTable:
      return src == K::Question && dst == K::Table;
    case R::ExactMatchColumn:
    case R::PartialMatchColumn:
    case R::ValueMatch:
      return src == K::Question && dst == K::Column;
    case R::Bridge:
      return dst == K::Star &&
             (src == K::Question || src == K::Table || src == K::Column);
    case R::NoMatch:
      return src == K::Question && (dst == K::Table || dst == K::Column);
    default:
      return false;
  }
}

std::string_view linking_mode_name(LinkingMode m) {
  return m == LinkingMode::Bridge ? "bridge" : "no_match";
}

std::optional<LinkingMode> linking_mode_from_name(std::string_view name) {
  if (name == "bridge") return LinkingMode::Bridge;
  if (name == "no_match" || name == "nomatch" || name == "no-match")
    return LinkingMode::NoMatch;
  return std::nullopt;
}

std::set<std::string> GraphOptions::default_modifier_labels() {
  return {"amod", "nmod", "nummod", "advmod", "compound", "poss", "appos",
          "det", "acl"};
}

std::set<std::string> GraphOptions::default_stop_words() {
  return {"a",     "an",    "the",  "of",    "in",   "on",   "for",  "to",
          "with",  "by",    "from", "at",    "as",   "than", "that", "this",
          "these", "those", "is",   "are",   "was",  "were", "be",   "been",
          "do",    "does",  "did",  "and",   "or",   "not",  "no",   "how",
          "many",  "much",  "what", "which", "who",  "whose", "where", "when",
          "all",   "each",  "every", "any",  "some", "there", "list", "show",
          "give",  "find",  "return", "me",  "us",   "please", "'s",  "s"};
}

std::size_t HeterogeneousGraph::index_of(NodeRef node) const {
  const auto it = std::find(nodes_.begin(), nodes_.end(), node);
  if (it == nodes_.end())
    throw std::out_of_range("HeterogeneousGraph: unknown node (" +
                            std::string(node_kind_name(node.kind)) + ", " +
                            std::to_string(node.id) + ")");
  return static_cast<std::size_t>(it - nodes_.begin());
}

bool HeterogeneousGraph::has_node(NodeRef node) const {
  return std::find(nodes_.begin(), nodes_.end(), node) != nodes_.end();
}

const std::vector<HeterogeneousGraph::Incidence>& HeterogeneousGraph::in_neighbors(
    std::size_t node_index) const {
  return in_.at(node_index);
}

const std::vector<HeterogeneousGraph::Incidence>& HeterogeneousGraph::out_neighbors(
    std::size_t node_index) const {
  return out_.at(node_index);
}

std::size_t HeterogeneousGraph::forward_edge_count() const {
  std::size_t n = 0;
  for (const Edge& e : edges_)
    if (!is_inverse_relation(e.rel) && e.rel != RelationType::SelfLoop) ++n;
  return n;
}

std::size_t HeterogeneousGraph::count_edges(RelationType rel) const {
  std::size_t n = 0;
  for (const Edge& e : edges_)
    if (e.rel == rel) ++n;
  return n;
}

std::vector<NodeRef> build_nodes(const Question& question, const Database& db) {
  std::vector<NodeRef> nodes;
  for (const QuestionToken& t : question.tokens)
    nodes.push_back({NodeKind::Question, t.index});
  nodes.push_back({NodeKind::Star, db.star_id()});
  for (const Table& t : db.tables) {
    nodes.push_back({NodeKind::Table, t.id});
    for (std::size_t cid : t.column_ids) nodes.push_back({NodeKind::Column, cid});
  }
  return nodes;
}

std::vector<Edge> schema_relations(const Database& db) {
  std::vector<Edge> edges;
  for (const auto& [src, dst] : db.foreign_keys)
    edges.push_back({{NodeKind::Column, src}, {NodeKind::Column, dst},
                     RelationType::ForeignKey});
  for (const Table& t : db.tables) {
    for (std::size_t i = 0; i < t.column_ids.size(); ++i)
      for (std::size_t j = i + 1; j < t.column_ids.size(); ++j) {
        const std::size_t a = std::min(t.column_ids[i], t.column_ids[j]);
        const std::size_t b = std::max(t.column_ids[i], t.column_ids[j]);
        edges.push_back({{NodeKind::Column, a}, {NodeKind::Column, b},
                         RelationType::SameTable});
      }
    for (std::size_t cid : t.column_ids)
      edges.push_back({{NodeKind::Table, t.id}, {NodeKind::Column, cid},
                       RelationType::Has});
    for (std::size_t cid : t.column_ids)
      if (db.columns[cid].is_primary)
        edges.push_back({{NodeKind::Table, t.id}, {NodeKind::Column, cid},
                         RelationType::PrimaryKey});
  }
  return edges;
}

std::vector<Edge> question_relations(const Question& question,
                                     const GraphOptions& opts) {
  std::vector<Edge> edges;
  // Modifier points head -> dependent; Argument points dependent -> head
  // (the target of an Argument edge is the token's syntactic source).
  for (const DepEdge& d : question.dep_edges) {
    if (opts.modifier_labels.count(d.label))
      edges.push_back({{NodeKind::Question, d.head}, {NodeKind::Question, d.dep},
                       RelationType::Modifier});
    else
      edges.push_back({{NodeKind::Question, d.dep}, {NodeKind::Question, d.head},
                       RelationType::Argument});
  }
  for (std::size_t i = 0; i + 1 < question.tokens.size(); ++i)
    edges.push_back({{NodeKind::Question, i}, {NodeKind::Question, i + 1},
                     RelationType::Distance1});
  return edges;
}

namespace {

std::vector<std::string> question_lemmas(const Question& q) {
  std::vector<std::string> lemmas;
  lemmas.reserve(q.tokens.size());
  for (const QuestionToken& t : q.tokens) lemmas.push_back(t.lemma);
  return lemmas;
}

bool contains_span(const std::vector<std::string>& haystack,
                   const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < needle.size(); ++k)
      if (haystack[i + k] != needle[k]) {
        ok = false;
        break;
      }
    if (ok) return true;
  }
  return false;
}

bool lemma_in(const std::vector<std::string>& name_tokens, const std::string& lemma) {
  return std::find(name_tokens.begin(), name_tokens.end(), lemma) != name_tokens.end();
}

// Whole words of a cell value: maximal alphanumeric runs, lowercased.
std::vector<std::string> value_words(const std::string& value) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : value) {
    if (std::isalnum(static_cast<unsigned char>(ch)))
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

bool value_match(const Column& col, const std::string& lemma) {
  for (const std::string& v : col.candidate_values)
    if (lemma_in(value_words(v), lemma)) return true;
  return false;
}

struct LinkingAnalysis {
  std::vector<Edge> match_edges;
  std::vector<bool> token_matched;
  std::vector<bool> table_matched;
  std::vector<bool> column_matched;  // indexed by column id, star stays false
};

LinkingAnalysis analyze_linking(const Question& question, const Database& db) {
  LinkingAnalysis out;
  out.token_matched.assign(question.tokens.size(), false);
  out.table_matched.assign(db.tables.size(), false);
  out.column_matched.assign(db.columns.size(), false);
  const std::vector<std::string> lemmas = question_lemmas(question);

  for (const QuestionToken& tok : question.tokens) {
    for (const Table& t : db.tables) {
      if (!lemma_in(t.name_tokens, tok.lemma)) continue;
      const bool full_span = contains_span(lemmas, t.name_tokens);
      out.match_edges.push_back({{NodeKind::Question, tok.index},
                                 {NodeKind::Table, t.id},
                                 full_span ? RelationType::ExactMatchTable
                                           : RelationType::PartialMatchTable});
      out.token_matched[tok.index] = true;
      out.table_matched[t.id] = true;
    }
    for (const Column& c : db.columns) {
      if (c.is_star()) continue;
      if (lemma_in(c.name_tokens, tok.lemma)) {
        const bool full_span = contains_span(lemmas, c.name_tokens);
        out.match_edges.push_back({{NodeKind::Question, tok.index},
                                   {NodeKind::Column, c.id},
                                   full_span ? RelationType::ExactMatchColumn
                                             : RelationType::PartialMatchColumn});
        out.token_matched[tok.index] = true;
        out.column_matched[c.id] = true;
      }
      if (value_match(c, tok.lemma)) {
        out.match_edges.push_back({{NodeKind::Question, tok.index},
                                   {NodeKind::Column, c.id},
                                   RelationType::ValueMatch});
        out.token_matched[tok.index] = true;
        out.column_matched[c.id] = true;
      }
    }
  }
  return out;
}

struct UnmatchedSets {
  std::vector<std::size_t> tokens;
  std::vector<NodeRef> schema_items;  // tables then columns, ascending
};

UnmatchedSets unmatched_sets(const Question& question, const Database& db,
                             const LinkingAnalysis& la, const GraphOptions& opts) {
  UnmatchedSets u;
  for (const QuestionToken& tok : question.tokens)
    if (!la.token_matched[tok.index] && !opts.stop_words.count(tok.lemma))
      u.tokens.push_back(tok.index);
  for (const Table& t : db.tables)
    if (!la.table_matched[t.id]) u.schema_items.push_back({NodeKind::Table, t.id});
  for (const Column& c : db.columns)
    if (!c.is_star() && !la.column_matched[c.id])
      u.schema_items.push_back({NodeKind::Column, c.id});
  return u;
}

}  // namespace

std::vector<Edge> linking_relations(const Question& question, const Database& db,
                                    const GraphOptions& opts) {
  LinkingAnalysis la = analyze_linking(question, db);
  std::vector<Edge> edges = std::move(la.match_edges);

  if (opts.mode == LinkingMode::Bridge) {
    const NodeRef star{NodeKind::Star, db.star_id()};
    for (const QuestionToken& tok : question.tokens)
      edges.push_back({{NodeKind::Question, tok.index}, star, RelationType::Bridge});
    for (const Table& t : db.tables)
      edges.push_back({{NodeKind::Table, t.id}, star, RelationType::Bridge});
    for (const Column& c : db.columns)
      if (!c.is_star())
        edges.push_back({{NodeKind::Column, c.id}, star, RelationType::Bridge});
  } else {
    const UnmatchedSets u = unmatched_sets(question, db, la, opts);
    for (std::size_t tok : u.tokens)
      for (const NodeRef& item : u.schema_items)
        edges.push_back({{NodeKind::Question, tok}, item, RelationType::NoMatch});
  }
  return edges;
}

HeterogeneousGraph assemble_graph(std::vector<NodeRef> nodes,
                                  const std::vector<Edge>& forward_edges,
                                  std::optional<LinkingMode> mode) {
  HeterogeneousGraph g;
  g.nodes_ = std::move(nodes);
  g.mode_ = mode;

  std::map<NodeRef, std::size_t> index;
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
    if (!index.emplace(g.nodes_[i], i).second)
      throw std::invalid_argument("assemble_graph: duplicate node");
  }

  std::set<Edge> seen;
  auto append = [&](const Edge& e) {
    if (!index.count(e.src) || !index.count(e.dst))
      throw std::invalid_argument("assemble_graph: edge endpoint is not a node");
    if (!relation_row_allowed(e.src.kind, e.dst.kind, e.rel))
      throw std::invalid_argument(
          "assemble_graph: relation '" + std::string(relation_name(e.rel)) +
          "' not allowed from " + std::string(node_kind_name(e.src.kind)) + " to " +
          std::string(node_kind_name(e.dst.kind)));
    if (e.rel == RelationType::SelfLoop && e.src != e.dst)
      throw std::invalid_argument("assemble_graph: self loop endpoints differ");
    if (seen.insert(e).second) g.edges_.push_back(e);
  };

  for (const Edge& e : forward_edges) {
    if (e.rel == RelationType::SelfLoop || is_inverse_relation(e.rel))
      throw std::invalid_argument("assemble_graph: expected forward edges only, got '" +
                                  std::string(relation_name(e.rel)) + "'");
    append(e);
    append({e.dst, e.src, inverse_of(e.rel)});
  }
  for (const NodeRef& n : g.nodes_) append({n, n, RelationType::SelfLoop});

  g.in_.assign(g.nodes_.size(), {});
  g.out_.assign(g.nodes_.size(), {});
  for (const Edge& e : g.edges_) {
    const std::size_t s = index.at(e.src);
    const std::size_t d = index.at(e.dst);
    g.out_[s].push_back({d, e.rel});
    g.in_[d].push_back({s, e.rel});
  }
  return g;
}

HeterogeneousGraph build_graph(const Question& question, const Database& db,
                               const GraphOptions& opts) {
  if (question.tokens.empty())
    throw std::invalid_argument("build_graph: empty question");
  question.validate();
  db.validate();

  std::vector<Edge> forward = schema_relations(db);
  const std::vector<Edge> qrel = question_relations(question, opts);
  forward.insert(forward.end(), qrel.begin(), qrel.end());
  const std::vector<Edge> link = linking_relations(question, db, opts);
  forward.insert(forward.end(), link.begin(), link.end());

  return assemble_graph(build_nodes(question, db), forward, opts.mode);
}

EdgeCountStats edge_count_stats(const Question& question, const Database& db,
                                const GraphOptions& opts) {
  const LinkingAnalysis la = analyze_linking(question, db);
  const UnmatchedSets u = unmatched_sets(question, db, la, opts);
  EdgeCountStats s;
  s.bridge_count = question.tokens.size() + db.tables.size() + db.real_column_count();
  s.unmatched_tokens = u.tokens.size();
  s.unmatched_schema_items = u.schema_items.size();
  s.nomatch_count = s.unmatched_tokens * s.unmatched_schema_items;
  return s;
}

std::optional<RelationPath> find_multihop_path(
    const HeterogeneousGraph& graph, NodeRef src, NodeRef dst,
    std::size_t max_hops, const std::set<RelationType>* allowed) {
  if (max_hops < 1) throw std::invalid_argument("find_multihop_path: max_hops must be >= 1");
  const std::size_t s = graph.index_of(src);
  const std::size_t d = graph.index_of(dst);
  if (s == d) return RelationPath{};

  const auto traversable = [&](RelationType r) {
    return allowed == nullptr || allowed->count(r) > 0;
  };

  // Distance to dst over reversed edges; prunes the greedy walk below to
  // hops that stay on some shortest path.
  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist_to_dst(graph.nodes().size(), kInf);
  std::deque<std::size_t> queue;
  dist_to_dst[d] = 0;
  queue.push_back(d);
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    for (const auto& inc : graph.in_neighbors(cur)) {
      if (!traversable(inc.rel)) continue;
      if (dist_to_dst[inc.neighbor] != kInf) continue;
      dist_to_dst[inc.neighbor] = dist_to_dst[cur] + 1;
      queue.push_back(inc.neighbor);
    }
  }
  if (dist_to_dst[s] == kInf || dist_to_dst[s] > max_hops) return std::nullopt;

  // Greedy lexicographic reconstruction: at each step take the smallest
  // (relation id, node index) hop that still lies on a shortest path.
  RelationPath path;
  std::size_t cur = s;
  while (cur != d) {
    std::optional<HeterogeneousGraph::Incidence> best;
    for (const auto& out : graph.out_neighbors(cur)) {
      if (!traversable(out.rel)) continue;
      if (dist_to_dst[out.neighbor] != dist_to_dst[cur] - 1) continue;
      if (!best || std::pair(static_cast<int>(out.rel), out.neighbor) <
                       std::pair(static_cast<int>(best->rel), best->neighbor))
        best = out;
    }
    if (!best) throw std::logic_error("find_multihop_path: reconstruction failed");
    path.hops.push_back({graph.nodes()[cur], graph.nodes()[best->neighbor], best->rel});
    cur = best->neighbor;
  }
  return path;
}

}  // namespace graphix
