#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "graphix/schema.hpp"

namespace graphix {

enum class NodeKind { Question, Table, Column, Star };

std::string_view node_kind_name(NodeKind k);

struct NodeRef {
  NodeKind kind = NodeKind::Question;
  std::size_t id = 0;  // index into the list named by kind

  auto operator<=>(const NodeRef&) const = default;
};

// Forward relations 0..13, SelfLoop, then one inverse twin per forward
// relation in the same order. Enum order is also the path tie-break order.
enum class RelationType : int {
  Modifier = 0,
  Argument,
  Distance1,
  ForeignKey,
  SameTable,
  Has,
  PrimaryKey,
  ExactMatchTable,
  PartialMatchTable,
  ExactMatchColumn,
  PartialMatchColumn,
  ValueMatch,
  Bridge,
  NoMatch,
  SelfLoop,
  ModifierInv,
  ArgumentInv,
  Distance1Inv,
  ForeignKeyInv,
  SameTableInv,
  HasInv,
  PrimaryKeyInv,
  ExactMatchTableInv,
  PartialMatchTableInv,
  ExactMatchColumnInv,
  PartialMatchColumnInv,
  ValueMatchInv,
  BridgeInv,
  NoMatchInv,
};

inline constexpr int kNumRelationTypes = 29;
inline constexpr int kSelfLoopId = static_cast<int>(RelationType::SelfLoop);

bool is_inverse_relation(RelationType r);
RelationType inverse_of(RelationType r);  // SelfLoop maps to itself
std::string_view relation_name(RelationType r);
std::optional<RelationType> relation_from_name(std::string_view name);

// True when (src kind, dst kind, rel) is a row of the relation checklist,
// the inverse of one, or a self loop.
bool relation_row_allowed(NodeKind src, NodeKind dst, RelationType rel);

struct Edge {
  NodeRef src;
  NodeRef dst;
  RelationType rel = RelationType::SelfLoop;

  auto operator<=>(const Edge&) const = default;
};

enum class LinkingMode { Bridge, NoMatch };

std::string_view linking_mode_name(LinkingMode m);
std::optional<LinkingMode> linking_mode_from_name(std::string_view name);

struct GraphOptions {
  LinkingMode mode = LinkingMode::Bridge;
  // Dependency labels clustered as Modifier; everything else is Argument.
  std::set<std::string> modifier_labels = default_modifier_labels();
  // Tokens never counted as unmatched for NoMatch mode.
  std::set<std::string> stop_words = default_stop_words();

  static std::set<std::string> default_modifier_labels();
  static std::set<std::string> default_stop_words();
};

// Question-schema heterogeneous graph. Immutable once assembled: nodes in
// canonical order, a deduplicated edge list closed under inversion, one self
// loop per node, and incidence indexes in edge-list order.
class HeterogeneousGraph {
 public:
  struct Incidence {
    std::size_t neighbor;  // canonical node index
    RelationType rel;
  };

  const std::vector<NodeRef>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::optional<LinkingMode> mode() const { return mode_; }

  std::size_t index_of(NodeRef node) const;  // throws on unknown node
  bool has_node(NodeRef node) const;
  // In-neighborhood of node i: one entry per edge (j -> i), labelled with
  // that edge's relation. This is the RGAT reception field.
  const std::vector<Incidence>& in_neighbors(std::size_t node_index) const;
  const std::vector<Incidence>& out_neighbors(std::size_t node_index) const;

  std::size_t forward_edge_count() const;
  std::size_t count_edges(RelationType rel) const;

  friend HeterogeneousGraph assemble_graph(std::vector<NodeRef> nodes,
                                           const std::vector<Edge>& forward_edges,
                                           std::optional<LinkingMode> mode);

 private:
  std::vector<NodeRef> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Incidence>> in_;
  std::vector<std::vector<Incidence>> out_;
  std::optional<LinkingMode> mode_;
};

// Canonical node order: question tokens, star, then each table followed by
// its columns. This indexing is used everywhere downstream.
std::vector<NodeRef> build_nodes(const Question& question, const Database& db);

std::vector<Edge> schema_relations(const Database& db);
std::vector<Edge> question_relations(const Question& question,
                                     const GraphOptions& opts = {});
std::vector<Edge> linking_relations(const Question& question, const Database& db,
                                    const GraphOptions& opts = {});

// Dedupes forward edges, adds the inverse twin of each, and one self loop
// per node. Every edge is validated against the relation checklist.
HeterogeneousGraph assemble_graph(std::vector<NodeRef> nodes,
                                  const std::vector<Edge>& forward_edges,
                                  std::optional<LinkingMode> mode = std::nullopt);

HeterogeneousGraph build_graph(const Question& question, const Database& db,
                               const GraphOptions& opts = {});

struct EdgeCountStats {
  std::size_t bridge_count = 0;    // |Q| + |T| + |C|
  std::size_t nomatch_count = 0;   // A * B
  std::size_t unmatched_tokens = 0;       // A
  std::size_t unmatched_schema_items = 0; // B
};

EdgeCountStats edge_count_stats(const Question& question, const Database& db,
                                const GraphOptions& opts = {});

struct RelationPath {
  std::vector<Edge> hops;  // empty when src == dst
  std::size_t length() const { return hops.size(); }
};

// Shortest path by hop count; ties broken by the lexicographically smallest
// (relation id, node index) sequence. `allowed` restricts traversable
// relation types (all when null). Absent when no path within max_hops.
std::optional<RelationPath> find_multihop_path(
    const HeterogeneousGraph& graph, NodeRef src, NodeRef dst,
    std::size_t max_hops, const std::set<RelationType>* allowed = nullptr);

}  // namespace graphix
