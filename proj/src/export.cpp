#include "graphix/export.hpp"

#include <algorithm>

namespace graphix {

std::string node_label(NodeRef n, const Question& question, const Database& db) {
  switch (n.kind) {
    case NodeKind::Question: return question.tokens.at(n.id).surface;
    case NodeKind::Table: return db.tables.at(n.id).display_name();
    case NodeKind::Column: return db.columns.at(n.id).display_name();
    case NodeKind::Star: return "*";
  }
  return "?";
}

nlohmann::ordered_json graph_to_json(const HeterogeneousGraph& graph,
                                     const Question& question, const Database& db,
                                     const EdgeCountStats& stats) {
  nlohmann::ordered_json j;
  auto nodes = nlohmann::ordered_json::array();
  for (const NodeRef& n : graph.nodes())
    nodes.push_back({{"kind", std::string(node_kind_name(n.kind))},
                     {"id", n.id},
                     {"label", node_label(n, question, db)}});
  j["nodes"] = std::move(nodes);

  struct Row {
    std::size_t src, dst;
    int rel;
  };
  std::vector<Row> rows;
  rows.reserve(graph.edges().size());
  for (const Edge& e : graph.edges())
    rows.push_back({graph.index_of(e.src), graph.index_of(e.dst),
                    static_cast<int>(e.rel)});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.src, a.dst, a.rel) < std::tie(b.src, b.dst, b.rel);
  });
  auto edges = nlohmann::ordered_json::array();
  for (const Row& r : rows)
    edges.push_back({{"src", r.src},
                     {"dst", r.dst},
                     {"rel", std::string(relation_name(static_cast<RelationType>(r.rel)))}});
  j["edges"] = std::move(edges);

  j["mode"] = graph.mode() ? std::string(linking_mode_name(*graph.mode())) : "none";
  j["stats"] = {{"forward_edges", graph.forward_edge_count()},
                {"bridge_count", stats.bridge_count},
                {"nomatch_count", stats.nomatch_count}};
  return j;
}

std::string render_path(const RelationPath& path,
                        const std::function<std::string(NodeRef)>& label) {
  if (path.hops.empty()) return "(empty path)";
  std::string out = label(path.hops.front().src);
  for (const Edge& hop : path.hops) {
    out += " -[";
    out += relation_name(hop.rel);
    out += "]-> ";
    out += label(hop.dst);
  }
  return out;
}

}  // namespace graphix
