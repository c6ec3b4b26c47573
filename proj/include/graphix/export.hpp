#pragma once

#include <functional>
#include <string>

#include <json.hpp>

#include "graphix/graph.hpp"
#include "graphix/schema.hpp"

namespace graphix {

std::string node_label(NodeRef n, const Question& question, const Database& db);

// Byte-stable graph export: nodes in canonical order, edges sorted by
// (src index, dst index, relation id).
nlohmann::ordered_json graph_to_json(const HeterogeneousGraph& graph,
                                     const Question& question, const Database& db,
                                     const EdgeCountStats& stats);

// "a -[rel]-> b -[rel]-> c"
std::string render_path(const RelationPath& path,
                        const std::function<std::string(NodeRef)>& label);

}  // namespace graphix
