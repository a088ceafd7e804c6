#include "spiffy/dot.hpp"

#include <map>

namespace spiffy::drafting {

std::string to_dot(const DraftGraph& graph) {
  std::string out = "digraph draft_graph {\n";
  out += "  rankdir=TB;\n";
  out += "  node [shape=box];\n";
  out += "  root [label=\"root\", shape=ellipse];\n";

  std::map<int, std::vector<std::size_t>> by_level;
  for (std::size_t n = 0; n < graph.size(); ++n) {
    std::string label;
    for (const auto& p : graph.nodes()[n].pairs()) {
      if (!label.empty()) label += ", ";
      label += "c_{" + std::to_string(p.position_rank) + "," + std::to_string(p.vocab_rank) + "}";
    }
    out += "  n" + std::to_string(n) + " [label=\"" + label + "\"];\n";
    by_level[graph.level(n)].push_back(n);
  }
  for (const auto& [level, nodes] : by_level) {
    out += "  { rank=same;";
    for (std::size_t n : nodes) out += " n" + std::to_string(n) + ";";
    out += " }\n";
  }
  for (std::size_t n = 0; n < graph.size(); ++n) {
    if (graph.parents(n).empty()) {
      out += "  root -> n" + std::to_string(n) + ";\n";
      continue;
    }
    for (std::size_t p : graph.parents(n)) out += "  n" + std::to_string(p) + " -> n" + std::to_string(n) + ";\n";
  }
  out += "}\n";
  return out;
}

}  // namespace spiffy::drafting
