#pragma once

#include <string>

#include "spiffy/drafting.hpp"

namespace spiffy::drafting {

// Graphviz rendering: an explicit root, one node per formula labelled with its
// c_{i,j} list, same-rank rows per level, and one edge per parent link.
std::string to_dot(const DraftGraph& graph);

}  // namespace spiffy::drafting
