#pragma once

#include <compare>
#include <optional>
#include <string>
#include <vector>

#include "spiffy/types.hpp"

namespace spiffy::drafting {

// c_ij: the j-th most likely token at the i-th most confident masked slot. Both 1-based.
struct RankPair {
  int position_rank = 1;
  int vocab_rank = 1;
  friend auto operator<=>(const RankPair&, const RankPair&) = default;
};

// A set of rank pairs with distinct position ranks, kept sorted by position rank.
class DraftFormula {
 public:
  DraftFormula() = default;
  // Sorts the pairs; throws Error on a duplicate position rank or a rank < 1.
  explicit DraftFormula(std::vector<RankPair> pairs);

  // Parses "1:1 2:1 3:1".
  static DraftFormula parse(const std::string& text);

  const std::vector<RankPair>& pairs() const noexcept { return pairs_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }

  // Proper subset test over (i, j) pairs.
  bool is_proper_subset_of(const DraftFormula& other) const;

  std::string to_string() const;

  friend auto operator<=>(const DraftFormula&, const DraftFormula&) = default;

 private:
  std::vector<RankPair> pairs_;
};

struct RankingView {
  // Masked slots by descending top-1 probability, ties by ascending slot index.
  std::vector<std::size_t> ordered_positions;
  // Parallel to ordered_positions: token ids by descending probability (ties by
  // ascending id), truncated to top_k.
  std::vector<std::vector<TokenId>> vocab;
};

std::vector<std::size_t> order_positions(const Marginals& marginals, const BlockState& block);
std::vector<std::vector<TokenId>> rank_vocab(const Marginals& marginals, const std::vector<std::size_t>& positions,
                                             int top_k);
// Throws Error when the block has no masked slot.
RankingView rank(const Marginals& marginals, const BlockState& block, int top_k);

struct DraftBlock {
  BlockState block;
  DraftFormula formula;
  int level = 0;
  // Unmasked-slot count this draft represents; stands in for its timestep.
  std::size_t step_tag = 0;
};

// Unmasks every c_ij of the formula on top of `block`. Returns nullopt (skip)
// when a rank exceeds what the ranking view offers.
std::optional<DraftBlock> materialize(const DraftFormula& formula, const RankingView& ranking, const BlockState& block,
                                      int tokens_per_level = 1);

// Formulas arranged as a directed draft graph. A is a parent of B iff
// pairs(A) is a proper subset of pairs(B) and |B| - |A| == tokens_per_level;
// level-1 nodes hang off the implicit empty root.
class DraftGraph {
 public:
  DraftGraph() = default;

  const std::vector<DraftFormula>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  int tokens_per_level() const noexcept { return tokens_per_level_; }
  std::size_t budget() const noexcept { return budget_; }
  int level(std::size_t node) const { return levels_.at(node); }
  int depth() const noexcept;

  // Parent node indices; empty for level-1 nodes (their parent is the root).
  const std::vector<std::size_t>& parents(std::size_t node) const { return parents_.at(node); }

  friend DraftGraph build_graph(std::vector<DraftFormula> formulas, int tokens_per_level, std::size_t budget);

 private:
  std::vector<DraftFormula> nodes_;
  std::vector<int> levels_;
  std::vector<std::vector<std::size_t>> parents_;
  int tokens_per_level_ = 1;
  std::size_t budget_ = 0;
};

// Validates and links a node list. Throws Error for duplicates, a size that is
// not a multiple of tokens_per_level, an unreachable node (naming it), or more
// nodes than `budget` (0 means "use the node count").
DraftGraph build_graph(std::vector<DraftFormula> formulas, int tokens_per_level, std::size_t budget = 0);

// Rewrites each pair (i, j) as s pairs ((i-1)s+1, j) .. (is, j), turning a
// tokens_per_level = 1 graph into an equally shaped one for fixed:s schedules.
DraftGraph widen(const DraftGraph& graph, int s);

// Materializes every node in scan order (ascending level, then declaration
// order). Drops skipped nodes, nodes with no surviving parent, nodes whose
// content would complete the block, and duplicate contents.
std::vector<DraftBlock> spawn_drafts(const DraftGraph& graph, const RankingView& ranking, const BlockState& block);

}  // namespace spiffy::drafting
