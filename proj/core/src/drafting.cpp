#include "spiffy/drafting.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "text_util.hpp"

namespace spiffy::drafting {

DraftFormula::DraftFormula(std::vector<RankPair> pairs) : pairs_(std::move(pairs)) {
  std::sort(pairs_.begin(), pairs_.end());
  for (std::size_t k = 0; k < pairs_.size(); ++k) {
    if (pairs_[k].position_rank < 1 || pairs_[k].vocab_rank < 1) {
      throw Error("draft formula ranks are 1-based: got " + std::to_string(pairs_[k].position_rank) + ":" +
                  std::to_string(pairs_[k].vocab_rank));
    }
    if (k > 0 && pairs_[k].position_rank == pairs_[k - 1].position_rank) {
      throw Error("draft formula repeats position rank " + std::to_string(pairs_[k].position_rank));
    }
  }
}

DraftFormula DraftFormula::parse(const std::string& text) {
  std::vector<RankPair> pairs;
  for (auto tok : detail::split_ws(text)) {
    const auto colon = tok.find(':');
    if (colon == std::string_view::npos) throw Error("bad rank pair '" + std::string(tok) + "'");
    const auto i = detail::parse_int<int>(tok.substr(0, colon));
    const auto j = detail::parse_int<int>(tok.substr(colon + 1));
    if (!i || !j) throw Error("bad rank pair '" + std::string(tok) + "'");
    pairs.push_back({*i, *j});
  }
  return DraftFormula(std::move(pairs));
}

bool DraftFormula::is_proper_subset_of(const DraftFormula& other) const {
  return size() < other.size() && std::includes(other.pairs_.begin(), other.pairs_.end(), pairs_.begin(), pairs_.end());
}

std::string DraftFormula::to_string() const {
  std::string out;
  for (const auto& p : pairs_) {
    if (!out.empty()) out.push_back(' ');
    out += std::to_string(p.position_rank) + ":" + std::to_string(p.vocab_rank);
  }
  return out;
}

std::vector<std::size_t> order_positions(const Marginals& marginals, const BlockState& block) {
  std::vector<std::size_t> pos = block.masked_positions();
  std::vector<double> conf(block.size(), 0.0);
  for (std::size_t p : pos) conf[p] = marginals.top(p).prob;
  std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  return pos;
}

std::vector<std::vector<TokenId>> rank_vocab(const Marginals& marginals, const std::vector<std::size_t>& positions,
                                             int top_k) {
  const auto v = static_cast<std::size_t>(marginals.vocab_size());
  const std::size_t keep = std::min(v, static_cast<std::size_t>(std::max(top_k, 0)));
  std::vector<std::vector<TokenId>> out;
  out.reserve(positions.size());
  std::vector<TokenId> ids(v);
  for (std::size_t p : positions) {
    const auto row = marginals.row(p);
    std::iota(ids.begin(), ids.end(), TokenId{1});
    auto by_prob = [&](TokenId a, TokenId b) {
      const double pa = row[static_cast<std::size_t>(a - 1)];
      const double pb = row[static_cast<std::size_t>(b - 1)];
      return pa > pb || (pa == pb && a < b);
    };
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), by_prob);
    out.emplace_back(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

RankingView rank(const Marginals& marginals, const BlockState& block, int top_k) {
  if (block.complete()) throw Error("rank: block has no masked positions");
  RankingView view;
  view.ordered_positions = order_positions(marginals, block);
  view.vocab = rank_vocab(marginals, view.ordered_positions, top_k);
  return view;
}

std::optional<DraftBlock> materialize(const DraftFormula& formula, const RankingView& ranking, const BlockState& block,
                                      int tokens_per_level) {
  DraftBlock d{block, formula, 0, 0};
  for (const auto& [i, j] : formula.pairs()) {
    const auto pi = static_cast<std::size_t>(i);
    const auto pj = static_cast<std::size_t>(j);
    if (pi > ranking.ordered_positions.size() || pj > ranking.vocab[pi - 1].size()) return std::nullopt;
    d.block.unmask(ranking.ordered_positions[pi - 1], ranking.vocab[pi - 1][pj - 1]);
  }
  d.level = static_cast<int>(formula.size()) / std::max(tokens_per_level, 1);
  d.step_tag = block.unmasked_count() + formula.size();
  return d;
}

int DraftGraph::depth() const noexcept {
  int d = 0;
  for (int l : levels_) d = std::max(d, l);
  return d;
}

DraftGraph build_graph(std::vector<DraftFormula> formulas, int tokens_per_level, std::size_t budget) {
  if (tokens_per_level < 1) throw Error("tokens_per_level must be >= 1");
  if (budget != 0 && formulas.size() > budget) {
    throw Error("graph has " + std::to_string(formulas.size()) + " nodes, exceeding the budget D=" +
                std::to_string(budget));
  }
  DraftGraph g;
  g.tokens_per_level_ = tokens_per_level;
  g.budget_ = budget == 0 ? formulas.size() : budget;

  const auto tpl = static_cast<std::size_t>(tokens_per_level);
  std::set<DraftFormula> seen;
  for (const auto& f : formulas) {
    if (f.empty() || f.size() % tpl != 0) {
      throw Error("formula {" + f.to_string() + "} has " + std::to_string(f.size()) +
                  " pairs, not a positive multiple of tokens_per_level=" + std::to_string(tokens_per_level));
    }
    if (!seen.insert(f).second) throw Error("duplicate formula {" + f.to_string() + "}");
    g.levels_.push_back(static_cast<int>(f.size() / tpl));
  }
  g.parents_.resize(formulas.size());
  for (std::size_t b = 0; b < formulas.size(); ++b) {
    for (std::size_t a = 0; a < formulas.size(); ++a) {
      if (formulas[a].size() + tpl == formulas[b].size() && formulas[a].is_proper_subset_of(formulas[b])) {
        g.parents_[b].push_back(a);
      }
    }
  }

  // Reachability from the root, processed level by level.
  std::vector<std::size_t> order(formulas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return g.levels_[x] < g.levels_[y]; });
  std::vector<bool> reachable(formulas.size(), false);
  for (std::size_t n : order) {
    reachable[n] = g.levels_[n] == 1 ||
                   std::any_of(g.parents_[n].begin(), g.parents_[n].end(), [&](std::size_t p) { return reachable[p]; });
    if (!reachable[n]) throw Error("unreachable draft formula {" + formulas[n].to_string() + "}");
  }
  g.nodes_ = std::move(formulas);
  return g;
}

DraftGraph widen(const DraftGraph& graph, int s) {
  if (s < 1) throw Error("widen: factor must be >= 1");
  if (graph.tokens_per_level() != 1) throw Error("widen: graph must have tokens_per_level = 1");
  std::vector<DraftFormula> nodes;
  for (const auto& f : graph.nodes()) {
    std::vector<RankPair> pairs;
    for (const auto& p : f.pairs()) {
      for (int r = 1; r <= s; ++r) pairs.push_back({(p.position_rank - 1) * s + r, p.vocab_rank});
    }
    nodes.emplace_back(std::move(pairs));
  }
  return build_graph(std::move(nodes), s, graph.budget());
}

std::vector<DraftBlock> spawn_drafts(const DraftGraph& graph, const RankingView& ranking, const BlockState& block) {
  const std::size_t n = graph.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return graph.level(x) < graph.level(y); });

  std::vector<bool> alive(n, false);
  std::vector<DraftBlock> out;
  for (std::size_t node : order) {
    const auto& parents = graph.parents(node);
    const bool parent_ok = graph.level(node) == 1 ||
                           std::any_of(parents.begin(), parents.end(), [&](std::size_t p) { return alive[p]; });
    if (!parent_ok) continue;
    auto d = materialize(graph.nodes()[node], ranking, block, graph.tokens_per_level());
    if (!d) continue;
    alive[node] = true;
    // A draft that completes the block has no successor state to verify.
    if (d->block.complete()) continue;
    const bool duplicate =
        std::any_of(out.begin(), out.end(), [&](const DraftBlock& e) { return e.block == d->block; });
    if (!duplicate) out.push_back(std::move(*d));
  }
  return out;
}

}  // namespace spiffy::drafting
