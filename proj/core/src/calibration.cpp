#include "spiffy/calibration.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <deque>
#include <map>
#include <thread>
#include <unordered_set>

#include "spiffy/engine.hpp"

namespace spiffy::calibration {

namespace {

// 1-based rank of `token` in the row under the descending-probability, ascending-id order.
int vocab_rank(std::span<const double> row, TokenId token) {
  const double p = row[static_cast<std::size_t>(token - 1)];
  int rank = 1;
  for (std::size_t c = 0; c < row.size(); ++c) {
    const auto id = static_cast<TokenId>(c + 1);
    if (row[c] > p || (row[c] == p && id < token)) ++rank;
  }
  return rank;
}

std::vector<CalibrationRecord> records_for_prompt(const model::DlmOracle& model, std::span<const TokenId> prompt,
                                                  std::size_t sample_id, const GenerationConfig& config,
                                                  int lookahead) {
  std::vector<BlockTrajectory> blocks(static_cast<std::size_t>(config.num_blocks()));
  engine::RunOptions opts;
  opts.build_attention_inputs = false;
  opts.observer = [&](const engine::StepEvent& e) {
    auto& tr = blocks[e.block];
    if (tr.states.empty()) tr.states.push_back(e.before);
    tr.marginals.push_back(e.marginals);
    tr.states.push_back(e.after);
  };
  engine::generate_vanilla(model, prompt, config, opts);

  std::vector<CalibrationRecord> out;
  std::size_t offset = 0;
  for (const auto& tr : blocks) {
    auto recs = records_from_trajectory(tr, sample_id, offset, lookahead, config.top_k_vocab);
    out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
    offset += tr.marginals.size();
  }
  return out;
}

}  // namespace

std::vector<CalibrationRecord> records_from_trajectory(const BlockTrajectory& tr, std::size_t sample_id,
                                                       std::size_t step_offset, int lookahead, int top_k) {
  if (lookahead < 1) throw Error("lookahead must be >= 1");
  if (!tr.states.empty() && tr.marginals.size() + 1 != tr.states.size()) {
    throw Error("trajectory needs one more state than marginals");
  }
  std::vector<CalibrationRecord> out;
  const std::size_t steps = tr.marginals.size();
  for (std::size_t t = 1; t < steps; ++t) {
    const Marginals& dist = tr.marginals[t - 1];
    const BlockState& origin = tr.states[t];
    const auto order = drafting::order_positions(dist, origin);
    std::vector<int> position_rank(origin.size(), 0);
    for (std::size_t r = 0; r < order.size(); ++r) position_rank[order[r]] = static_cast<int>(r + 1);

    for (int l = 1; l <= lookahead; ++l) {
      const std::size_t target = t + static_cast<std::size_t>(l);
      if (target >= steps) break;  // states[steps] is the completed block
      const BlockState& later = tr.states[target];
      std::vector<drafting::RankPair> pairs;
      bool in_range = true;
      for (std::size_t p = 0; p < origin.size() && in_range; ++p) {
        if (!origin.is_masked(p) || later.is_masked(p)) continue;
        const int j = vocab_rank(dist.row(p), later[p]);
        in_range = j <= top_k;
        pairs.push_back({position_rank[p], j});
      }
      if (!in_range) continue;
      out.push_back({sample_id, step_offset + t, l, drafting::DraftFormula(std::move(pairs))});
    }
  }
  return out;
}

std::vector<CalibrationRecord> collect_records(const model::DlmOracle& model,
                                               std::span<const std::vector<TokenId>> prompts,
                                               const GenerationConfig& config, int lookahead, std::size_t workers) {
  if (lookahead < 1) throw Error("lookahead must be >= 1");
  config.validate();
  std::vector<std::vector<CalibrationRecord>> per_prompt(prompts.size());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(prompts.size(), 1));

  if (workers == 1) {
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      per_prompt[i] = records_for_prompt(model, prompts[i], i, config, lookahead);
    }
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < prompts.size(); i += workers) {
            per_prompt[i] = records_for_prompt(model, prompts[i], i, config, lookahead);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<CalibrationRecord> out;
  for (auto& recs : per_prompt) out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  return out;
}

std::size_t CandidateTable::size() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.size();
  return n;
}

std::vector<CandidateEntry> CandidateTable::flatten() const {
  std::vector<CandidateEntry> out;
  for (const auto& l : levels) out.insert(out.end(), l.begin(), l.end());
  return out;
}

CandidateTable build_table(std::span<const CalibrationRecord> records, int lookahead, int tokens_per_level,
                           std::size_t table_width) {
  if (lookahead < 1) throw Error("lookahead must be >= 1");
  if (tokens_per_level < 1) throw Error("tokens_per_level must be >= 1");
  CandidateTable table;
  table.tokens_per_level = tokens_per_level;
  table.levels.resize(static_cast<std::size_t>(lookahead));
  std::vector<std::map<drafting::DraftFormula, long>> counts(static_cast<std::size_t>(lookahead));
  for (const auto& r : records) {
    if (r.lookahead < 1 || r.lookahead > lookahead) continue;
    if (r.pairs.size() != static_cast<std::size_t>(r.lookahead * tokens_per_level)) continue;
    ++counts[static_cast<std::size_t>(r.lookahead - 1)][r.pairs];
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    auto& level = table.levels[k];
    for (const auto& [f, c] : counts[k]) level.push_back({f, c});
    std::stable_sort(level.begin(), level.end(),
                     [](const CandidateEntry& a, const CandidateEntry& b) { return a.count > b.count; });
    if (level.size() > table_width) level.resize(table_width);
  }
  return table;
}

Strategy parse_strategy(std::string_view name) {
  if (name == "degree-0" || name == "degree0") return Strategy::kDegree0;
  if (name == "degree-1" || name == "degree1") return Strategy::kDegree1;
  if (name == "total") return Strategy::kTotal;
  throw Error("unknown strategy '" + std::string(name) + "' (expected degree-0, degree-1 or total)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kDegree0: return "degree-0";
    case Strategy::kDegree1: return "degree-1";
    case Strategy::kTotal: return "total";
  }
  return "unknown";
}

long score_nodes(std::span<const CandidateEntry> nodes, int tokens_per_level, Strategy strategy) {
  const auto tpl = static_cast<std::size_t>(tokens_per_level);
  std::vector<std::size_t> order(nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return nodes[a].formula.size() < nodes[b].formula.size(); });

  auto is_parent = [&](std::size_t p, std::size_t q) {
    return nodes[p].formula.size() + tpl == nodes[q].formula.size() &&
           nodes[p].formula.is_proper_subset_of(nodes[q].formula);
  };

  std::vector<long> total(nodes.size(), 0);
  long score = 0;
  for (std::size_t q : order) {
    long node_score = nodes[q].count;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      if (!is_parent(p, q)) continue;
      if (strategy == Strategy::kDegree1) node_score += nodes[p].count;
      if (strategy == Strategy::kTotal) node_score += total[p];
    }
    total[q] = node_score;
    score += node_score;
  }
  return score;
}

Selection select_subgraph(const CandidateTable& table, std::size_t budget, Strategy strategy) {
  if (budget < 1) throw Error("draft budget D must be >= 1");
  if (table.levels.empty() || table.levels.front().empty()) throw Error("no level-1 candidates");
  const auto cands = table.flatten();
  if (cands.size() > 63) throw Error("candidate table too large for exhaustive search");
  const auto tpl = static_cast<std::size_t>(table.tokens_per_level);
  const std::size_t n = cands.size();

  std::vector<std::uint64_t> parent_mask(n, 0);
  std::vector<bool> root_child(n, false);
  for (std::size_t q = 0; q < n; ++q) {
    root_child[q] = cands[q].formula.size() == tpl;
    for (std::size_t p = 0; p < n; ++p) {
      if (cands[p].formula.size() + tpl == cands[q].formula.size() &&
          cands[p].formula.is_proper_subset_of(cands[q].formula)) {
        parent_mask[q] |= std::uint64_t{1} << p;
      }
    }
  }

  auto nodes_of = [&](std::uint64_t set) {
    std::vector<CandidateEntry> out;
    for (std::size_t i = 0; i < n; ++i) {
      if (set >> i & 1U) out.push_back(cands[i]);
    }
    return out;
  };
  auto sorted_formulas = [&](std::uint64_t set) {
    std::vector<drafting::DraftFormula> f;
    for (const auto& e : nodes_of(set)) f.push_back(e.formula);
    std::sort(f.begin(), f.end(), [](const auto& a, const auto& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    return f;
  };

  std::uint64_t best = 0;
  long best_score = -1;
  std::unordered_set<std::uint64_t> seen{0};
  std::deque<std::uint64_t> frontier{0};
  while (!frontier.empty()) {
    const std::uint64_t set = frontier.front();
    frontier.pop_front();
    if (set != 0) {
      const auto nodes = nodes_of(set);
      const long s = score_nodes(nodes, table.tokens_per_level, strategy);
      const int pc = std::popcount(set);
      const int best_pc = std::popcount(best);
      if (s > best_score || (s == best_score && (pc < best_pc || (pc == best_pc && sorted_formulas(set) < sorted_formulas(best))))) {
        best = set;
        best_score = s;
      }
    }
    if (static_cast<std::size_t>(std::popcount(set)) >= budget) continue;
    for (std::size_t c = 0; c < n; ++c) {
      const std::uint64_t bit = std::uint64_t{1} << c;
      if (set & bit) continue;
      if (!root_child[c] && (parent_mask[c] & set) == 0) continue;
      const std::uint64_t next = set | bit;
      if (seen.insert(next).second) frontier.push_back(next);
    }
  }

  Selection sel;
  sel.nodes = nodes_of(best);  // flatten() order: level, then count
  sel.score = best_score;
  std::vector<drafting::DraftFormula> formulas;
  for (const auto& e : sel.nodes) formulas.push_back(e.formula);
  sel.graph = drafting::build_graph(std::move(formulas), table.tokens_per_level, budget);
  return sel;
}

}  // namespace spiffy::calibration
