#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spiffy/config.hpp"
#include "spiffy/drafting.hpp"
#include "spiffy/oracle.hpp"

namespace spiffy::calibration {

// Rank pairs of every token unmasked during the `lookahead` steps after an
// origin state, ranked against the distribution available at that origin.
struct CalibrationRecord {
  std::size_t sample_id = 0;
  std::size_t origin_step = 0;  // step counter of the origin state within the sample
  int lookahead = 1;
  drafting::DraftFormula pairs;

  friend bool operator==(const CalibrationRecord&, const CalibrationRecord&) = default;
};

// One block's vanilla trajectory: marginals[t] turned states[t] into states[t+1].
struct BlockTrajectory {
  std::vector<BlockState> states;
  std::vector<Marginals> marginals;
};

// Origins are states 1..T-1: at state t the latest distribution is marginals[t-1]
// and ranks are taken over the slots still masked in states[t]. A record for
// (t, l) is emitted when states[t+l] is not yet complete and every token's
// vocabulary rank is within top_k.
std::vector<CalibrationRecord> records_from_trajectory(const BlockTrajectory& trajectory, std::size_t sample_id,
                                                       std::size_t step_offset, int lookahead, int top_k);

// Runs vanilla generation on every prompt and rewinds it into records. Results
// are concatenated in prompt order regardless of `workers`. Throws Error when
// lookahead < 1.
std::vector<CalibrationRecord> collect_records(const model::DlmOracle& model,
                                               std::span<const std::vector<TokenId>> prompts,
                                               const GenerationConfig& config, int lookahead,
                                               std::size_t workers = 1);

struct CandidateEntry {
  drafting::DraftFormula formula;
  long count = 0;
  friend bool operator==(const CandidateEntry&, const CandidateEntry&) = default;
};

struct CandidateTable {
  int tokens_per_level = 1;
  // levels[k-1]: most frequent level-k formulas, by descending count then formula order.
  std::vector<std::vector<CandidateEntry>> levels;

  std::size_t size() const;
  // Level order, then table order within a level.
  std::vector<CandidateEntry> flatten() const;
};

inline constexpr std::size_t kDefaultTableWidth = 3;

// Counts identical lookahead-k pair sets and keeps the top `table_width` per
// level. Records whose size is not k * tokens_per_level are ignored.
CandidateTable build_table(std::span<const CalibrationRecord> records, int lookahead, int tokens_per_level,
                           std::size_t table_width = kDefaultTableWidth);

enum class Strategy { kDegree0, kDegree1, kTotal };

// "degree-0", "degree-1", "total".
Strategy parse_strategy(std::string_view name);
std::string to_string(Strategy s);

// Score of a node set that forms a valid graph.
//   degree-0: sum count(q)
//   degree-1: sum count(q) + sum over parents p in the set of count(p)
//   total:    sum totalcount(q), totalcount(q) = count(q) + sum over parents p in the set of totalcount(p)
long score_nodes(std::span<const CandidateEntry> nodes, int tokens_per_level, Strategy strategy);

struct Selection {
  drafting::DraftGraph graph;
  std::vector<CandidateEntry> nodes;
  long score = 0;
};

// Exhaustive breadth-first search over every root-reachable subset of the table
// with at most `budget` nodes. Ties prefer fewer nodes, then the
// lexicographically smaller node list. Throws Error("no level-1 candidates").
Selection select_subgraph(const CandidateTable& table, std::size_t budget, Strategy strategy);

}  // namespace spiffy::calibration
