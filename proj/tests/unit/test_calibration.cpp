#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <random>

#include "spiffy/calibration.hpp"
#include "spiffy/formats.hpp"
#include "support.hpp"

using namespace spiffy;
using namespace spiffy::calibration;
using drafting::DraftFormula;
using test::F;

namespace {

// Row over V=4 with `top` at probability `p`, the rest shared evenly.
std::vector<double> row(TokenId top, double p) {
  std::vector<double> r(4, (1.0 - p) / 3.0);
  r[static_cast<std::size_t>(top - 1)] = p;
  return r;
}

BlockTrajectory four_slot_trajectory() {
  BlockTrajectory tr;
  tr.states = {BlockState({0, 0, 0, 0}), BlockState({0, 2, 0, 0}), BlockState({0, 2, 3, 0}), BlockState({1, 2, 3, 0}),
               BlockState({1, 2, 3, 4})};
  tr.marginals = {Marginals::from_rows({row(1, 0.4), row(2, 0.9), row(3, 0.5), row(4, 0.3)}),
                  Marginals::from_rows({row(2, 0.6), row(2, 1.0), row(3, 0.9), row(4, 0.7)}),
                  Marginals::from_rows({row(1, 0.9), row(2, 1.0), row(3, 1.0), row(4, 0.5)}),
                  Marginals::from_rows({row(1, 1.0), row(2, 1.0), row(3, 1.0), row(4, 0.9)})};
  return tr;
}

CandidateTable table_of(int tpl, std::vector<std::vector<CandidateEntry>> levels) {
  CandidateTable t;
  t.tokens_per_level = tpl;
  t.levels = std::move(levels);
  return t;
}

// Independent scorer: recursive totals over explicit parent lists.
long oracle_score(const std::vector<CandidateEntry>& nodes, int tpl, Strategy strategy) {
  auto parents = [&](std::size_t q) {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      const auto& a = nodes[p].formula.pairs();
      const auto& b = nodes[q].formula.pairs();
      if (a.size() + static_cast<std::size_t>(tpl) != b.size()) continue;
      if (std::includes(b.begin(), b.end(), a.begin(), a.end())) out.push_back(p);
    }
    return out;
  };
  std::function<long(std::size_t)> total = [&](std::size_t q) {
    long s = nodes[q].count;
    for (auto p : parents(q)) s += total(p);
    return s;
  };
  long score = 0;
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    switch (strategy) {
      case Strategy::kDegree0: score += nodes[q].count; break;
      case Strategy::kDegree1: {
        score += nodes[q].count;
        for (auto p : parents(q)) score += nodes[p].count;
        break;
      }
      case Strategy::kTotal: score += total(q); break;
    }
  }
  return score;
}

bool oracle_valid(const std::vector<CandidateEntry>& nodes, int tpl) {
  for (const auto& q : nodes) {
    if (q.formula.size() == static_cast<std::size_t>(tpl)) continue;
    bool has_parent = false;
    for (const auto& p : nodes) {
      has_parent |= p.formula.size() + static_cast<std::size_t>(tpl) == q.formula.size() &&
                    p.formula.is_proper_subset_of(q.formula);
    }
    if (!has_parent) return false;
  }
  return true;
}

long brute_force_best(const CandidateTable& table, std::size_t budget, Strategy strategy) {
  const auto cands = table.flatten();
  long best = -1;
  for (std::uint32_t set = 1; set < (1U << cands.size()); ++set) {
    if (static_cast<std::size_t>(__builtin_popcount(set)) > budget) continue;
    std::vector<CandidateEntry> nodes;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (set >> i & 1U) nodes.push_back(cands[i]);
    }
    if (!oracle_valid(nodes, table.tokens_per_level)) continue;
    best = std::max(best, oracle_score(nodes, table.tokens_per_level, strategy));
  }
  return best;
}

// Random table with single-token steps over ranks 1..3 x 1..2.
CandidateTable random_table(std::mt19937_64& rng, int depth) {
  std::vector<drafting::RankPair> universe;
  for (int i = 1; i <= 3; ++i) {
    for (int j = 1; j <= 2; ++j) universe.push_back({i, j});
  }
  std::vector<std::vector<CandidateEntry>> levels(static_cast<std::size_t>(depth));
  for (int k = 1; k <= depth; ++k) {
    std::map<DraftFormula, long> picked;
    for (int tries = 0; tries < 6 && picked.size() < 3; ++tries) {
      std::vector<drafting::RankPair> pairs;
      auto pool = universe;
      std::shuffle(pool.begin(), pool.end(), rng);
      for (const auto& p : pool) {
        if (static_cast<int>(pairs.size()) == k) break;
        const bool clash = std::any_of(pairs.begin(), pairs.end(), [&](const auto& q) {
          return q.position_rank == p.position_rank;
        });
        if (!clash) pairs.push_back(p);
      }
      if (static_cast<int>(pairs.size()) == k) picked[DraftFormula(pairs)] = static_cast<long>(1 + rng() % 50);
    }
    for (const auto& [f, c] : picked) levels[static_cast<std::size_t>(k - 1)].push_back({f, c});
  }
  return table_of(1, levels);
}

}  // namespace

TEST(Records, HandEnumeratedTrajectory) {
  const auto recs = records_from_trajectory(four_slot_trajectory(), 7, 10, 5, 3);
  const std::vector<CalibrationRecord> expected = {
      {7, 11, 1, F("1:1")},
      {7, 11, 2, F("1:1 2:1")},
      {7, 12, 1, F("2:2")},
  };
  EXPECT_EQ(recs, expected);
}

TEST(Records, VocabRankBeyondTopKIsSkipped) {
  const auto recs = records_from_trajectory(four_slot_trajectory(), 0, 0, 5, 1);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1].pairs, F("1:1 2:1"));
}

TEST(Records, LookaheadOneGivesOneRecordPerInnerStep) {
  const auto recs = records_from_trajectory(four_slot_trajectory(), 0, 0, 1, 4);
  EXPECT_EQ(recs.size(), 2u);
  for (const auto& r : recs) EXPECT_EQ(r.lookahead, 1);
}

TEST(Records, RejectsMalformedTrajectory) {
  auto tr = four_slot_trajectory();
  tr.marginals.pop_back();
  EXPECT_THROW(records_from_trajectory(tr, 0, 0, 2, 3), Error);
  EXPECT_THROW(records_from_trajectory(four_slot_trajectory(), 0, 0, 0, 3), Error);
}

TEST(Records, CollectedFromModelAreWellFormed) {
  const auto& model = test::corpus_model();
  auto prompts = test::calib_prompts();
  prompts.resize(4);
  GenerationConfig config;
  config.generation_length = 64;
  config.block_size = 16;
  const auto recs = collect_records(model, prompts, config, 4);
  ASSERT_FALSE(recs.empty());
  for (const auto& r : recs) {
    ASSERT_EQ(r.pairs.size(), static_cast<std::size_t>(r.lookahead));
    for (const auto& p : r.pairs.pairs()) {
      ASSERT_GE(p.vocab_rank, 1);
      ASSERT_LE(p.vocab_rank, config.top_k_vocab);
      ASSERT_LE(p.position_rank, config.block_size);
    }
  }
  EXPECT_EQ(collect_records(model, prompts, config, 4, 3), recs);
  EXPECT_EQ(collect_records(model, prompts, config, 4), recs);
  EXPECT_THROW(collect_records(model, prompts, config, 0), Error);
}

TEST(Records, WidthTwoScheduleRecordsTwoPairsPerStep) {
  const auto& model = test::corpus_model();
  auto prompts = test::calib_prompts();
  prompts.resize(2);
  GenerationConfig config;
  config.generation_length = 32;
  config.block_size = 16;
  config.schedule = UnmaskSchedule::fixed(2);
  const auto recs = collect_records(model, prompts, config, 3);
  ASSERT_FALSE(recs.empty());
  for (const auto& r : recs) ASSERT_EQ(r.pairs.size(), static_cast<std::size_t>(2 * r.lookahead));
}

TEST(Table, SinglePossibilityCountsEveryRecord) {
  std::vector<CalibrationRecord> recs(5, {0, 1, 1, F("1:1")});
  const auto t = build_table(recs, 1, 1);
  ASSERT_EQ(t.levels.size(), 1u);
  EXPECT_EQ(t.levels[0], (std::vector<CandidateEntry>{{F("1:1"), 5}}));
}

TEST(Table, OrdersByCountAndKeepsTopWidth) {
  std::vector<CalibrationRecord> recs;
  auto add = [&](const char* f, int l, int n) {
    for (int i = 0; i < n; ++i) recs.push_back({0, static_cast<std::size_t>(i), l, F(f)});
  };
  add("2:1", 1, 3);
  add("1:1", 1, 7);
  add("3:1", 1, 2);
  add("1:2", 1, 1);
  add("1:1 2:1", 2, 4);
  add("1:1 2:1", 1, 9);  // wrong size for level 1
  const auto t = build_table(recs, 2, 1);
  EXPECT_EQ(t.levels[0], (std::vector<CandidateEntry>{{F("1:1"), 7}, {F("2:1"), 3}, {F("3:1"), 2}}));
  EXPECT_EQ(t.levels[1], (std::vector<CandidateEntry>{{F("1:1 2:1"), 4}}));
  EXPECT_EQ(t.size(), 4u);
  EXPECT_EQ(build_table(recs, 2, 1, 1).levels[0].size(), 1u);
}

TEST(Table, EqualCountsFollowFormulaOrder) {
  std::vector<CalibrationRecord> recs = {{0, 1, 1, F("2:1")}, {0, 2, 1, F("1:2")}, {0, 3, 1, F("1:1")}};
  const auto t = build_table(recs, 1, 1);
  EXPECT_EQ(t.levels[0][0].formula, F("1:1"));
  EXPECT_EQ(t.levels[0][1].formula, F("1:2"));
  EXPECT_EQ(t.levels[0][2].formula, F("2:1"));
}

TEST(Strategy, ParseAndName) {
  for (auto s : {Strategy::kDegree0, Strategy::kDegree1, Strategy::kTotal}) EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_THROW(parse_strategy("greedy"), Error);
}

TEST(Select, TwoNodeChainScores) {
  const auto t = table_of(1, {{{F("1:1"), 10}}, {{F("1:1 2:1"), 6}}});
  EXPECT_EQ(select_subgraph(t, 2, Strategy::kDegree0).score, 16);
  EXPECT_EQ(select_subgraph(t, 2, Strategy::kDegree1).score, 26);
  EXPECT_EQ(select_subgraph(t, 2, Strategy::kTotal).score, 26);
  const auto one = select_subgraph(t, 1, Strategy::kDegree1);
  EXPECT_EQ(one.score, 10);
  ASSERT_EQ(one.graph.size(), 1u);
  EXPECT_EQ(one.graph.nodes()[0], F("1:1"));
}

TEST(Select, OrphanCandidatesAreUnreachable) {
  // The level-2 candidate extends a level-1 formula that is not in the table.
  const auto t = table_of(1, {{{F("1:1"), 2}}, {{F("2:1 3:1"), 100}}});
  const auto sel = select_subgraph(t, 5, Strategy::kDegree0);
  EXPECT_EQ(sel.score, 2);
  EXPECT_EQ(sel.graph.size(), 1u);
}

TEST(Select, TotalRewardsDeepChains) {
  const auto t = table_of(1, {{{F("1:1"), 10}, {F("2:1"), 9}}, {{F("1:1 2:1"), 1}}, {{F("1:1 2:1 3:1"), 1}}});
  // {1:1 2:1} has both level-1 nodes as parents.
  EXPECT_EQ(select_subgraph(t, 2, Strategy::kDegree0).score, 19);
  EXPECT_EQ(select_subgraph(t, 3, Strategy::kTotal).score, 10 + 9 + (1 + 10 + 9));
  // The level-3 tail adds 1 + total({1:1 2:1}) = 21.
  EXPECT_EQ(select_subgraph(t, 4, Strategy::kTotal).score, 39 + 21);
  EXPECT_EQ(select_subgraph(t, 4, Strategy::kDegree0).score, 21);
}

TEST(Select, Errors) {
  EXPECT_THROW(select_subgraph(table_of(1, {{}}), 3, Strategy::kDegree0), Error);
  EXPECT_THROW(select_subgraph(table_of(1, {}), 3, Strategy::kDegree0), Error);
  EXPECT_THROW(select_subgraph(table_of(1, {{{F("1:1"), 1}}}), 0, Strategy::kDegree0), Error);
}

TEST(Select, MatchesBruteForceOnSmallTables) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 150; ++i) {
    const auto t = random_table(rng, 1 + static_cast<int>(rng() % 3));
    if (t.levels[0].empty()) continue;
    const std::size_t budget = 1 + rng() % 5;
    for (auto s : {Strategy::kDegree0, Strategy::kDegree1, Strategy::kTotal}) {
      const auto sel = select_subgraph(t, budget, s);
      ASSERT_EQ(sel.score, brute_force_best(t, budget, s)) << to_string(s) << " budget " << budget;
      ASSERT_LE(sel.graph.size(), budget);
      ASSERT_TRUE(oracle_valid(sel.nodes, 1));
      ASSERT_EQ(oracle_score(sel.nodes, 1, s), sel.score);
    }
  }
}

TEST(Select, ScoreIsMonotoneInBudget) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 60; ++i) {
    const auto t = random_table(rng, 3);
    if (t.levels[0].empty()) continue;
    for (auto s : {Strategy::kDegree0, Strategy::kDegree1, Strategy::kTotal}) {
      long prev = 0;
      for (std::size_t d = 1; d <= 6; ++d) {
        const long score = select_subgraph(t, d, s).score;
        ASSERT_GE(score, prev);
        prev = score;
      }
    }
  }
}

TEST(Select, StrategiesAgreeOnAChain) {
  const auto t = table_of(1, {{{F("1:1"), 8}}, {{F("1:1 2:1"), 5}}, {{F("1:1 2:1 3:1"), 2}}});
  const auto a = select_subgraph(t, 3, Strategy::kDegree0);
  const auto b = select_subgraph(t, 3, Strategy::kDegree1);
  const auto c = select_subgraph(t, 3, Strategy::kTotal);
  EXPECT_EQ(a.graph.nodes(), b.graph.nodes());
  EXPECT_EQ(b.graph.nodes(), c.graph.nodes());
  EXPECT_EQ(a.score, 15);
  EXPECT_EQ(b.score, 8 + 13 + 7);
  EXPECT_EQ(c.score, 8 + 13 + 15);
}

TEST(Select, WiderStepsUseMatchingFormulaSizes) {
  const auto t = table_of(2, {{{F("1:1 2:1"), 4}}, {{F("1:1 2:1 3:1 4:1"), 3}}});
  const auto sel = select_subgraph(t, 2, Strategy::kDegree1);
  EXPECT_EQ(sel.score, 4 + 7);
  EXPECT_EQ(sel.graph.tokens_per_level(), 2);
  EXPECT_EQ(sel.graph.depth(), 2);
}

TEST(Formats, RecordsAndTableRoundTrip) {
  const auto recs = records_from_trajectory(four_slot_trajectory(), 3, 0, 3, 3);
  EXPECT_EQ(formats::parse_records(formats::format_records(recs)), recs);
  const auto t = table_of(1, {{{F("1:1"), 7}, {F("2:1"), 3}}, {{F("1:1 2:1"), 4}}});
  const auto back = formats::parse_table(formats::format_table(t));
  EXPECT_EQ(back.tokens_per_level, 1);
  EXPECT_EQ(back.levels, t.levels);
}
