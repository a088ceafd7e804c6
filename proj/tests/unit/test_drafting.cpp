#include <gtest/gtest.h>

#include <random>

#include "spiffy/dot.hpp"
#include "spiffy/drafting.hpp"
#include "spiffy/formats.hpp"
#include "spiffy/verification.hpp"
#include "support.hpp"

using namespace spiffy;
using namespace spiffy::drafting;
using test::F;

namespace {

// Three masked slots whose top-1 probabilities are 0.2, 0.9, 0.5.
Marginals three_slot_marginals() {
  return Marginals::from_rows({{0.2, 0.2, 0.2, 0.2, 0.2}, {0.9, 0.05, 0.05, 0.0, 0.0}, {0.1, 0.5, 0.4, 0.0, 0.0}});
}

// Peaked marginals over `len` masked slots: slot p prefers token p+1 with
// confidence decreasing in p; second choice is token p+2.
Marginals ladder(std::size_t len, int vocab) {
  std::vector<std::vector<double>> rows;
  for (std::size_t p = 0; p < len; ++p) {
    std::vector<double> row(static_cast<std::size_t>(vocab), 0.0);
    const double top = 0.9 - 0.05 * static_cast<double>(p);
    row[p % static_cast<std::size_t>(vocab)] = top;
    row[(p + 1) % static_cast<std::size_t>(vocab)] = 1.0 - top;
    rows.push_back(row);
  }
  return Marginals::from_rows(rows);
}

}  // namespace

TEST(Rank, OrdersPositionsByConfidence) {
  const auto view = rank(three_slot_marginals(), BlockState::masked(3), 5);
  EXPECT_EQ(view.ordered_positions, (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Rank, TiesGoToLowerIndex) {
  std::vector<std::vector<double>> rows(6, {1.0, 0.0});
  rows[4] = {0.5, 0.5};
  rows[2] = {0.5, 0.5};
  const BlockState block({1, 1, 0, 1, 0, 1});
  const auto view = rank(Marginals::from_rows(rows), block, 2);
  EXPECT_EQ(view.ordered_positions, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(view.vocab[0], (std::vector<TokenId>{1, 2}));
}

TEST(Rank, VocabTruncatedToTopK) {
  const auto m = Marginals::from_rows({{0.1, 0.6, 0.3}});
  const auto view = rank(m, BlockState::masked(1), 2);
  ASSERT_EQ(view.vocab.size(), 1u);
  EXPECT_EQ(view.vocab[0], (std::vector<TokenId>{2, 3}));
}

TEST(Rank, OnlyMaskedPositions) {
  const auto m = Marginals::from_rows({{1.0, 0.0}, {0.6, 0.4}, {0.0, 1.0}});
  const auto view = rank(m, BlockState({1, 0, 2}), 2);
  EXPECT_EQ(view.ordered_positions, (std::vector<std::size_t>{1}));
  EXPECT_THROW(rank(m, BlockState({1, 1, 2}), 2), Error);
}

TEST(Formula, ParseSortsAndValidates) {
  const auto f = F("3:1 1:2 2:1");
  EXPECT_EQ(f.to_string(), "1:2 2:1 3:1");
  EXPECT_THROW(F("1:1 1:2"), Error);
  EXPECT_THROW(F("0:1"), Error);
  EXPECT_THROW(F("1:0"), Error);
  EXPECT_THROW(F("1-1"), Error);
  EXPECT_TRUE(F("1:1").is_proper_subset_of(F("1:1 2:1")));
  EXPECT_FALSE(F("1:1").is_proper_subset_of(F("1:1")));
  EXPECT_FALSE(F("1:2").is_proper_subset_of(F("1:1 2:1")));
}

TEST(Materialize, TopPairEqualsOneGreedyStep) {
  const auto m = three_slot_marginals();
  const auto block = BlockState::masked(3);
  const auto d = materialize(F("1:1"), rank(m, block, 3), block);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->block, verification::advance(block, m, UnmaskSchedule::fixed(1)).block);
  EXPECT_EQ(d->level, 1);
  EXPECT_EQ(d->step_tag, 1u);
}

TEST(Materialize, ThreeTopChoices) {
  const auto m = ladder(5, 8);
  const auto block = BlockState::masked(5);
  const auto d = materialize(F("1:1 2:1 3:1"), rank(m, block, 2), block);
  ASSERT_TRUE(d);
  // c11, c21, c31: slots 0..2 with their argmax tokens 1..3.
  EXPECT_EQ(d->block, BlockState({1, 2, 3, 0, 0}));
  EXPECT_EQ(d->step_tag, 3u);
}

TEST(Materialize, SecondVocabularyChoice) {
  const auto m = ladder(3, 8);
  const auto block = BlockState::masked(3);
  const auto d = materialize(F("1:2"), rank(m, block, 2), block);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->block, BlockState({2, 0, 0}));
}

TEST(Materialize, OutOfRangeIsSkip) {
  const auto m = ladder(3, 8);
  const auto block = BlockState::masked(3);
  const auto view = rank(m, block, 2);
  EXPECT_FALSE(materialize(F("5:1"), view, block));
  EXPECT_FALSE(materialize(F("1:3"), view, block));
}

TEST(Graph, ThreeRoutesIntoLevelThree) {
  const auto g = test::six_node_graph();
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g.level(5), 3);
  EXPECT_EQ(g.parents(5), (std::vector<std::size_t>{2, 3, 4}));
  EXPECT_EQ(g.parents(2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(g.parents(3), (std::vector<std::size_t>{0}));
  EXPECT_EQ(g.parents(4), (std::vector<std::size_t>{1}));
  EXPECT_TRUE(g.parents(0).empty());
  EXPECT_EQ(g.depth(), 3);
}

TEST(Graph, SingleNodeHangsOffRoot) {
  const auto g = build_graph({F("1:1")}, 1);
  EXPECT_EQ(g.size(), 1u);
  EXPECT_TRUE(g.parents(0).empty());
  EXPECT_EQ(g.level(0), 1);
}

TEST(Graph, UnreachableNodeIsNamed) {
  try {
    build_graph({F("1:1 2:1")}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unreachable draft formula {1:1 2:1}"), std::string::npos);
  }
}

TEST(Graph, Rejections) {
  EXPECT_THROW(build_graph({F("1:1"), F("1:1")}, 1), Error);
  EXPECT_THROW(build_graph({F("1:1 2:1 3:1")}, 2), Error);
  EXPECT_THROW(build_graph({F("1:1"), F("2:1")}, 1, 1), Error);
  EXPECT_NO_THROW(build_graph({F("1:1 2:1"), F("1:1 2:1 3:1 4:1")}, 2));
}

TEST(Graph, WidenKeepsShape) {
  const auto g = widen(test::six_node_graph(), 2);
  EXPECT_EQ(g.tokens_per_level(), 2);
  EXPECT_EQ(g.nodes()[5].to_string(), "1:1 2:1 3:1 4:1 5:1 6:1");
  for (std::size_t n = 0; n < g.size(); ++n) EXPECT_EQ(g.parents(n), test::six_node_graph().parents(n));
}

TEST(Spawn, EmptyGraph) {
  const auto m = ladder(4, 8);
  const auto block = BlockState::masked(4);
  EXPECT_TRUE(spawn_drafts(DraftGraph{}, rank(m, block, 2), block).empty());
}

TEST(Spawn, SixDraftsInLevelOrder) {
  const auto m = ladder(5, 8);
  const auto block = BlockState::masked(5);
  const auto drafts = spawn_drafts(test::six_node_graph(), rank(m, block, 2), block);
  ASSERT_EQ(drafts.size(), 6u);
  const std::vector<int> levels = {1, 1, 2, 2, 2, 3};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(drafts[i].level, levels[i]);
    EXPECT_EQ(drafts[i].step_tag, static_cast<std::size_t>(levels[i]));
  }
  EXPECT_EQ(drafts[5].block, BlockState({1, 2, 3, 0, 0}));
}

TEST(Spawn, TwoMaskedSlotsDropRankThreeNodes) {
  const auto m = ladder(4, 8);
  const BlockState block({1, 2, 0, 0});
  const auto drafts = spawn_drafts(test::six_node_graph(), rank(m, block, 2), block);
  // {1:1}, {2:1} survive; {1:1 2:1} would complete the block; {1:1 3:1},
  // {2:1 3:1}, {1:1 2:1 3:1} need a third masked slot.
  ASSERT_EQ(drafts.size(), 2u);
  EXPECT_EQ(drafts[0].formula, F("1:1"));
  EXPECT_EQ(drafts[1].formula, F("2:1"));
}

TEST(Spawn, OrphanedDescendantsDropped) {
  const auto g = build_graph({F("1:3"), F("1:3 2:1")}, 1);
  const auto m = ladder(4, 8);
  const auto block = BlockState::masked(4);
  EXPECT_TRUE(spawn_drafts(g, rank(m, block, 2), block).empty());
}

TEST(Spawn, DistinctFormulasGiveDistinctBlocks) {
  const auto g = build_graph({F("1:1"), F("1:2"), F("2:1"), F("1:1 2:1"), F("1:2 2:1"), F("1:1 3:1")}, 1);
  const auto m = ladder(5, 8);
  const auto block = BlockState::masked(5);
  const auto drafts = spawn_drafts(g, rank(m, block, 2), block);
  ASSERT_EQ(drafts.size(), 6u);
  for (std::size_t a = 0; a < drafts.size(); ++a) {
    for (std::size_t b = a + 1; b < drafts.size(); ++b) EXPECT_FALSE(drafts[a].block == drafts[b].block);
  }
}

TEST(Spawn, ParentContentsNestInChildren) {
  const auto& model = test::corpus_model();
  const auto g = test::six_node_graph();
  std::mt19937_64 rng(31);
  for (int i = 0; i < 300; ++i) {
    const auto s = test::random_state(rng, model.vocab_size(), 6, 3, 8);
    const auto m = model.forward(s);
    const auto view = rank(m, s.active_block(), 3);
    std::vector<std::optional<DraftBlock>> mat;
    for (const auto& f : g.nodes()) mat.push_back(materialize(f, view, s.active_block()));
    for (std::size_t b = 0; b < g.size(); ++b) {
      for (std::size_t a : g.parents(b)) {
        if (!mat[a] || !mat[b]) continue;
        for (std::size_t p = 0; p < s.block_size(); ++p) {
          if (!mat[a]->block.is_masked(p)) {
            ASSERT_FALSE(mat[b]->block.is_masked(p));
            ASSERT_EQ(mat[a]->block[p], mat[b]->block[p]);
          }
        }
        ASSERT_GT(mat[b]->block.unmasked_count(), mat[a]->block.unmasked_count());
      }
    }
    // Determinism.
    const auto d1 = spawn_drafts(g, view, s.active_block());
    const auto d2 = spawn_drafts(g, view, s.active_block());
    ASSERT_EQ(d1.size(), d2.size());
    for (std::size_t k = 0; k < d1.size(); ++k) ASSERT_EQ(d1[k].block, d2[k].block);
  }
}

TEST(Spawn, TopPairMatchesGreedyStepOnModelOutputs) {
  const auto& model = test::corpus_model();
  std::mt19937_64 rng(32);
  for (int i = 0; i < 300; ++i) {
    const auto s = test::random_state(rng, model.vocab_size());
    const auto m = model.forward(s);
    const auto d = materialize(F("1:1"), rank(m, s.active_block(), 1), s.active_block());
    ASSERT_TRUE(d);
    ASSERT_EQ(d->block, verification::advance(s.active_block(), m, UnmaskSchedule::fixed(1)).block);
  }
}

TEST(GraphFile, RoundTrip) {
  const auto g = test::six_node_graph();
  const auto text = formats::format_graph(g);
  EXPECT_EQ(text, "D 6\ntokens_per_level 1\n1:1\n2:1\n1:1 2:1\n1:1 3:1\n2:1 3:1\n1:1 2:1 3:1\n");
  const auto back = formats::parse_graph(text);
  EXPECT_EQ(back.nodes(), g.nodes());
  EXPECT_EQ(back.budget(), 6u);
}

TEST(GraphFile, EmptyGraph) {
  const auto g = formats::parse_graph("D 0\ntokens_per_level 1\n");
  EXPECT_TRUE(g.empty());
}

TEST(GraphFile, Errors) {
  EXPECT_THROW(formats::parse_graph("tokens_per_level 1\n1:1\n"), ParseError);
  EXPECT_THROW(formats::parse_graph("D 3\n1:1\n"), ParseError);
  try {
    formats::parse_graph("D 3\ntokens_per_level 1\n1:1\n2:x\n", "g.graph");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.where(), "g.graph:4");
  }
  EXPECT_THROW(formats::parse_graph("D 1\ntokens_per_level 1\n1:1\n2:1\n"), ParseError);
  EXPECT_THROW(formats::parse_graph("D 3\ntokens_per_level 1\n1:1 2:1\n"), ParseError);
}

TEST(Dot, ShowsRootLevelsAndInDegree) {
  const auto dot = to_dot(test::six_node_graph());
  EXPECT_NE(dot.find("root -> n0;"), std::string::npos);
  EXPECT_NE(dot.find("root -> n1;"), std::string::npos);
  EXPECT_NE(dot.find("n5 [label=\"c_{1,1}, c_{2,1}, c_{3,1}\"]"), std::string::npos);
  EXPECT_NE(dot.find("{ rank=same; n2; n3; n4; }"), std::string::npos);
  int into_n5 = 0;
  for (std::size_t pos = 0; (pos = dot.find("-> n5;", pos)) != std::string::npos; ++pos) ++into_n5;
  EXPECT_EQ(into_n5, 3);
}

TEST(Dot, SingleAndEmpty) {
  const auto one = to_dot(build_graph({F("1:1")}, 1));
  EXPECT_NE(one.find("root -> n0;"), std::string::npos);
  const auto none = to_dot(DraftGraph{});
  EXPECT_NE(none.find("root"), std::string::npos);
  EXPECT_EQ(none.find("->"), std::string::npos);
}
