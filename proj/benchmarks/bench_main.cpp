#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "spiffy/batch.hpp"
#include "spiffy/calibration.hpp"
#include "spiffy/drafting.hpp"
#include "spiffy/engine.hpp"
#include "spiffy/formats.hpp"
#include "spiffy/toy_denoiser.hpp"

using namespace spiffy;

namespace {

const std::filesystem::path kData = SPIFFY_BENCH_DATA_DIR;

const model::ToyDenoiser& corpus_model() {
  static const auto m = model::ToyDenoiser::train(formats::read_sequences(kData / "corpus.txt"), 0, {});
  return m;
}

const std::vector<std::vector<TokenId>>& eval_prompts() {
  static const auto p = formats::read_sequences(kData / "eval_prompts.txt");
  return p;
}

drafting::DraftGraph six_node_graph() {
  std::vector<drafting::DraftFormula> f;
  for (const char* t : {"1:1", "2:1", "1:1 2:1", "1:1 3:1", "2:1 3:1", "1:1 2:1 3:1"}) {
    f.push_back(drafting::DraftFormula::parse(t));
  }
  return drafting::build_graph(std::move(f), 1);
}

SequenceState half_masked_state(std::size_t block_size) {
  auto s = SequenceState::initial(eval_prompts()[0], 8, block_size);
  s.active = 2;
  std::mt19937_64 rng(1);
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<TokenId> t(block_size);
    for (auto& x : t) x = static_cast<TokenId>(2 + rng() % 60);
    s.blocks[k] = BlockState(t);
  }
  for (std::size_t p = 0; p < block_size; p += 2) s.blocks[2].unmask(p, static_cast<TokenId>(2 + p % 60));
  return s;
}

void BM_Forward(benchmark::State& st) {
  const auto s = half_masked_state(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(corpus_model().forward(s));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(128);

void BM_Rank(benchmark::State& st) {
  const auto s = half_masked_state(32);
  const auto m = corpus_model().forward(s);
  for (auto _ : st) benchmark::DoNotOptimize(drafting::rank(m, s.active_block(), 3));
}
BENCHMARK(BM_Rank);

void BM_SpawnDrafts(benchmark::State& st) {
  const auto s = half_masked_state(32);
  const auto view = drafting::rank(corpus_model().forward(s), s.active_block(), 3);
  const auto g = six_node_graph();
  for (auto _ : st) benchmark::DoNotOptimize(drafting::spawn_drafts(g, view, s.active_block()));
}
BENCHMARK(BM_SpawnDrafts);

void BM_BuildMask(benchmark::State& st) {
  const auto d = static_cast<std::size_t>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(batch::build_mask(64, 8, 32, 3, d));
}
BENCHMARK(BM_BuildMask)->Arg(0)->Arg(10);

void BM_Generate(benchmark::State& st) {
  const bool speculative = st.range(0) != 0;
  const GenerationConfig config;
  const auto g = six_node_graph();
  engine::RunOptions opts;
  opts.build_attention_inputs = false;
  for (auto _ : st) {
    if (speculative) {
      benchmark::DoNotOptimize(engine::generate_speculative(corpus_model(), eval_prompts()[0], config, g, opts));
    } else {
      benchmark::DoNotOptimize(engine::generate_vanilla(corpus_model(), eval_prompts()[0], config, opts));
    }
  }
}
BENCHMARK(BM_Generate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SelectSubgraph(benchmark::State& st) {
  calibration::CandidateTable t;
  t.levels = {{{drafting::DraftFormula::parse("1:1"), 90}, {drafting::DraftFormula::parse("2:1"), 40},
               {drafting::DraftFormula::parse("1:2"), 20}},
              {{drafting::DraftFormula::parse("1:1 2:1"), 60}, {drafting::DraftFormula::parse("1:1 3:1"), 30},
               {drafting::DraftFormula::parse("2:1 3:1"), 10}},
              {{drafting::DraftFormula::parse("1:1 2:1 3:1"), 45}, {drafting::DraftFormula::parse("1:1 2:1 4:1"), 12}},
              {{drafting::DraftFormula::parse("1:1 2:1 3:1 4:1"), 30}}};
  const auto budget = static_cast<std::size_t>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(calibration::select_subgraph(t, budget, calibration::Strategy::kTotal));
}
BENCHMARK(BM_SelectSubgraph)->Arg(4)->Arg(8);

}  // namespace
BENCHMARK_MAIN();
