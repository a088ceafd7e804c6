#include "spiffy/engine.hpp"

#include <algorithm>
#include <chrono>
#include <utility>

#include "spiffy/batch.hpp"

namespace spiffy::engine {

namespace {

class StageClock {
 public:
  StageClock(RunReport& report, bool enabled) : report_(report), enabled_(enabled) { report_.profiled = enabled; }

  template <typename F>
  decltype(auto) time(Stage stage, F&& fn) {
    if (!enabled_) return std::forward<F>(fn)();
    const auto start = std::chrono::steady_clock::now();
    struct Stop {
      RunReport& r;
      Stage s;
      std::chrono::steady_clock::time_point t0;
      ~Stop() {
        r.stage_seconds[static_cast<std::size_t>(s)] +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    } stop{report_, stage, start};
    return std::forward<F>(fn)();
  }

 private:
  RunReport& report_;
  bool enabled_;
};

void finalize(RunReport& r) {
  r.total_nfe = r.baseline_nfe = r.schedule_nfe = r.acceptances = 0;
  for (const auto& b : r.per_block) {
    r.total_nfe += b.nfe;
    r.baseline_nfe += b.baseline_nfe;
    r.schedule_nfe += b.schedule_nfe;
    r.acceptances += b.acceptances;
  }
  r.speedup_all = compute_speedup(r, false);
  r.speedup_to_eot = compute_speedup(r, true);
}

void note_eot(RunReport& r, const BlockState& block, std::size_t k, TokenId eot) {
  if (r.eot_block) return;
  const auto t = block.tokens();
  if (std::find(t.begin(), t.end(), eot) != t.end()) r.eot_block = k;
}

std::vector<TokenId> generated_tokens(const SequenceState& s) { return s.generated(); }

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kVocabSort: return "vocab_sort";
    case Stage::kPositionSort: return "position_sort";
    case Stage::kDrafting: return "drafting";
    case Stage::kMask: return "mask";
    case Stage::kPositionIds: return "position_ids";
    case Stage::kVerify: return "verify";
    case Stage::kModel: return "model";
  }
  return "unknown";
}

GenerationResult generate_vanilla(const model::DlmOracle& model, std::span<const TokenId> prompt,
                                  const GenerationConfig& config, const RunOptions& options) {
  config.validate();
  const auto n_blocks = static_cast<std::size_t>(config.num_blocks());
  const auto len = static_cast<std::size_t>(config.block_size);

  GenerationResult result;
  RunReport& report = result.report;
  report.schedule = config.schedule.to_string();
  StageClock clock(report, options.profile);
  SequenceState state = SequenceState::initial({prompt.begin(), prompt.end()}, n_blocks, len);

  for (std::size_t k = 0; k < n_blocks; ++k) {
    state.active = k;
    BlockStats stats;
    stats.block = k;
    stats.baseline_nfe = static_cast<long>(len);
    if (options.keep_trace) result.trace.push_back({k, state.blocks[k]});

    for (std::size_t step = 0; !state.blocks[k].complete(); ++step) {
      const Marginals marginals = clock.time(Stage::kModel, [&] { return model.forward(state); });
      ++stats.nfe;
      auto next = clock.time(Stage::kPositionSort,
                             [&] { return verification::advance(state.blocks[k], marginals, config.schedule); });
      if (options.observer) options.observer({k, step, state.blocks[k], marginals, next.block, next.realized});
      stats.realized.push_back(next.realized);
      state.blocks[k] = std::move(next.block);
      if (options.keep_trace) result.trace.push_back({k, state.blocks[k]});
    }
    stats.schedule_nfe = stats.nfe;
    note_eot(report, state.blocks[k], k, config.eot_token);
    report.per_block.push_back(std::move(stats));
  }
  finalize(report);
  result.tokens = generated_tokens(state);
  return result;
}

GenerationResult generate_speculative(const model::DlmOracle& model, std::span<const TokenId> prompt,
                                      const GenerationConfig& config, const drafting::DraftGraph& graph,
                                      const RunOptions& options) {
  config.validate();
  if (config.schedule.is_fixed() && !graph.empty() && graph.tokens_per_level() != config.schedule.tokens_per_step()) {
    throw Error("graph tokens_per_level=" + std::to_string(graph.tokens_per_level()) + " does not match schedule " +
                config.schedule.to_string());
  }
  const auto n_blocks = static_cast<std::size_t>(config.num_blocks());
  const auto len = static_cast<std::size_t>(config.block_size);
  const Verifier verify_fn = options.verifier ? options.verifier : Verifier(&verification::verify);

  // Vanilla cost under the same schedule: closed form for fixed rates, measured for thresholds.
  std::vector<long> schedule_nfe(n_blocks, 0);
  if (config.schedule.is_fixed()) {
    const long s = config.schedule.tokens_per_step();
    std::fill(schedule_nfe.begin(), schedule_nfe.end(), (static_cast<long>(len) + s - 1) / s);
  } else {
    RunOptions plain;
    plain.build_attention_inputs = false;
    const auto vanilla = generate_vanilla(model, prompt, config, plain);
    for (std::size_t k = 0; k < n_blocks; ++k) schedule_nfe[k] = vanilla.report.per_block[k].nfe;
  }

  GenerationResult result;
  RunReport& report = result.report;
  report.schedule = config.schedule.to_string();
  report.num_drafts = graph.size();
  StageClock clock(report, options.profile);
  SequenceState state = SequenceState::initial({prompt.begin(), prompt.end()}, n_blocks, len);

  std::vector<BlockState> draft_states;
  for (std::size_t k = 0; k < n_blocks; ++k) {
    state.active = k;
    BlockStats stats;
    stats.block = k;
    stats.baseline_nfe = static_cast<long>(len);
    stats.schedule_nfe = schedule_nfe[k];
    if (options.keep_trace) result.trace.push_back({k, state.blocks[k]});

    // Distribution that produced the current block state; none at block start.
    std::optional<Marginals> latest;
    while (!state.blocks[k].complete()) {
      const BlockState& block = state.blocks[k];
      std::vector<drafting::DraftBlock> drafts;
      if (latest && !graph.empty()) {
        drafting::RankingView view;
        view.ordered_positions =
            clock.time(Stage::kPositionSort, [&] { return drafting::order_positions(*latest, block); });
        view.vocab = clock.time(Stage::kVocabSort, [&] {
          return drafting::rank_vocab(*latest, view.ordered_positions, config.top_k_vocab);
        });
        drafts = clock.time(Stage::kDrafting, [&] { return drafting::spawn_drafts(graph, view, block); });
      }
      draft_states.clear();
      for (const auto& d : drafts) draft_states.push_back(d.block);

      std::optional<batch::AttentionLayout> layout;
      if (options.build_attention_inputs) {
        const batch::LayoutShape shape{state.prompt.size(), n_blocks, len, k, drafts.size()};
        layout.emplace();
        layout->mask = clock.time(Stage::kMask, [&] {
          return batch::build_mask(shape.prompt_len, n_blocks, len, k, shape.num_drafts);
        });
        layout->positions = clock.time(Stage::kPositionIds, [&] {
          return batch::build_position_ids(shape.prompt_len, n_blocks, len, k, shape.num_drafts);
        });
      }

      auto outputs = clock.time(Stage::kModel, [&] {
        return model.forward_batched(state, draft_states, layout ? &*layout : nullptr);
      });
      ++stats.nfe;

      auto outcome = clock.time(Stage::kVerify, [&] {
        return verify_fn(block, outputs.target, drafts, outputs.per_draft, config.schedule);
      });
      stats.acceptances += static_cast<long>(outcome.accepted_levels.size());
      stats.realized.insert(stats.realized.end(), outcome.realized.begin(), outcome.realized.end());
      stats.accepted_realized.insert(stats.accepted_realized.end(), outcome.accepted_realized.begin(),
                                     outcome.accepted_realized.end());
      if (outcome.adopted_marginals) {
        latest = std::move(outcome.adopted_marginals);
      } else {
        latest = std::move(outputs.target);
      }
      state.blocks[k] = std::move(outcome.new_block);
      if (options.keep_trace) result.trace.push_back({k, state.blocks[k]});
    }
    note_eot(report, state.blocks[k], k, config.eot_token);
    report.per_block.push_back(std::move(stats));
  }
  finalize(report);
  result.tokens = generated_tokens(state);
  return result;
}

double compute_speedup(const RunReport& report, bool up_to_eot) {
  long baseline = 0;
  long spent = 0;
  for (const auto& b : report.per_block) {
    if (up_to_eot && report.eot_block && b.block > *report.eot_block) continue;
    baseline += b.baseline_nfe;
    spent += b.nfe;
  }
  if (spent == 0) return 1.0;
  return static_cast<double>(baseline) / static_cast<double>(spent);
}

std::vector<BlockSummaryRow> per_block_summary(std::span<const RunReport> reports) {
  std::size_t n_blocks = 0;
  for (const auto& r : reports) n_blocks = std::max(n_blocks, r.per_block.size());
  std::vector<BlockSummaryRow> rows(n_blocks);
  for (std::size_t k = 0; k < n_blocks; ++k) rows[k].block = k;

  for (const auto& r : reports) {
    for (const auto& b : r.per_block) {
      if (r.eot_block && b.block > *r.eot_block) continue;
      auto& row = rows.at(b.block);
      const long steps = b.nfe + b.acceptances;
      row.runs += 1;
      row.mean_speedup += b.nfe > 0 ? static_cast<double>(b.baseline_nfe) / static_cast<double>(b.nfe) : 1.0;
      row.mean_acceptance_rate += steps > 0 ? static_cast<double>(b.acceptances) / static_cast<double>(steps) : 0.0;
    }
  }
  for (auto& row : rows) {
    if (row.runs == 0) continue;
    row.mean_speedup /= static_cast<double>(row.runs);
    row.mean_acceptance_rate /= static_cast<double>(row.runs);
  }
  return rows;
}

std::vector<StageShare> profile_stages(const RunReport& report) {
  const double model = report.stage_seconds[static_cast<std::size_t>(Stage::kModel)];
  if (!(model > 0.0)) throw Error("profile_stages: no model time recorded");
  std::vector<StageShare> out;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    out.push_back({stage_name(static_cast<Stage>(s)), 100.0 * report.stage_seconds[s] / model});
  }
  return out;
}

bool is_subsequence(std::span<const TraceEntry> sub, std::span<const TraceEntry> full) {
  std::size_t j = 0;
  for (const auto& e : sub) {
    while (j < full.size() && !(full[j] == e)) ++j;
    if (j == full.size()) return false;
    ++j;
  }
  return true;
}

}  // namespace spiffy::engine
