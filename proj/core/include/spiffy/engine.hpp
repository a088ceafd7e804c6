#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spiffy/config.hpp"
#include "spiffy/drafting.hpp"
#include "spiffy/oracle.hpp"
#include "spiffy/verification.hpp"

namespace spiffy::engine {

enum class Stage : std::size_t { kVocabSort, kPositionSort, kDrafting, kMask, kPositionIds, kVerify, kModel };
inline constexpr std::size_t kStageCount = 7;
const char* stage_name(Stage s);

struct BlockStats {
  std::size_t block = 0;
  long nfe = 0;
  long acceptances = 0;
  // Calls one-token-per-step decoding needs for this block (L).
  long baseline_nfe = 0;
  // Calls vanilla decoding needs under the run's own schedule.
  long schedule_nfe = 0;
  std::vector<int> realized;
  std::vector<int> accepted_realized;

  friend bool operator==(const BlockStats&, const BlockStats&) = default;
};

struct RunReport {
  std::string schedule;
  std::size_t num_drafts = 0;
  long total_nfe = 0;
  long baseline_nfe = 0;
  long schedule_nfe = 0;
  long acceptances = 0;
  std::vector<BlockStats> per_block;
  std::optional<std::size_t> eot_block;
  double speedup_all = 1.0;
  double speedup_to_eot = 1.0;
  bool profiled = false;
  std::array<double, kStageCount> stage_seconds{};

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

struct TraceEntry {
  std::size_t block = 0;
  BlockState state;
  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct GenerationResult {
  std::vector<TokenId> tokens;  // the W generated tokens
  std::vector<TraceEntry> trace;
  RunReport report;
};

// Observed after every vanilla denoising step.
struct StepEvent {
  std::size_t block;
  std::size_t step;  // step index within the block, from 0
  const BlockState& before;
  const Marginals& marginals;
  const BlockState& after;
  int realized;
};
using StepObserver = std::function<void(const StepEvent&)>;

using Verifier = std::function<verification::VerifyOutcome(
    const BlockState&, const Marginals&, std::span<const drafting::DraftBlock>, std::span<const Marginals>,
    const UnmaskSchedule&)>;

struct RunOptions {
  bool keep_trace = false;
  bool profile = false;
  // Build the block-attention mask and position ids for every batched call.
  bool build_attention_inputs = true;
  StepObserver observer;
  // Replaces verification::verify; used for fault injection in checks.
  Verifier verifier;
};

// Left-to-right block loop, one forward call per denoising step. Traces hold
// every block state visited, starting with each block's fully masked state.
GenerationResult generate_vanilla(const model::DlmOracle& model, std::span<const TokenId> prompt,
                                  const GenerationConfig& config, const RunOptions& options = {});

// Per call: rank the most recent distribution, spawn drafts, one batched
// forward, verify. The first call of every block carries no drafts. Traces hold
// each block's initial state and the state after every call. Throws Error when
// a fixed schedule's tokens-per-step differs from the graph's tokens_per_level.
GenerationResult generate_speculative(const model::DlmOracle& model, std::span<const TokenId> prompt,
                                      const GenerationConfig& config, const drafting::DraftGraph& graph,
                                      const RunOptions& options = {});

// Sum of baseline NFEs over sum of spent NFEs; with up_to_eot only blocks up to
// and including the first EOT block count (all blocks when there is none).
double compute_speedup(const RunReport& report, bool up_to_eot);

struct BlockSummaryRow {
  std::size_t block = 0;
  std::size_t runs = 0;
  double mean_speedup = 0.0;
  // Fraction of denoising steps served by accepted drafts.
  double mean_acceptance_rate = 0.0;
};

// Per block index, averaged over runs whose EOT block (if any) is not before it.
std::vector<BlockSummaryRow> per_block_summary(std::span<const RunReport> reports);

struct StageShare {
  std::string stage;
  double percent_of_model = 0.0;
};

// Every stage as a percentage of cumulative model time. Throws Error when no
// model time was recorded.
std::vector<StageShare> profile_stages(const RunReport& report);

// True when every entry of `sub` occurs in `full` in the same relative order.
bool is_subsequence(std::span<const TraceEntry> sub, std::span<const TraceEntry> full);

}  // namespace spiffy::engine
