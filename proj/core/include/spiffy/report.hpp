#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "spiffy/engine.hpp"

namespace spiffy::report {

// Stage timings are written only for profiled reports, so unprofiled output is
// reproducible byte for byte.
nlohmann::json to_json(const engine::RunReport& report);
engine::RunReport run_report_from_json(const nlohmann::json& doc);

// Header: block,runs,mean_speedup,mean_acceptance_rate
std::string summary_csv(std::span<const engine::BlockSummaryRow> rows);

// Vanilla and speculative runs of one prompt under the same schedule.
struct BenchSample {
  std::size_t prompt_index = 0;
  engine::RunReport vanilla;
  engine::RunReport speculative;
};

struct BenchSummary {
  std::string schedule;
  std::size_t num_drafts = 0;
  std::size_t prompts = 0;
  long baseline_nfe = 0;     // one token per call
  long vanilla_nfe = 0;      // same schedule, no speculation
  long speculative_nfe = 0;  // same schedule, with the draft graph
  long acceptances = 0;
  // Each speedup is baseline / spent, summed over prompts.
  double vanilla_speedup_all = 1.0;
  double vanilla_speedup_to_eot = 1.0;
  double speedup_all = 1.0;
  double speedup_to_eot = 1.0;
  // Prompts whose speculative run used strictly fewer calls than vanilla.
  std::size_t prompts_improved = 0;
};

BenchSummary summarize(std::span<const BenchSample> samples);

nlohmann::json to_json(const BenchSummary& summary);
// {"summary": ..., "samples": [{"prompt", "vanilla", "speculative"}, ...]}
nlohmann::json bench_document(std::span<const BenchSample> samples);
std::vector<BenchSample> bench_samples_from_json(const nlohmann::json& doc);

}  // namespace spiffy::report
