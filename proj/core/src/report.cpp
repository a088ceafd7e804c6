#include "spiffy/report.hpp"

#include "text_util.hpp"

namespace spiffy::report {

using nlohmann::json;

namespace {

struct Totals {
  long baseline = 0;
  long spent = 0;
};

Totals totals(const engine::RunReport& r, bool up_to_eot) {
  Totals t;
  for (const auto& b : r.per_block) {
    if (up_to_eot && r.eot_block && b.block > *r.eot_block) continue;
    t.baseline += b.baseline_nfe;
    t.spent += b.nfe;
  }
  return t;
}

double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 1.0; }

template <typename T>
T field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw Error(std::string("report: missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(std::string("report: bad field '") + key + "': " + e.what());
  }
}

}  // namespace

json to_json(const engine::RunReport& r) {
  json blocks = json::array();
  for (const auto& b : r.per_block) {
    blocks.push_back({{"block", b.block},
                      {"nfe", b.nfe},
                      {"acceptances", b.acceptances},
                      {"baseline_nfe", b.baseline_nfe},
                      {"schedule_nfe", b.schedule_nfe},
                      {"realized", b.realized},
                      {"accepted_realized", b.accepted_realized}});
  }
  json doc = {{"schedule", r.schedule},
              {"num_drafts", r.num_drafts},
              {"total_nfe", r.total_nfe},
              {"baseline_nfe", r.baseline_nfe},
              {"schedule_nfe", r.schedule_nfe},
              {"acceptances", r.acceptances},
              {"eot_block", r.eot_block ? json(*r.eot_block) : json(nullptr)},
              {"speedup_all", r.speedup_all},
              {"speedup_to_eot", r.speedup_to_eot},
              {"per_block", std::move(blocks)}};
  if (r.profiled) {
    json stages = json::object();
    for (std::size_t s = 0; s < engine::kStageCount; ++s) {
      stages[engine::stage_name(static_cast<engine::Stage>(s))] = r.stage_seconds[s];
    }
    doc["stage_seconds"] = std::move(stages);
  }
  return doc;
}

engine::RunReport run_report_from_json(const json& doc) {
  if (!doc.is_object()) throw Error("report: expected an object");
  engine::RunReport r;
  r.schedule = field<std::string>(doc, "schedule");
  r.num_drafts = field<std::size_t>(doc, "num_drafts");
  r.total_nfe = field<long>(doc, "total_nfe");
  r.baseline_nfe = field<long>(doc, "baseline_nfe");
  r.schedule_nfe = field<long>(doc, "schedule_nfe");
  r.acceptances = field<long>(doc, "acceptances");
  if (doc.contains("eot_block") && !doc.at("eot_block").is_null()) r.eot_block = field<std::size_t>(doc, "eot_block");
  r.speedup_all = field<double>(doc, "speedup_all");
  r.speedup_to_eot = field<double>(doc, "speedup_to_eot");
  for (const auto& b : field<json>(doc, "per_block")) {
    engine::BlockStats s;
    s.block = field<std::size_t>(b, "block");
    s.nfe = field<long>(b, "nfe");
    s.acceptances = field<long>(b, "acceptances");
    s.baseline_nfe = field<long>(b, "baseline_nfe");
    s.schedule_nfe = field<long>(b, "schedule_nfe");
    s.realized = field<std::vector<int>>(b, "realized");
    s.accepted_realized = field<std::vector<int>>(b, "accepted_realized");
    r.per_block.push_back(std::move(s));
  }
  if (doc.contains("stage_seconds")) {
    r.profiled = true;
    const auto& stages = doc.at("stage_seconds");
    for (std::size_t s = 0; s < engine::kStageCount; ++s) {
      r.stage_seconds[s] = field<double>(stages, engine::stage_name(static_cast<engine::Stage>(s)));
    }
  }
  return r;
}

std::string summary_csv(std::span<const engine::BlockSummaryRow> rows) {
  std::string out = "block,runs,mean_speedup,mean_acceptance_rate\n";
  for (const auto& row : rows) {
    out += std::to_string(row.block) + "," + std::to_string(row.runs) + "," + detail::format_double(row.mean_speedup) +
           "," + detail::format_double(row.mean_acceptance_rate) + "\n";
  }
  return out;
}

BenchSummary summarize(std::span<const BenchSample> samples) {
  BenchSummary s;
  s.prompts = samples.size();
  Totals van_all, van_eot, spec_all, spec_eot;
  for (const auto& sample : samples) {
    if (s.schedule.empty()) {
      s.schedule = sample.speculative.schedule;
      s.num_drafts = sample.speculative.num_drafts;
    }
    s.baseline_nfe += sample.speculative.baseline_nfe;
    s.vanilla_nfe += sample.vanilla.total_nfe;
    s.speculative_nfe += sample.speculative.total_nfe;
    s.acceptances += sample.speculative.acceptances;
    if (sample.speculative.total_nfe < sample.vanilla.total_nfe) ++s.prompts_improved;

    auto add = [](Totals& acc, Totals t) {
      acc.baseline += t.baseline;
      acc.spent += t.spent;
    };
    add(van_all, totals(sample.vanilla, false));
    add(van_eot, totals(sample.vanilla, true));
    add(spec_all, totals(sample.speculative, false));
    add(spec_eot, totals(sample.speculative, true));
  }
  s.vanilla_speedup_all = ratio(van_all.baseline, van_all.spent);
  s.vanilla_speedup_to_eot = ratio(van_eot.baseline, van_eot.spent);
  s.speedup_all = ratio(spec_all.baseline, spec_all.spent);
  s.speedup_to_eot = ratio(spec_eot.baseline, spec_eot.spent);
  return s;
}

json to_json(const BenchSummary& s) {
  return {{"schedule", s.schedule},
          {"num_drafts", s.num_drafts},
          {"prompts", s.prompts},
          {"baseline_nfe", s.baseline_nfe},
          {"vanilla_nfe", s.vanilla_nfe},
          {"speculative_nfe", s.speculative_nfe},
          {"acceptances", s.acceptances},
          {"vanilla_speedup_all", s.vanilla_speedup_all},
          {"vanilla_speedup_to_eot", s.vanilla_speedup_to_eot},
          {"speedup_all", s.speedup_all},
          {"speedup_to_eot", s.speedup_to_eot},
          {"prompts_improved", s.prompts_improved}};
}

json bench_document(std::span<const BenchSample> samples) {
  json runs = json::array();
  for (const auto& s : samples) {
    runs.push_back({{"prompt", s.prompt_index}, {"vanilla", to_json(s.vanilla)}, {"speculative", to_json(s.speculative)}});
  }
  return {{"summary", to_json(summarize(samples))}, {"samples", std::move(runs)}};
}

std::vector<BenchSample> bench_samples_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("samples")) throw Error("bench report: missing 'samples'");
  std::vector<BenchSample> out;
  for (const auto& s : doc.at("samples")) {
    out.push_back({field<std::size_t>(s, "prompt"), run_report_from_json(field<json>(s, "vanilla")),
                   run_report_from_json(field<json>(s, "speculative"))});
  }
  return out;
}

}  // namespace spiffy::report
