#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <ostream>
#include <random>
#include <thread>

#include "spiffy/calibration.hpp"
#include "spiffy/config.hpp"
#include "spiffy/dot.hpp"
#include "spiffy/engine.hpp"
#include "spiffy/formats.hpp"
#include "spiffy/report.hpp"
#include "spiffy/toy_denoiser.hpp"

namespace spiffy::cli {

namespace {

struct ModelOpts {
  std::string corpus;
  std::string model;
  int vocab = 0;
  model::ToyParams params;
};

struct GenOpts {
  std::string config;
  std::string schedule;
  int W = 0;
  int L = 0;
  int top_k = 0;
  TokenId eot = 0;
  std::uint64_t seed = 0;
  // Options whose count() tells whether the flag was given.
  CLI::Option* W_opt = nullptr;
  CLI::Option* L_opt = nullptr;
  CLI::Option* top_k_opt = nullptr;
  CLI::Option* eot_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* schedule_opt = nullptr;
};

void add_model_options(CLI::App* app, ModelOpts& o) {
  app->add_option("--corpus", o.corpus, "Training corpus (token ids, one sequence per line)");
  app->add_option("--model", o.model, "Serialized toy model (alternative to --corpus)");
  app->add_option("--vocab", o.vocab, "Vocabulary size V (0 infers from the corpus)");
  app->add_option("--alpha", o.params.alpha, "Laplace smoothing constant")->capture_default_str();
  app->add_option("--lambda-left", o.params.lambda_left, "Left-bigram mixture weight")->capture_default_str();
  app->add_option("--lambda-right", o.params.lambda_right, "Right-bigram mixture weight")->capture_default_str();
  app->add_option("--lambda-uni", o.params.lambda_uni, "Unigram mixture weight")->capture_default_str();
}

void add_gen_options(CLI::App* app, GenOpts& o) {
  app->add_option("--config", o.config, "Generation config file (key = value)");
  o.schedule_opt = app->add_option("--schedule", o.schedule, "fixed:<s> or threshold:<p>");
  o.W_opt = app->add_option("--W", o.W, "Generation length");
  o.L_opt = app->add_option("--L", o.L, "Block size");
  o.top_k_opt = app->add_option("--top-k", o.top_k, "Highest vocabulary rank drafted");
  o.eot_opt = app->add_option("--eot", o.eot, "End-of-text token id");
  o.seed_opt = app->add_option("--seed", o.seed, "Seed for sampled choices");
}

model::ToyDenoiser load_model(const ModelOpts& o) {
  if (o.corpus.empty() == o.model.empty()) throw Error("exactly one of --corpus or --model is required");
  if (!o.model.empty()) return formats::read_model(o.model);
  const auto corpus = formats::read_sequences(o.corpus);
  return model::ToyDenoiser::train(corpus, o.vocab, o.params);
}

GenerationConfig load_config(const GenOpts& o) {
  GenerationConfig c = o.config.empty() ? GenerationConfig{} : read_config(o.config);
  if (o.W_opt->count()) c.generation_length = o.W;
  if (o.L_opt->count()) c.block_size = o.L;
  if (o.top_k_opt->count()) c.top_k_vocab = o.top_k;
  if (o.eot_opt->count()) c.eot_token = o.eot;
  if (o.seed_opt->count()) c.seed = o.seed;
  if (o.schedule_opt->count()) c.schedule = UnmaskSchedule::parse(o.schedule);
  c.validate();
  return c;
}

std::vector<std::vector<TokenId>> load_prompts(const std::string& path, int vocab, std::size_t limit = 0) {
  auto prompts = formats::read_sequences(path, vocab);
  if (prompts.empty()) throw Error(path + ": no prompts");
  if (limit > 0 && prompts.size() > limit) prompts.resize(limit);
  return prompts;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string join(std::span<const TokenId> tokens) {
  std::string s;
  for (TokenId t : tokens) {
    if (!s.empty()) s.push_back(' ');
    s += std::to_string(t);
  }
  return s;
}

// Runs fn(i) for every i in [0, n) across `workers` threads; results are
// written by index so ordering never depends on scheduling.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void print_summary(std::ostream& out, const report::BenchSummary& s) {
  out << "prompts " << s.prompts << "  schedule " << s.schedule << "  drafts " << s.num_drafts << '\n';
  out << "nfe baseline " << s.baseline_nfe << "  vanilla " << s.vanilla_nfe << "  speculative " << s.speculative_nfe
      << "  acceptances " << s.acceptances << '\n';
  out << "speedup all     vanilla " << fixed3(s.vanilla_speedup_all) << "  speculative " << fixed3(s.speedup_all)
      << '\n';
  out << "speedup to-eot  vanilla " << fixed3(s.vanilla_speedup_to_eot) << "  speculative "
      << fixed3(s.speedup_to_eot) << '\n';
  const double factor =
      s.speculative_nfe > 0 ? static_cast<double>(s.vanilla_nfe) / static_cast<double>(s.speculative_nfe) : 1.0;
  out << "draft factor (vanilla/speculative nfe) " << fixed3(factor) << '\n';
  out << "improved prompts " << s.prompts_improved << "/" << s.prompts << '\n';
}

std::vector<engine::RunReport> speculative_reports(std::span<const report::BenchSample> samples) {
  std::vector<engine::RunReport> out;
  for (const auto& s : samples) out.push_back(s.speculative);
  return out;
}

void print_profile(std::ostream& out, std::span<const report::BenchSample> samples) {
  engine::RunReport total;
  for (const auto& s : samples) {
    if (!s.speculative.profiled) return;
    for (std::size_t i = 0; i < engine::kStageCount; ++i) total.stage_seconds[i] += s.speculative.stage_seconds[i];
  }
  if (samples.empty()) return;
  out << "stage overhead (% of model time)\n";
  for (const auto& share : engine::profile_stages(total)) {
    out << "  " << share.stage << " " << fixed3(share.percent_of_model) << '\n';
  }
}

// ---- calibrate -------------------------------------------------------------

struct CalibrateOpts {
  ModelOpts model;
  GenOpts gen;
  std::string prompts;
  std::string out;
  std::string records_out;
  std::string table_out;
  int lookahead = 5;
  std::size_t budget = 10;
  std::string strategy = "degree-1";
  std::size_t table_width = calibration::kDefaultTableWidth;
  std::size_t max_prompts = 0;
  std::size_t workers = 1;
};

int run_calibrate(const CalibrateOpts& o, std::ostream& out) {
  const auto model = load_model(o.model);
  const auto config = load_config(o.gen);
  if (!config.schedule.is_fixed()) throw Error("calibrate needs a fixed:<s> schedule");
  if (o.budget < 1) throw Error("--budget must be >= 1");
  const auto strategy = calibration::parse_strategy(o.strategy);
  const auto prompts = load_prompts(o.prompts, model.vocab_size(), o.max_prompts);

  const auto records = calibration::collect_records(model, prompts, config, o.lookahead, o.workers);
  const int tpl = config.schedule.tokens_per_step();
  const auto table = calibration::build_table(records, o.lookahead, tpl, o.table_width);
  const auto selection = calibration::select_subgraph(table, o.budget, strategy);

  formats::write_text(o.records_out.empty() ? o.out + ".records" : o.records_out, formats::format_records(records));
  formats::write_text(o.table_out.empty() ? o.out + ".table" : o.table_out, formats::format_table(table));
  formats::write_text(o.out, formats::format_graph(selection.graph));

  out << "records " << records.size() << " from " << prompts.size() << " prompts\n";
  for (std::size_t k = 0; k < table.levels.size(); ++k) {
    out << "level " << k + 1 << ":";
    for (const auto& e : table.levels[k]) out << "  {" << e.formula.to_string() << "} x" << e.count;
    out << '\n';
  }
  out << "selected " << selection.graph.size() << " nodes, " << calibration::to_string(strategy) << " score "
      << selection.score << '\n';
  return kExitOk;
}

// ---- generate --------------------------------------------------------------

struct GenerateOpts {
  ModelOpts model;
  GenOpts gen;
  std::string prompts;
  std::string graph;
  std::string out;
  std::string report;
};

int run_generate(const GenerateOpts& o, std::ostream& out) {
  const auto model = load_model(o.model);
  const auto config = load_config(o.gen);
  const auto prompts = load_prompts(o.prompts, model.vocab_size());
  const std::optional<drafting::DraftGraph> graph =
      o.graph.empty() ? std::nullopt : std::optional(formats::read_graph(o.graph));

  std::string text;
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& p : prompts) {
    const auto result = graph ? engine::generate_speculative(model, p, config, *graph)
                              : engine::generate_vanilla(model, p, config);
    text += join(result.tokens) + "\n";
    reports.push_back(report::to_json(result.report));
  }
  if (o.out.empty()) {
    out << text;
  } else {
    formats::write_text(o.out, text);
  }
  if (!o.report.empty()) formats::write_text(o.report, reports.dump(2) + "\n");
  return kExitOk;
}

// ---- bench -----------------------------------------------------------------

struct BenchOpts {
  ModelOpts model;
  GenOpts gen;
  std::string prompts;
  std::string graph;
  std::string report;
  std::string csv;
  std::size_t workers = 1;
  bool profile = false;
};

int run_bench(const BenchOpts& o, std::ostream& out) {
  const auto model = load_model(o.model);
  const auto config = load_config(o.gen);
  const auto graph = formats::read_graph(o.graph);
  const auto prompts = load_prompts(o.prompts, model.vocab_size());
  if (config.schedule.is_fixed() && !graph.empty() && graph.tokens_per_level() != config.schedule.tokens_per_step()) {
    throw Error(o.graph + ": tokens_per_level " + std::to_string(graph.tokens_per_level()) +
                " does not match schedule " + config.schedule.to_string());
  }

  std::vector<report::BenchSample> samples(prompts.size());
  parallel_for(prompts.size(), o.workers, [&](std::size_t i) {
    engine::RunOptions opts;
    opts.profile = o.profile;
    samples[i].prompt_index = i;
    samples[i].vanilla = engine::generate_vanilla(model, prompts[i], config).report;
    samples[i].speculative = engine::generate_speculative(model, prompts[i], config, graph, opts).report;
  });

  if (!o.report.empty()) formats::write_text(o.report, report::bench_document(samples).dump(2) + "\n");
  if (!o.csv.empty()) {
    const auto reports = speculative_reports(samples);
    formats::write_text(o.csv, report::summary_csv(engine::per_block_summary(reports)));
  }
  print_summary(out, report::summarize(samples));
  print_profile(out, samples);
  return kExitOk;
}

// ---- check-lossless --------------------------------------------------------

struct CheckOpts {
  ModelOpts model;
  GenOpts gen;
  std::string prompts;
  std::string graph;
  long trials = 100;
  bool inject_fault = false;
};

// Verification that checks only the step tag: the first draft with the right
// unmasked count is accepted whatever its content.
verification::VerifyOutcome tag_only_verify(const BlockState& block, const Marginals& target,
                                            std::span<const drafting::DraftBlock> drafts,
                                            std::span<const Marginals> draft_marginals,
                                            const UnmaskSchedule& schedule) {
  verification::VerifyOutcome out;
  auto step = verification::advance(block, target, schedule);
  out.realized.push_back(step.realized);
  out.steps_advanced = 1;
  BlockState cur = std::move(step.block);
  while (!cur.complete()) {
    auto it = std::find_if(drafts.begin(), drafts.end(), [&](const drafting::DraftBlock& d) {
      return d.step_tag == cur.unmasked_count() &&
             (out.accepted_levels.empty() || d.level > out.accepted_levels.back());
    });
    if (it == drafts.end()) break;
    const auto i = static_cast<std::size_t>(it - drafts.begin());
    step = verification::advance(it->block, draft_marginals[i], schedule);
    out.accepted_levels.push_back(it->level);
    out.realized.push_back(step.realized);
    out.accepted_realized.push_back(step.realized);
    out.adopted_marginals = draft_marginals[i];
    ++out.steps_advanced;
    cur = std::move(step.block);
  }
  out.new_block = std::move(cur);
  return out;
}

void print_block_pair(std::ostream& err, std::size_t block, std::span<const TokenId> vanilla,
                      std::span<const TokenId> speculative) {
  err << "  block " << block << " vanilla:     " << join(vanilla) << '\n';
  err << "  block " << block << " speculative: " << join(speculative) << '\n';
}

int run_check(const CheckOpts& o, std::ostream& out, std::ostream& err) {
  if (o.trials < 1) throw Error("--trials must be >= 1");
  const auto model = load_model(o.model);
  const auto config = load_config(o.gen);
  const auto graph = formats::read_graph(o.graph);
  const auto prompts = load_prompts(o.prompts, model.vocab_size());

  engine::RunOptions opts;
  opts.keep_trace = true;
  if (o.inject_fault) opts.verifier = &tag_only_verify;

  std::mt19937_64 rng(config.seed);
  const auto len = static_cast<std::size_t>(config.block_size);
  long acceptances = 0;
  for (long trial = 0; trial < o.trials; ++trial) {
    const auto& full = prompts[rng() % prompts.size()];
    const std::size_t cut = 1 + rng() % full.size();
    const std::vector<TokenId> prompt(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(cut));

    const auto vanilla = engine::generate_vanilla(model, prompt, config, opts);
    const auto spec = engine::generate_speculative(model, prompt, config, graph, opts);
    acceptances += spec.report.acceptances;

    if (vanilla.tokens != spec.tokens) {
      err << "trial " << trial << ": output diverges (prompt " << join(prompt) << ")\n";
      for (std::size_t k = 0; k * len < vanilla.tokens.size(); ++k) {
        const std::span<const TokenId> a(vanilla.tokens.data() + k * len, len);
        const std::span<const TokenId> b(spec.tokens.data() + k * len, len);
        if (!std::equal(a.begin(), a.end(), b.begin())) {
          print_block_pair(err, k, a, b);
          break;
        }
      }
      return kExitCheckFailed;
    }
    if (!engine::is_subsequence(spec.trace, vanilla.trace)) {
      err << "trial " << trial << ": speculative trace is not a subsequence of the vanilla trace (prompt "
          << join(prompt) << ")\n";
      for (const auto& e : spec.trace) {
        const auto it = std::find(vanilla.trace.begin(), vanilla.trace.end(), e);
        if (it != vanilla.trace.end()) continue;
        const auto same_count = std::find_if(vanilla.trace.begin(), vanilla.trace.end(), [&](const auto& v) {
          return v.block == e.block && v.state.unmasked_count() == e.state.unmasked_count();
        });
        print_block_pair(err, e.block, same_count != vanilla.trace.end() ? same_count->state.tokens()
                                                                          : std::span<const TokenId>{},
                         e.state.tokens());
        break;
      }
      return kExitCheckFailed;
    }
  }
  out << "lossless: " << o.trials << " trials, schedule " << config.schedule.to_string() << ", " << graph.size()
      << " drafts, " << acceptances << " acceptances\n";
  return kExitOk;
}

// ---- graph -----------------------------------------------------------------

int run_graph_dot(const std::string& graph_path, const std::string& out_path, std::ostream& out) {
  const auto dot = drafting::to_dot(formats::read_graph(graph_path));
  if (out_path.empty()) {
    out << dot;
  } else {
    formats::write_text(out_path, dot);
  }
  return kExitOk;
}

int run_graph_validate(const std::string& graph_path, std::ostream& out) {
  const auto g = formats::read_graph(graph_path);
  out << "ok: " << g.size() << " nodes, depth " << g.depth() << ", tokens_per_level " << g.tokens_per_level()
      << ", D " << g.budget() << '\n';
  return kExitOk;
}

int run_graph_show(const std::string& graph_path, std::ostream& out) {
  const auto g = formats::read_graph(graph_path);
  for (std::size_t n = 0; n < g.size(); ++n) {
    out << "n" << n << " level " << g.level(n) << " parents";
    if (g.parents(n).empty()) out << " root";
    for (std::size_t p : g.parents(n)) out << " n" << p;
    out << " : " << g.nodes()[n].to_string() << '\n';
  }
  return kExitOk;
}

// ---- summarize -------------------------------------------------------------

int run_summarize(const std::string& report_path, const std::string& csv_path, std::ostream& out) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(formats::read_text(report_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(report_path, e.what());
  }
  const auto samples = report::bench_samples_from_json(doc);
  print_summary(out, report::summarize(samples));
  const auto rows = engine::per_block_summary(speculative_reports(samples));
  const auto csv = report::summary_csv(rows);
  if (csv_path.empty()) {
    out << csv;
  } else {
    formats::write_text(csv_path, csv);
  }
  print_profile(out, samples);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative decoding for block-wise masked diffusion models (toy oracle)", "spiffy"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "spiffy 0.1.0");

  CalibrateOpts cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Mine a draft graph from vanilla generations");
  add_model_options(cal_cmd, cal.model);
  add_gen_options(cal_cmd, cal.gen);
  cal_cmd->add_option("--prompts", cal.prompts, "Calibration prompts")->required();
  cal_cmd->add_option("--lookahead", cal.lookahead, "Lookahead steps")->capture_default_str();
  cal_cmd->add_option("--budget", cal.budget, "Draft budget D")->capture_default_str();
  cal_cmd->add_option("--strategy", cal.strategy, "degree-0, degree-1 or total")->capture_default_str();
  cal_cmd->add_option("--out", cal.out, "Graph file to write")->required();
  cal_cmd->add_option("--records-out", cal.records_out, "Records file (default <out>.records)");
  cal_cmd->add_option("--table-out", cal.table_out, "Candidate table file (default <out>.table)");
  cal_cmd->add_option("--table-width", cal.table_width, "Candidates kept per level")->capture_default_str();
  cal_cmd->add_option("--max-prompts", cal.max_prompts, "Use only the first N prompts (0 = all)");
  cal_cmd->add_option("--workers", cal.workers, "Parallel prompt workers")->capture_default_str();

  GenerateOpts gen;
  auto* gen_cmd = app.add_subcommand("generate", "Generate from each prompt");
  add_model_options(gen_cmd, gen.model);
  add_gen_options(gen_cmd, gen.gen);
  gen_cmd->add_option("--prompts", gen.prompts, "Prompts file")->required();
  gen_cmd->add_option("--graph", gen.graph, "Draft graph (vanilla decoding when omitted)");
  gen_cmd->add_option("--out", gen.out, "Generated tokens (stdout when omitted)");
  gen_cmd->add_option("--report", gen.report, "JSON run reports");

  BenchOpts bench;
  auto* bench_cmd = app.add_subcommand("bench", "Compare vanilla and speculative NFEs");
  add_model_options(bench_cmd, bench.model);
  add_gen_options(bench_cmd, bench.gen);
  bench_cmd->add_option("--prompts", bench.prompts, "Evaluation prompts")->required();
  bench_cmd->add_option("--graph", bench.graph, "Draft graph")->required();
  bench_cmd->add_option("--report", bench.report, "JSON bench report");
  bench_cmd->add_option("--csv", bench.csv, "Per-block summary CSV");
  bench_cmd->add_option("--workers", bench.workers, "Parallel prompt workers")->capture_default_str();
  bench_cmd->add_flag("--profile", bench.profile, "Time engine stages");

  CheckOpts check;
  auto* check_cmd = app.add_subcommand("check-lossless", "Compare speculative and vanilla outputs and traces");
  add_model_options(check_cmd, check.model);
  add_gen_options(check_cmd, check.gen);
  check_cmd->add_option("--prompts", check.prompts, "Prompts to sample from")->required();
  check_cmd->add_option("--graph", check.graph, "Draft graph")->required();
  check_cmd->add_option("--trials", check.trials, "Number of seeded trials")->capture_default_str();
  check_cmd->add_flag("--inject-fault", check.inject_fault)->group("");

  std::string graph_path;
  std::string graph_out;
  auto* graph_cmd = app.add_subcommand("graph", "Inspect draft graph files");
  graph_cmd->require_subcommand(1);
  auto* dot_cmd = graph_cmd->add_subcommand("export-dot", "Write Graphviz DOT");
  dot_cmd->add_option("--graph", graph_path, "Draft graph")->required();
  dot_cmd->add_option("--out", graph_out, "DOT file (stdout when omitted)");
  auto* validate_cmd = graph_cmd->add_subcommand("validate", "Check a graph file");
  validate_cmd->add_option("--graph", graph_path, "Draft graph")->required();
  auto* show_cmd = graph_cmd->add_subcommand("show", "List nodes, levels and parents");
  show_cmd->add_option("--graph", graph_path, "Draft graph")->required();

  std::string summary_report;
  std::string summary_csv;
  auto* sum_cmd = app.add_subcommand("summarize", "Tables from a bench report");
  sum_cmd->add_option("--report", summary_report, "JSON bench report")->required();
  sum_cmd->add_option("--csv", summary_csv, "Per-block CSV (stdout when omitted)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (cal_cmd->parsed()) return run_calibrate(cal, out);
    if (gen_cmd->parsed()) return run_generate(gen, out);
    if (bench_cmd->parsed()) return run_bench(bench, out);
    if (check_cmd->parsed()) return run_check(check, out, err);
    if (dot_cmd->parsed()) return run_graph_dot(graph_path, graph_out, out);
    if (validate_cmd->parsed()) return run_graph_validate(graph_path, out);
    if (show_cmd->parsed()) return run_graph_show(graph_path, out);
    if (sum_cmd->parsed()) return run_summarize(summary_report, summary_csv, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace spiffy::cli
