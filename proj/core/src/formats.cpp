#include "spiffy/formats.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "text_util.hpp"

namespace spiffy::formats {

namespace {

// Non-empty lines with '#' comments stripped, paired with 1-based line numbers.
std::vector<std::pair<std::size_t, std::string_view>> content_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t lineno = 0;
  for (auto line : detail::split_lines(text)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (!line.empty()) out.emplace_back(lineno, line);
  }
  return out;
}

template <typename Int>
Int parse_field(std::string_view tok, const std::string& where, const char* what) {
  const auto v = detail::parse_int<Int>(tok);
  if (!v) throw ParseError(where, std::string("expected ") + what + ", got '" + std::string(tok) + "'");
  return *v;
}

double parse_real(std::string_view tok, const std::string& where, const char* what) {
  const auto v = detail::parse_double(tok);
  if (!v) throw ParseError(where, std::string("expected ") + what + ", got '" + std::string(tok) + "'");
  return *v;
}

drafting::DraftFormula parse_formula(std::string_view text, const std::string& where) {
  try {
    return drafting::DraftFormula::parse(std::string(text));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(where, e.what());
  }
}

// Splits "keyword rest..." into the keyword and the remainder.
std::pair<std::string_view, std::string_view> head(std::string_view line) {
  const auto sp = line.find_first_of(" \t");
  if (sp == std::string_view::npos) return {line, {}};
  return {line.substr(0, sp), detail::trim(line.substr(sp))};
}

std::vector<TokenId> parse_ids(std::string_view text, const std::string& where) {
  std::vector<TokenId> ids;
  for (auto tok : detail::split_ws(text)) ids.push_back(parse_field<TokenId>(tok, where, "a token id"));
  return ids;
}

template <typename T>
void append_joined(std::string& out, const std::vector<T>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(' ');
    out += std::to_string(values[i]);
  }
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<std::vector<TokenId>> parse_sequences(std::string_view text, const std::string& source, int vocab_size) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& [lineno, line] : content_lines(text)) {
    const auto where = detail::location(source, lineno);
    auto ids = parse_ids(line, where);
    for (TokenId id : ids) {
      if (id < 1 || (vocab_size > 0 && id > vocab_size)) {
        throw ParseError(where, "token id " + std::to_string(id) + " out of range");
      }
    }
    out.push_back(std::move(ids));
  }
  return out;
}

std::string format_sequences(const std::vector<std::vector<TokenId>>& sequences) {
  std::string out;
  for (const auto& s : sequences) {
    append_joined(out, s);
    out.push_back('\n');
  }
  return out;
}

std::vector<std::vector<TokenId>> read_sequences(const std::filesystem::path& path, int vocab_size) {
  return parse_sequences(read_text(path), path.string(), vocab_size);
}

std::string format_model(const model::ToyDenoiser& m) {
  const auto v = static_cast<std::size_t>(m.vocab_size());
  std::string out = "spiffy-toy-model 1\n";
  out += "V " + std::to_string(v) + "\n";
  out += "alpha " + detail::format_double(m.params().alpha) + "\n";
  out += "lambda_left " + detail::format_double(m.params().lambda_left) + "\n";
  out += "lambda_right " + detail::format_double(m.params().lambda_right) + "\n";
  out += "lambda_uni " + detail::format_double(m.params().lambda_uni) + "\n";
  out += "unigram ";
  append_joined(out, m.unigram_counts());
  out.push_back('\n');
  auto table = [&](const char* name, const std::vector<std::uint64_t>& counts) {
    for (std::size_t a = 0; a <= v; ++a) {
      out += std::string(name) + " " + std::to_string(a);
      for (std::size_t b = 0; b < v; ++b) out += " " + std::to_string(counts[a * v + b]);
      out.push_back('\n');
    }
  };
  table("left", m.left_counts());
  table("right", m.right_counts());
  return out;
}

model::ToyDenoiser parse_model(std::string_view text, const std::string& source) {
  const auto lines = content_lines(text);
  if (lines.empty() || lines.front().second != "spiffy-toy-model 1") {
    throw ParseError(detail::location(source, lines.empty() ? 1 : lines.front().first),
                     "expected header 'spiffy-toy-model 1'");
  }
  int v = 0;
  model::ToyParams params;
  std::vector<std::uint64_t> uni, left, right;
  std::vector<bool> left_seen, right_seen;
  std::map<std::string, std::size_t> seen;

  for (std::size_t n = 1; n < lines.size(); ++n) {
    const auto& [lineno, line] = lines[n];
    const auto where = detail::location(source, lineno);
    const auto [key, rest] = head(line);
    const std::string k(key);
    const bool is_row = k == "left" || k == "right";
    if (!is_row && !seen.emplace(k, lineno).second) throw ParseError(where, "duplicate key '" + k + "'");

    if (k == "V") {
      v = parse_field<int>(rest, where, "vocabulary size");
      if (v < 1) throw ParseError(where, "V must be >= 1");
      const auto rows = static_cast<std::size_t>(v + 1) * static_cast<std::size_t>(v);
      left.assign(rows, 0);
      right.assign(rows, 0);
      left_seen.assign(static_cast<std::size_t>(v + 1), false);
      right_seen.assign(static_cast<std::size_t>(v + 1), false);
    } else if (k == "alpha") {
      params.alpha = parse_real(rest, where, "a real");
    } else if (k == "lambda_left") {
      params.lambda_left = parse_real(rest, where, "a real");
    } else if (k == "lambda_right") {
      params.lambda_right = parse_real(rest, where, "a real");
    } else if (k == "lambda_uni") {
      params.lambda_uni = parse_real(rest, where, "a real");
    } else if (k == "unigram" || is_row) {
      if (v == 0) throw ParseError(where, "'" + k + "' before 'V'");
      auto toks = detail::split_ws(rest);
      std::size_t first = 0;
      std::size_t row = 0;
      if (is_row) {
        if (toks.empty()) throw ParseError(where, "missing context id");
        row = parse_field<std::size_t>(toks[0], where, "a context id");
        if (row > static_cast<std::size_t>(v)) throw ParseError(where, "context id out of range");
        auto& marks = k == "left" ? left_seen : right_seen;
        if (marks[row]) throw ParseError(where, "duplicate " + k + " row " + std::to_string(row));
        marks[row] = true;
        first = 1;
      }
      if (toks.size() - first != static_cast<std::size_t>(v)) {
        throw ParseError(where, "expected " + std::to_string(v) + " counts");
      }
      std::vector<std::uint64_t> counts;
      for (std::size_t t = first; t < toks.size(); ++t) counts.push_back(parse_field<std::uint64_t>(toks[t], where, "a count"));
      if (k == "unigram") {
        uni = std::move(counts);
      } else {
        auto& dst = k == "left" ? left : right;
        std::copy(counts.begin(), counts.end(), dst.begin() + static_cast<std::ptrdiff_t>(row * static_cast<std::size_t>(v)));
      }
    } else {
      throw ParseError(where, "unknown key '" + k + "'");
    }
  }

  const auto end = detail::location(source, lines.back().first);
  if (v == 0) throw ParseError(end, "missing 'V'");
  if (uni.empty()) throw ParseError(end, "missing 'unigram'");
  for (int a = 0; a <= v; ++a) {
    if (!left_seen[static_cast<std::size_t>(a)] || !right_seen[static_cast<std::size_t>(a)]) {
      throw ParseError(end, "missing count row for context " + std::to_string(a));
    }
  }
  try {
    return model::ToyDenoiser::from_counts(v, params, std::move(left), std::move(right), std::move(uni));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(source, e.what());
  }
}

model::ToyDenoiser read_model(const std::filesystem::path& path) { return parse_model(read_text(path), path.string()); }

std::string format_graph(const drafting::DraftGraph& g) {
  const std::size_t budget = g.budget() ? g.budget() : g.size();
  std::string out = "D " + std::to_string(budget) + "\n";
  out += "tokens_per_level " + std::to_string(g.tokens_per_level()) + "\n";
  for (const auto& f : g.nodes()) out += f.to_string() + "\n";
  return out;
}

drafting::DraftGraph parse_graph(std::string_view text, const std::string& source) {
  std::optional<std::size_t> budget;
  std::optional<int> tpl;
  std::vector<drafting::DraftFormula> nodes;
  std::size_t last = 1;
  for (const auto& [lineno, line] : content_lines(text)) {
    last = lineno;
    const auto where = detail::location(source, lineno);
    const auto [key, rest] = head(line);
    if (key == "D") {
      if (budget) throw ParseError(where, "duplicate 'D'");
      budget = parse_field<std::size_t>(rest, where, "a draft budget");
    } else if (key == "tokens_per_level") {
      if (tpl) throw ParseError(where, "duplicate 'tokens_per_level'");
      tpl = parse_field<int>(rest, where, "tokens per level");
      if (*tpl < 1) throw ParseError(where, "tokens_per_level must be >= 1");
    } else {
      nodes.push_back(parse_formula(line, where));
    }
  }
  if (!budget) throw ParseError(detail::location(source, last), "missing 'D'");
  if (!tpl) throw ParseError(detail::location(source, last), "missing 'tokens_per_level'");
  try {
    return drafting::build_graph(std::move(nodes), *tpl, *budget);
  } catch (const Error& e) {
    throw ParseError(source, e.what());
  }
}

drafting::DraftGraph read_graph(const std::filesystem::path& path) { return parse_graph(read_text(path), path.string()); }

std::string format_records(const std::vector<calibration::CalibrationRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += std::to_string(r.sample_id) + " " + std::to_string(r.origin_step) + " " + std::to_string(r.lookahead) + " " +
           r.pairs.to_string() + "\n";
  }
  return out;
}

std::vector<calibration::CalibrationRecord> parse_records(std::string_view text, const std::string& source) {
  std::vector<calibration::CalibrationRecord> out;
  for (const auto& [lineno, line] : content_lines(text)) {
    const auto where = detail::location(source, lineno);
    const auto toks = detail::split_ws(line);
    if (toks.size() < 4) throw ParseError(where, "expected 'sample_id origin_step lookahead i:j ...'");
    calibration::CalibrationRecord r;
    r.sample_id = parse_field<std::size_t>(toks[0], where, "a sample id");
    r.origin_step = parse_field<std::size_t>(toks[1], where, "an origin step");
    r.lookahead = parse_field<int>(toks[2], where, "a lookahead");
    if (r.lookahead < 1) throw ParseError(where, "lookahead must be >= 1");
    const auto rest = line.substr(static_cast<std::size_t>(toks[3].data() - line.data()));
    r.pairs = parse_formula(rest, where);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_table(const calibration::CandidateTable& table) {
  std::string out = "tokens_per_level " + std::to_string(table.tokens_per_level) + "\n";
  for (std::size_t k = 0; k < table.levels.size(); ++k) {
    for (const auto& e : table.levels[k]) {
      out += std::to_string(k + 1) + " " + std::to_string(e.count) + " " + e.formula.to_string() + "\n";
    }
  }
  return out;
}

calibration::CandidateTable parse_table(std::string_view text, const std::string& source) {
  calibration::CandidateTable table;
  bool have_tpl = false;
  for (const auto& [lineno, line] : content_lines(text)) {
    const auto where = detail::location(source, lineno);
    const auto [key, rest] = head(line);
    if (key == "tokens_per_level") {
      if (have_tpl) throw ParseError(where, "duplicate 'tokens_per_level'");
      table.tokens_per_level = parse_field<int>(rest, where, "tokens per level");
      if (table.tokens_per_level < 1) throw ParseError(where, "tokens_per_level must be >= 1");
      have_tpl = true;
      continue;
    }
    const auto toks = detail::split_ws(line);
    if (toks.size() < 3) throw ParseError(where, "expected 'level count i:j ...'");
    const auto level = parse_field<std::size_t>(toks[0], where, "a level");
    if (level < 1) throw ParseError(where, "level must be >= 1");
    const auto count = parse_field<long>(toks[1], where, "a count");
    auto formula = parse_formula(line.substr(static_cast<std::size_t>(toks[2].data() - line.data())), where);
    if (formula.size() != level * static_cast<std::size_t>(table.tokens_per_level)) {
      throw ParseError(where, "level " + std::to_string(level) + " formula has " + std::to_string(formula.size()) +
                                  " pairs");
    }
    if (table.levels.size() < level) table.levels.resize(level);
    table.levels[level - 1].push_back({std::move(formula), count});
  }
  return table;
}

std::string format_sequence_state(const SequenceState& s) {
  std::string out = "prompt";
  for (TokenId t : s.prompt) out += " " + std::to_string(t);
  out += "\nactive " + std::to_string(s.active) + "\n";
  for (const auto& b : s.blocks) {
    out += "block";
    for (TokenId t : b.tokens()) out += " " + std::to_string(t);
    out.push_back('\n');
  }
  return out;
}

SequenceState parse_sequence_state(std::string_view text, const std::string& source) {
  SequenceState s;
  bool have_prompt = false;
  bool have_active = false;
  std::size_t last = 1;
  for (const auto& [lineno, line] : content_lines(text)) {
    last = lineno;
    const auto where = detail::location(source, lineno);
    const auto [key, rest] = head(line);
    if (key == "prompt") {
      if (have_prompt) throw ParseError(where, "duplicate 'prompt'");
      s.prompt = parse_ids(rest, where);
      have_prompt = true;
    } else if (key == "active") {
      if (have_active) throw ParseError(where, "duplicate 'active'");
      s.active = parse_field<std::size_t>(rest, where, "a block index");
      have_active = true;
    } else if (key == "block") {
      auto ids = parse_ids(rest, where);
      if (!s.blocks.empty() && ids.size() != s.blocks.front().size()) throw ParseError(where, "block length differs");
      s.blocks.emplace_back(std::move(ids));
    } else {
      throw ParseError(where, "unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_prompt) throw ParseError(detail::location(source, last), "missing 'prompt'");
  if (!have_active) throw ParseError(detail::location(source, last), "missing 'active'");
  return s;
}

}  // namespace spiffy::formats
