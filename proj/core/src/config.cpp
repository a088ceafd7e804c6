#include "spiffy/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "text_util.hpp"

namespace spiffy {

void GenerationConfig::validate() const {
  if (block_size < 1) throw Error("config: L must be >= 1");
  if (generation_length < 1) throw Error("config: W must be >= 1");
  if (generation_length % block_size != 0) {
    throw Error("config: W=" + std::to_string(generation_length) + " is not divisible by L=" +
                std::to_string(block_size));
  }
  if (top_k_vocab < 1) throw Error("config: top_k_vocab must be >= 1");
  if (eot_token < 1) throw Error("config: eot_token must be a real token id (>= 1)");
}

std::string format_config(const GenerationConfig& c) {
  std::ostringstream os;
  os << "W = " << c.generation_length << '\n';
  os << "L = " << c.block_size << '\n';
  if (c.schedule.is_fixed()) {
    os << "schedule.mode = fixed\n";
    os << "schedule.s = " << c.schedule.tokens_per_step() << '\n';
  } else {
    os << "schedule.mode = threshold\n";
    os << "schedule.p = " << detail::format_double(c.schedule.threshold_value()) << '\n';
  }
  os << "top_k_vocab = " << c.top_k_vocab << '\n';
  os << "eot_token = " << c.eot_token << '\n';
  os << "seed = " << c.seed << '\n';
  return os.str();
}

GenerationConfig parse_config(std::string_view text, const std::string& source) {
  GenerationConfig c;
  std::map<std::string, std::pair<std::string, std::size_t>> kv;
  std::size_t lineno = 0;
  for (auto line : detail::split_lines(text)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(detail::location(source, lineno), "expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (kv.contains(key)) throw ParseError(detail::location(source, lineno), "duplicate key '" + key + "'");
    kv[key] = {value, lineno};
  }

  auto int_of = [&](const std::string& key, auto& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    using T = std::remove_reference_t<decltype(out)>;
    const auto v = detail::parse_int<T>(it->second.first);
    if (!v) throw ParseError(detail::location(source, it->second.second), "'" + key + "' must be an integer");
    out = *v;
  };
  int_of("W", c.generation_length);
  int_of("L", c.block_size);
  int_of("top_k_vocab", c.top_k_vocab);
  int_of("eot_token", c.eot_token);
  int_of("seed", c.seed);

  std::string mode = "fixed";
  if (auto it = kv.find("schedule.mode"); it != kv.end()) mode = it->second.first;
  try {
    if (mode == "fixed") {
      int s = 1;
      int_of("schedule.s", s);
      c.schedule = UnmaskSchedule::fixed(s);
    } else if (mode == "threshold") {
      double p = 0.9;
      if (auto it = kv.find("schedule.p"); it != kv.end()) {
        const auto v = detail::parse_double(it->second.first);
        if (!v) throw ParseError(detail::location(source, it->second.second), "'schedule.p' must be a number");
        p = *v;
      }
      c.schedule = UnmaskSchedule::threshold(p);
    } else {
      throw Error("unknown schedule.mode '" + mode + "'");
    }
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    const auto it = kv.find("schedule.mode");
    throw ParseError(it == kv.end() ? source : detail::location(source, it->second.second), e.what());
  }

  static const char* const kKnown[] = {"W", "L", "schedule.mode", "schedule.s", "schedule.p",
                                       "top_k_vocab", "eot_token", "seed"};
  for (const auto& [key, value] : kv) {
    bool known = false;
    for (const char* k : kKnown) known = known || key == k;
    if (!known) throw ParseError(detail::location(source, value.second), "unknown key '" + key + "'");
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw ParseError(source, e.what());
  }
  return c;
}

GenerationConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void write_config(const std::filesystem::path& path, const GenerationConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << format_config(config);
}

}  // namespace spiffy
