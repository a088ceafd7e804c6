#include "spiffy/schedule.hpp"

#include "text_util.hpp"

namespace spiffy {

UnmaskSchedule UnmaskSchedule::fixed(int tokens_per_step) {
  if (tokens_per_step < 1) throw Error("fixed schedule needs at least 1 token per step");
  UnmaskSchedule s;
  s.mode_ = FixedRate{tokens_per_step};
  return s;
}

UnmaskSchedule UnmaskSchedule::threshold(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error("threshold must lie in (0, 1]");
  UnmaskSchedule s;
  s.mode_ = ConfidenceThreshold{p};
  return s;
}

UnmaskSchedule UnmaskSchedule::parse(std::string_view text) {
  text = detail::trim(text);
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw Error("bad schedule '" + std::string(text) + "': expected fixed:<s> or threshold:<p>");
  }
  const auto kind = text.substr(0, colon);
  const auto arg = text.substr(colon + 1);
  if (kind == "fixed") {
    const auto s = detail::parse_int<int>(arg);
    if (!s || *s < 1) throw Error("bad schedule '" + std::string(text) + "': s must be an integer >= 1");
    return fixed(*s);
  }
  if (kind == "threshold") {
    const auto p = detail::parse_double(arg);
    if (!p || !(*p > 0.0 && *p <= 1.0)) {
      throw Error("bad schedule '" + std::string(text) + "': p must lie in (0, 1]");
    }
    return threshold(*p);
  }
  throw Error("bad schedule '" + std::string(text) + "': unknown mode '" + std::string(kind) + "'");
}

int UnmaskSchedule::tokens_per_step() const {
  if (const auto* f = std::get_if<FixedRate>(&mode_)) return f->tokens_per_step;
  throw Error("threshold schedule has no fixed tokens-per-step");
}

double UnmaskSchedule::threshold_value() const {
  if (const auto* t = std::get_if<ConfidenceThreshold>(&mode_)) return t->threshold;
  throw Error("fixed schedule has no threshold");
}

std::string UnmaskSchedule::to_string() const {
  if (is_fixed()) return "fixed:" + std::to_string(tokens_per_step());
  return "threshold:" + detail::format_double(threshold_value());
}

long remaining_nfe_without_speculation(const SequenceState& state, const UnmaskSchedule& schedule) {
  long total = 0;
  for (std::size_t b = 0; b < state.blocks.size(); ++b) {
    const auto masked = static_cast<long>(state.blocks[b].masked_count());
    if (schedule.is_fixed()) {
      const long s = schedule.tokens_per_step();
      total += (masked + s - 1) / s;
    } else {
      total += masked;
    }
  }
  return total;
}

}  // namespace spiffy
