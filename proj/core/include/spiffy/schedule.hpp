#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "spiffy/types.hpp"

namespace spiffy {

struct FixedRate {
  int tokens_per_step = 1;
  friend bool operator==(const FixedRate&, const FixedRate&) = default;
};

struct ConfidenceThreshold {
  double threshold = 0.9;
  friend bool operator==(const ConfidenceThreshold&, const ConfidenceThreshold&) = default;
};

// How many tokens one denoising step commits: a hard-coded count or every
// position whose top-1 probability clears a threshold (always at least one).
class UnmaskSchedule {
 public:
  UnmaskSchedule() = default;

  static UnmaskSchedule fixed(int tokens_per_step);
  static UnmaskSchedule threshold(double p);
  // Accepts "fixed:<s>" and "threshold:<p>".
  static UnmaskSchedule parse(std::string_view text);

  bool is_fixed() const noexcept { return std::holds_alternative<FixedRate>(mode_); }
  bool is_threshold() const noexcept { return !is_fixed(); }
  int tokens_per_step() const;
  double threshold_value() const;

  std::string to_string() const;

  friend bool operator==(const UnmaskSchedule&, const UnmaskSchedule&) = default;

 private:
  std::variant<FixedRate, ConfidenceThreshold> mode_{FixedRate{}};
};

// Model calls a vanilla run still needs from `state`. Exact for fixed
// schedules; for thresholds it is the masked-token count, an upper bound.
long remaining_nfe_without_speculation(const SequenceState& state, const UnmaskSchedule& schedule);

}  // namespace spiffy
