#pragma once

#include <optional>
#include <span>
#include <vector>

#include "spiffy/drafting.hpp"
#include "spiffy/schedule.hpp"

namespace spiffy::verification {

struct AdvanceResult {
  BlockState block;
  int realized = 0;  // S_t actually unmasked by this step
};

// One greedy denoising step (the Next function): fixed schedules unmask the
// argmax token at the top-min(s, masked) slots by top-1 probability; threshold
// schedules unmask every slot whose top-1 probability is >= p, and at least the
// single best one. Throws Error when nothing is masked.
AdvanceResult advance(const BlockState& block, const Marginals& marginals, const UnmaskSchedule& schedule);

struct VerifyOutcome {
  BlockState new_block;
  int steps_advanced = 0;
  std::vector<int> accepted_levels;
  // S of every step taken in this call, in order, and of the steps that ran on
  // accepted-draft marginals (the ones that cost no model call).
  std::vector<int> realized;
  std::vector<int> accepted_realized;
  // Marginals of the last accepted draft, i.e. the distribution that produced
  // new_block; nullopt when new_block came straight from the target.
  std::optional<Marginals> adopted_marginals;
};

// Advances with `target`, then repeatedly accepts the first draft (in scan
// order) whose unmasked count and full content equal the current block, adopts
// its marginals and advances again. Stops when no draft matches or the block
// completes. Throws Error when drafts and draft_marginals are misaligned.
VerifyOutcome verify(const BlockState& block, const Marginals& target, std::span<const drafting::DraftBlock> drafts,
                     std::span<const Marginals> draft_marginals, const UnmaskSchedule& schedule);

// sum(S) / (sum(S) - sum(accepted S)). Throws Error when the denominator is not positive.
double nfe_saving_factor(std::span<const int> total_realized, std::span<const int> accepted_realized);

}  // namespace spiffy::verification
