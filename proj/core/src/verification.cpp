#include "spiffy/verification.hpp"

#include <algorithm>
#include <numeric>

namespace spiffy::verification {

AdvanceResult advance(const BlockState& block, const Marginals& marginals, const UnmaskSchedule& schedule) {
  if (block.complete()) throw Error("advance: block has no masked positions");
  const auto order = drafting::order_positions(marginals, block);

  std::size_t count = 1;
  if (schedule.is_fixed()) {
    count = std::min(order.size(), static_cast<std::size_t>(schedule.tokens_per_step()));
  } else {
    const double p = schedule.threshold_value();
    const auto n_above = static_cast<std::size_t>(
        std::count_if(order.begin(), order.end(), [&](std::size_t pos) { return marginals.top(pos).prob >= p; }));
    count = std::max<std::size_t>(n_above, 1);
  }

  AdvanceResult r{block, static_cast<int>(count)};
  for (std::size_t i = 0; i < count; ++i) r.block.unmask(order[i], marginals.top(order[i]).token);
  return r;
}

VerifyOutcome verify(const BlockState& block, const Marginals& target, std::span<const drafting::DraftBlock> drafts,
                     std::span<const Marginals> draft_marginals, const UnmaskSchedule& schedule) {
  if (drafts.size() != draft_marginals.size()) {
    throw Error("verify: " + std::to_string(drafts.size()) + " drafts but " + std::to_string(draft_marginals.size()) +
                " draft marginals");
  }
  VerifyOutcome out;
  std::vector<bool> used(drafts.size(), false);
  const Marginals* current = &target;
  std::optional<std::size_t> adopted;
  BlockState state = block;
  bool from_draft = false;

  while (true) {
    auto step = advance(state, *current, schedule);
    state = std::move(step.block);
    ++out.steps_advanced;
    out.realized.push_back(step.realized);
    if (from_draft) out.accepted_realized.push_back(step.realized);
    if (state.complete()) break;

    const std::size_t count = state.unmasked_count();
    std::optional<std::size_t> match;
    for (std::size_t m = 0; m < drafts.size(); ++m) {
      if (!used[m] && drafts[m].step_tag == count && drafts[m].block == state) {
        match = m;
        break;
      }
    }
    if (!match) break;
    used[*match] = true;
    out.accepted_levels.push_back(drafts[*match].level);
    adopted = *match;
    current = &draft_marginals[*match];
    from_draft = true;
  }

  out.new_block = std::move(state);
  if (adopted) out.adopted_marginals = draft_marginals[*adopted];
  return out;
}

double nfe_saving_factor(std::span<const int> total_realized, std::span<const int> accepted_realized) {
  const long total = std::accumulate(total_realized.begin(), total_realized.end(), 0L);
  const long accepted = std::accumulate(accepted_realized.begin(), accepted_realized.end(), 0L);
  if (total - accepted <= 0) throw Error("nfe_saving_factor: every step accepted; the final state always needs a call");
  return static_cast<double>(total) / static_cast<double>(total - accepted);
}

}  // namespace spiffy::verification
