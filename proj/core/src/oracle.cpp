#include "spiffy/oracle.hpp"

#include <string>

namespace spiffy::model {

BatchedMarginals DlmOracle::forward_batched(const SequenceState& state, std::span<const BlockState> drafts,
                                            const batch::AttentionLayout* layout) const {
  const std::size_t len = state.block_size();
  for (std::size_t m = 0; m < drafts.size(); ++m) {
    if (drafts[m].size() != len) {
      throw Error("draft " + std::to_string(m) + " has length " + std::to_string(drafts[m].size()) +
                  ", expected " + std::to_string(len));
    }
  }
  if (layout != nullptr) {
    const batch::LayoutShape expect{state.prompt.size(), state.num_blocks(), len, state.active, drafts.size()};
    if (!(layout->mask.shape() == expect) || !(layout->positions.shape == expect)) {
      throw Error("attention layout does not match the batched call");
    }
  }

  BatchedMarginals out;
  out.target = forward(state);
  out.per_draft.reserve(drafts.size());
  for (const auto& d : drafts) out.per_draft.push_back(forward(state.with_active_block(d)));
  return out;
}

}  // namespace spiffy::model
