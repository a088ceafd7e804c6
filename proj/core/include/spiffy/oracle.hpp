#pragma once

#include <span>
#include <vector>

#include "spiffy/batch.hpp"
#include "spiffy/types.hpp"

namespace spiffy::model {

struct BatchedMarginals {
  Marginals target;
  std::vector<Marginals> per_draft;
};

// Abstract masked-diffusion model p(X_k(t-1) | X(t)) restricted to the active block.
//
// Implementations must be deterministic: identical inputs give bit-identical
// marginals. forward_batched() is one model call; its outputs must equal
// forward() on the state and on the state with block k replaced by each draft.
class DlmOracle {
 public:
  virtual ~DlmOracle() = default;

  virtual int vocab_size() const = 0;

  // Throws Error("nothing to denoise") when the active block has no masked slot.
  virtual Marginals forward(const SequenceState& state) const = 0;

  // `layout`, when given, must describe exactly this call's token layout.
  virtual BatchedMarginals forward_batched(const SequenceState& state, std::span<const BlockState> drafts,
                                           const batch::AttentionLayout* layout = nullptr) const;
};

}  // namespace spiffy::model
