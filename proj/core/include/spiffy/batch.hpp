#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace spiffy::batch {

// Token layout of one parallel-verification call:
//   [ prompt | block 0 .. block N-1 (block k holds the target) | draft 1 | ... | draft D ]
// Every draft occupies L slots and stands in for block k.
struct LayoutShape {
  std::size_t prompt_len = 0;
  std::size_t num_blocks = 0;
  std::size_t block_size = 0;
  std::size_t active = 0;
  std::size_t num_drafts = 0;

  std::size_t context_len() const noexcept { return prompt_len + num_blocks * block_size; }
  std::size_t side() const noexcept { return context_len() + num_drafts * block_size; }
  std::size_t active_begin() const noexcept { return prompt_len + active * block_size; }
  std::size_t draft_begin(std::size_t m) const noexcept { return context_len() + m * block_size; }

  friend bool operator==(const LayoutShape&, const LayoutShape&) = default;
};

// Square boolean matrix; cell (q, k) is true when query q may attend to key k.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(LayoutShape shape);

  const LayoutShape& shape() const noexcept { return shape_; }
  std::size_t side() const noexcept { return shape_.side(); }
  bool allowed(std::size_t query, std::size_t key) const { return cells_[query * side() + key] != 0; }
  void set(std::size_t query, std::size_t key, bool v) { cells_[query * side() + key] = v ? 1 : 0; }
  std::size_t row_count(std::size_t query) const;

  // One line of '0'/'1' characters per query row.
  std::string dump() const;

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  LayoutShape shape_;
  std::vector<std::uint8_t> cells_;
};

struct PositionIds {
  LayoutShape shape;
  std::vector<std::int64_t> ids;
};

// Context rows see the whole context and no draft; draft rows see the context
// minus block k's slots plus their own L slots. Throws if k >= N.
AttentionMask build_mask(std::size_t prompt_len, std::size_t num_blocks, std::size_t block_size,
                         std::size_t active, std::size_t num_drafts);

// Context ids ramp 0..context_len-1; every draft repeats block k's id range.
PositionIds build_position_ids(std::size_t prompt_len, std::size_t num_blocks, std::size_t block_size,
                               std::size_t active, std::size_t num_drafts);

struct AttentionLayout {
  AttentionMask mask;
  PositionIds positions;
};

AttentionLayout build_layout(const LayoutShape& shape);

}  // namespace spiffy::batch
