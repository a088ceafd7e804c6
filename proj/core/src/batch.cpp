#include "spiffy/batch.hpp"

#include <algorithm>
#include <numeric>

#include "spiffy/types.hpp"

namespace spiffy::batch {

namespace {

LayoutShape checked_shape(std::size_t prompt_len, std::size_t num_blocks, std::size_t block_size, std::size_t active,
                          std::size_t num_drafts) {
  if (active >= num_blocks) {
    throw Error("active block " + std::to_string(active) + " out of range [0, " + std::to_string(num_blocks) + ")");
  }
  if (block_size == 0) throw Error("block size must be positive");
  return LayoutShape{prompt_len, num_blocks, block_size, active, num_drafts};
}

}  // namespace

AttentionMask::AttentionMask(LayoutShape shape) : shape_(shape), cells_(shape.side() * shape.side(), 0) {}

std::size_t AttentionMask::row_count(std::size_t query) const {
  const auto* row = cells_.data() + query * side();
  return static_cast<std::size_t>(std::count(row, row + side(), std::uint8_t{1}));
}

std::string AttentionMask::dump() const {
  std::string out;
  out.reserve(side() * (side() + 1));
  for (std::size_t q = 0; q < side(); ++q) {
    for (std::size_t k = 0; k < side(); ++k) out.push_back(allowed(q, k) ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

AttentionMask build_mask(std::size_t prompt_len, std::size_t num_blocks, std::size_t block_size, std::size_t active,
                         std::size_t num_drafts) {
  const LayoutShape shape = checked_shape(prompt_len, num_blocks, block_size, active, num_drafts);
  AttentionMask mask(shape);
  const std::size_t ctx = shape.context_len();
  const std::size_t side = shape.side();
  const std::size_t kb = shape.active_begin();
  const std::size_t ke = kb + block_size;

  for (std::size_t q = 0; q < ctx; ++q) {
    for (std::size_t k = 0; k < ctx; ++k) mask.set(q, k, true);
  }
  for (std::size_t m = 0; m < num_drafts; ++m) {
    const std::size_t db = shape.draft_begin(m);
    const std::size_t de = db + block_size;
    for (std::size_t q = db; q < de; ++q) {
      for (std::size_t k = 0; k < side; ++k) {
        const bool context_visible = k < ctx && (k < kb || k >= ke);
        const bool own = k >= db && k < de;
        mask.set(q, k, context_visible || own);
      }
    }
  }
  return mask;
}

PositionIds build_position_ids(std::size_t prompt_len, std::size_t num_blocks, std::size_t block_size,
                               std::size_t active, std::size_t num_drafts) {
  const LayoutShape shape = checked_shape(prompt_len, num_blocks, block_size, active, num_drafts);
  PositionIds p{shape, std::vector<std::int64_t>(shape.side())};
  std::iota(p.ids.begin(), p.ids.begin() + static_cast<std::ptrdiff_t>(shape.context_len()), std::int64_t{0});
  for (std::size_t m = 0; m < num_drafts; ++m) {
    for (std::size_t i = 0; i < block_size; ++i) {
      p.ids[shape.draft_begin(m) + i] = static_cast<std::int64_t>(shape.active_begin() + i);
    }
  }
  return p;
}

AttentionLayout build_layout(const LayoutShape& s) {
  return {build_mask(s.prompt_len, s.num_blocks, s.block_size, s.active, s.num_drafts),
          build_position_ids(s.prompt_len, s.num_blocks, s.block_size, s.active, s.num_drafts)};
}

}  // namespace spiffy::batch
