#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spiffy {

using TokenId = std::int32_t;

// Vocabulary id 0 is the MASK symbol; real tokens are 1..V.
inline constexpr TokenId kMaskToken = 0;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input document. `where` is "<file>:<line>" when known.
class ParseError : public Error {
 public:
  ParseError(std::string where, const std::string& what)
      : Error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

// One block of L token slots, each either MASK or a committed real token.
class BlockState {
 public:
  BlockState() = default;
  explicit BlockState(std::vector<TokenId> tokens) : tokens_(std::move(tokens)) {}

  static BlockState masked(std::size_t length) { return BlockState(std::vector<TokenId>(length, kMaskToken)); }

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId operator[](std::size_t pos) const { return tokens_[pos]; }
  std::span<const TokenId> tokens() const noexcept { return tokens_; }

  bool is_masked(std::size_t pos) const { return tokens_[pos] == kMaskToken; }
  std::size_t unmasked_count() const noexcept;
  std::size_t masked_count() const noexcept { return size() - unmasked_count(); }
  bool complete() const noexcept { return unmasked_count() == size(); }
  std::vector<std::size_t> masked_positions() const;

  // Commits `token` at a currently masked position.
  void unmask(std::size_t pos, TokenId token);

  friend bool operator==(const BlockState&, const BlockState&) = default;

 private:
  std::vector<TokenId> tokens_;
};

// Prompt followed by N blocks of L slots; blocks are denoised strictly left to right.
struct SequenceState {
  std::vector<TokenId> prompt;
  std::vector<BlockState> blocks;
  std::size_t active = 0;

  static SequenceState initial(std::vector<TokenId> prompt, std::size_t num_blocks, std::size_t block_size);

  std::size_t num_blocks() const noexcept { return blocks.size(); }
  std::size_t block_size() const noexcept { return blocks.empty() ? 0 : blocks.front().size(); }
  std::size_t generation_length() const noexcept { return num_blocks() * block_size(); }
  std::size_t masked_count() const noexcept;

  const BlockState& active_block() const { return blocks.at(active); }
  SequenceState with_active_block(BlockState block) const;

  // Prompt + all blocks, flattened.
  std::vector<TokenId> flatten() const;
  // Generated region only (all blocks, in order).
  std::vector<TokenId> generated() const;

  friend bool operator==(const SequenceState&, const SequenceState&) = default;
};

// Returns one message per broken invariant; empty iff the state is well formed.
// `vocab_size` > 0 additionally range-checks every token id.
std::vector<std::string> validate_sequence(const SequenceState& state, int vocab_size = 0);

struct TopChoice {
  TokenId token = kMaskToken;
  double prob = 0.0;
};

// Per-position probability rows over real tokens 1..V for the active block.
// Masked rows are distributions; unmasked rows are one-hot on the committed token.
class Marginals {
 public:
  Marginals() = default;
  Marginals(std::size_t positions, int vocab_size);

  static Marginals from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t positions() const noexcept { return positions_; }
  int vocab_size() const noexcept { return vocab_; }

  std::span<double> row(std::size_t pos);
  std::span<const double> row(std::size_t pos) const;
  double prob(std::size_t pos, TokenId token) const { return row(pos)[static_cast<std::size_t>(token - 1)]; }

  // Highest-probability token; ties resolve to the smallest id.
  TopChoice top(std::size_t pos) const;
  void set_one_hot(std::size_t pos, TokenId token);

  // Bitwise comparison of every stored double.
  friend bool operator==(const Marginals& a, const Marginals& b);

 private:
  std::size_t positions_ = 0;
  int vocab_ = 0;
  std::vector<double> data_;
};

}  // namespace spiffy
