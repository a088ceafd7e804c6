#include "spiffy/types.hpp"

#include <algorithm>
#include <cstring>

namespace spiffy {

std::size_t BlockState::unmasked_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(tokens_.begin(), tokens_.end(), [](TokenId t) { return t != kMaskToken; }));
}

std::vector<std::size_t> BlockState::masked_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] == kMaskToken) out.push_back(i);
  }
  return out;
}

void BlockState::unmask(std::size_t pos, TokenId token) {
  if (pos >= tokens_.size()) throw Error("unmask: position " + std::to_string(pos) + " out of range");
  if (tokens_[pos] != kMaskToken) throw Error("unmask: position " + std::to_string(pos) + " already unmasked");
  if (token == kMaskToken) throw Error("unmask: cannot commit the MASK token");
  tokens_[pos] = token;
}

SequenceState SequenceState::initial(std::vector<TokenId> prompt, std::size_t num_blocks, std::size_t block_size) {
  SequenceState s;
  s.prompt = std::move(prompt);
  s.blocks.assign(num_blocks, BlockState::masked(block_size));
  s.active = 0;
  return s;
}

std::size_t SequenceState::masked_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.masked_count();
  return n;
}

SequenceState SequenceState::with_active_block(BlockState block) const {
  SequenceState s = *this;
  s.blocks.at(active) = std::move(block);
  return s;
}

std::vector<TokenId> SequenceState::flatten() const {
  std::vector<TokenId> out(prompt);
  for (const auto& b : blocks) out.insert(out.end(), b.tokens().begin(), b.tokens().end());
  return out;
}

std::vector<TokenId> SequenceState::generated() const {
  std::vector<TokenId> out;
  out.reserve(generation_length());
  for (const auto& b : blocks) out.insert(out.end(), b.tokens().begin(), b.tokens().end());
  return out;
}

std::vector<std::string> validate_sequence(const SequenceState& state, int vocab_size) {
  std::vector<std::string> v;
  const std::size_t n = state.blocks.size();
  if (n == 0) {
    v.emplace_back("sequence has no blocks");
    return v;
  }
  if (state.active >= n) {
    v.push_back("active index " + std::to_string(state.active) + " out of range [0, " + std::to_string(n) + ")");
  }
  const std::size_t len = state.blocks.front().size();
  if (len == 0) v.emplace_back("block size is zero");
  for (std::size_t i = 0; i < state.prompt.size(); ++i) {
    const TokenId t = state.prompt[i];
    if (t == kMaskToken) v.push_back("prompt position " + std::to_string(i) + " is MASK");
    if (t < 0 || (vocab_size > 0 && t > vocab_size)) {
      v.push_back("prompt position " + std::to_string(i) + " token " + std::to_string(t) + " out of range");
    }
  }
  for (std::size_t b = 0; b < n; ++b) {
    const auto& block = state.blocks[b];
    if (block.size() != len) {
      v.push_back("block " + std::to_string(b) + " length " + std::to_string(block.size()) + " != " +
                  std::to_string(len));
    }
    for (std::size_t p = 0; p < block.size(); ++p) {
      const TokenId t = block[p];
      if (t < 0 || (vocab_size > 0 && t > vocab_size)) {
        v.push_back("block " + std::to_string(b) + " position " + std::to_string(p) + " token " +
                    std::to_string(t) + " out of range");
      }
    }
    if (b < state.active && !block.complete()) v.push_back("block " + std::to_string(b) + " not fully unmasked");
    if (b > state.active && block.unmasked_count() != 0) v.push_back("block " + std::to_string(b) + " not fully masked");
  }
  return v;
}

Marginals::Marginals(std::size_t positions, int vocab_size)
    : positions_(positions), vocab_(vocab_size), data_(positions * static_cast<std::size_t>(vocab_size), 0.0) {
  if (vocab_size <= 0) throw Error("Marginals: vocabulary size must be positive");
}

Marginals Marginals::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw Error("Marginals: no rows");
  Marginals m(rows.size(), static_cast<int>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw Error("Marginals: ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

std::span<double> Marginals::row(std::size_t pos) {
  const auto v = static_cast<std::size_t>(vocab_);
  return std::span<double>(data_).subspan(pos * v, v);
}

std::span<const double> Marginals::row(std::size_t pos) const {
  const auto v = static_cast<std::size_t>(vocab_);
  return std::span<const double>(data_).subspan(pos * v, v);
}

TopChoice Marginals::top(std::size_t pos) const {
  const auto r = row(pos);
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (r[i] > r[best]) best = i;
  }
  return {static_cast<TokenId>(best + 1), r[best]};
}

void Marginals::set_one_hot(std::size_t pos, TokenId token) {
  auto r = row(pos);
  std::fill(r.begin(), r.end(), 0.0);
  r[static_cast<std::size_t>(token - 1)] = 1.0;
}

bool operator==(const Marginals& a, const Marginals& b) {
  return a.positions_ == b.positions_ && a.vocab_ == b.vocab_ &&
         (a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0);
}

}  // namespace spiffy
