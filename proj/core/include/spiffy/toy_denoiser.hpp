#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spiffy/oracle.hpp"

namespace spiffy::model {

struct ToyParams {
  double alpha = 1.0;  // Laplace smoothing constant, > 0
  double lambda_left = 0.6;
  double lambda_right = 0.3;
  double lambda_uni = 0.1;

  void validate() const;
  friend bool operator==(const ToyParams&, const ToyParams&) = default;
};

// Nearest committed token on one side of a masked slot and the number of
// masked slots between them.
struct Neighbor {
  TokenId token = kMaskToken;
  std::size_t gap = 0;
};

// Deterministic corpus-trained masked denoiser. Each masked slot gets
//   w_l * P_left(. | left neighbour) + w_r * P_right(. | right neighbour) + w_u * P_uni(.)
// with w_l = lambda_left * 0.5^gap_left (0 without a neighbour), likewise w_r,
// and w_u absorbing the rest. All three P are alpha-smoothed counts.
class ToyDenoiser final : public DlmOracle {
 public:
  // `vocab_size` 0 infers V from the largest id in the corpus.
  static ToyDenoiser train(std::span<const std::vector<TokenId>> corpus, int vocab_size, const ToyParams& params);

  // Count tables: left/right are (V+1) x V row-major, indexed [context][token-1].
  static ToyDenoiser from_counts(int vocab_size, const ToyParams& params, std::vector<std::uint64_t> bigram_left,
                                 std::vector<std::uint64_t> bigram_right, std::vector<std::uint64_t> unigram);

  int vocab_size() const override { return vocab_; }
  const ToyParams& params() const noexcept { return params_; }

  // Count of b immediately following a.
  std::uint64_t bigram_left(TokenId a, TokenId b) const { return left_counts_[index(a, b)]; }
  // Count of b immediately preceding a.
  std::uint64_t bigram_right(TokenId a, TokenId b) const { return right_counts_[index(a, b)]; }
  std::uint64_t unigram(TokenId b) const { return uni_counts_[static_cast<std::size_t>(b - 1)]; }

  const std::vector<std::uint64_t>& left_counts() const noexcept { return left_counts_; }
  const std::vector<std::uint64_t>& right_counts() const noexcept { return right_counts_; }
  const std::vector<std::uint64_t>& unigram_counts() const noexcept { return uni_counts_; }

  double left_prob(TokenId context, TokenId b) const { return left_prob_[index(context, b)]; }
  double right_prob(TokenId context, TokenId b) const { return right_prob_[index(context, b)]; }
  double unigram_prob(TokenId b) const { return uni_prob_[static_cast<std::size_t>(b - 1)]; }

  Marginals forward(const SequenceState& state) const override;

  // Evaluates a verification layout using only what the attention mask exposes:
  // each masked query row finds its neighbours among the keys it may attend to,
  // ordered by position id. Returns rows for block k (target) and every draft.
  BatchedMarginals forward_masked(std::span<const TokenId> layout_tokens, const batch::AttentionLayout& layout) const;

  // Mixture row for one masked slot.
  void mix_row(std::optional<Neighbor> left, std::optional<Neighbor> right, std::span<double> out) const;

  friend bool operator==(const ToyDenoiser& a, const ToyDenoiser& b) {
    return a.vocab_ == b.vocab_ && a.params_ == b.params_ && a.left_counts_ == b.left_counts_ &&
           a.right_counts_ == b.right_counts_ && a.uni_counts_ == b.uni_counts_;
  }

 private:
  ToyDenoiser() = default;
  std::size_t index(TokenId context, TokenId b) const {
    return static_cast<std::size_t>(context) * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(b - 1);
  }
  void compute_probabilities();

  int vocab_ = 0;
  ToyParams params_;
  std::vector<std::uint64_t> left_counts_;
  std::vector<std::uint64_t> right_counts_;
  std::vector<std::uint64_t> uni_counts_;
  std::vector<double> left_prob_;
  std::vector<double> right_prob_;
  std::vector<double> uni_prob_;
};

}  // namespace spiffy::model
