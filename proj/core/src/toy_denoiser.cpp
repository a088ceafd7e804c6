#include "spiffy/toy_denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spiffy::model {

void ToyParams::validate() const {
  if (!(alpha > 0.0)) throw Error("alpha must be > 0");
  if (lambda_left < 0.0 || lambda_right < 0.0 || lambda_uni < 0.0) throw Error("mixture weights must be >= 0");
  if (std::abs(lambda_left + lambda_right + lambda_uni - 1.0) > 1e-9) throw Error("mixture weights must sum to 1");
}

ToyDenoiser ToyDenoiser::train(std::span<const std::vector<TokenId>> corpus, int vocab_size,
                               const ToyParams& params) {
  params.validate();
  std::size_t total = 0;
  TokenId max_id = 0;
  for (const auto& seq : corpus) {
    total += seq.size();
    for (TokenId t : seq) {
      if (t < 1 || (vocab_size > 0 && t > vocab_size)) {
        throw Error("token id " + std::to_string(t) + " out of range [1, " +
                    (vocab_size > 0 ? std::to_string(vocab_size) : std::string("V")) + "]");
      }
      max_id = std::max(max_id, t);
    }
  }
  if (total == 0) throw Error("empty corpus");
  const int v = vocab_size > 0 ? vocab_size : max_id;

  const auto rows = static_cast<std::size_t>(v + 1) * static_cast<std::size_t>(v);
  std::vector<std::uint64_t> left(rows, 0), right(rows, 0), uni(static_cast<std::size_t>(v), 0);
  auto at = [v](TokenId a, TokenId b) {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(v) + static_cast<std::size_t>(b - 1);
  };
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      ++uni[static_cast<std::size_t>(seq[i] - 1)];
      if (i + 1 < seq.size()) {
        ++left[at(seq[i], seq[i + 1])];
        ++right[at(seq[i + 1], seq[i])];
      }
    }
  }
  return from_counts(v, params, std::move(left), std::move(right), std::move(uni));
}

ToyDenoiser ToyDenoiser::from_counts(int vocab_size, const ToyParams& params, std::vector<std::uint64_t> bigram_left,
                                     std::vector<std::uint64_t> bigram_right, std::vector<std::uint64_t> unigram) {
  params.validate();
  if (vocab_size < 1) throw Error("vocabulary size must be >= 1");
  const auto rows = static_cast<std::size_t>(vocab_size + 1) * static_cast<std::size_t>(vocab_size);
  if (bigram_left.size() != rows || bigram_right.size() != rows ||
      unigram.size() != static_cast<std::size_t>(vocab_size)) {
    throw Error("count table dimensions do not match V=" + std::to_string(vocab_size));
  }
  ToyDenoiser m;
  m.vocab_ = vocab_size;
  m.params_ = params;
  m.left_counts_ = std::move(bigram_left);
  m.right_counts_ = std::move(bigram_right);
  m.uni_counts_ = std::move(unigram);
  m.compute_probabilities();
  return m;
}

void ToyDenoiser::compute_probabilities() {
  const auto v = static_cast<std::size_t>(vocab_);
  const double alpha = params_.alpha;
  auto smooth = [&](const std::vector<std::uint64_t>& counts, std::vector<double>& probs, std::size_t nrows) {
    probs.assign(counts.size(), 0.0);
    for (std::size_t r = 0; r < nrows; ++r) {
      std::uint64_t sum = 0;
      for (std::size_t c = 0; c < v; ++c) sum += counts[r * v + c];
      const double denom = static_cast<double>(sum) + alpha * static_cast<double>(v);
      for (std::size_t c = 0; c < v; ++c) probs[r * v + c] = (static_cast<double>(counts[r * v + c]) + alpha) / denom;
    }
  };
  smooth(left_counts_, left_prob_, v + 1);
  smooth(right_counts_, right_prob_, v + 1);
  smooth(uni_counts_, uni_prob_, 1);
}

void ToyDenoiser::mix_row(std::optional<Neighbor> left, std::optional<Neighbor> right, std::span<double> out) const {
  const double wl = left ? params_.lambda_left * std::ldexp(1.0, -static_cast<int>(left->gap)) : 0.0;
  const double wr = right ? params_.lambda_right * std::ldexp(1.0, -static_cast<int>(right->gap)) : 0.0;
  const double wu = params_.lambda_uni + (params_.lambda_left - wl) + (params_.lambda_right - wr);
  const auto v = static_cast<std::size_t>(vocab_);
  const double* lp = left ? &left_prob_[static_cast<std::size_t>(left->token) * v] : nullptr;
  const double* rp = right ? &right_prob_[static_cast<std::size_t>(right->token) * v] : nullptr;
  for (std::size_t c = 0; c < v; ++c) {
    double p = wu * uni_prob_[c];
    if (lp) p += wl * lp[c];
    if (rp) p += wr * rp[c];
    out[c] = p;
  }
}

Marginals ToyDenoiser::forward(const SequenceState& state) const {
  const auto& block = state.active_block();
  if (block.complete()) throw Error("nothing to denoise");

  const std::vector<TokenId> flat = state.flatten();
  const std::size_t begin = state.prompt.size() + state.active * state.block_size();
  const std::size_t len = block.size();

  // Nearest committed slot to the left / right of every index (npos if none).
  constexpr auto npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> nearest_left(flat.size(), npos), nearest_right(flat.size(), npos);
  for (std::size_t i = 1, last = npos; i < flat.size(); ++i) {
    if (flat[i - 1] != kMaskToken) last = i - 1;
    nearest_left[i] = last;
  }
  for (std::size_t i = flat.size(), last = npos; i-- > 1;) {
    if (flat[i] != kMaskToken) last = i;
    nearest_right[i - 1] = last;
  }

  Marginals out(len, vocab_);
  for (std::size_t n = 0; n < len; ++n) {
    const std::size_t abs = begin + n;
    if (flat[abs] != kMaskToken) {
      out.set_one_hot(n, flat[abs]);
      continue;
    }
    std::optional<Neighbor> left, right;
    if (nearest_left[abs] != npos) left = Neighbor{flat[nearest_left[abs]], abs - nearest_left[abs] - 1};
    if (nearest_right[abs] != npos) right = Neighbor{flat[nearest_right[abs]], nearest_right[abs] - abs - 1};
    mix_row(left, right, out.row(n));
  }
  return out;
}

BatchedMarginals ToyDenoiser::forward_masked(std::span<const TokenId> layout_tokens,
                                             const batch::AttentionLayout& layout) const {
  const auto& shape = layout.mask.shape();
  const std::size_t side = shape.side();
  if (layout_tokens.size() != side || layout.positions.ids.size() != side) {
    throw Error("layout token count does not match the attention mask");
  }
  const std::size_t len = shape.block_size;

  auto evaluate_segment = [&](std::size_t seg_begin) {
    Marginals out(len, vocab_);
    std::vector<std::pair<std::int64_t, TokenId>> visible;
    for (std::size_t n = 0; n < len; ++n) {
      const std::size_t q = seg_begin + n;
      if (layout_tokens[q] != kMaskToken) {
        out.set_one_hot(n, layout_tokens[q]);
        continue;
      }
      visible.clear();
      for (std::size_t k = 0; k < side; ++k) {
        if (layout.mask.allowed(q, k)) visible.emplace_back(layout.positions.ids[k], layout_tokens[k]);
      }
      std::sort(visible.begin(), visible.end());
      const std::int64_t own = layout.positions.ids[q];
      const auto self = std::lower_bound(visible.begin(), visible.end(), std::make_pair(own, TokenId{0}));
      if (self == visible.end() || self->first != own) throw Error("query cannot see its own slot");

      std::optional<Neighbor> left, right;
      std::size_t gap = 0;
      for (auto it = self; it != visible.begin();) {
        --it;
        if (it->second != kMaskToken) {
          left = Neighbor{it->second, gap};
          break;
        }
        ++gap;
      }
      gap = 0;
      for (auto it = self + 1; it != visible.end(); ++it) {
        if (it->second != kMaskToken) {
          right = Neighbor{it->second, gap};
          break;
        }
        ++gap;
      }
      mix_row(left, right, out.row(n));
    }
    return out;
  };

  BatchedMarginals result;
  result.target = evaluate_segment(shape.active_begin());
  for (std::size_t m = 0; m < shape.num_drafts; ++m) result.per_draft.push_back(evaluate_segment(shape.draft_begin(m)));
  return result;
}

}  // namespace spiffy::model
