#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "spiffy/drafting.hpp"
#include "spiffy/formats.hpp"
#include "spiffy/oracle.hpp"
#include "spiffy/toy_denoiser.hpp"
#include "spiffy/types.hpp"

namespace spiffy::test {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(SPIFFY_TEST_DATA_DIR) / name;
}

inline std::filesystem::path golden_path(const std::string& name) {
  return std::filesystem::path(SPIFFY_TEST_GOLDEN_DIR) / name;
}

// Toy model trained on the bundled corpus with default mixture weights.
inline const model::ToyDenoiser& corpus_model() {
  static const model::ToyDenoiser m = [] {
    const auto corpus = formats::read_sequences(data_path("corpus.txt"));
    return model::ToyDenoiser::train(corpus, 0, model::ToyParams{});
  }();
  return m;
}

inline std::vector<std::vector<TokenId>> eval_prompts() { return formats::read_sequences(data_path("eval_prompts.txt")); }
inline std::vector<std::vector<TokenId>> calib_prompts() {
  return formats::read_sequences(data_path("calib_prompts.txt"));
}

inline drafting::DraftFormula F(const std::string& text) { return drafting::DraftFormula::parse(text); }

// The six-node graph with three routes into its level-3 node.
inline drafting::DraftGraph six_node_graph() {
  return drafting::build_graph({F("1:1"), F("2:1"), F("1:1 2:1"), F("1:1 3:1"), F("2:1 3:1"), F("1:1 2:1 3:1")}, 1);
}

inline drafting::DraftGraph chain_graph(int depth) {
  std::vector<drafting::DraftFormula> nodes;
  std::string text;
  for (int d = 1; d <= depth; ++d) {
    if (!text.empty()) text += " ";
    text += std::to_string(d) + ":1";
    nodes.push_back(F(text));
  }
  return drafting::build_graph(std::move(nodes), 1);
}

inline std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t n, int vocab) {
  std::vector<TokenId> out(n);
  for (auto& t : out) t = static_cast<TokenId>(1 + rng() % static_cast<unsigned>(vocab));
  return out;
}

// Random valid state: earlier blocks full, later blocks masked, the active block
// with a random non-empty subset of slots masked.
inline SequenceState random_state(std::mt19937_64& rng, int vocab, std::size_t max_prompt = 6,
                                  std::size_t max_blocks = 4, std::size_t max_len = 8) {
  const std::size_t n_blocks = 1 + rng() % max_blocks;
  const std::size_t len = 1 + rng() % max_len;
  auto state = SequenceState::initial(random_tokens(rng, rng() % (max_prompt + 1), vocab), n_blocks, len);
  state.active = rng() % n_blocks;
  for (std::size_t k = 0; k < state.active; ++k) state.blocks[k] = BlockState(random_tokens(rng, len, vocab));
  auto tokens = random_tokens(rng, len, vocab);
  const std::size_t forced = rng() % len;
  for (std::size_t i = 0; i < len; ++i) {
    if (i == forced || rng() % 2 == 0) tokens[i] = kMaskToken;
  }
  state.blocks[state.active] = BlockState(tokens);
  return state;
}

// Random block that keeps the unmasked slots of `base` and may unmask more.
inline BlockState random_extension(std::mt19937_64& rng, const BlockState& base, int vocab) {
  std::vector<TokenId> tokens(base.tokens().begin(), base.tokens().end());
  // The first masked slot stays masked so the draft still has something to denoise.
  bool kept = false;
  for (auto& t : tokens) {
    if (t != kMaskToken) continue;
    if (!kept) {
      kept = true;
      continue;
    }
    if (rng() % 3 == 0) t = static_cast<TokenId>(1 + rng() % static_cast<unsigned>(vocab));
  }
  return BlockState(tokens);
}

// Context-free oracle that always points at a fixed target sequence, with
// confidence falling off to the right inside each block.
class ScriptedOracle final : public model::DlmOracle {
 public:
  ScriptedOracle(int vocab, std::vector<TokenId> target) : vocab_(vocab), target_(std::move(target)) {}
  int vocab_size() const override { return vocab_; }
  Marginals forward(const SequenceState& state) const override {
    const auto& block = state.active_block();
    if (block.complete()) throw Error("nothing to denoise");
    Marginals m(block.size(), vocab_);
    for (std::size_t p = 0; p < block.size(); ++p) {
      if (!block.is_masked(p)) {
        m.set_one_hot(p, block[p]);
        continue;
      }
      const double c = 0.9 - 0.02 * static_cast<double>(p);
      auto row = m.row(p);
      std::fill(row.begin(), row.end(), (1.0 - c) / (vocab_ - 1));
      row[static_cast<std::size_t>(target_[state.active * block.size() + p] - 1)] = c;
    }
    return m;
  }

 private:
  int vocab_;
  std::vector<TokenId> target_;
};

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("spiffy_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace spiffy::test
