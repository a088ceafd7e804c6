#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "spiffy/schedule.hpp"
#include "spiffy/types.hpp"

namespace spiffy {

struct GenerationConfig {
  int generation_length = 256;  // W
  int block_size = 32;          // L
  UnmaskSchedule schedule = UnmaskSchedule::fixed(1);
  int top_k_vocab = 4;
  TokenId eot_token = 1;
  std::uint64_t seed = 0;

  int num_blocks() const { return block_size > 0 ? generation_length / block_size : 0; }

  // Throws Error when W is not a positive multiple of L or a field is out of range.
  void validate() const;

  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

// Flat `key = value` document with keys
//   W, L, schedule.mode, schedule.s, schedule.p, top_k_vocab, eot_token, seed
std::string format_config(const GenerationConfig& config);
GenerationConfig parse_config(std::string_view text, const std::string& source = "");
GenerationConfig read_config(const std::filesystem::path& path);
void write_config(const std::filesystem::path& path, const GenerationConfig& config);

}  // namespace spiffy
