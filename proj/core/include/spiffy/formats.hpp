#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spiffy/calibration.hpp"
#include "spiffy/drafting.hpp"
#include "spiffy/toy_denoiser.hpp"
#include "spiffy/types.hpp"

// Text formats for every file the tools read or write. Parsers throw
// ParseError naming "<source>:<line>"; `source` is usually the file path.
namespace spiffy::formats {

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view content);

// Whitespace-separated token ids, one sequence per line; blank lines and
// '#' comments are ignored. `vocab_size` > 0 range-checks ids against 1..V.
std::vector<std::vector<TokenId>> parse_sequences(std::string_view text, const std::string& source = "",
                                                  int vocab_size = 0);
std::string format_sequences(const std::vector<std::vector<TokenId>>& sequences);
std::vector<std::vector<TokenId>> read_sequences(const std::filesystem::path& path, int vocab_size = 0);

//   spiffy-toy-model 1
//   V <n>
//   alpha <x> / lambda_left <x> / lambda_right <x> / lambda_uni <x>
//   unigram <V counts>
//   left <a> <V counts>      for a = 0..V
//   right <a> <V counts>     for a = 0..V
std::string format_model(const model::ToyDenoiser& model);
model::ToyDenoiser parse_model(std::string_view text, const std::string& source = "");
model::ToyDenoiser read_model(const std::filesystem::path& path);

//   D <budget>
//   tokens_per_level <s>
//   1:1 2:1        one node per line
std::string format_graph(const drafting::DraftGraph& graph);
drafting::DraftGraph parse_graph(std::string_view text, const std::string& source = "");
drafting::DraftGraph read_graph(const std::filesystem::path& path);

// One record per line: sample_id origin_step lookahead i1:j1 i2:j2 ...
std::string format_records(const std::vector<calibration::CalibrationRecord>& records);
std::vector<calibration::CalibrationRecord> parse_records(std::string_view text, const std::string& source = "");

//   tokens_per_level <s>
//   <level> <count> <formula>
std::string format_table(const calibration::CandidateTable& table);
calibration::CandidateTable parse_table(std::string_view text, const std::string& source = "");

//   prompt <ids...>
//   active <k>
//   block <L ids, 0 = MASK>     one line per block
std::string format_sequence_state(const SequenceState& state);
SequenceState parse_sequence_state(std::string_view text, const std::string& source = "");

}  // namespace spiffy::formats
