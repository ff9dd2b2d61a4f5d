#pragma once

// JSON forms of task configs, stimuli and blocks.
//
// Block files ("nback.block/1"):
//   {
//     "schema": "nback.block/1",
//     "config": { family, variant, n, grid_size, block_length, target_count,
//                 blocks, seed, alphabet, noise_charset, strict_lures },
//     "block_index": 0,
//     "stream_seed": "0x...",          // hex string, 64-bit exact
//     "trials": [
//       {"label": "match"|"nonmatch",
//        "stimulus": {"letter": "b", "text": "#b$", "letter_index": 1}}
//       or
//       {"label": ..., "stimulus": {"grid_size": 3, "cell": [r, c],
//                                   "noise": [{"cell": [r, c], "char": "#"}]}}
//     ]
//   }
// seed is also written as a hex string so 64-bit values survive readers that
// parse numbers as doubles.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "nback/task.hpp"

namespace nback {

inline constexpr std::string_view kBlockSchema = "nback.block/1";

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_hex(std::uint64_t v);
std::uint64_t parse_u64(const nlohmann::json& j);

nlohmann::json to_json(const TaskConfig& config);
/// Strict: unknown keys and wrong types raise SchemaError.
TaskConfig task_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Stimulus& stimulus);
Stimulus stimulus_from_json(const nlohmann::json& j, Family family);

nlohmann::json to_json(const Block& block);
Block block_from_json(const nlohmann::json& j);

void write_block_file(const std::filesystem::path& path, const Block& block);
Block read_block_file(const std::filesystem::path& path);

}  // namespace nback
