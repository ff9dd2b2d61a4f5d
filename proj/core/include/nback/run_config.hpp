#pragma once

// Run configuration file (JSON). Every key is optional unless noted; unknown
// keys are rejected.
//
//   {
//     "experiment": "verbal_base",        // default: <family>_<variant>[_g<g>]
//     "task": {
//       "family": "verbal" | "spatial",
//       "variant": "base" | "noise" | "feedback" | "cot_reasoning" |
//                  "abstract_incl_identical" | "abstract_excl_identical",
//       "grid_size": 3, "block_length": 24, "target_count": 8,
//       "blocks": 50, "seed": 0,          // seed: integer or "0x..." string
//       "alphabet": "bcdfghjklnpqrstvwxyz", "noise_charset": "#$%&@^~",
//       "strict_lures": false
//     },
//     "n_levels": [1, 2, 3],
//     "agent": {
//       "kind": "perfect" | "random" | "limited_memory" | "last_stimulus" |
//               "human_terminal" | "remote_chat",
//       "respond_probability": 0.333,     // random
//       "forget_rate": 0.2, "guess_probability": 0.333,   // limited_memory
//       "endpoint": "https://api.openai.com", "path": "/v1/chat/completions",
//       "model": "gpt-3.5-turbo", "temperature": 1.0, "max_tokens": 16,
//       "api_key_env": "OPENAI_API_KEY", "timeout_seconds": 60,
//       "max_attempts": 5, "backoff_base_ms": 500, "backoff_max_ms": 30000
//     },
//     "parallelism": 1,
//     "rate_limit_per_second": 0,         // 0 = unlimited
//     "output_dir": "results",
//     "single_line_grid": false
//   }

#include <filesystem>
#include <nlohmann/json.hpp>

#include "nback/agents.hpp"
#include "nback/runner.hpp"

namespace nback {

struct RunConfig {
  ExperimentConfig experiment;
  AgentSpec agent;
  int parallelism = 1;
  double rate_limit_per_second = 0.0;
  std::filesystem::path output_dir = "results";
  RenderOptions render;
};

/// Collects every field-level problem and throws ConfigError if any.
RunConfig parse_run_config(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace nback
