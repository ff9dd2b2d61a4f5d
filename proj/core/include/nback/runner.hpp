#pragma once

// Trial-by-trial orchestration and transcript persistence.
//
// Results layout:
//   <output_dir>/<experiment>/manifest.json
//   <output_dir>/<experiment>/scores.csv
//   <output_dir>/<experiment>/<n>/<block>.jsonl     (block zero-padded to 4)
//
// Transcript JSONL ("nback.transcript/1"), one JSON object per line, flushed
// after every line:
//   {"type":"header","schema":"nback.transcript/1","experiment":...,
//    "block_index":...,"config":{...},"agent":{...},"instruction":...}
//   {"type":"trial","trial_index":0,"stimulus_text":...,"user_message":...,
//    "ground_truth":"match"|"nonmatch","raw_reply":...,
//    "parsed_verdict":"match"|"nonmatch"|"invalid","latency_ms":...,
//    "timestamp":"2026-01-01T00:00:00.000Z"}
//   ...
//   {"type":"end","status":"complete"|"failed"|"aborted","records":24,
//    "error":...}
// A file without an "end" line is an interrupted (incomplete) transcript.

#include <atomic>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nback/agents.hpp"
#include "nback/prompts.hpp"
#include "nback/scoring.hpp"
#include "nback/serialize.hpp"
#include "nback/task.hpp"

namespace nback {

inline constexpr std::string_view kTranscriptSchema = "nback.transcript/1";
inline constexpr std::string_view kManifestSchema = "nback.manifest/1";

enum class TranscriptStatus { kComplete, kIncomplete, kFailed, kAborted };

std::string_view to_string(TranscriptStatus s);

struct TrialRecord {
  int trial_index = 0;
  std::string stimulus_text;
  std::string user_message;
  Label ground_truth = Label::kNonmatch;
  std::string raw_reply;
  Verdict parsed_verdict = Verdict::kInvalid;
  double latency_ms = 0.0;
  std::string timestamp;
};

struct BlockTranscript {
  std::string experiment;
  TaskConfig config;
  std::size_t block_index = 0;
  AgentMetadata agent;
  std::string instruction;
  std::vector<TrialRecord> records;
  TranscriptStatus status = TranscriptStatus::kIncomplete;
  std::string error;

  bool complete() const {
    return status == TranscriptStatus::kComplete &&
           records.size() == static_cast<std::size_t>(config.block_length);
  }
};

class IncompleteTranscript : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunBlockOptions {
  std::string experiment;
  RenderOptions render;
  // Written incrementally when set.
  std::optional<std::filesystem::path> transcript_path;
};

/// Runs one conversation. Agent failures leave the transcript failed rather
/// than throwing; SessionAborted is recorded and then rethrown.
BlockTranscript run_block(const Block& block, Agent& agent,
                          const AgentMetadata& agent_metadata,
                          const RunBlockOptions& options);

/// Conversation as sent to the agent for a finished transcript.
std::vector<Message> rebuild_conversation(const BlockTranscript& transcript);

BlockTranscript read_transcript(const std::filesystem::path& path);

/// Rescores from raw replies. Incomplete transcripts are refused with
/// IncompleteTranscript unless allow_partial is set.
BlockScore score_transcript(const BlockTranscript& transcript,
                            bool allow_partial = false);

BlockScore replay(const std::filesystem::path& transcript_file,
                  bool allow_partial = false);

struct ExperimentConfig {
  std::string id;
  TaskConfig task;
  std::vector<int> n_levels{1, 2, 3};
};

/// Default experiment id: "<family>_<variant>", plus "_g<size>" for spatial
/// grids other than 3x3.
std::string condition_label(const TaskConfig& task);

TaskConfig config_for_n(const ExperimentConfig& experiment, int n);

using AgentFactory = std::function<std::unique_ptr<Agent>(
    const AgentSpec&, const AgentContext&)>;

struct RunOptions {
  std::filesystem::path output_dir = "results";
  int parallelism = 1;
  double rate_limit_per_second = 0.0;
  bool resume = false;
  bool force = false;
  RenderOptions render;
  // Pre-generated blocks (<dir>/<n>/<block>.json) instead of regenerating.
  std::optional<std::filesystem::path> blocks_dir;
  std::istream* input = nullptr;
  std::ostream* output = nullptr;
  AgentFactory agent_factory;  // defaults to make_agent
};

enum class RunStatus { kClean, kPartial, kFailed };

std::string_view to_string(RunStatus s);

struct BlockFailure {
  int n = 0;
  std::size_t block_index = 0;
  TranscriptStatus status = TranscriptStatus::kFailed;
  std::string error;
};

struct ScoredBlock {
  std::string condition;
  Variant variant = Variant::kBase;
  int n = 0;
  std::size_t block_index = 0;
  BlockScore score;
};

struct ExperimentResult {
  ExperimentConfig experiment;
  std::map<int, std::vector<BlockTranscript>> transcripts;  // complete only
  std::vector<ScoredBlock> scores;  // ordered by (n, block)
  std::vector<BlockFailure> failures;
  std::size_t resumed_blocks = 0;
  std::size_t executed_blocks = 0;
  RunStatus status = RunStatus::kClean;
};

class ResultsExist : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::filesystem::path experiment_dir(const std::filesystem::path& output_dir,
                                     const std::string& experiment);
std::filesystem::path transcript_path(const std::filesystem::path& output_dir,
                                      const std::string& experiment, int n,
                                      std::size_t block_index);
/// "0007.jsonl" for block 7.
std::string transcript_file_name(std::size_t block_index);
std::filesystem::path block_file_path(const std::filesystem::path& blocks_dir,
                                      int n, std::size_t block_index);

std::uint64_t agent_stream_seed(const TaskConfig& task, std::size_t block_index);

ExperimentResult run_experiment(const ExperimentConfig& experiment,
                                const AgentSpec& agent,
                                const RunOptions& options);

void write_scores_csv(std::ostream& out, const std::vector<ScoredBlock>& rows);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

std::string utc_timestamp();

}  // namespace nback
