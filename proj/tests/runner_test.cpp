#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "nback/runner.hpp"
#include "oracles.hpp"

namespace {

using namespace nback;
namespace fs = std::filesystem;
using nlohmann::json;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("nback_runner_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Replays a fixed script and records the history length it was shown.
class ScriptedAgent : public Agent {
 public:
  explicit ScriptedAgent(std::vector<std::string> replies, int fail_at = -1)
      : replies_(std::move(replies)), fail_at_(fail_at) {}

  std::string respond(std::span<const Message> history) override {
    sizes.push_back(history.size());
    last_user.push_back(history.back().content);
    const int t = static_cast<int>(sizes.size()) - 1;
    if (t == fail_at_) throw std::runtime_error("injected failure");
    return replies_[static_cast<std::size_t>(t) % replies_.size()];
  }

  std::vector<std::size_t> sizes;
  std::vector<std::string> last_user;

 private:
  std::vector<std::string> replies_;
  int fail_at_;
};

TaskConfig small_config(Variant v = Variant::kBase, Family f = Family::kVerbal) {
  TaskConfig cfg;
  cfg.family = f;
  cfg.variant = v;
  cfg.n = 2;
  cfg.seed = 99;
  cfg.blocks = 4;
  return cfg;
}

TEST(RunBlock, ConversationGrowsByTwoMessagesPerTrial) {
  const Block block = generate_block(small_config(), 0);
  ScriptedAgent agent({"-"});
  const BlockTranscript tr = run_block(block, agent, {}, {});
  ASSERT_EQ(agent.sizes.size(), 24u);
  for (std::size_t t = 0; t < 24; ++t) EXPECT_EQ(agent.sizes[t], 2 + 2 * t);
  EXPECT_TRUE(tr.complete());
  const auto conv = rebuild_conversation(tr);
  EXPECT_EQ(conv.size(), 49u);
  EXPECT_EQ(conv.front().role, Role::kSystem);
  EXPECT_EQ(conv.front().content, build_instruction(block.config));
}

TEST(RunBlock, FeedbackReflectsThePreviousReply) {
  const Block block = generate_block(small_config(Variant::kFeedback), 1);
  ScriptedAgent agent({"m", "-", "garbage"});
  const BlockTranscript tr = run_block(block, agent, {}, {});
  EXPECT_EQ(agent.last_user[0].find("Your last response"), std::string::npos);
  for (std::size_t t = 1; t < 24; ++t) {
    const TrialRecord& prev = tr.records[t - 1];
    const bool correct =
        prev.parsed_verdict != Verdict::kInvalid &&
        (prev.parsed_verdict == Verdict::kMatch) == (prev.ground_truth == Label::kMatch);
    const std::string expect = correct ? "Your last response was correct.\n"
                                       : "Your last response was wrong.\n";
    EXPECT_EQ(agent.last_user[t].substr(0, expect.size()), expect) << t;
    EXPECT_EQ(tr.records[t].user_message, agent.last_user[t]);
  }
}

TEST(RunBlock, NonFeedbackVariantsNeverShowFeedback) {
  const Block block = generate_block(small_config(Variant::kNoise), 0);
  ScriptedAgent agent({"m"});
  run_block(block, agent, {}, {});
  for (const auto& msg : agent.last_user) {
    EXPECT_EQ(msg.find("Your last response"), std::string::npos);
  }
}

TEST(RunBlock, AgentFailureLeavesAFailedTranscript) {
  TempDir dir;
  const fs::path path = dir.path() / "t.jsonl";
  const Block block = generate_block(small_config(), 0);
  ScriptedAgent agent({"-"}, 5);
  const BlockTranscript tr = run_block(block, agent, {}, {"exp", {}, path});
  EXPECT_EQ(tr.status, TranscriptStatus::kFailed);
  EXPECT_EQ(tr.records.size(), 5u);
  EXPECT_EQ(tr.error, "injected failure");
  const BlockTranscript back = read_transcript(path);
  EXPECT_EQ(back.status, TranscriptStatus::kFailed);
  EXPECT_EQ(back.records.size(), 5u);
  EXPECT_THROW(score_transcript(back), IncompleteTranscript);
  EXPECT_EQ(score_transcript(back, true).targets +
                score_transcript(back, true).nontargets,
            5);
}

TEST(Transcript, FileRoundTripPreservesEverything) {
  TempDir dir;
  const fs::path path = dir.path() / "0000.jsonl";
  const Block block = generate_block(small_config(Variant::kCotReasoning, Family::kSpatial), 0);
  ScriptedAgent agent({"m:looks the same", "-:different", "??"});
  AgentMetadata meta{"remote_chat", "model-x", 0.7, "http://h/v1"};
  const BlockTranscript tr = run_block(block, agent, meta, {"exp", {}, path});
  const BlockTranscript back = read_transcript(path);
  EXPECT_EQ(back.experiment, "exp");
  EXPECT_EQ(back.config, block.config);
  EXPECT_EQ(back.instruction, tr.instruction);
  EXPECT_EQ(back.agent.model, "model-x");
  EXPECT_EQ(back.agent.temperature, 0.7);
  ASSERT_EQ(back.records.size(), tr.records.size());
  for (std::size_t i = 0; i < tr.records.size(); ++i) {
    EXPECT_EQ(back.records[i].raw_reply, tr.records[i].raw_reply);
    EXPECT_EQ(back.records[i].user_message, tr.records[i].user_message);
    EXPECT_EQ(back.records[i].parsed_verdict, tr.records[i].parsed_verdict);
    EXPECT_EQ(back.records[i].latency_ms, tr.records[i].latency_ms);
    EXPECT_EQ(back.records[i].timestamp, tr.records[i].timestamp);
  }
  EXPECT_EQ(score_transcript(back), score_transcript(tr));
  EXPECT_EQ(replay(path), score_transcript(tr));
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

fs::path perfect_transcript(const fs::path& dir) {
  const fs::path path = dir / "0000.jsonl";
  const Block block = generate_block(small_config(), 0);
  AgentSpec spec;
  auto agent = make_agent(spec, AgentContext{block.config, 1});
  run_block(block, *agent, metadata_for(spec), {"exp", {}, path});
  return path;
}

TEST(Transcript, MalformedLineIsReportedWithItsNumber) {
  TempDir dir;
  const fs::path path = perfect_transcript(dir.path());
  auto lines = read_lines(path);
  lines[2] = "{\"type\": \"trial\", oops";
  write_lines(path, lines);
  try {
    read_transcript(path);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find(path.string() + ":3"), std::string::npos)
        << e.what();
  }
}

TEST(Transcript, MissingEndLineMeansIncomplete) {
  TempDir dir;
  const fs::path path = perfect_transcript(dir.path());
  auto lines = read_lines(path);
  ASSERT_EQ(lines.size(), 26u);
  lines.pop_back();  // end
  lines.pop_back();  // last trial
  write_lines(path, lines);
  const BlockTranscript tr = read_transcript(path);
  EXPECT_EQ(tr.status, TranscriptStatus::kIncomplete);
  EXPECT_EQ(tr.records.size(), 23u);
  EXPECT_FALSE(tr.complete());
  EXPECT_THROW(replay(path), IncompleteTranscript);
  EXPECT_EQ(replay(path, true).targets + replay(path, true).nontargets, 23);
}

TEST(Transcript, ParsedVerdictMustMatchRawReply) {
  TempDir dir;
  const fs::path path = perfect_transcript(dir.path());
  auto lines = read_lines(path);
  json rec = json::parse(lines[1]);
  rec["parsed_verdict"] = rec["parsed_verdict"] == "match" ? "nonmatch" : "match";
  lines[1] = rec.dump();
  write_lines(path, lines);
  EXPECT_THROW(read_transcript(path), SchemaError);
}

TEST(Transcript, WrongSchemaIsRejected) {
  TempDir dir;
  const fs::path path = perfect_transcript(dir.path());
  auto lines = read_lines(path);
  json header = json::parse(lines[0]);
  header["schema"] = "nback.transcript/99";
  lines[0] = header.dump();
  write_lines(path, lines);
  EXPECT_THROW(read_transcript(path), SchemaError);
}

ExperimentConfig small_experiment(Variant v = Variant::kBase) {
  ExperimentConfig e;
  e.id = "exp";
  e.task = small_config(v);
  e.task.blocks = 6;
  return e;
}

// Transcript text without the wall-clock fields.
std::string stable_text(const fs::path& p) {
  std::string out;
  for (const auto& l : read_lines(p)) {
    json j = json::parse(l);
    j.erase("latency_ms");
    j.erase("timestamp");
    out += j.dump() + "\n";
  }
  return out;
}

std::map<std::string, std::string> stable_tree(const fs::path& exp_dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(exp_dir)) {
    if (e.path().extension() == ".jsonl") {
      out[fs::relative(e.path(), exp_dir).string()] = stable_text(e.path());
    }
  }
  out["scores.csv"] = oracle::read_file((exp_dir / "scores.csv").string());
  return out;
}

TEST(RunExperiment, PerfectAgentScoresCeilingEverywhere) {
  TempDir dir;
  RunOptions opts;
  opts.output_dir = dir.path();
  AgentSpec spec;
  const ExperimentResult r = run_experiment(small_experiment(), spec, opts);
  EXPECT_EQ(r.status, RunStatus::kClean);
  EXPECT_EQ(r.scores.size(), 18u);
  for (const auto& s : r.scores) EXPECT_NEAR(s.score.dprime, 4.652696, 1e-6);
  EXPECT_TRUE(fs::exists(dir.path() / "exp" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "exp" / "2" / "0005.jsonl"));
  const json m = json::parse(oracle::read_file((dir.path() / "exp" / "manifest.json").string()));
  EXPECT_EQ(m["status"], "clean");
  EXPECT_EQ(m["schema"], "nback.manifest/1");
}

TEST(RunExperiment, ParallelismDoesNotChangeResults) {
  AgentSpec spec;
  spec.kind = AgentKind::kLimitedMemory;
  TempDir a, b;
  RunOptions oa;
  oa.output_dir = a.path();
  oa.parallelism = 1;
  RunOptions ob = oa;
  ob.output_dir = b.path();
  ob.parallelism = 8;
  const ExperimentConfig e = small_experiment(Variant::kFeedback);
  const auto ra = run_experiment(e, spec, oa);
  const auto rb = run_experiment(e, spec, ob);
  ASSERT_EQ(ra.scores.size(), rb.scores.size());
  for (std::size_t i = 0; i < ra.scores.size(); ++i) {
    EXPECT_EQ(ra.scores[i].score, rb.scores[i].score);
  }
  EXPECT_EQ(stable_tree(a.path() / "exp"), stable_tree(b.path() / "exp"));
}

TEST(RunExperiment, RefusesToOverwriteWithoutForce) {
  TempDir dir;
  RunOptions opts;
  opts.output_dir = dir.path();
  AgentSpec spec;
  run_experiment(small_experiment(), spec, opts);
  EXPECT_THROW(run_experiment(small_experiment(), spec, opts), ResultsExist);
  opts.force = true;
  EXPECT_EQ(run_experiment(small_experiment(), spec, opts).executed_blocks, 18u);
}

TEST(RunExperiment, ResumeRefusesADifferentConfiguration) {
  TempDir dir;
  RunOptions opts;
  opts.output_dir = dir.path();
  AgentSpec spec;
  spec.kind = AgentKind::kLimitedMemory;
  run_experiment(small_experiment(), spec, opts);
  opts.resume = true;
  spec.forget_rate = 0.5;
  EXPECT_THROW(run_experiment(small_experiment(), spec, opts), ResultsExist);
}

TEST(RunExperiment, ResumeAfterInjectedFaultsRunsOnlyDamagedBlocks) {
  AgentSpec spec;
  spec.kind = AgentKind::kRandom;
  const ExperimentConfig e = small_experiment();
  TempDir clean_dir, dir;
  RunOptions clean;
  clean.output_dir = clean_dir.path();
  run_experiment(e, spec, clean);

  RunOptions opts;
  opts.output_dir = dir.path();
  run_experiment(e, spec, opts);
  const fs::path exp = dir.path() / "exp";
  // 1) interrupted mid-block, 2) cut mid-line, 3) never started
  auto lines = read_lines(exp / "1" / "0002.jsonl");
  lines.resize(10);
  write_lines(exp / "1" / "0002.jsonl", lines);
  {
    std::string text = oracle::read_file((exp / "2" / "0000.jsonl").string());
    std::ofstream(exp / "2" / "0000.jsonl", std::ios::trunc) << text.substr(0, 700);
  }
  fs::remove(exp / "3" / "0005.jsonl");

  opts.resume = true;
  const ExperimentResult r = run_experiment(e, spec, opts);
  EXPECT_EQ(r.status, RunStatus::kClean);
  EXPECT_EQ(r.executed_blocks, 3u);
  EXPECT_EQ(r.resumed_blocks, 15u);
  EXPECT_EQ(stable_tree(exp), stable_tree(clean_dir.path() / "exp"));
}

TEST(RunExperiment, FailedBlocksMakeThePartialStatusAndResumeFixesThem) {
  TempDir dir;
  const ExperimentConfig e = small_experiment();
  AgentSpec spec;
  RunOptions opts;
  opts.output_dir = dir.path();
  opts.agent_factory = [](const AgentSpec& s, const AgentContext& ctx)
      -> std::unique_ptr<Agent> {
    if (ctx.config.n == 2) return std::make_unique<ScriptedAgent>(std::vector<std::string>{"-"}, 3);
    return make_agent(s, ctx);
  };
  const ExperimentResult r = run_experiment(e, spec, opts);
  EXPECT_EQ(r.status, RunStatus::kPartial);
  EXPECT_EQ(r.failures.size(), 6u);
  for (const auto& f : r.failures) {
    EXPECT_EQ(f.n, 2);
    EXPECT_EQ(f.status, TranscriptStatus::kFailed);
  }
  const json m = json::parse(oracle::read_file((dir.path() / "exp" / "manifest.json").string()));
  EXPECT_EQ(m["status"], "partial");
  EXPECT_EQ(m["failures"].size(), 6u);

  opts.agent_factory = nullptr;
  opts.resume = true;
  const ExperimentResult again = run_experiment(e, spec, opts);
  EXPECT_EQ(again.status, RunStatus::kClean);
  EXPECT_EQ(again.executed_blocks, 6u);
}

TEST(RunExperiment, AllBlocksFailingIsAFailedRun) {
  TempDir dir;
  AgentSpec spec;
  RunOptions opts;
  opts.output_dir = dir.path();
  opts.agent_factory = [](const AgentSpec&, const AgentContext&) -> std::unique_ptr<Agent> {
    return std::make_unique<ScriptedAgent>(std::vector<std::string>{"-"}, 0);
  };
  EXPECT_EQ(run_experiment(small_experiment(), spec, opts).status, RunStatus::kFailed);
}

TEST(RunExperiment, ClosedTerminalStopsTheSession) {
  TempDir dir;
  AgentSpec spec;
  spec.kind = AgentKind::kHumanTerminal;
  std::istringstream in("m\n-\nm\n");
  std::ostringstream out;
  RunOptions opts;
  opts.output_dir = dir.path();
  opts.input = &in;
  opts.output = &out;
  const ExperimentResult r = run_experiment(small_experiment(), spec, opts);
  EXPECT_EQ(r.status, RunStatus::kFailed);
  EXPECT_EQ(r.executed_blocks, 1u);
  ASSERT_FALSE(r.failures.empty());
  EXPECT_EQ(r.failures.front().status, TranscriptStatus::kAborted);
  const BlockTranscript tr = read_transcript(dir.path() / "exp" / "1" / "0000.jsonl");
  EXPECT_EQ(tr.status, TranscriptStatus::kAborted);
  EXPECT_EQ(tr.records.size(), 3u);
}

TEST(RunExperiment, PregeneratedBlocksGiveTheSameResults) {
  const ExperimentConfig e = small_experiment(Variant::kNoise);
  TempDir blocks, a, b;
  for (int n : e.n_levels) {
    for (int i = 0; i < e.task.blocks; ++i) {
      const Block blk = generate_block(config_for_n(e, n), static_cast<std::size_t>(i));
      write_block_file(block_file_path(blocks.path(), n, blk.block_index), blk);
    }
  }
  AgentSpec spec;
  spec.kind = AgentKind::kLimitedMemory;
  RunOptions oa;
  oa.output_dir = a.path();
  RunOptions ob;
  ob.output_dir = b.path();
  ob.blocks_dir = blocks.path();
  run_experiment(e, spec, oa);
  run_experiment(e, spec, ob);
  EXPECT_EQ(stable_tree(a.path() / "exp"), stable_tree(b.path() / "exp"));
}

TEST(RunExperiment, InvalidConfigurationIsRejectedBeforeAnyWork) {
  TempDir dir;
  ExperimentConfig e = small_experiment();
  e.task.target_count = 30;
  RunOptions opts;
  opts.output_dir = dir.path();
  EXPECT_THROW(run_experiment(e, AgentSpec{}, opts), ConfigError);
  EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(RunExperiment, ConditionLabels) {
  TaskConfig t;
  EXPECT_EQ(condition_label(t), "verbal_base");
  t.family = Family::kSpatial;
  t.grid_size = 5;
  EXPECT_EQ(condition_label(t), "spatial_base_g5");
  t.grid_size = 3;
  t.variant = Variant::kAbstractInclIdentical;
  EXPECT_EQ(condition_label(t), "spatial_abstract_incl_identical");
}

TEST(RunExperiment, FormatDoubleRoundTrips) {
  for (double v : {0.1, 4.6526957480816815, -0.0092967, 1e-300, 0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

}  // namespace
