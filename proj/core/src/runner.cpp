#include "nback/runner.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

namespace nback {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(TranscriptStatus s) {
  switch (s) {
    case TranscriptStatus::kComplete: return "complete";
    case TranscriptStatus::kIncomplete: return "incomplete";
    case TranscriptStatus::kFailed: return "failed";
    case TranscriptStatus::kAborted: return "aborted";
  }
  return "?";
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kClean: return "clean";
    case RunStatus::kPartial: return "partial";
    case RunStatus::kFailed: return "failed";
  }
  return "?";
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch())
                      .count() %
                  1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

namespace {

json agent_to_json(const AgentMetadata& m) {
  json j{{"kind", m.kind}, {"model", m.model}, {"endpoint", m.endpoint}};
  j["temperature"] = m.temperature ? json(*m.temperature) : json(nullptr);
  return j;
}

AgentMetadata agent_from_json(const json& j) {
  AgentMetadata m;
  m.kind = j.at("kind").get<std::string>();
  m.model = j.value("model", "");
  m.endpoint = j.value("endpoint", "");
  if (j.contains("temperature") && !j.at("temperature").is_null()) {
    m.temperature = j.at("temperature").get<double>();
  }
  return m;
}

json record_to_json(const TrialRecord& r) {
  return json{{"type", "trial"},
              {"trial_index", r.trial_index},
              {"stimulus_text", r.stimulus_text},
              {"user_message", r.user_message},
              {"ground_truth", to_string(r.ground_truth)},
              {"raw_reply", r.raw_reply},
              {"parsed_verdict", to_string(r.parsed_verdict)},
              {"latency_ms", r.latency_ms},
              {"timestamp", r.timestamp}};
}

class TranscriptWriter {
 public:
  explicit TranscriptWriter(const std::optional<fs::path>& path) {
    if (!path) return;
    fs::create_directories(path->parent_path());
    out_.open(*path, std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write " + path->string());
  }

  void line(const json& j) {
    if (!out_.is_open()) return;
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

bool reply_correct(Verdict v, Label truth) {
  if (v == Verdict::kInvalid) return false;
  return (v == Verdict::kMatch) == (truth == Label::kMatch);
}

}  // namespace

BlockTranscript run_block(const Block& block, Agent& agent,
                          const AgentMetadata& agent_metadata,
                          const RunBlockOptions& options) {
  BlockTranscript tr;
  tr.experiment = options.experiment;
  tr.config = block.config;
  tr.block_index = block.block_index;
  tr.agent = agent_metadata;
  tr.instruction = build_instruction(block.config);

  TranscriptWriter writer(options.transcript_path);
  writer.line(json{{"type", "header"},
                   {"schema", kTranscriptSchema},
                   {"experiment", tr.experiment},
                   {"block_index", tr.block_index},
                   {"config", to_json(tr.config)},
                   {"agent", agent_to_json(tr.agent)},
                   {"instruction", tr.instruction}});

  auto finish = [&](TranscriptStatus status, std::string error) {
    tr.status = status;
    tr.error = std::move(error);
    json end{{"type", "end"},
             {"status", to_string(status)},
             {"records", tr.records.size()}};
    if (!tr.error.empty()) end["error"] = tr.error;
    writer.line(end);
  };

  std::vector<Message> history;
  history.reserve(1 + 2 * block.trials.size());
  history.push_back(Message{Role::kSystem, tr.instruction});
  const bool feedback = block.config.variant == Variant::kFeedback;

  for (std::size_t t = 0; t < block.trials.size(); ++t) {
    const Trial& trial = block.trials[t];
    std::optional<bool> previous;
    if (feedback && t > 0) {
      const TrialRecord& prev = tr.records.back();
      previous = reply_correct(prev.parsed_verdict, prev.ground_truth);
    }
    TrialRecord rec;
    rec.trial_index = static_cast<int>(t);
    rec.stimulus_text = render_stimulus(trial.stimulus, options.render);
    rec.user_message =
        render_trial_message(trial.stimulus, previous, options.render);
    rec.ground_truth = trial.label;
    history.push_back(Message{Role::kUser, rec.user_message});

    const auto start = std::chrono::steady_clock::now();
    try {
      rec.raw_reply = agent.respond(history);
    } catch (const SessionAborted& e) {
      finish(TranscriptStatus::kAborted, e.what());
      throw;
    } catch (const std::exception& e) {
      finish(TranscriptStatus::kFailed, e.what());
      return tr;
    }
    rec.latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    rec.timestamp = utc_timestamp();
    rec.parsed_verdict = parse_response(rec.raw_reply, block.config.variant).verdict;
    history.push_back(Message{Role::kAssistant, rec.raw_reply});
    writer.line(record_to_json(rec));
    tr.records.push_back(std::move(rec));
  }
  finish(TranscriptStatus::kComplete, {});
  return tr;
}

std::vector<Message> rebuild_conversation(const BlockTranscript& transcript) {
  std::vector<Message> out;
  out.push_back(Message{Role::kSystem, transcript.instruction});
  for (const auto& r : transcript.records) {
    out.push_back(Message{Role::kUser, r.user_message});
    out.push_back(Message{Role::kAssistant, r.raw_reply});
  }
  return out;
}

BlockTranscript read_transcript(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  BlockTranscript tr;
  bool have_header = false;
  bool have_end = false;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) -> SchemaError {
    return SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (have_end) throw fail("content after end record");
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw fail("not a JSON object");
    try {
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        if (have_header) throw fail("duplicate header");
        if (j.at("schema").get<std::string>() != kTranscriptSchema) {
          throw fail("unsupported schema");
        }
        tr.experiment = j.at("experiment").get<std::string>();
        tr.block_index = j.at("block_index").get<std::size_t>();
        tr.config = task_config_from_json(j.at("config"));
        tr.agent = agent_from_json(j.at("agent"));
        tr.instruction = j.at("instruction").get<std::string>();
        have_header = true;
      } else if (type == "trial") {
        if (!have_header) throw fail("trial before header");
        TrialRecord r;
        r.trial_index = j.at("trial_index").get<int>();
        if (r.trial_index != static_cast<int>(tr.records.size())) {
          throw fail("trial_index out of sequence");
        }
        r.stimulus_text = j.at("stimulus_text").get<std::string>();
        r.user_message = j.at("user_message").get<std::string>();
        auto truth = parse_label(j.at("ground_truth").get<std::string>());
        if (!truth) throw fail("bad ground_truth");
        r.ground_truth = *truth;
        r.raw_reply = j.at("raw_reply").get<std::string>();
        auto verdict = parse_verdict_name(j.at("parsed_verdict").get<std::string>());
        if (!verdict) throw fail("bad parsed_verdict");
        r.parsed_verdict = *verdict;
        if (parse_response(r.raw_reply, tr.config.variant).verdict != *verdict) {
          throw fail("parsed_verdict does not follow from raw_reply");
        }
        r.latency_ms = j.at("latency_ms").get<double>();
        r.timestamp = j.at("timestamp").get<std::string>();
        tr.records.push_back(std::move(r));
      } else if (type == "end") {
        if (!have_header) throw fail("end before header");
        const std::string status = j.at("status").get<std::string>();
        if (status == "complete") {
          tr.status = TranscriptStatus::kComplete;
        } else if (status == "failed") {
          tr.status = TranscriptStatus::kFailed;
        } else if (status == "aborted") {
          tr.status = TranscriptStatus::kAborted;
        } else {
          throw fail("unknown status \"" + status + "\"");
        }
        if (j.at("records").get<std::size_t>() != tr.records.size()) {
          throw fail("record count mismatch");
        }
        tr.error = j.value("error", "");
        have_end = true;
      } else {
        throw fail("unknown record type \"" + type + "\"");
      }
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
  }
  if (!have_header) {
    line_no = 1;
    throw fail("missing header");
  }
  if (!have_end) tr.status = TranscriptStatus::kIncomplete;
  if (tr.status == TranscriptStatus::kComplete &&
      tr.records.size() != static_cast<std::size_t>(tr.config.block_length)) {
    throw SchemaError(path.string() + ": complete transcript has " +
                      std::to_string(tr.records.size()) + " of " +
                      std::to_string(tr.config.block_length) + " records");
  }
  return tr;
}

BlockScore score_transcript(const BlockTranscript& transcript,
                            bool allow_partial) {
  if (!transcript.complete() && !allow_partial) {
    throw IncompleteTranscript(
        "transcript for block " + std::to_string(transcript.block_index) +
        " is " + std::string(to_string(transcript.status)) + " with " +
        std::to_string(transcript.records.size()) + "/" +
        std::to_string(transcript.config.block_length) + " records");
  }
  std::vector<Label> labels;
  std::vector<Verdict> verdicts;
  for (const auto& r : transcript.records) {
    labels.push_back(r.ground_truth);
    verdicts.push_back(parse_response(r.raw_reply, transcript.config.variant).verdict);
  }
  return score_block(labels, verdicts);
}

BlockScore replay(const fs::path& transcript_file, bool allow_partial) {
  return score_transcript(read_transcript(transcript_file), allow_partial);
}

std::string condition_label(const TaskConfig& task) {
  std::string out = std::string(to_string(task.family)) + "_" +
                    std::string(to_string(task.variant));
  if (task.family == Family::kSpatial && task.grid_size != 3) {
    out += "_g" + std::to_string(task.grid_size);
  }
  return out;
}

TaskConfig config_for_n(const ExperimentConfig& experiment, int n) {
  TaskConfig c = experiment.task;
  c.n = n;
  return c;
}

fs::path experiment_dir(const fs::path& output_dir, const std::string& experiment) {
  return output_dir / experiment;
}

namespace {

std::string block_stem(std::size_t block_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", block_index);
  return buf;
}

json manifest_json(const ExperimentConfig& experiment, const AgentSpec& agent,
                   const RunOptions& options) {
  json levels = json::array();
  for (int n : experiment.n_levels) levels.push_back(n);
  json task = to_json(experiment.task);
  task.erase("n");
  return json{{"schema", kManifestSchema},
              {"experiment", experiment.id},
              {"task", task},
              {"n_levels", levels},
              {"agent", agent_to_json(metadata_for(agent))},
              {"agent_spec", agent_spec_to_json(agent)},
              {"parallelism", options.parallelism},
              {"single_line_grid", options.render.single_line_grid}};
}

void write_json_file(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string transcript_file_name(std::size_t block_index) {
  return block_stem(block_index) + ".jsonl";
}

fs::path transcript_path(const fs::path& output_dir, const std::string& experiment,
                         int n, std::size_t block_index) {
  return experiment_dir(output_dir, experiment) / std::to_string(n) /
         transcript_file_name(block_index);
}

fs::path block_file_path(const fs::path& blocks_dir, int n,
                         std::size_t block_index) {
  return blocks_dir / std::to_string(n) / (block_stem(block_index) + ".json");
}

std::uint64_t agent_stream_seed(const TaskConfig& task, std::size_t block_index) {
  return derive_stream_seed(task.seed, StreamPurpose::kAgent,
                            {static_cast<std::uint64_t>(task.n),
                             static_cast<std::uint64_t>(block_index)});
}

ExperimentResult run_experiment(const ExperimentConfig& experiment,
                                const AgentSpec& agent,
                                const RunOptions& options) {
  if (experiment.n_levels.empty()) {
    throw ConfigError({"n_levels: must list at least one n"});
  }
  std::vector<std::string> problems;
  for (int n : experiment.n_levels) {
    for (auto& p : validate(config_for_n(experiment, n))) {
      problems.push_back("n=" + std::to_string(n) + ": " + p);
    }
  }
  for (auto& p : validate(agent)) problems.push_back(p);
  if (options.parallelism < 1) problems.push_back("parallelism: must be >= 1");
  if (!problems.empty()) throw ConfigError(std::move(problems));

  const fs::path exp_dir = experiment_dir(options.output_dir, experiment.id);
  const fs::path manifest_path = exp_dir / "manifest.json";
  const json manifest_base = manifest_json(experiment, agent, options);

  if (fs::exists(exp_dir) && !fs::is_empty(exp_dir)) {
    if (options.force) {
      fs::remove_all(exp_dir);
    } else if (options.resume) {
      if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        json old = json::parse(in, nullptr, false);
        if (old.is_discarded() || old.value("task", json()) != manifest_base["task"] ||
            old.value("n_levels", json()) != manifest_base["n_levels"] ||
            old.value("agent_spec", json()) != manifest_base["agent_spec"]) {
          throw ResultsExist("cannot resume " + exp_dir.string() +
                             ": configuration differs from the stored manifest");
        }
      }
    } else {
      throw ResultsExist(exp_dir.string() +
                         " already holds results; use --resume or --force");
    }
  }
  fs::create_directories(exp_dir);

  json manifest = manifest_base;
  manifest["status"] = "running";
  manifest["started_at"] = utc_timestamp();
  write_json_file(manifest_path, manifest);

  struct Job {
    int n;
    std::size_t block;
  };
  std::vector<Job> jobs;
  for (int n : experiment.n_levels) {
    for (int b = 0; b < experiment.task.blocks; ++b) {
      jobs.push_back(Job{n, static_cast<std::size_t>(b)});
    }
  }

  struct Outcome {
    std::optional<BlockTranscript> transcript;
    bool resumed = false;
    bool executed = false;
  };
  std::vector<Outcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex error_mu;
  std::exception_ptr fatal;

  RateLimiter limiter(options.rate_limit_per_second);
  const AgentFactory factory = options.agent_factory ? options.agent_factory
                                                     : AgentFactory(make_agent);
  const AgentMetadata metadata = metadata_for(agent);

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job job = jobs[i];
      const fs::path path =
          transcript_path(options.output_dir, experiment.id, job.n, job.block);
      try {
        if (options.resume && fs::exists(path)) {
          try {
            BlockTranscript done = read_transcript(path);
            if (done.complete()) {
              outcomes[i].transcript = std::move(done);
              outcomes[i].resumed = true;
              continue;
            }
          } catch (const SchemaError&) {
            // rerun blocks whose transcript was cut mid-line
          }
        }
        const TaskConfig cfg = config_for_n(experiment, job.n);
        Block block = options.blocks_dir
                          ? read_block_file(block_file_path(*options.blocks_dir,
                                                            job.n, job.block))
                          : generate_block(cfg, job.block);
        if (block.config != cfg || block.block_index != job.block) {
          throw ConfigError({"block file for n=" + std::to_string(job.n) +
                             " block " + std::to_string(job.block) +
                             " does not match the run configuration"});
        }
        AgentContext ctx{cfg, agent_stream_seed(cfg, job.block), &limiter,
                         options.input, options.output};
        std::unique_ptr<Agent> instance;
        try {
          instance = factory(agent, ctx);
        } catch (const std::invalid_argument&) {
          throw;
        } catch (const std::exception& e) {
          BlockTranscript failed;
          failed.experiment = experiment.id;
          failed.config = cfg;
          failed.block_index = job.block;
          failed.status = TranscriptStatus::kFailed;
          failed.error = e.what();
          outcomes[i].transcript = std::move(failed);
          outcomes[i].executed = true;
          continue;
        }
        RunBlockOptions bopts{experiment.id, options.render, path};
        outcomes[i].executed = true;
        outcomes[i].transcript = run_block(block, *instance, metadata, bopts);
      } catch (const SessionAborted& e) {
        BlockTranscript aborted;
        aborted.experiment = experiment.id;
        aborted.config = config_for_n(experiment, job.n);
        aborted.block_index = job.block;
        aborted.status = TranscriptStatus::kAborted;
        aborted.error = e.what();
        outcomes[i].transcript = std::move(aborted);
        stop = true;
        return;
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!fatal) fatal = std::current_exception();
        stop = true;
        return;
      }
    }
  };

  const int threads =
      std::max(1, std::min<int>(options.parallelism, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  ExperimentResult result;
  result.experiment = experiment;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Job job = jobs[i];
    Outcome& o = outcomes[i];
    if (o.resumed) ++result.resumed_blocks;
    if (o.executed) ++result.executed_blocks;
    if (!o.transcript) {
      result.failures.push_back(BlockFailure{job.n, job.block,
                                             TranscriptStatus::kIncomplete,
                                             "not run (session stopped)"});
      continue;
    }
    BlockTranscript& tr = *o.transcript;
    if (!tr.complete()) {
      result.failures.push_back(
          BlockFailure{job.n, job.block, tr.status, tr.error});
      continue;
    }
    result.scores.push_back(ScoredBlock{experiment.id, experiment.task.variant,
                                        job.n, job.block, score_transcript(tr)});
    result.transcripts[job.n].push_back(std::move(tr));
  }
  if (result.failures.empty()) {
    result.status = RunStatus::kClean;
  } else if (result.scores.empty()) {
    result.status = RunStatus::kFailed;
  } else {
    result.status = RunStatus::kPartial;
  }

  {
    std::ofstream csv(exp_dir / "scores.csv", std::ios::trunc);
    write_scores_csv(csv, result.scores);
  }
  manifest["status"] = to_string(result.status);
  manifest["finished_at"] = utc_timestamp();
  manifest["completed_blocks"] = result.scores.size();
  manifest["resumed_blocks"] = result.resumed_blocks;
  json failures = json::array();
  for (const auto& f : result.failures) {
    failures.push_back(json{{"n", f.n},
                            {"block_index", f.block_index},
                            {"status", to_string(f.status)},
                            {"error", f.error}});
  }
  manifest["failures"] = std::move(failures);
  write_json_file(manifest_path, manifest);
  return result;
}

void write_scores_csv(std::ostream& out, const std::vector<ScoredBlock>& rows) {
  out << "condition,variant,n,block_index,hits,false_alarms,hit_rate,fa_rate,"
         "accuracy,dprime,invalid_count\n";
  for (const auto& r : rows) {
    out << r.condition << ',' << to_string(r.variant) << ',' << r.n << ','
        << r.block_index << ',' << r.score.hits << ',' << r.score.false_alarms
        << ',' << format_double(r.score.hit_rate) << ','
        << format_double(r.score.fa_rate) << ','
        << format_double(r.score.accuracy) << ','
        << format_double(r.score.dprime) << ',' << r.score.invalid_count << '\n';
  }
}

}  // namespace nback
