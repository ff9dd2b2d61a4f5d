#include "commands.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "nback/prompts.hpp"
#include "nback/report.hpp"
#include "nback/run_config.hpp"
#include "nback/runner.hpp"
#include "nback/serialize.hpp"

namespace nback::cli {

namespace fs = std::filesystem;

namespace {

struct GenerateArgs {
  std::string config;
  std::string out;
  std::string seed;
  bool force = false;
};

struct RunArgs {
  std::string config;
  std::string agent;
  std::string out;
  std::string seed;
  std::string blocks;
  int parallelism = 0;
  bool resume = false;
  bool dry_run = false;
  bool force = false;
};

struct AnalyzeArgs {
  std::string results;
  std::string out;
  std::string overlay;
  double bin_width = kDefaultBinWidth;
  bool force = false;
};

struct ReplayArgs {
  std::string transcript;
  bool allow_partial = false;
};

bool non_empty_dir(const fs::path& p) {
  return fs::exists(p) && (!fs::is_directory(p) || !fs::is_empty(p));
}

void apply_seed(RunConfig& rc, const std::string& seed) {
  if (seed.empty()) return;
  try {
    rc.experiment.task.seed = parse_u64(nlohmann::json(seed));
  } catch (const std::exception& e) {
    throw ConfigError({std::string("--seed: ") + e.what()});
  }
}

void print_score(std::ostream& out, const BlockScore& s) {
  out << "hits " << s.hits << "/" << s.targets << ", false alarms "
      << s.false_alarms << "/" << s.nontargets << ", hit rate "
      << format_sig6(s.hit_rate) << ", fa rate " << format_sig6(s.fa_rate)
      << ", accuracy " << format_sig6(s.accuracy) << ", d' "
      << format_sig6(s.dprime) << ", invalid " << s.invalid_count << "\n";
}

int cmd_generate(const GenerateArgs& args, Streams io) {
  RunConfig rc = load_run_config(args.config);
  apply_seed(rc, args.seed);
  const fs::path out = args.out;
  if (non_empty_dir(out)) {
    if (!args.force) {
      io.err << "error: " << out.string()
             << " is not empty; use --force to replace it\n";
      return kExitError;
    }
    fs::remove_all(out);
  }
  std::size_t files = 0;
  for (int n : rc.experiment.n_levels) {
    const TaskConfig cfg = config_for_n(rc.experiment, n);
    std::size_t targets = 0;
    std::size_t trials = 0;
    for (int b = 0; b < cfg.blocks; ++b) {
      const Block block = generate_block(cfg, static_cast<std::size_t>(b));
      write_block_file(block_file_path(out, n, block.block_index), block);
      for (const Trial& t : block.trials) {
        targets += t.label == Label::kMatch ? 1 : 0;
      }
      trials += block.trials.size();
      ++files;
    }
    io.out << rc.experiment.id << " n=" << n << ": " << cfg.blocks
           << " blocks, " << targets << " targets, " << trials - targets
           << " nontargets\n";
  }
  io.out << "wrote " << files << " block files to " << out.string() << "\n";
  return kExitClean;
}

void print_dry_run(const RunConfig& rc, const std::optional<fs::path>& blocks,
                   std::ostream& out) {
  for (int n : rc.experiment.n_levels) {
    const TaskConfig cfg = config_for_n(rc.experiment, n);
    const Block block = blocks ? read_block_file(block_file_path(*blocks, n, 0))
                               : generate_block(cfg, 0);
    out << "=== " << rc.experiment.id << " n=" << n << " block 0 ===\n";
    out << "--- instruction ---\n" << build_instruction(cfg) << "\n";
    const std::size_t shown = std::min<std::size_t>(3, block.trials.size());
    for (std::size_t t = 0; t < shown; ++t) {
      out << "--- trial " << t + 1 << " ("
          << to_string(block.trials[t].label) << ") ---\n"
          << render_trial_message(block.trials[t].stimulus, std::nullopt,
                                  rc.render)
          << "\n";
    }
  }
}

int cmd_run(const RunArgs& args, Streams io) {
  RunConfig rc = load_run_config(args.config);
  apply_seed(rc, args.seed);
  if (!args.agent.empty()) {
    const auto kind = parse_agent_kind(args.agent);
    if (!kind) throw ConfigError({"--agent: unknown kind \"" + args.agent + "\""});
    rc.agent.kind = *kind;
    if (auto problems = validate(rc.agent); !problems.empty()) {
      throw ConfigError(std::move(problems));
    }
  }
  if (args.parallelism != 0) rc.parallelism = args.parallelism;
  if (!args.out.empty()) rc.output_dir = args.out;
  std::optional<fs::path> blocks;
  if (!args.blocks.empty()) blocks = fs::path(args.blocks);

  if (args.dry_run) {
    print_dry_run(rc, blocks, io.out);
    return kExitClean;
  }

  if (rc.agent.kind == AgentKind::kRemoteChat && !rc.agent.api_key_env.empty() &&
      std::getenv(rc.agent.api_key_env.c_str()) == nullptr) {
    io.err << "error: environment variable " << rc.agent.api_key_env
           << " is not set (agent.api_key_env)\n";
    return kExitError;
  }

  RunOptions opts;
  opts.output_dir = rc.output_dir;
  opts.parallelism = rc.parallelism;
  opts.rate_limit_per_second = rc.rate_limit_per_second;
  opts.resume = args.resume;
  opts.force = args.force;
  opts.render = rc.render;
  opts.blocks_dir = blocks;
  opts.input = &io.in;
  opts.output = &io.out;

  const ExperimentResult result = run_experiment(rc.experiment, rc.agent, opts);

  for (int n : rc.experiment.n_levels) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const ScoredBlock& s : result.scores) {
      if (s.n != n) continue;
      sum += s.score.dprime;
      ++count;
    }
    io.out << rc.experiment.id << " n=" << n << ": " << count << "/"
           << rc.experiment.task.blocks << " blocks complete";
    if (count > 0) io.out << ", mean d' " << format_sig6(sum / count);
    io.out << "\n";
  }
  for (const BlockFailure& f : result.failures) {
    io.err << "block n=" << f.n << " #" << f.block_index << " "
           << to_string(f.status) << ": " << f.error << "\n";
  }
  io.out << "executed " << result.executed_blocks << ", resumed "
         << result.resumed_blocks << "; status " << to_string(result.status)
         << "; results in "
         << experiment_dir(rc.output_dir, rc.experiment.id).string() << "\n";
  switch (result.status) {
    case RunStatus::kClean:
      return kExitClean;
    case RunStatus::kPartial:
      return kExitPartial;
    case RunStatus::kFailed:
      break;
  }
  return kExitError;
}

int cmd_analyze(const AnalyzeArgs& args, Streams io) {
  const fs::path results = args.results;
  const fs::path out = args.out.empty() ? results / "report" : fs::path(args.out);
  if (non_empty_dir(out)) {
    if (!args.force) {
      io.err << "error: " << out.string()
             << " is not empty; use --force to replace it\n";
      return kExitError;
    }
    fs::remove_all(out);
  }
  ReportOptions opts;
  opts.bin_width = args.bin_width;
  if (!args.overlay.empty()) opts.overlay = read_overlay_csv(args.overlay);

  const std::vector<ConditionData> conditions = load_results(results);
  for (const ConditionData& c : conditions) {
    if (c.excluded_blocks > 0) {
      io.err << "warning: " << c.condition << ": " << c.excluded_blocks
             << " incomplete or missing blocks excluded\n";
    }
  }
  write_report(out, conditions, opts);

  std::ifstream stats(out / "stats.md");
  io.out << stats.rdbuf();
  io.out << "report written to " << out.string() << "\n";
  return kExitClean;
}

int cmd_replay(const ReplayArgs& args, Streams io) {
  const BlockTranscript tr = read_transcript(args.transcript);
  const BlockScore score = score_transcript(tr, args.allow_partial);
  io.out << tr.experiment << " n=" << tr.config.n << " block "
         << tr.block_index << " (" << tr.records.size() << "/"
         << tr.config.block_length << " trials, " << to_string(tr.status)
         << ")\n";
  print_score(io.out, score);
  return tr.complete() ? kExitClean : kExitPartial;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, Streams io) {
  CLI::App app{"n-back working-memory benchmark for chat agents", "nback"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nback 0.1.0");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write task blocks for every n");
  generate->add_option("--config", gen.config, "Run configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--seed", gen.seed, "Override task.seed");
  generate->add_flag("--force", gen.force, "Replace an existing output directory");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment against an agent");
  run_cmd->add_option("--config", run.config, "Run configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--agent", run.agent, "Override agent.kind");
  run_cmd->add_option("--out", run.out, "Override output_dir");
  run_cmd->add_option("--seed", run.seed, "Override task.seed");
  run_cmd->add_option("--blocks", run.blocks,
                      "Use blocks written by 'generate' instead of regenerating")
      ->check(CLI::ExistingDirectory);
  run_cmd->add_option("--parallelism", run.parallelism,
                      "Concurrent conversations")
      ->check(CLI::PositiveNumber);
  auto* resume = run_cmd->add_flag("--resume", run.resume,
                                   "Skip blocks with complete transcripts");
  auto* force = run_cmd->add_flag("--force", run.force,
                                  "Delete existing results for the experiment");
  resume->excludes(force);
  run_cmd->add_flag("--dry-run", run.dry_run,
                    "Print the instruction and first three trials per n");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Statistics and plot data");
  analyze->add_option("results", an.results, "Results directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  analyze->add_option("--out", an.out, "Report directory (default <results>/report)");
  analyze->add_option("--overlay", an.overlay, "Reference CSV: n,mean,sd[,metric]")
      ->check(CLI::ExistingFile);
  analyze->add_option("--bin-width", an.bin_width, "Histogram bin width for d'")
      ->check(CLI::PositiveNumber);
  analyze->add_flag("--force", an.force, "Replace an existing report directory");

  ReplayArgs rep;
  auto* replay_cmd = app.add_subcommand("replay", "Rescore one transcript offline");
  replay_cmd->add_option("transcript", rep.transcript, "Transcript (.jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  replay_cmd->add_flag("--allow-partial", rep.allow_partial,
                       "Score the trials present in an incomplete transcript");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, io.out, io.err);
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, io);
    if (run_cmd->parsed()) return cmd_run(run, io);
    if (analyze->parsed()) return cmd_analyze(an, io);
    if (replay_cmd->parsed()) return cmd_replay(rep, io);
  } catch (const ConfigError& e) {
    for (const auto& p : e.problems()) io.err << "error: " << p << "\n";
    return kExitError;
  } catch (const IncompleteTranscript& e) {
    io.err << "error: " << e.what() << " (use --allow-partial)\n";
    return kExitError;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace nback::cli
