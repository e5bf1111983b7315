#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synthdial/gateway.hpp"
#include "synthdial/io.hpp"
#include "synthdial/loop.hpp"
#include "synthdial/note.hpp"
#include "synthdial/section_writer.hpp"

namespace synthdial {

enum class Command { Generate, Summarize, Evaluate, Replay };

// Stable process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitDataMismatch = 3,
  kExitReplayDivergence = 4,
};

struct RunPaths {
  std::string notes;
  std::string lexicon;
  std::string templates;
  std::string exemplars;
  std::string dialogues;  // summarize input
  std::string generated;  // evaluate inputs
  std::string references;
  std::string out;
  std::string transcript;  // scripted backend / replay source
  std::string record;      // transcript to write
};

struct RunConfig {
  Command command = Command::Generate;
  DialogueMode mode = DialogueMode::Short;
  RunPaths paths;
  BackendConfig backend;
  LoopConfig loop;
  WriterConfig writer;
  HeaderRules header_rules;
  int parallelism = 1;
  std::int64_t seed = 0;

  // Throws ConfigError for missing required paths or inconsistent values.
  void validate() const;
};

// Flat "key = value" lines; '#' starts a comment. Keys use the long flag
// names without dashes (e.g. "max-rounds").
std::map<std::string, std::string> read_config_file(const std::string& path);

// Applies a key/value map onto `config`. Unknown keys throw ConfigError.
void apply_settings(RunConfig& config,
                    const std::map<std::string, std::string>& settings);


struct GenerateSummary {
  std::size_t notes = 0;
  std::size_t succeeded = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // id, reason
  std::size_t gateway_calls = 0;
  std::size_t retries = 0;
  PassCounters counters;
  std::optional<std::size_t> first_mismatch_seq;
};

struct GenerateOutput {
  std::vector<GenerationResult> results;  // input order
  GenerateSummary summary;
};

// Runs every note with `parallelism` workers. Backend comes from
// config.backend unless `backend` is supplied (tests).
GenerateOutput run_generate(const RunConfig& config,
                            std::unique_ptr<ChatBackend> backend = nullptr);

// Writes dialogues.jsonl, coverage.jsonl and summary.json under `out_dir`.
void write_generate_outputs(const GenerateOutput& output,
                            const std::string& out_dir);

int cmd_generate(const RunConfig& config, std::ostream& log);
int cmd_summarize(const RunConfig& config, std::ostream& log);
int cmd_evaluate(const RunConfig& config, std::ostream& log);
// Regenerates from the transcript with hash verification into
// `<out>/replay/` and compares against `<out>/dialogues.jsonl` and
// `<out>/coverage.jsonl`.
int cmd_replay(const RunConfig& config, std::ostream& log);

// Full CLI entry point; argv[1] is the subcommand.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace synthdial
