#include "synthdial/runner.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "synthdial/metrics.hpp"
#include "synthdial/text.hpp"

namespace synthdial {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_file(const std::string& path, const char* what) {
  if (path.empty()) {
    throw Error(Errc::ConfigError, std::string("missing --") + what);
  }
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(Errc::ConfigError,
                std::string(what) + " path does not exist: " + path);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  const std::string l = text::lower(text::trim(v));
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw Error(Errc::ConfigError, key + ": expected a boolean, got '" + v + "'");
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::logic_error&) {
    throw Error(Errc::ConfigError, key + ": expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw Error(Errc::ConfigError, key + ": expected a number, got '" + v + "'");
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  return in;
}

PromptTemplateSet load_templates(const RunConfig& config) {
  if (config.paths.templates.empty()) {
    return PromptTemplateSet::defaults(config.mode);
  }
  return PromptTemplateSet::load_dir(config.paths.templates, config.mode);
}

std::string jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

json summary_json(const GenerateSummary& s) {
  json failures = json::array();
  for (const auto& [id, reason] : s.failures) {
    failures.push_back({{"id", id}, {"reason", reason}});
  }
  json j = {{"notes", s.notes},
            {"succeeded", s.succeeded},
            {"failed", s.failures.size()},
            {"failures", failures},
            {"gateway_calls", s.gateway_calls},
            {"retries", s.retries},
            {"polish_regressions", s.counters.polish_regressions},
            {"hallucination_regressions", s.counters.hallucination_regressions},
            {"merge_fallbacks", s.counters.merge_fallbacks},
            {"pass_failures", s.counters.pass_failures},
            {"dropped_prefix_lines", s.counters.dropped_prefix_lines}};
  if (s.first_mismatch_seq) j["first_mismatch_seq"] = *s.first_mismatch_seq;
  return j;
}

// Splits a JSONL file into id -> line for diff reports.
std::map<std::string, std::string> lines_by_id(const std::string& content) {
  std::map<std::string, std::string> out;
  std::istringstream in(content);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    std::string id = "#" + std::to_string(n++);
    try {
      const auto j = json::parse(line);
      if (j.contains("id") && j["id"].is_string()) id = j["id"].get<std::string>();
    } catch (const json::exception&) {
    }
    out[id] = line;
  }
  return out;
}

struct SummarizeItem {
  std::string id;
  std::string dialogue;
  std::optional<CanonicalHeader> gold;
};

std::vector<SummarizeItem> read_summarize_input(std::istream& in) {
  std::vector<SummarizeItem> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw LineError(Errc::MalformedLine, line_no, e.what());
    }
    std::istringstream one(line);
    auto texts = metrics::read_id_texts(one);
    SummarizeItem item{texts.at(0).id, texts.at(0).text, std::nullopt};
    if (j.contains("header") && !j["header"].is_null()) {
      const auto label = j["header"].get<std::string>();
      item.gold = parse_label(label);
      if (!item.gold) {
        throw LineError(Errc::InvalidHeader, line_no,
                        "unknown header '" + label + "'");
      }
    }
    out.push_back(std::move(item));
  }
  return out;
}

template <typename Fn>
void run_pool(std::size_t n, int parallelism, Fn fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  const auto threads = static_cast<std::size_t>(std::max(1, parallelism));
  if (threads == 1 || n <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace

void RunConfig::validate() const {
  if (parallelism < 1) throw Error(Errc::ConfigError, "parallelism must be >= 1");
  switch (command) {
    case Command::Generate:
    case Command::Replay:
      require_file(paths.notes, "notes");
      require_file(paths.lexicon, "lexicon");
      if (paths.out.empty()) throw Error(Errc::ConfigError, "missing --out");
      break;
    case Command::Summarize:
      require_file(paths.dialogues, "dialogues");
      if (!paths.exemplars.empty()) require_file(paths.exemplars, "exemplars");
      if (paths.out.empty()) throw Error(Errc::ConfigError, "missing --out");
      break;
    case Command::Evaluate:
      require_file(paths.generated, "generated");
      require_file(paths.references, "references");
      require_file(paths.lexicon, "lexicon");
      if (paths.out.empty()) throw Error(Errc::ConfigError, "missing --out");
      return;
  }
  if (command == Command::Replay) {
    require_file(paths.transcript, "transcript");
  } else if (backend.kind == BackendKind::Scripted) {
    require_file(backend.transcript_path, "transcript");
  }
  if (!paths.templates.empty()) {
    std::error_code ec;
    if (!fs::is_directory(paths.templates, ec)) {
      throw Error(Errc::ConfigError,
                  "templates directory does not exist: " + paths.templates);
    }
  }
  if (parallelism > backend.max_in_flight) {
    throw Error(Errc::ConfigError, "parallelism exceeds max-in-flight");
  }
  loop.validate();
  backend.validate(loop.max_output_tokens);
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read config file " + path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    if (text::is_blank(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::ConfigError, path + ":" + std::to_string(line_no) +
                                         ": expected key = value");
    }
    const std::string key(text::trim(std::string_view(line).substr(0, eq)));
    const std::string value(text::trim(std::string_view(line).substr(eq + 1)));
    if (key.empty()) {
      throw Error(Errc::ConfigError,
                  path + ":" + std::to_string(line_no) + ": empty key");
    }
    out[key] = value;
  }
  return out;
}

void apply_settings(RunConfig& c,
                    const std::map<std::string, std::string>& settings) {
  // Mode resets the loop defaults, so it goes first.
  if (const auto it = settings.find("mode"); it != settings.end()) {
    try {
      c.mode = parse_mode(it->second);
    } catch (const Error& e) {
      throw Error(Errc::ConfigError, e.what());
    }
    const auto model = c.loop.model;
    c.loop = LoopConfig::for_mode(c.mode);
    c.loop.model = model;
  }
  for (const auto& [key, v] : settings) {
    if (key == "mode") continue;
    if (key == "notes") c.paths.notes = v;
    else if (key == "lexicon") c.paths.lexicon = v;
    else if (key == "templates") c.paths.templates = v;
    else if (key == "exemplars") c.paths.exemplars = v;
    else if (key == "dialogues") c.paths.dialogues = v;
    else if (key == "generated") c.paths.generated = v;
    else if (key == "references") c.paths.references = v;
    else if (key == "out") c.paths.out = v;
    else if (key == "transcript") {
      c.paths.transcript = v;
      c.backend.transcript_path = v;
    } else if (key == "record") c.paths.record = v;
    else if (key == "backend") {
      if (v == "live") c.backend.kind = BackendKind::Live;
      else if (v == "scripted") c.backend.kind = BackendKind::Scripted;
      else throw Error(Errc::ConfigError, "backend must be live or scripted");
    } else if (key == "base-url") c.backend.base_url = v;
    else if (key == "api-key-env") c.backend.api_key_env = v;
    else if (key == "verify") c.backend.verify_transcript = parse_bool(key, v);
    else if (key == "timeout-ms") {
      c.backend.timeout = std::chrono::milliseconds(parse_int(key, v));
    } else if (key == "backoff-ms") {
      c.backend.backoff_base = std::chrono::milliseconds(parse_int(key, v));
    } else if (key == "max-retries") {
      c.backend.max_retries = static_cast<int>(parse_int(key, v));
    } else if (key == "max-in-flight") {
      c.backend.max_in_flight = static_cast<int>(parse_int(key, v));
    } else if (key == "context-budget") {
      c.backend.context_token_budget = static_cast<int>(parse_int(key, v));
    } else if (key == "parallelism") {
      c.parallelism = static_cast<int>(parse_int(key, v));
    } else if (key == "seed") {
      c.seed = parse_int(key, v);
      c.loop.seed = c.seed;
    } else if (key == "max-rounds") {
      c.loop.max_rounds_per_section = static_cast<int>(parse_int(key, v));
    } else if (key == "keywords-per-question") {
      c.loop.keywords_per_question = static_cast<int>(parse_int(key, v));
    } else if (key == "final-hallucination-pass") {
      c.loop.final_hallucination_pass = parse_bool(key, v);
    } else if (key == "polish") {
      c.loop.enable_polish = parse_bool(key, v);
    } else if (key == "hallucination-check") {
      c.loop.enable_hallucination_check = parse_bool(key, v);
    } else if (key == "model") {
      c.loop.model = v;
      c.writer.model = v;
    } else if (key == "temperature") {
      c.loop.dialogue_temperature = parse_double(key, v);
    } else if (key == "rewrite-temperature") {
      c.loop.rewrite_temperature = parse_double(key, v);
      c.writer.temperature = c.loop.rewrite_temperature;
    } else if (key == "max-output-tokens") {
      c.loop.max_output_tokens = static_cast<int>(parse_int(key, v));
      c.writer.max_output_tokens = c.loop.max_output_tokens;
    } else if (key == "exemplars-per-prompt") {
      c.writer.exemplars_per_prompt =
          static_cast<std::size_t>(std::max(0LL, parse_int(key, v)));
    } else if (key == "header-threshold") {
      c.header_rules.threshold = parse_double(key, v);
    } else if (key == "whole-note-fallback") {
      c.header_rules.whole_note_fallback = parse_bool(key, v);
    } else {
      throw Error(Errc::ConfigError, "unknown setting '" + key + "'");
    }
  }
}

GenerateOutput run_generate(const RunConfig& config,
                            std::unique_ptr<ChatBackend> backend) {
  const Lexicon lexicon = load_lexicon_file(config.paths.lexicon);
  const PromptTemplateSet templates = load_templates(config);
  std::vector<NoteRecord> records;
  {
    auto in = open_input(config.paths.notes);
    records = read_note_records(in);
  }

  if (!backend) backend = make_backend(config.backend);
  std::unique_ptr<TranscriptWriter> recorder;
  if (!config.paths.record.empty()) {
    recorder = std::make_unique<TranscriptWriter>(config.paths.record);
  }
  Gateway gateway(config.backend, std::move(backend), recorder.get());

  GenerateOutput output;
  output.results.resize(records.size());
  run_pool(records.size(), config.parallelism, [&](std::size_t i) {
    GenerationResult& r = output.results[i];
    try {
      const ClinicalNote note =
          parse_note(records[i].id, records[i].note, config.header_rules);
      r = generate_dialogue(note, lexicon, gateway, templates, config.loop);
    } catch (const Error& e) {
      r.dialogue.note_id = records[i].id;
      r.dialogue.mode = config.mode;
      r.error = e.code();
      r.error_message = e.what();
    }
  });
  if (recorder) recorder->flush();

  GenerateSummary& s = output.summary;
  s.notes = records.size();
  for (const auto& r : output.results) {
    s.counters += r.report.counters;
    if (r.ok()) {
      ++s.succeeded;
    } else {
      s.failures.emplace_back(r.dialogue.note_id, r.error_message);
    }
    if (r.mismatch_seq &&
        (!s.first_mismatch_seq || *r.mismatch_seq < *s.first_mismatch_seq)) {
      s.first_mismatch_seq = r.mismatch_seq;
    }
  }
  const GatewayStats stats = gateway.stats();
  s.gateway_calls = stats.calls;
  s.retries = stats.retries;
  return output;
}

void write_generate_outputs(const GenerateOutput& output,
                            const std::string& out_dir) {
  std::vector<json> dialogues;
  std::vector<json> coverage;
  for (const auto& r : output.results) {
    if (r.ok()) dialogues.push_back(dialogue_record(r));
    json c = {{"id", r.dialogue.note_id}, {"coverage", to_json(r.report)}};
    if (!r.ok()) {
      c["error"] = std::string(to_string(*r.error));
      c["message"] = r.error_message;
    }
    coverage.push_back(std::move(c));
  }
  const fs::path dir(out_dir);
  write_file_atomic((dir / "dialogues.jsonl").string(), jsonl(dialogues));
  write_file_atomic((dir / "coverage.jsonl").string(), jsonl(coverage));
  write_file_atomic((dir / "summary.json").string(),
                    summary_json(output.summary).dump(2) + "\n");
}

int cmd_generate(const RunConfig& config, std::ostream& log) {
  config.validate();
  const GenerateOutput output = run_generate(config);
  write_generate_outputs(output, config.paths.out);
  const auto& s = output.summary;
  log << "generated " << s.succeeded << "/" << s.notes << " dialogues, "
      << s.gateway_calls << " model calls\n";
  for (const auto& [id, reason] : s.failures) {
    log << "  failed " << id << ": " << reason << "\n";
  }
  return kExitOk;
}

int cmd_summarize(const RunConfig& config, std::ostream& log) {
  config.validate();
  const PromptTemplateSet templates = load_templates(config);
  ExemplarStore store;
  if (!config.paths.exemplars.empty()) {
    auto in = open_input(config.paths.exemplars);
    store = load_exemplars(in);
  }
  std::vector<SummarizeItem> items;
  {
    auto in = open_input(config.paths.dialogues);
    items = read_summarize_input(in);
  }

  std::unique_ptr<TranscriptWriter> recorder;
  if (!config.paths.record.empty()) {
    recorder = std::make_unique<TranscriptWriter>(config.paths.record);
  }
  Gateway gateway(config.backend, make_backend(config.backend), recorder.get());

  struct Row {
    std::optional<CanonicalHeader> header;
    std::string section;
    std::string error;
  };
  std::vector<Row> rows(items.size());
  run_pool(items.size(), config.parallelism, [&](std::size_t i) {
    CallContext calls{items[i].id, 0};
    try {
      const CanonicalHeader h = classify_header(items[i].dialogue, gateway,
                                                calls, templates, config.writer);
      rows[i].header = h;
      rows[i].section = generate_section(items[i].dialogue, h, store, gateway,
                                         calls, templates, config.writer);
    } catch (const Error& e) {
      rows[i].error = e.what();
    }
  });
  if (recorder) recorder->flush();

  std::vector<json> out;
  std::vector<CanonicalHeader> predicted;
  std::vector<CanonicalHeader> gold;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    json j = {{"id", items[i].id}};
    if (rows[i].header) {
      j["header"] = std::string(label(*rows[i].header));
      j["section_text"] = rows[i].section;
    } else {
      j["error"] = rows[i].error;
      ++failed;
      log << "  failed " << items[i].id << ": " << rows[i].error << "\n";
    }
    if (items[i].gold && rows[i].header) {
      predicted.push_back(*rows[i].header);
      gold.push_back(*items[i].gold);
    }
    out.push_back(std::move(j));
  }
  const fs::path dir(config.paths.out);
  write_file_atomic((dir / "summaries.jsonl").string(), jsonl(out));
  json report = {{"dialogues", items.size()},
                 {"failed", failed},
                 {"gateway_calls", gateway.stats().calls}};
  const bool any_gold = std::any_of(items.begin(), items.end(),
                                    [](const auto& it) { return it.gold; });
  if (any_gold) {
    report["classification_accuracy"] =
        classification_accuracy(predicted, gold);
  }
  write_file_atomic((dir / "summarize_report.json").string(),
                    report.dump(2) + "\n");
  log << "summarized " << items.size() - failed << "/" << items.size()
      << " dialogues\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& config, std::ostream& log) {
  config.validate();
  const Lexicon lexicon = load_lexicon_file(config.paths.lexicon);
  std::vector<metrics::IdText> generated;
  std::vector<metrics::IdText> references;
  {
    auto in = open_input(config.paths.generated);
    generated = metrics::read_id_texts(in);
  }
  {
    auto in = open_input(config.paths.references);
    references = metrics::read_id_texts(in);
  }
  const metrics::EvalReport report =
      metrics::evaluate_run(generated, references, lexicon);
  const std::string table = metrics::render_table(report);
  const fs::path dir(config.paths.out);
  write_file_atomic((dir / "eval.json").string(),
                    metrics::to_json(report).dump(2) + "\n");
  write_file_atomic((dir / "eval_table.txt").string(), table);
  log << table;
  return kExitOk;
}

int cmd_replay(const RunConfig& config, std::ostream& log) {
  config.validate();
  RunConfig replay = config;
  replay.backend.kind = BackendKind::Scripted;
  replay.backend.transcript_path = config.paths.transcript;
  replay.backend.verify_transcript = true;
  replay.paths.record.clear();
  const fs::path recorded(config.paths.out);
  const fs::path out_dir = recorded / "replay";

  const GenerateOutput output = run_generate(replay);
  write_generate_outputs(output, out_dir.string());

  bool diverged = false;
  if (output.summary.first_mismatch_seq) {
    diverged = true;
    log << "replay diverged at call seq " << *output.summary.first_mismatch_seq
        << "\n";
  }
  std::set<std::string> differing;
  for (const char* name : {"dialogues.jsonl", "coverage.jsonl"}) {
    const std::string want = read_file((recorded / name).string());
    const std::string got = read_file((out_dir / name).string());
    if (want == got) continue;
    diverged = true;
    const auto a = lines_by_id(want);
    const auto b = lines_by_id(got);
    for (const auto& [id, line] : a) {
      const auto it = b.find(id);
      if (it == b.end() || it->second != line) differing.insert(id);
    }
    for (const auto& [id, line] : b) {
      if (!a.count(id)) differing.insert(id);
    }
  }
  for (const auto& r : output.results) {
    if (r.mismatch_seq) differing.insert(r.dialogue.note_id);
  }
  if (!diverged) {
    log << "replay identical (" << output.summary.gateway_calls
        << " calls)\n";
    return kExitOk;
  }
  for (const auto& id : differing) log << "  differs: " << id << "\n";
  return kExitReplayDivergence;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic doctor-patient dialogue generation and evaluation"};
  app.require_subcommand(1);
  std::map<std::string, std::string> cli;

  std::string config_path;
  app.add_option("--config", config_path, "key = value settings file");
  const std::vector<std::pair<std::string, std::string>> valued = {
      {"notes", "notes JSONL"},
      {"lexicon", "concept lexicon TSV"},
      {"templates", "prompt template directory"},
      {"exemplars", "section exemplars JSONL"},
      {"dialogues", "dialogues JSONL to summarize"},
      {"generated", "generated texts JSONL"},
      {"references", "reference texts JSONL"},
      {"out", "output directory"},
      {"mode", "short | long"},
      {"backend", "live | scripted"},
      {"transcript", "transcript to replay"},
      {"record", "write a transcript of this run"},
      {"parallelism", "concurrent workers"},
      {"seed", "sampling seed sent with requests"},
      {"max-rounds", "round limit per section"},
      {"base-url", "chat completions endpoint"},
      {"api-key-env", "environment variable holding the API key"},
      {"model", "model name"},
      {"max-in-flight", "concurrent model calls"},
      {"context-budget", "context window in tokens"},
      {"max-retries", "retries on 429/5xx"},
      {"timeout-ms", "per-request timeout"},
      {"backoff-ms", "base retry backoff"},
  };
  std::map<std::string, std::string> raw;
  for (const auto& [name, help] : valued) {
    app.add_option("--" + name, raw[name], help);
  }
  bool final_pass = false;
  bool verify = false;
  app.add_flag("--final-hallucination-pass", final_pass,
               "run one more hallucination check on the merged dialogue");
  app.add_flag("--verify", verify, "check prompt hashes against the transcript");

  Command command = Command::Generate;
  const std::vector<std::pair<std::string, Command>> subs = {
      {"generate", Command::Generate},
      {"summarize", Command::Summarize},
      {"evaluate", Command::Evaluate},
      {"replay", Command::Replay}};
  for (const auto& [name, cmd] : subs) {
    app.add_subcommand(name)->fallthrough()->callback(
        [&command, cmd = cmd] { command = cmd; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitConfig;
  }

  try {
    std::map<std::string, std::string> settings;
    if (!config_path.empty()) settings = read_config_file(config_path);
    for (const auto& [name, help] : valued) {
      if (app.count("--" + name) > 0) settings[name] = raw[name];
    }
    if (final_pass) settings["final-hallucination-pass"] = "true";
    if (verify) settings["verify"] = "true";

    RunConfig config;
    config.command = command;
    apply_settings(config, settings);

    switch (command) {
      case Command::Generate:
        return cmd_generate(config, out);
      case Command::Summarize:
        return cmd_summarize(config, out);
      case Command::Evaluate:
        return cmd_evaluate(config, out);
      case Command::Replay:
        return cmd_replay(config, out);
    }
  } catch (const IdError& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == Errc::ConfigError ? kExitConfig : kExitDataMismatch;
  } catch (const ScriptMismatchError& e) {
    err << "error: replay diverged at call seq " << e.seq() << "\n";
    return kExitReplayDivergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == Errc::ConfigError ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace synthdial
