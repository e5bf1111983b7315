#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "synthdial/concepts.hpp"
#include "synthdial/dialogue.hpp"
#include "synthdial/error.hpp"
#include "synthdial/gateway.hpp"
#include "synthdial/note.hpp"
#include "synthdial/templates.hpp"

namespace synthdial {

enum class HistoryWindow { All, PreviousSegmentOnly };

struct LoopConfig {
  int max_rounds_per_section = 6;
  int keywords_per_question = 4;
  HistoryWindow history_window = HistoryWindow::All;
  DialogueMode mode = DialogueMode::Short;
  bool enable_polish = true;
  bool enable_hallucination_check = true;
  bool final_hallucination_pass = false;

  std::string model = "gpt-3.5-turbo";
  double dialogue_temperature = 0.7;
  double rewrite_temperature = 0.2;
  int max_output_tokens = 512;
  std::optional<std::int64_t> seed;

  // Short: 6 rounds, full history. Long: 10 rounds, previous segment only.
  static LoopConfig for_mode(DialogueMode mode);
  // Throws ConfigError; long mode with HistoryWindow::All is rejected.
  void validate() const;
};

struct PassCounters {
  std::size_t polish_regressions = 0;
  std::size_t hallucination_regressions = 0;
  std::size_t merge_fallbacks = 0;
  std::size_t pass_failures = 0;  // parse or gateway failure inside a pass
  std::size_t dropped_prefix_lines = 0;

  PassCounters& operator+=(const PassCounters& o);
};

// Everything a worker needs to talk to the model for one note.
struct LoopContext {
  const PromptTemplateSet& templates;
  const Lexicon& lexicon;
  Gateway& gateway;
  CallContext& calls;
  const LoopConfig& config;
  PassCounters& counters;
};

// First min(k, #uncovered) uncovered display terms in checklist order.
std::vector<std::string> select_keywords(const ConceptChecklist& checklist,
                                         int k);

ChatRequest build_doctor_prompt(const PromptTemplateSet& templates,
                                const LoopConfig& config,
                                std::string_view note_section,
                                std::string_view history,
                                const std::vector<std::string>& keywords);

ChatRequest build_patient_prompt(const PromptTemplateSet& templates,
                                 const LoopConfig& config,
                                 std::string_view note_section,
                                 std::string_view history);

struct SectionLoopResult {
  Dialogue fragment;
  ConceptChecklist checklist;
  int rounds = 0;
};

// Doctor/patient rounds until every item of `checklist` is covered or the
// round limit is hit. At least one round always runs. `context` is the
// prior dialogue threaded into the history ahead of this section's turns.
SectionLoopResult run_section_loop(const NoteSection& section,
                                   ConceptChecklist checklist,
                                   const std::vector<Utterance>& context,
                                   LoopContext& ctx);

// Rewrite passes. Each returns the input unchanged when disabled, when the
// call or parse fails, or when the rewrite loses a keyword the input covered.
Dialogue polish(const Dialogue& fragment, std::string_view note_section,
                const std::vector<std::string>& keywords, LoopContext& ctx);

Dialogue hallucination_check(const Dialogue& fragment,
                             std::string_view note_section,
                             const std::vector<std::string>& keywords,
                             LoopContext& ctx);

// Running merged dialogue. In short mode the post-edit prompt carries the
// whole dialogue and its output replaces it. In long mode the prompt carries
// only `previous_segment`, the tail of `running` from `tail_start`, and its
// output replaces that tail.
struct MergeState {
  Dialogue running;
  std::size_t tail_start = 0;
  Dialogue previous_segment;
  bool started = false;
};

// Adds `segment` to `state`. Falls back to appending the segment when the
// call or parse fails or the merged dialogue loses coverage.
void postedit_merge(MergeState& state, const Dialogue& segment,
                    const std::vector<std::string>& keywords, LoopContext& ctx);

// Where the newly generated part starts inside a post-edit output: just past
// the last turn aligned to `history`, else at the first turn aligned to
// `generated`, else proportionally. Rounded down to a turn pair.
std::size_t segment_split(const std::vector<Utterance>& merged,
                          const std::vector<Utterance>& history,
                          const std::vector<Utterance>& generated);

struct SectionRounds {
  CanonicalHeader header;
  std::size_t order_index = 0;
  int rounds = 0;
};

struct CoverageReport {
  std::size_t total_keywords = 0;
  std::size_t covered = 0;
  std::vector<std::string> uncovered;
  std::vector<SectionRounds> rounds;
  PassCounters counters;
  std::size_t gateway_calls = 0;
  ConceptChecklist checklist;
};

nlohmann::json to_json(const CoverageReport& report);

struct GenerationResult {
  Dialogue dialogue;
  CoverageReport report;
  std::vector<Dialogue> segments;  // per section, after rewrite passes
  std::optional<Errc> error;
  std::string error_message;
  std::optional<std::size_t> mismatch_seq;

  bool ok() const noexcept { return !error.has_value(); }
};

// One note end to end: checklist, per-section loop, rewrite passes and
// merge. Failures are captured in the result rather than thrown.
GenerationResult generate_dialogue(const ClinicalNote& note,
                                   const Lexicon& lexicon, Gateway& gateway,
                                   const PromptTemplateSet& templates,
                                   const LoopConfig& config);

// {"id","mode","dialogue":[{"speaker","text"}],"coverage":{...}}
nlohmann::json dialogue_record(const GenerationResult& result);

}  // namespace synthdial
