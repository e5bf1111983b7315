#include "synthdial/loop.hpp"

#include <algorithm>
#include <set>

#include "synthdial/text.hpp"

namespace synthdial {
namespace {

using IdSet = std::set<std::string>;

IdSet concept_ids(std::string_view text, const Lexicon& lexicon) {
  IdSet ids;
  for (auto& m : extract_concepts(text, lexicon)) ids.insert(std::move(m.concept_id));
  return ids;
}

std::string keyword_id(const std::string& keyword, const Lexicon& lexicon) {
  if (const auto* e = lexicon.find(keyword)) return e->concept_id;
  const auto found = extract_concepts(keyword, lexicon);
  return found.empty() ? std::string{} : found.front().concept_id;
}

// Keywords whose concept shows up in `text`, in keyword order.
std::vector<std::string> keywords_present(const std::vector<std::string>& kws,
                                          std::string_view text,
                                          const Lexicon& lexicon) {
  const IdSet ids = concept_ids(text, lexicon);
  std::vector<std::string> out;
  for (const auto& kw : kws) {
    const std::string id = keyword_id(kw, lexicon);
    if (!id.empty() && ids.contains(id)) out.push_back(kw);
  }
  return out;
}

bool keeps_keywords(const std::vector<std::string>& required,
                    std::string_view text, const Lexicon& lexicon) {
  const IdSet ids = concept_ids(text, lexicon);
  return std::all_of(required.begin(), required.end(), [&](const auto& kw) {
    return ids.contains(keyword_id(kw, lexicon));
  });
}

std::optional<std::string> keyword_binding(const std::vector<std::string>& kws) {
  if (kws.empty()) return std::nullopt;
  return text::join(kws, ", ");
}

std::optional<std::string> conversation_binding(std::string rendered) {
  if (rendered.empty()) return std::nullopt;
  return rendered;
}

ChatRequest make_request(const LoopConfig& config, std::string prompt,
                         double temperature) {
  ChatRequest r;
  r.model = config.model;
  r.messages.push_back({Role::User, std::move(prompt)});
  r.temperature = temperature;
  r.max_output_tokens = config.max_output_tokens;
  r.seed = config.seed;
  return r;
}

// Only errors about the model's text are recoverable inside a rewrite pass.
// Replay integrity and credentials problems always abort the note.
bool recoverable(const Error& e) {
  switch (e.code()) {
    case Errc::ParseFailure:
    case Errc::TransportError:
    case Errc::BudgetExceeded:
      return true;
    default:
      return false;
  }
}

std::size_t history_token_limit(const Gateway& gateway,
                                const LoopConfig& config) {
  const double usable = static_cast<double>(gateway.config().context_token_budget) *
                        (1.0 - kBudgetHeadroom);
  const double limit = usable - config.max_output_tokens;
  return limit > 0 ? static_cast<std::size_t>(limit) : 0;
}

// Drops the oldest history utterances until the rendered prompt fits under
// the headroom-adjusted budget.
template <typename Build>
ChatRequest fit_history(const std::vector<Utterance>& history,
                        std::size_t limit, Build build) {
  std::size_t first = 0;
  while (true) {
    std::vector<Utterance> window(history.begin() + static_cast<long>(first),
                                  history.end());
    ChatRequest req = build(render_dialogue(window));
    if (first >= history.size() || estimate_request_tokens(req) <= limit) {
      return req;
    }
    ++first;
  }
}

Utterance extract_turn(const std::string& raw, Speaker expected,
                       const Provenance& provenance, PassCounters& counters) {
  ParseResult parsed;
  try {
    parsed = parse_dialogue_text(raw);
  } catch (const Error& e) {
    if (e.code() != Errc::ParseFailure || text::is_blank(raw)) throw;
    // Bare text without any role label is taken as the expected speaker.
    return {expected, text::collapse_whitespace(raw), provenance};
  }
  counters.dropped_prefix_lines += parsed.dropped_prefix_lines;
  std::string joined;
  for (const auto& u : parsed.utterances) {
    if (u.speaker != expected) continue;
    if (!joined.empty()) joined.push_back(' ');
    joined += u.text;
  }
  if (joined.empty()) {
    throw Error(Errc::ParseFailure, "expected a " +
                                        std::string(to_string(expected)) +
                                        " line in the response");
  }
  return {expected, std::move(joined), provenance};
}

std::vector<Utterance> with_provenance(std::vector<Utterance> utterances,
                                       CanonicalHeader section, Pass pass) {
  for (auto& u : utterances) u.provenance = {section, pass, 0};
  return utterances;
}

Dialogue rewrite_pass(const Dialogue& fragment, const ChatRequest& request,
                      const std::vector<std::string>& keywords, Pass pass,
                      std::size_t& regressions, LoopContext& ctx) {
  if (fragment.empty()) return fragment;
  const CanonicalHeader section = fragment.utterances.front().provenance.section;
  std::vector<Utterance> rewritten;
  try {
    const ChatResponse resp = ctx.gateway.complete(request, ctx.calls);
    ParseResult parsed = parse_dialogue_text(resp.content);
    ctx.counters.dropped_prefix_lines += parsed.dropped_prefix_lines;
    rewritten = merge_same_speaker(
        with_provenance(std::move(parsed.utterances), section, pass));
  } catch (const Error& e) {
    if (!recoverable(e)) throw;
    ++ctx.counters.pass_failures;
    return fragment;
  }
  if (!alternates_from_doctor(rewritten)) {
    ++ctx.counters.pass_failures;
    return fragment;
  }
  const auto required =
      keywords_present(keywords, render_dialogue(fragment), ctx.lexicon);
  if (!keeps_keywords(required, render_dialogue(rewritten), ctx.lexicon)) {
    ++regressions;
    return fragment;
  }
  Dialogue out = fragment;
  out.utterances = std::move(rewritten);
  return out;
}

std::vector<std::string> terms_of(const ConceptChecklist& checklist,
                                  bool covered_only) {
  std::vector<std::string> out;
  for (const auto& item : checklist.items) {
    if (!covered_only || item.covered) out.push_back(item.display_term);
  }
  return out;
}

bool same_turn(const Utterance& a, const Utterance& b) {
  return a.speaker == b.speaker &&
         text::lower(text::collapse_whitespace(a.text)) ==
             text::lower(text::collapse_whitespace(b.text));
}

}  // namespace

std::size_t segment_split(const std::vector<Utterance>& merged,
                          const std::vector<Utterance>& history,
                          const std::vector<Utterance>& generated) {
  // Align merged against history ++ generated by LCS over whole turns.
  std::vector<const Utterance*> source;
  for (const auto& u : history) source.push_back(&u);
  for (const auto& u : generated) source.push_back(&u);
  const std::size_t m = merged.size();
  const std::size_t n = source.size();
  std::vector<std::vector<std::size_t>> t(m + 1,
                                          std::vector<std::size_t>(n + 1, 0));
  for (std::size_t i = m; i-- > 0;) {
    for (std::size_t j = n; j-- > 0;) {
      t[i][j] = same_turn(merged[i], *source[j])
                    ? t[i + 1][j + 1] + 1
                    : std::max(t[i + 1][j], t[i][j + 1]);
    }
  }
  std::optional<std::size_t> last_history;
  std::optional<std::size_t> first_generated;
  for (std::size_t i = 0, j = 0; i < m && j < n;) {
    if (same_turn(merged[i], *source[j])) {
      if (j < history.size()) {
        last_history = i;
      } else if (!first_generated) {
        first_generated = i;
      }
      ++i;
      ++j;
    } else if (t[i + 1][j] >= t[i][j + 1]) {
      ++i;
    } else {
      ++j;
    }
  }
  std::size_t split;
  if (last_history) {
    split = *last_history + 1;
  } else if (first_generated) {
    split = *first_generated;
  } else {
    // Nothing survived verbatim: split in proportion to the inputs.
    const std::size_t total = history.size() + generated.size();
    split = total == 0 ? 0 : m * history.size() / total;
  }
  split = std::min(split, m);
  return split - split % 2;
}

LoopConfig LoopConfig::for_mode(DialogueMode mode) {
  LoopConfig c;
  c.mode = mode;
  if (mode == DialogueMode::Long) {
    c.max_rounds_per_section = 10;
    c.history_window = HistoryWindow::PreviousSegmentOnly;
  }
  return c;
}

void LoopConfig::validate() const {
  if (max_rounds_per_section < 1) {
    throw Error(Errc::ConfigError, "max_rounds_per_section must be >= 1");
  }
  if (keywords_per_question < 1) {
    throw Error(Errc::ConfigError, "keywords_per_question must be >= 1");
  }
  if (max_output_tokens < 1) {
    throw Error(Errc::ConfigError, "max_output_tokens must be >= 1");
  }
  if (mode == DialogueMode::Long &&
      history_window != HistoryWindow::PreviousSegmentOnly) {
    throw Error(Errc::ConfigError,
                "long mode requires the previous-segment history window");
  }
}

PassCounters& PassCounters::operator+=(const PassCounters& o) {
  polish_regressions += o.polish_regressions;
  hallucination_regressions += o.hallucination_regressions;
  merge_fallbacks += o.merge_fallbacks;
  pass_failures += o.pass_failures;
  dropped_prefix_lines += o.dropped_prefix_lines;
  return *this;
}

std::vector<std::string> select_keywords(const ConceptChecklist& checklist,
                                         int k) {
  std::vector<std::string> out;
  for (const auto& item : checklist.items) {
    if (static_cast<int>(out.size()) >= k) break;
    if (!item.covered) out.push_back(item.display_term);
  }
  return out;
}

ChatRequest build_doctor_prompt(const PromptTemplateSet& templates,
                                const LoopConfig& config,
                                std::string_view note_section,
                                std::string_view history,
                                const std::vector<std::string>& keywords) {
  if (text::is_blank(note_section)) {
    throw Error(Errc::TemplateError, "doctor prompt needs note text");
  }
  const std::string prompt = templates.doctor.render(
      {{"note", std::string(note_section)},
       {"conversation", conversation_binding(std::string(history))},
       {"keywords", keyword_binding(keywords)}});
  return make_request(config, prompt, config.dialogue_temperature);
}

ChatRequest build_patient_prompt(const PromptTemplateSet& templates,
                                 const LoopConfig& config,
                                 std::string_view note_section,
                                 std::string_view history) {
  if (text::is_blank(note_section)) {
    throw Error(Errc::TemplateError, "patient prompt needs note text");
  }
  const std::string prompt = templates.patient.render(
      {{"note", std::string(note_section)},
       {"conversation", conversation_binding(std::string(history))}});
  return make_request(config, prompt, config.dialogue_temperature);
}

SectionLoopResult run_section_loop(const NoteSection& section,
                                   ConceptChecklist checklist,
                                   const std::vector<Utterance>& context,
                                   LoopContext& ctx) {
  SectionLoopResult result;
  const std::size_t limit = history_token_limit(ctx.gateway, ctx.config);
  std::vector<Utterance> history = context;

  do {
    const Provenance prov{section.header, Pass::Loop, result.rounds};
    const auto keywords =
        select_keywords(checklist, ctx.config.keywords_per_question);

    const ChatRequest doctor_req =
        fit_history(history, limit, [&](const std::string& h) {
          return build_doctor_prompt(ctx.templates, ctx.config, section.body, h,
                                     keywords);
        });
    const ChatResponse doctor = ctx.gateway.complete(doctor_req, ctx.calls);
    Utterance question =
        extract_turn(doctor.content, Speaker::Doctor, prov, ctx.counters);
    history.push_back(question);
    result.fragment.utterances.push_back(question);

    const ChatRequest patient_req =
        fit_history(history, limit, [&](const std::string& h) {
          return build_patient_prompt(ctx.templates, ctx.config, section.body,
                                      h);
        });
    const ChatResponse patient = ctx.gateway.complete(patient_req, ctx.calls);
    Utterance answer =
        extract_turn(patient.content, Speaker::Patient, prov, ctx.counters);
    history.push_back(answer);
    result.fragment.utterances.push_back(answer);

    checklist = mark_covered(std::move(checklist),
                             question.text + "\n" + answer.text, ctx.lexicon);
    ++result.rounds;
  } while (!checklist.all_covered() &&
           result.rounds < ctx.config.max_rounds_per_section);

  result.checklist = std::move(checklist);
  return result;
}

Dialogue polish(const Dialogue& fragment, std::string_view note_section,
                const std::vector<std::string>& keywords, LoopContext& ctx) {
  if (!ctx.config.enable_polish || fragment.empty()) return fragment;
  const std::string prompt = ctx.templates.polish.render(
      {{"note", std::string(note_section)},
       {"conversation", render_dialogue(fragment)},
       {"keywords", keyword_binding(keywords)}});
  return rewrite_pass(fragment,
                      make_request(ctx.config, prompt,
                                   ctx.config.rewrite_temperature),
                      keywords, Pass::Polish, ctx.counters.polish_regressions,
                      ctx);
}

Dialogue hallucination_check(const Dialogue& fragment,
                             std::string_view note_section,
                             const std::vector<std::string>& keywords,
                             LoopContext& ctx) {
  if (!ctx.config.enable_hallucination_check || fragment.empty()) {
    return fragment;
  }
  const std::string prompt = ctx.templates.hallucination.render(
      {{"note", std::string(note_section)},
       {"conversation", render_dialogue(fragment)},
       {"keywords", keyword_binding(keywords)}});
  return rewrite_pass(fragment,
                      make_request(ctx.config, prompt,
                                   ctx.config.rewrite_temperature),
                      keywords, Pass::Hallucination,
                      ctx.counters.hallucination_regressions, ctx);
}

void postedit_merge(MergeState& state, const Dialogue& segment,
                    const std::vector<std::string>& keywords,
                    LoopContext& ctx) {
  auto set_tail = [&](std::size_t tail) {
    auto& u = state.running.utterances;
    tail = std::min(tail, u.size());
    state.tail_start = tail - tail % 2;
    state.previous_segment.utterances.assign(
        u.begin() + static_cast<long>(state.tail_start), u.end());
  };
  if (!state.started) {
    state.running.utterances = merge_same_speaker(segment.utterances);
    state.started = true;
    set_tail(0);
    return;
  }
  if (segment.empty()) return;

  const bool windowed =
      ctx.config.history_window == HistoryWindow::PreviousSegmentOnly;
  const Dialogue& conv_a = windowed ? state.previous_segment : state.running;
  const std::size_t replace_from = windowed ? state.tail_start : 0;

  auto fall_back = [&] {
    ++ctx.counters.merge_fallbacks;
    const std::size_t before = state.running.utterances.size();
    auto& u = state.running.utterances;
    u.insert(u.end(), segment.utterances.begin(), segment.utterances.end());
    state.running.utterances = merge_same_speaker(std::move(u));
    set_tail(before);
  };

  const std::string text_a = render_dialogue(conv_a);
  const std::string text_b = render_dialogue(segment);
  const auto prompt_keywords =
      keywords_present(keywords, text_a + "\n" + text_b, ctx.lexicon);
  const std::string prompt = ctx.templates.postedit.render(
      {{"conversation_a", text_a},
       {"conversation_b", text_b},
       {"keywords", keyword_binding(prompt_keywords)}});

  std::vector<Utterance> merged;
  try {
    const ChatResponse resp = ctx.gateway.complete(
        make_request(ctx.config, prompt, ctx.config.rewrite_temperature),
        ctx.calls);
    ParseResult parsed = parse_dialogue_text(resp.content);
    ctx.counters.dropped_prefix_lines += parsed.dropped_prefix_lines;
    const CanonicalHeader section =
        segment.utterances.front().provenance.section;
    merged = merge_same_speaker(with_provenance(std::move(parsed.utterances),
                                                section, Pass::Postedit));
  } catch (const Error& e) {
    if (!recoverable(e)) throw;
    fall_back();
    return;
  }

  std::vector<Utterance> candidate(
      state.running.utterances.begin(),
      state.running.utterances.begin() + static_cast<long>(replace_from));
  candidate.insert(candidate.end(), merged.begin(), merged.end());
  if (!alternates_from_doctor(candidate)) {
    fall_back();
    return;
  }

  const auto required = keywords_present(
      keywords, render_dialogue(state.running) + "\n" + text_b, ctx.lexicon);
  if (!keeps_keywords(required, render_dialogue(candidate), ctx.lexicon)) {
    fall_back();
    return;
  }

  const std::size_t split =
      segment_split(merged, conv_a.utterances, segment.utterances);
  state.running.utterances = std::move(candidate);
  set_tail(replace_from + split);
}

nlohmann::json to_json(const CoverageReport& report) {
  auto rounds = nlohmann::json::array();
  for (const auto& r : report.rounds) {
    rounds.push_back({{"section", std::string(label(r.header))},
                      {"order_index", r.order_index},
                      {"rounds", r.rounds}});
  }
  return {{"total_keywords", report.total_keywords},
          {"covered", report.covered},
          {"uncovered", report.uncovered},
          {"rounds", std::move(rounds)},
          {"gateway_calls", report.gateway_calls},
          {"counters",
           {{"polish_regressions", report.counters.polish_regressions},
            {"hallucination_regressions",
             report.counters.hallucination_regressions},
            {"merge_fallbacks", report.counters.merge_fallbacks},
            {"pass_failures", report.counters.pass_failures},
            {"dropped_prefix_lines", report.counters.dropped_prefix_lines}}},
          {"items", checklist_to_json(report.checklist).at("items")}};
}

GenerationResult generate_dialogue(const ClinicalNote& note,
                                   const Lexicon& lexicon, Gateway& gateway,
                                   const PromptTemplateSet& templates,
                                   const LoopConfig& config) {
  GenerationResult result;
  result.dialogue.note_id = note.id;
  result.dialogue.mode = config.mode;

  CallContext calls{note.id, 0};
  PassCounters counters;
  LoopContext ctx{templates, lexicon, gateway, calls, config, counters};

  ConceptChecklist checklist = build_checklist(note, lexicon);
  MergeState state;
  state.running.note_id = note.id;
  state.running.mode = config.mode;

  try {
    if (note.sections.empty()) {
      throw Error(Errc::NoSectionsFound, "note '" + note.id + "' is empty");
    }
    for (const auto& section : note.sections) {
      const ConceptChecklist local = checklist.for_section(section.order_index);
      const auto& context =
          config.history_window == HistoryWindow::All
              ? state.running.utterances
              : state.previous_segment.utterances;
      SectionLoopResult loop = run_section_loop(section, local, context, ctx);
      merge_coverage(checklist, loop.checklist);
      result.report.rounds.push_back(
          {section.header, section.order_index, loop.rounds});

      const auto section_terms = terms_of(local, false);
      Dialogue fragment = std::move(loop.fragment);
      fragment.note_id = note.id;
      fragment.mode = config.mode;
      fragment = polish(fragment, section.body, section_terms, ctx);
      fragment = hallucination_check(fragment, section.body, section_terms, ctx);
      result.segments.push_back(fragment);

      postedit_merge(state, fragment, terms_of(checklist, true), ctx);
    }
    if (config.final_hallucination_pass && config.enable_hallucination_check) {
      state.running = hallucination_check(state.running, note.full_text,
                                          terms_of(checklist, true), ctx);
    }
  } catch (const ScriptMismatchError& e) {
    result.error = e.code();
    result.error_message = e.what();
    result.mismatch_seq = e.seq();
  } catch (const Error& e) {
    result.error = e.code();
    result.error_message = e.what();
  }

  result.dialogue.utterances = std::move(state.running.utterances);
  checklist =
      mark_covered(std::move(checklist), render_dialogue(result.dialogue), lexicon);

  CoverageReport& report = result.report;
  report.total_keywords = checklist.items.size();
  report.covered = checklist.covered_count();
  for (const auto& item : checklist.items) {
    if (!item.covered) report.uncovered.push_back(item.display_term);
  }
  report.counters = counters;
  report.gateway_calls = calls.stream_seq;
  report.checklist = std::move(checklist);
  return result;
}

nlohmann::json dialogue_record(const GenerationResult& result) {
  return {{"id", result.dialogue.note_id},
          {"mode", std::string(to_string(result.dialogue.mode))},
          {"dialogue", dialogue_turns_to_json(result.dialogue)},
          {"coverage", to_json(result.report)}};
}

}  // namespace synthdial
