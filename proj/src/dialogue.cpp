#include "synthdial/dialogue.hpp"

#include <optional>

#include "synthdial/error.hpp"
#include "synthdial/text.hpp"

namespace synthdial {
namespace {

bool is_markup(char c) {
  return c == '*' || c == '_' || c == '#' || c == '>' || c == '-' ||
         text::is_space(c);
}

std::string_view strip_markup_front(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && is_markup(s[i])) ++i;
  return s.substr(i);
}

struct RoleLine {
  Speaker speaker;
  std::string_view content;
};

std::optional<RoleLine> match_role(std::string_view line) {
  std::string_view s = strip_markup_front(line);
  Speaker who;
  std::size_t word;
  if (text::starts_with_icase(s, "doctor")) {
    who = Speaker::Doctor;
    word = 6;
  } else if (text::starts_with_icase(s, "patient")) {
    who = Speaker::Patient;
    word = 7;
  } else {
    return std::nullopt;
  }
  std::size_t i = word;
  while (i < s.size() && (s[i] == '*' || s[i] == '_' || s[i] == ' ')) ++i;
  if (i >= s.size() || s[i] != ':') return std::nullopt;
  std::string_view rest = strip_markup_front(s.substr(i + 1));
  // Closing emphasis right after the colon, e.g. "**Doctor:** Hi".
  return RoleLine{who, text::trim(rest)};
}

}  // namespace

std::string_view to_string(Speaker s) noexcept {
  return s == Speaker::Doctor ? "Doctor" : "Patient";
}

std::string_view to_string(Pass p) noexcept {
  switch (p) {
    case Pass::Loop: return "loop";
    case Pass::Polish: return "polish";
    case Pass::Hallucination: return "hallucination";
    case Pass::Postedit: return "postedit";
  }
  return "loop";
}

ParseResult parse_dialogue_text(std::string_view raw) {
  ParseResult out;
  bool seen_role = false;
  for (std::string_view line : text::split_lines(raw)) {
    if (text::is_blank(line)) continue;
    if (auto role = match_role(line)) {
      seen_role = true;
      out.utterances.push_back({role->speaker, std::string(role->content), {}});
      continue;
    }
    if (!seen_role) {
      ++out.dropped_prefix_lines;
      continue;
    }
    auto& last = out.utterances.back().text;
    const std::string_view cont = text::trim(line);
    if (!last.empty()) last.push_back(' ');
    last.append(cont);
  }
  if (!seen_role) {
    throw Error(Errc::ParseFailure, "no Doctor:/Patient: lines in response");
  }
  std::erase_if(out.utterances,
                [](const Utterance& u) { return text::is_blank(u.text); });
  if (out.utterances.empty()) {
    throw Error(Errc::ParseFailure, "role lines carry no text");
  }
  return out;
}

std::string render_dialogue(const std::vector<Utterance>& utterances) {
  std::string out;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (i) out.push_back('\n');
    out.append(to_string(utterances[i].speaker));
    out.append(": ");
    out.append(utterances[i].text);
  }
  return out;
}

std::string render_dialogue(const Dialogue& dialogue) {
  return render_dialogue(dialogue.utterances);
}

std::vector<Utterance> merge_same_speaker(std::vector<Utterance> utterances) {
  std::vector<Utterance> out;
  out.reserve(utterances.size());
  for (auto& u : utterances) {
    if (!out.empty() && out.back().speaker == u.speaker) {
      out.back().text.push_back(' ');
      out.back().text.append(u.text);
    } else {
      out.push_back(std::move(u));
    }
  }
  return out;
}

bool alternates_from_doctor(const std::vector<Utterance>& utterances) noexcept {
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Speaker expected = i % 2 == 0 ? Speaker::Doctor : Speaker::Patient;
    if (utterances[i].speaker != expected) return false;
  }
  return true;
}

nlohmann::json dialogue_turns_to_json(const Dialogue& dialogue) {
  auto turns = nlohmann::json::array();
  for (const auto& u : dialogue.utterances) {
    turns.push_back({{"speaker", text::lower(to_string(u.speaker))},
                     {"text", u.text}});
  }
  return turns;
}

}  // namespace synthdial
