#include "synthdial/note.hpp"

#include <istream>

#include "json.hpp"
#include "synthdial/error.hpp"
#include "synthdial/text.hpp"

namespace synthdial {
namespace {

bool all_caps_line(std::string_view t) {
  bool has_letter = false;
  for (char c : t) {
    if (c >= 'A' && c <= 'Z') {
      has_letter = true;
    } else if (!((c >= '0' && c <= '9') || c == ' ' || c == '/' || c == '\t')) {
      return false;
    }
  }
  return has_letter;
}

std::string join_body(const std::vector<std::string_view>& lines) {
  std::string body;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) body.push_back('\n');
    body.append(lines[i]);
  }
  return std::string(text::trim(body));
}

}  // namespace

std::string header_candidate(std::string_view line, const HeaderRules& rules) {
  const std::string_view t = text::trim(line);
  if (t.empty()) return {};
  if (rules.colon_terminated && t.back() == ':') {
    const std::string_view head = text::trim(t.substr(0, t.size() - 1));
    if (!text::is_blank(head)) return std::string(head);
  }
  if (rules.all_caps && all_caps_line(t)) return std::string(t);
  return {};
}

ClinicalNote parse_note(std::string id, std::string full_text,
                        const HeaderRules& rules) {
  if (text::is_blank(full_text)) {
    throw Error(Errc::EmptyNote, "note '" + id + "' has no text");
  }

  struct Pending {
    CanonicalHeader header;
    std::string raw_header;
    std::vector<std::string_view> lines;
  };

  std::vector<std::string_view> preamble;
  std::vector<Pending> found;
  for (std::string_view line : text::split_lines(full_text)) {
    const std::string candidate = header_candidate(line, rules);
    if (!candidate.empty()) {
      const auto match = normalize_header(candidate, rules.threshold,
                                          MatchMode::Threshold);
      if (match) {
        found.push_back(
            {match->header, std::string(text::trim(line)), {}});
        continue;
      }
    }
    if (found.empty()) {
      preamble.push_back(line);
    } else {
      found.back().lines.push_back(line);
    }
  }

  ClinicalNote note{std::move(id), std::move(full_text), {}};
  if (found.empty()) {
    if (!rules.whole_note_fallback) {
      throw Error(Errc::NoSectionsFound,
                  "note '" + note.id + "' has no recognizable section header");
    }
    note.sections.push_back({CanonicalHeader::OtherHistory, "",
                              std::string(text::trim(note.full_text)), 0});
    return note;
  }

  std::string pre = join_body(preamble);
  if (!pre.empty()) {
    note.sections.push_back(
        {CanonicalHeader::OtherHistory, "", std::move(pre), 0});
  }
  for (auto& p : found) {
    std::string body = join_body(p.lines);
    if (body.empty()) continue;
    note.sections.push_back(
        {p.header, std::move(p.raw_header), std::move(body), 0});
  }
  if (note.sections.empty()) {
    throw Error(Errc::NoSectionsFound,
                "note '" + note.id + "' has headers but no section text");
  }
  for (std::size_t i = 0; i < note.sections.size(); ++i) {
    note.sections[i].order_index = i;
  }
  return note;
}

std::string serialize_sections(const ClinicalNote& note) {
  std::string out;
  for (const auto& s : note.sections) {
    if (!s.raw_header.empty()) {
      out.append(s.raw_header);
      out.push_back('\n');
    }
    out.append(s.body);
    out.push_back('\n');
  }
  return out;
}

std::vector<NoteRecord> read_note_records(std::istream& in) {
  std::vector<NoteRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back(
          {j.at("id").get<std::string>(), j.at("note").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw LineError(Errc::MalformedLine, line_no, e.what());
    }
  }
  return records;
}

}  // namespace synthdial
