#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "synthdial/headers.hpp"

namespace synthdial {

struct NoteSection {
  CanonicalHeader header;
  std::string raw_header;
  std::string body;
  std::size_t order_index = 0;
};

struct ClinicalNote {
  std::string id;
  std::string full_text;
  std::vector<NoteSection> sections;
};

// Which lines count as header candidates. A candidate becomes a header only
// when its text passes normalize_header in threshold mode.
struct HeaderRules {
  bool colon_terminated = true;  // "Chief complaint:"
  bool all_caps = true;          // "CHIEF COMPLAINT"
  double threshold = kDefaultHeaderThreshold;
  // On NoSectionsFound, return the whole note as one "other history"
  // section instead of throwing.
  bool whole_note_fallback = false;
};

ClinicalNote parse_note(std::string id, std::string full_text,
                        const HeaderRules& rules = {});

// Header text of a candidate line (without the trailing colon), or empty
// when the line is not a candidate under `rules`.
std::string header_candidate(std::string_view line, const HeaderRules& rules);

// Rebuilds note text from the sections: raw header line, then body.
std::string serialize_sections(const ClinicalNote& note);

struct NoteRecord {
  std::string id;
  std::string note;
};

// JSON Lines with fields "id" and "note". Blank lines are skipped.
std::vector<NoteRecord> read_note_records(std::istream& in);

}  // namespace synthdial
