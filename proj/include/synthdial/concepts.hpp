#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "synthdial/headers.hpp"
#include "synthdial/note.hpp"

namespace synthdial {

enum class GroupKind { DISO, CHEM, DEVI, PROC, OTHER };

struct SemanticGroup {
  GroupKind kind = GroupKind::OTHER;
  std::string tag;  // original tag text; only meaningful for OTHER

  static SemanticGroup parse(std::string_view tag);
  std::string str() const;
  bool clinical() const noexcept { return kind != GroupKind::OTHER; }

  friend bool operator==(const SemanticGroup&, const SemanticGroup&) = default;
};

struct LexiconEntry {
  std::string surface;
  std::string concept_id;
  std::string preferred_name;
  SemanticGroup group;
};

// Lowercase, whitespace runs to a single space, trimmed.
std::string normalize_surface(std::string_view surface);

// Immutable dictionary of surface forms. Matching walks a byte trie keyed on
// normalized surfaces.
class Lexicon {
 public:
  Lexicon() = default;
  // Throws LineError(DuplicateSurface) with a 1-based entry index on
  // repeated normalized surfaces.
  explicit Lexicon(std::vector<LexiconEntry> entries);

  const std::vector<LexiconEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const LexiconEntry* find(std::string_view surface) const;

  // Longest entry matching text at `pos`, respecting the end-of-word rule.
  // Returns the entry index and the end offset.
  std::optional<std::pair<std::size_t, std::size_t>> longest_at(
      std::string_view text, std::size_t pos) const;

 private:
  struct Node {
    std::unordered_map<char, std::size_t> next;
    std::optional<std::size_t> entry;
  };

  std::vector<LexiconEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_surface_;
  std::vector<Node> trie_{Node{}};
};

// Tab-separated: surface, concept_id, preferred_name, semantic_group.
Lexicon load_lexicon(std::istream& in);
Lexicon load_lexicon_file(const std::string& path);

struct ConceptMatch {
  std::string concept_id;
  std::string surface_found;
  std::size_t start = 0;
  std::size_t end = 0;
  SemanticGroup group;
};

// Case-insensitive, leftmost-longest matching starting at word starts.
// Runs of spaces and tabs match a single space in a surface; matches never
// cross a line break.
std::vector<ConceptMatch> extract_concepts(std::string_view text,
                                           const Lexicon& lexicon);

std::vector<ConceptMatch> filter_clinical(std::vector<ConceptMatch> matches);

struct ChecklistItem {
  std::string concept_id;
  std::string display_term;
  bool covered = false;
  CanonicalHeader source_section = CanonicalHeader::OtherHistory;
  std::size_t source_order = 0;  // order_index of the section
};

struct ConceptChecklist {
  std::vector<ChecklistItem> items;

  std::size_t covered_count() const noexcept;
  bool all_covered() const noexcept { return covered_count() == items.size(); }
  // Items first seen in the section with this order_index.
  ConceptChecklist for_section(std::size_t order_index) const;
};

ConceptChecklist build_checklist(const ClinicalNote& note,
                                 const Lexicon& lexicon);

// An item is covered when any surface sharing its concept id matches the
// text. Never clears a flag.
ConceptChecklist mark_covered(ConceptChecklist checklist,
                              std::string_view dialogue_text,
                              const Lexicon& lexicon);

// Applies coverage flags from `updated` (matched by concept id) onto `into`.
void merge_coverage(ConceptChecklist& into, const ConceptChecklist& updated);

// |G ∩ R| / |R| over distinct clinical concept ids; 1.0 when R is empty.
double concept_recall(std::string_view generated, std::string_view reference,
                      const Lexicon& lexicon);

nlohmann::json checklist_to_json(const ConceptChecklist& checklist);

}  // namespace synthdial
