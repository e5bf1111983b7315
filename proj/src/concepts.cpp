#include "synthdial/concepts.hpp"

#include <fstream>
#include <istream>
#include <unordered_set>

#include "synthdial/error.hpp"
#include "synthdial/text.hpp"

namespace synthdial {

SemanticGroup SemanticGroup::parse(std::string_view tag) {
  const std::string t(text::trim(tag));
  if (t == "DISO") return {GroupKind::DISO, t};
  if (t == "CHEM") return {GroupKind::CHEM, t};
  if (t == "DEVI") return {GroupKind::DEVI, t};
  if (t == "PROC") return {GroupKind::PROC, t};
  return {GroupKind::OTHER, t};
}

std::string SemanticGroup::str() const {
  switch (kind) {
    case GroupKind::DISO: return "DISO";
    case GroupKind::CHEM: return "CHEM";
    case GroupKind::DEVI: return "DEVI";
    case GroupKind::PROC: return "PROC";
    case GroupKind::OTHER: break;
  }
  return tag;
}

std::string normalize_surface(std::string_view surface) {
  return text::lower(text::collapse_whitespace(surface));
}

Lexicon::Lexicon(std::vector<LexiconEntry> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const std::string key = normalize_surface(entries_[i].surface);
    if (key.empty()) {
      throw LineError(Errc::MalformedLine, i + 1, "empty surface");
    }
    if (!by_surface_.emplace(key, i).second) {
      throw LineError(Errc::DuplicateSurface, i + 1, key);
    }
    std::size_t node = 0;
    for (char c : key) {
      auto it = trie_[node].next.find(c);
      if (it == trie_[node].next.end()) {
        trie_.push_back(Node{});
        it = trie_[node].next.emplace(c, trie_.size() - 1).first;
      }
      node = it->second;
    }
    trie_[node].entry = i;
  }
}

const LexiconEntry* Lexicon::find(std::string_view surface) const {
  const auto it = by_surface_.find(normalize_surface(surface));
  return it == by_surface_.end() ? nullptr : &entries_[it->second];
}

std::optional<std::pair<std::size_t, std::size_t>> Lexicon::longest_at(
    std::string_view text, std::size_t pos) const {
  std::optional<std::pair<std::size_t, std::size_t>> best;
  std::size_t node = 0;
  std::size_t i = pos;
  while (i < text.size()) {
    char c = text::to_lower(text[i]);
    if (c == '\n' || c == '\r') break;  // line breaks end every match
    std::size_t step = 1;
    if (text::is_space(c)) {
      c = ' ';
      while (i + step < text.size() && text::is_space(text[i + step]) &&
             text[i + step] != '\n' && text[i + step] != '\r') {
        ++step;
      }
    }
    const auto it = trie_[node].next.find(c);
    if (it == trie_[node].next.end()) break;
    node = it->second;
    i += step;
    if (trie_[node].entry) {
      const bool splits_word = i < text.size() && text::is_alnum(text[i]) &&
                               text::is_alnum(text[i - 1]);
      if (!splits_word) best = std::make_pair(*trie_[node].entry, i);
    }
  }
  return best;
}

Lexicon load_lexicon(std::istream& in) {
  std::vector<LexiconEntry> entries;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::is_blank(line) || text::trim(line).front() == '#') continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.emplace_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw LineError(Errc::MalformedLine, line_no,
                      "expected 4 tab-separated fields, got " +
                          std::to_string(fields.size()));
    }
    const std::string key = normalize_surface(fields[0]);
    if (key.empty() || text::is_blank(fields[1])) {
      throw LineError(Errc::MalformedLine, line_no, "empty surface or id");
    }
    if (!seen.insert(key).second) {
      throw LineError(Errc::DuplicateSurface, line_no, key);
    }
    entries.push_back({std::string(text::trim(fields[0])),
                       std::string(text::trim(fields[1])),
                       std::string(text::trim(fields[2])),
                       SemanticGroup::parse(fields[3])});
  }
  return Lexicon(std::move(entries));
}

Lexicon load_lexicon_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open lexicon " + path);
  return load_lexicon(in);
}

std::vector<ConceptMatch> extract_concepts(std::string_view text,
                                           const Lexicon& lexicon) {
  std::vector<ConceptMatch> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const bool word_start = text::is_alnum(text[pos]) &&
                            (pos == 0 || !text::is_alnum(text[pos - 1]));
    if (word_start) {
      if (auto m = lexicon.longest_at(text, pos)) {
        const auto& e = lexicon.entries()[m->first];
        out.push_back({e.concept_id,
                       std::string(text.substr(pos, m->second - pos)), pos,
                       m->second, e.group});
        pos = m->second;
        continue;
      }
    }
    ++pos;
  }
  return out;
}

std::vector<ConceptMatch> filter_clinical(std::vector<ConceptMatch> matches) {
  std::erase_if(matches,
                [](const ConceptMatch& m) { return !m.group.clinical(); });
  return matches;
}

std::size_t ConceptChecklist::covered_count() const noexcept {
  std::size_t n = 0;
  for (const auto& item : items) n += item.covered ? 1 : 0;
  return n;
}

ConceptChecklist ConceptChecklist::for_section(std::size_t order_index) const {
  ConceptChecklist out;
  for (const auto& item : items) {
    if (item.source_order == order_index) out.items.push_back(item);
  }
  return out;
}

ConceptChecklist build_checklist(const ClinicalNote& note,
                                 const Lexicon& lexicon) {
  ConceptChecklist checklist;
  std::unordered_set<std::string> seen;
  for (const auto& section : note.sections) {
    for (auto& m : filter_clinical(extract_concepts(section.body, lexicon))) {
      if (!seen.insert(m.concept_id).second) continue;
      checklist.items.push_back({m.concept_id, std::move(m.surface_found),
                                 false, section.header, section.order_index});
    }
  }
  return checklist;
}

ConceptChecklist mark_covered(ConceptChecklist checklist,
                              std::string_view dialogue_text,
                              const Lexicon& lexicon) {
  std::unordered_set<std::string> present;
  for (auto& m : extract_concepts(dialogue_text, lexicon)) {
    present.insert(std::move(m.concept_id));
  }
  for (auto& item : checklist.items) {
    if (present.contains(item.concept_id)) item.covered = true;
  }
  return checklist;
}

void merge_coverage(ConceptChecklist& into, const ConceptChecklist& updated) {
  std::unordered_set<std::string> covered;
  for (const auto& item : updated.items) {
    if (item.covered) covered.insert(item.concept_id);
  }
  for (auto& item : into.items) {
    if (covered.contains(item.concept_id)) item.covered = true;
  }
}

double concept_recall(std::string_view generated, std::string_view reference,
                      const Lexicon& lexicon) {
  std::unordered_set<std::string> ref;
  for (auto& m : filter_clinical(extract_concepts(reference, lexicon))) {
    ref.insert(std::move(m.concept_id));
  }
  if (ref.empty()) return 1.0;
  std::unordered_set<std::string> gen;
  for (auto& m : filter_clinical(extract_concepts(generated, lexicon))) {
    gen.insert(std::move(m.concept_id));
  }
  std::size_t hit = 0;
  for (const auto& id : ref) hit += gen.contains(id) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(ref.size());
}

nlohmann::json checklist_to_json(const ConceptChecklist& checklist) {
  auto items = nlohmann::json::array();
  for (const auto& item : checklist.items) {
    items.push_back({{"concept_id", item.concept_id},
                     {"term", item.display_term},
                     {"covered", item.covered},
                     {"section", std::string(label(item.source_section))}});
  }
  return {{"items", std::move(items)}};
}

}  // namespace synthdial
