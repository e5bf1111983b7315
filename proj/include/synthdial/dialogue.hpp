#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "synthdial/headers.hpp"
#include "synthdial/templates.hpp"

namespace synthdial {

enum class Speaker { Doctor, Patient };
enum class Pass { Loop, Polish, Hallucination, Postedit };

std::string_view to_string(Speaker s) noexcept;
std::string_view to_string(Pass p) noexcept;

struct Provenance {
  CanonicalHeader section = CanonicalHeader::OtherHistory;
  Pass pass = Pass::Loop;
  int round = 0;
};

struct Utterance {
  Speaker speaker = Speaker::Doctor;
  std::string text;
  Provenance provenance;
};

struct Dialogue {
  std::string note_id;
  std::vector<Utterance> utterances;
  DialogueMode mode = DialogueMode::Short;

  std::size_t size() const noexcept { return utterances.size(); }
  bool empty() const noexcept { return utterances.empty(); }
};

struct ParseResult {
  std::vector<Utterance> utterances;
  std::size_t dropped_prefix_lines = 0;
};

// Lines starting with "Doctor:" or "Patient:" (any case, after stripping
// markdown emphasis and list markers) open an utterance; other lines are
// joined onto the previous one with a single space. Throws ParseFailure if
// no role line exists.
ParseResult parse_dialogue_text(std::string_view raw);

// "Doctor: ...\nPatient: ..." with one utterance per line.
std::string render_dialogue(const std::vector<Utterance>& utterances);
std::string render_dialogue(const Dialogue& dialogue);

// Merges consecutive utterances by the same speaker.
std::vector<Utterance> merge_same_speaker(std::vector<Utterance> utterances);

bool alternates_from_doctor(const std::vector<Utterance>& utterances) noexcept;

nlohmann::json dialogue_turns_to_json(const Dialogue& dialogue);

}  // namespace synthdial
