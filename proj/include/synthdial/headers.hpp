#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace synthdial {

// The 20 section labels of the note taxonomy. Enumerator values are the
// stable ordinals.
enum class CanonicalHeader : std::size_t {
  HistoryOfPresentIllness = 0,
  ReviewOfSystems,
  PastMedicalHistory,
  Medications,
  ChiefComplaint,
  PastSurgicalHistory,
  Disposition,
  Diagnosis,
  EmergencyDepartmentCourse,
  Plan,
  Labs,
  Assessment,
  Allergy,
  GynecologicHistory,
  Exam,
  OtherHistory,
  Procedures,
  Imaging,
  Immunizations,
  FamilyHistorySocialHistory,
};

inline constexpr std::size_t kHeaderCount = 20;

std::size_t ordinal(CanonicalHeader h) noexcept;
CanonicalHeader header_from_ordinal(std::size_t ordinal);

// Lowercase display label, e.g. "family history/social history".
std::string_view label(CanonicalHeader h) noexcept;

// Label after normalize_text, e.g. "family history social history".
const std::string& normalized_key(CanonicalHeader h);

const std::array<CanonicalHeader, kHeaderCount>& all_headers() noexcept;

// Exact lookup of a display label or normalized key.
std::optional<CanonicalHeader> parse_label(std::string_view s);

// Lowercase, punctuation to space, whitespace collapsed.
std::string normalize_text(std::string_view raw);

// 1 - lev(a, b) / max(|a|, |b|); 1.0 when both are empty.
double similarity(std::string_view a, std::string_view b);

enum class MatchMode { NearestAlways, Threshold };

struct HeaderMatch {
  CanonicalHeader header;
  double similarity;
};

// Returns std::nullopt only in Threshold mode when the best similarity is
// below `threshold`. Ties go to the smallest ordinal. Throws EmptyHeader on
// blank input.
std::optional<HeaderMatch> normalize_header(std::string_view raw,
                                            double threshold, MatchMode mode);

inline constexpr double kDefaultHeaderThreshold = 0.6;

}  // namespace synthdial
