#include "synthdial/headers.hpp"

#include <limits>

#include "synthdial/error.hpp"
#include "synthdial/text.hpp"

namespace synthdial {
namespace {

constexpr std::array<std::string_view, kHeaderCount> kLabels = {
    "history of present illness",
    "review of systems",
    "past medical history",
    "medications",
    "chief complaint",
    "past surgical history",
    "disposition",
    "diagnosis",
    "emergency department course",
    "plan",
    "labs",
    "assessment",
    "allergy",
    "gynecologic history",
    "exam",
    "other history",
    "procedures",
    "imaging",
    "immunizations",
    "family history/social history",
};

const std::array<std::string, kHeaderCount>& keys() {
  static const std::array<std::string, kHeaderCount> k = [] {
    std::array<std::string, kHeaderCount> out;
    for (std::size_t i = 0; i < kHeaderCount; ++i) {
      out[i] = normalize_text(kLabels[i]);
    }
    return out;
  }();
  return k;
}

}  // namespace

std::size_t ordinal(CanonicalHeader h) noexcept {
  return static_cast<std::size_t>(h);
}

CanonicalHeader header_from_ordinal(std::size_t ordinal) {
  if (ordinal >= kHeaderCount) {
    throw Error(Errc::InvalidHeader,
                "ordinal " + std::to_string(ordinal) + " out of range");
  }
  return static_cast<CanonicalHeader>(ordinal);
}

std::string_view label(CanonicalHeader h) noexcept {
  return kLabels[ordinal(h)];
}

const std::string& normalized_key(CanonicalHeader h) {
  return keys()[ordinal(h)];
}

const std::array<CanonicalHeader, kHeaderCount>& all_headers() noexcept {
  static const std::array<CanonicalHeader, kHeaderCount> all = [] {
    std::array<CanonicalHeader, kHeaderCount> out{};
    for (std::size_t i = 0; i < kHeaderCount; ++i) {
      out[i] = static_cast<CanonicalHeader>(i);
    }
    return out;
  }();
  return all;
}

std::optional<CanonicalHeader> parse_label(std::string_view s) {
  const std::string norm = normalize_text(s);
  for (std::size_t i = 0; i < kHeaderCount; ++i) {
    if (keys()[i] == norm) return static_cast<CanonicalHeader>(i);
  }
  return std::nullopt;
}

std::string normalize_text(std::string_view raw) {
  std::string mapped;
  mapped.reserve(raw.size());
  for (char c : raw) {
    const auto u = static_cast<unsigned char>(c);
    if (text::is_alnum(c) || u >= 0x80) {
      mapped.push_back(text::to_lower(c));
    } else {
      mapped.push_back(' ');
    }
  }
  return text::collapse_whitespace(mapped);
}

double similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(text::levenshtein(a, b)) /
                   static_cast<double>(longest);
}

std::optional<HeaderMatch> normalize_header(std::string_view raw,
                                            double threshold, MatchMode mode) {
  if (text::is_blank(raw)) throw Error(Errc::EmptyHeader, "blank header text");
  const std::string norm = normalize_text(raw);
  HeaderMatch best{CanonicalHeader::HistoryOfPresentIllness,
                   -std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < kHeaderCount; ++i) {
    const double sim = similarity(norm, keys()[i]);
    if (sim > best.similarity) best = {static_cast<CanonicalHeader>(i), sim};
  }
  if (mode == MatchMode::Threshold && best.similarity < threshold) {
    return std::nullopt;
  }
  return best;
}

}  // namespace synthdial
