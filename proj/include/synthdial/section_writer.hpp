#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "synthdial/gateway.hpp"
#include "synthdial/headers.hpp"
#include "synthdial/templates.hpp"

namespace synthdial {

struct Exemplar {
  std::string dialogue;
  std::string section_text;
};

class ExemplarStore {
 public:
  void add(CanonicalHeader header, Exemplar exemplar);
  // First `k` exemplars stored for `header`, in insertion order.
  std::vector<Exemplar> first(CanonicalHeader header, std::size_t k) const;
  std::size_t size() const noexcept;

 private:
  std::map<CanonicalHeader, std::vector<Exemplar>> by_header_;
};

// JSON Lines {"header","dialogue","section_text"}; the header must name a
// canonical label exactly (modulo normalization).
ExemplarStore load_exemplars(std::istream& in);

struct WriterConfig {
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.2;
  int max_output_tokens = 512;
  std::size_t exemplars_per_prompt = 2;
};

// Text after the last colon, trailing punctuation stripped.
std::string strip_response_boilerplate(std::string_view response);

ChatRequest build_heading_prompt(const PromptTemplateSet& templates,
                                 const WriterConfig& config,
                                 std::string_view dialogue);

ChatRequest build_content_prompt(const PromptTemplateSet& templates,
                                 const WriterConfig& config,
                                 std::string_view dialogue,
                                 CanonicalHeader header,
                                 const std::vector<Exemplar>& exemplars);

CanonicalHeader classify_header(std::string_view dialogue, Gateway& gateway,
                                CallContext& calls,
                                const PromptTemplateSet& templates,
                                const WriterConfig& config);

std::string generate_section(std::string_view dialogue, CanonicalHeader header,
                             const ExemplarStore& store, Gateway& gateway,
                             CallContext& calls,
                             const PromptTemplateSet& templates,
                             const WriterConfig& config);

// Fraction of positions with equal headers. Empty lists score 1.0; unequal
// lengths throw LengthMismatch.
double classification_accuracy(const std::vector<CanonicalHeader>& predictions,
                               const std::vector<CanonicalHeader>& gold);

}  // namespace synthdial
