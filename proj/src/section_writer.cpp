#include "synthdial/section_writer.hpp"

#include <istream>

#include "json.hpp"
#include "synthdial/error.hpp"
#include "synthdial/text.hpp"

namespace synthdial {
namespace {

ChatRequest make_request(const WriterConfig& config, std::string prompt) {
  ChatRequest r;
  r.model = config.model;
  r.messages.push_back({Role::User, std::move(prompt)});
  r.temperature = config.temperature;
  r.max_output_tokens = config.max_output_tokens;
  return r;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return out;
}

}  // namespace

void ExemplarStore::add(CanonicalHeader header, Exemplar exemplar) {
  by_header_[header].push_back(std::move(exemplar));
}

std::vector<Exemplar> ExemplarStore::first(CanonicalHeader header,
                                           std::size_t k) const {
  const auto it = by_header_.find(header);
  if (it == by_header_.end()) return {};
  const std::size_t n = std::min(k, it->second.size());
  return {it->second.begin(), it->second.begin() + static_cast<long>(n)};
}

std::size_t ExemplarStore::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, v] : by_header_) n += v.size();
  return n;
}

ExemplarStore load_exemplars(std::istream& in) {
  ExemplarStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    nlohmann::json j;
    std::string header_text, dialogue, section_text;
    try {
      j = nlohmann::json::parse(line);
      header_text = j.at("header").get<std::string>();
      dialogue = j.at("dialogue").get<std::string>();
      section_text = j.at("section_text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw LineError(Errc::MalformedLine, line_no, e.what());
    }
    const auto header = parse_label(header_text);
    if (!header) {
      throw LineError(Errc::InvalidHeader, line_no,
                      "'" + header_text + "' is not a canonical header");
    }
    if (text::is_blank(dialogue) || text::is_blank(section_text)) {
      throw LineError(Errc::MalformedLine, line_no, "empty exemplar text");
    }
    store.add(*header, {std::move(dialogue), std::move(section_text)});
  }
  return store;
}

std::string strip_response_boilerplate(std::string_view response) {
  std::string_view s = text::trim(response);
  const std::size_t colon = s.rfind(':');
  if (colon != std::string_view::npos && !text::is_blank(s.substr(colon + 1))) {
    s = s.substr(colon + 1);
  }
  while (!s.empty() && !text::is_alnum(s.back()) &&
         static_cast<unsigned char>(s.back()) < 0x80) {
    s.remove_suffix(1);
  }
  return std::string(text::trim(s));
}

ChatRequest build_heading_prompt(const PromptTemplateSet& templates,
                                 const WriterConfig& config,
                                 std::string_view dialogue) {
  return make_request(config,
                      templates.heading.render({{"dialogue", std::string(dialogue)}}));
}

ChatRequest build_content_prompt(const PromptTemplateSet& templates,
                                 const WriterConfig& config,
                                 std::string_view dialogue,
                                 CanonicalHeader header,
                                 const std::vector<Exemplar>& exemplars) {
  std::optional<std::string> block;
  if (!exemplars.empty()) {
    std::string b;
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
      b += "Example " + std::to_string(i + 1) + "\n";
      b += "Dialogue: " + exemplars[i].dialogue + "\n";
      b += upper(label(header)) + ": " + exemplars[i].section_text + "\n";
    }
    block = std::move(b);
  }
  return make_request(
      config, templates.content.render({{"dialogue", std::string(dialogue)},
                                        {"header", std::string(label(header))},
                                        {"exemplars", block}}));
}

CanonicalHeader classify_header(std::string_view dialogue, Gateway& gateway,
                                CallContext& calls,
                                const PromptTemplateSet& templates,
                                const WriterConfig& config) {
  if (text::is_blank(dialogue)) {
    throw Error(Errc::TemplateError, "cannot classify an empty dialogue");
  }
  const ChatResponse resp = gateway.complete(
      build_heading_prompt(templates, config, dialogue), calls);
  std::string answer = strip_response_boilerplate(resp.content);
  if (text::is_blank(answer)) answer = std::string(text::trim(resp.content));
  // A reply with no usable text still has to land on some header.
  if (text::is_blank(answer)) return CanonicalHeader::OtherHistory;
  return normalize_header(answer, 0.0, MatchMode::NearestAlways)->header;
}

std::string generate_section(std::string_view dialogue, CanonicalHeader header,
                             const ExemplarStore& store, Gateway& gateway,
                             CallContext& calls,
                             const PromptTemplateSet& templates,
                             const WriterConfig& config) {
  const auto exemplars = store.first(header, config.exemplars_per_prompt);
  const ChatResponse resp = gateway.complete(
      build_content_prompt(templates, config, dialogue, header, exemplars),
      calls);
  return std::string(text::trim(resp.content));
}

double classification_accuracy(const std::vector<CanonicalHeader>& predictions,
                               const std::vector<CanonicalHeader>& gold) {
  if (predictions.size() != gold.size()) {
    throw Error(Errc::LengthMismatch,
                std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(gold.size()) + " gold labels");
  }
  if (gold.empty()) return 1.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    hit += predictions[i] == gold[i] ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

}  // namespace synthdial
