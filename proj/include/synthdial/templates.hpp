#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace synthdial {

// Placeholder values. A line that references an unbound or std::nullopt
// placeholder is dropped; a bound empty string renders as empty.
using Bindings = std::map<std::string, std::optional<std::string>>;

class PromptTemplate {
 public:
  PromptTemplate() = default;
  // Throws TemplateError on malformed `{{...}}` syntax or on a placeholder
  // outside `allowed`.
  PromptTemplate(std::string text, const std::set<std::string>& allowed);

  const std::string& text() const noexcept { return text_; }
  const std::set<std::string>& placeholders() const noexcept {
    return placeholders_;
  }

  // Every placeholder must appear in `bindings` (nullopt allowed); a missing
  // key throws TemplateError.
  std::string render(const Bindings& bindings) const;

 private:
  std::string text_;
  std::set<std::string> placeholders_;
};

enum class DialogueMode { Short, Long };

std::string_view to_string(DialogueMode m) noexcept;
DialogueMode parse_mode(std::string_view s);

struct PromptTemplateSet {
  PromptTemplate doctor;
  PromptTemplate patient;
  PromptTemplate polish;
  PromptTemplate hallucination;
  PromptTemplate postedit;
  PromptTemplate heading;
  PromptTemplate content;

  static PromptTemplateSet defaults(DialogueMode mode = DialogueMode::Short);
  // Files named doctor.txt, patient.txt, ... override the defaults; a
  // `<name>_long.txt` file takes precedence in long mode.
  static PromptTemplateSet load_dir(const std::string& dir, DialogueMode mode);
};

namespace slots {
inline const std::set<std::string> kDoctor{"note", "conversation", "keywords"};
inline const std::set<std::string> kPatient{"note", "conversation"};
inline const std::set<std::string> kPolish{"note", "conversation", "keywords"};
inline const std::set<std::string> kHallucination{"note", "conversation",
                                                  "keywords"};
inline const std::set<std::string> kPostedit{"conversation_a", "conversation_b",
                                             "keywords"};
inline const std::set<std::string> kHeading{"dialogue"};
inline const std::set<std::string> kContent{"dialogue", "header", "exemplars"};
}  // namespace slots

}  // namespace synthdial
