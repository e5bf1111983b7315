#include "synthdial/templates.hpp"

#include <filesystem>

#include "synthdial/error.hpp"
#include "synthdial/io.hpp"
#include "synthdial/text.hpp"

namespace synthdial {
namespace {

struct Token {
  bool placeholder;
  std::string text;  // literal text or placeholder name
};

std::vector<Token> tokenize_line(std::string_view line) {
  std::vector<Token> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const std::size_t open = line.find("{{", pos);
    if (open == std::string_view::npos) {
      out.push_back({false, std::string(line.substr(pos))});
      break;
    }
    if (open > pos) out.push_back({false, std::string(line.substr(pos, open - pos))});
    const std::size_t close = line.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw Error(Errc::TemplateError, "unterminated '{{' in template");
    }
    const std::string name(text::trim(line.substr(open + 2, close - open - 2)));
    if (name.empty()) throw Error(Errc::TemplateError, "empty placeholder");
    for (char c : name) {
      if (!(text::is_alnum(c) || c == '_')) {
        throw Error(Errc::TemplateError, "bad placeholder name '" + name + "'");
      }
    }
    out.push_back({true, name});
    pos = close + 2;
  }
  return out;
}

// Doctor instruction, verbatim.
constexpr std::string_view kDoctorShort =
    "Clinical Note: {{note}}\n"
    "\n"
    "Conversation: {{conversation}}\n"
    "\n"
    "Please role-play as a doctor and further ask a question based on the "
    "above dialogue to follow up the history conversation. The treatment "
    "plan, medication, and dosage you give to the patient must also be "
    "consistent with the clinical note. Your question should be around these "
    "keywords, and you cannot modify these keywords or use synonyms.\n"
    "\n"
    "Key Words: {{keywords}}\n";

constexpr std::string_view kDoctorLong =
    "Clinical Note: {{note}}\n"
    "\n"
    "Conversation: {{conversation}}\n"
    "\n"
    "Please role-play as a doctor and further ask a question based on the "
    "above dialogue to follow up the history conversation. The treatment "
    "plan, medication, and dosage you give to the patient must also be "
    "consistent with the clinical note. Your question should be around these "
    "keywords, and you cannot modify these keywords or use synonyms.\n"
    "Ask only one short question at a time, and ask a follow-up question "
    "about the patient's previous answer before moving on to a new key "
    "word.\n"
    "\n"
    "Key Words: {{keywords}}\n";

constexpr std::string_view kPatientShort =
    "Clinical Note: {{note}}\n"
    "\n"
    "Conversation: {{conversation}}\n"
    "\n"
    "Please act as a patient and answer my question or follow up on the "
    "conversation. Your answer must be consistent with the clinical note and "
    "cannot include information that is not in the clinical note. Your "
    "responses should be more colloquial.\n";

constexpr std::string_view kPatientLong =
    "Clinical Note: {{note}}\n"
    "\n"
    "Conversation: {{conversation}}\n"
    "\n"
    "Please act as a patient and answer my question or follow up on the "
    "conversation. Your answer must be consistent with the clinical note and "
    "cannot include information that is not in the clinical note. Your "
    "responses should be more colloquial.\n"
    "Keep each answer to one or two short sentences.\n";

constexpr std::string_view kPolish =
    "Please rewrite all the conversations based on the notes to become "
    "fluence and more colloquial, like a normal conversation between the "
    "doctor and patient based on the clinical notes. Now you should rewrite "
    "the following conversations, and your conversation should include all "
    "the information and all the keywords. The keywords must be used directly "
    "instead of using synonyms when using them in the conversation\n"
    "\n"
    "Key Words: {{keywords}}\n"
    "The conversation: \"{{conversation}}\"\n"
    "\n"
    "Clinical Note: {{note}}\n"
    "\n"
    "The conversation between the doctor and the patient should involve "
    "multiple rounds, with each question and answer being relatively short. "
    "You should try to ensure that the dialogue is smooth.\n";

constexpr std::string_view kHallucination =
    "Check whether the information of the conversation is consistent with "
    "the clinical note. If there is some information that you cannot find on "
    "the clinical note, please eliminate it. You also should delete the "
    "duplicate part.\n"
    "The conversation should include all the key words: {{keywords}}\n"
    "\n"
    "Clinical Note: {{note}}\n"
    "Conversation: {{conversation}}\n";

constexpr std::string_view kPosteditShort =
    "History Conversation: {{conversation_a}}\n"
    "Generated Conversation: {{conversation_b}}\n"
    "\n"
    "The above two paragraphs were extracted from a complete conversation. "
    "Please concatenate the two dialogues together. It means that your "
    "generation should include all the information such as the dosage of the "
    "medication which is mentioned in the clinical note. You should try to "
    "ensure that the dialogue is smooth.\n"
    "The conversation must include these key words: {{keywords}} and you "
    "should also eliminate the repeat parts.\n";

constexpr std::string_view kPosteditLong =
    "History Conversation: {{conversation_a}}\n"
    "Generated Conversation: {{conversation_b}}\n"
    "\n"
    "The above two paragraphs were extracted from a complete conversation. "
    "Please concatenate the two dialogues together. It means that your "
    "generation should include all the information such as the dosage of the "
    "medication which is mentioned in the clinical note. You should try to "
    "ensure that the dialogue is smooth.\n"
    "The history conversation is only the segment just before the generated "
    "conversation; keep every utterance of both.\n"
    "The conversation must include these key words: {{keywords}} and you "
    "should also eliminate the repeat parts.\n";

constexpr std::string_view kHeading =
    "Dialogue: {{dialogue}}\n"
    "\n"
    "Given the dialogue above, select a section of the medical note from the "
    "options below.\n"
    "Options: history of present illness; review of systems; past medical "
    "history; medications; chief complaint; past surgical history; "
    "disposition; diagnosis; emergency department course; plan; labs; "
    "assessment; allergy; gynecologic history; exam; other history; "
    "procedures; imaging; immunizations; family history social history.\n";

constexpr std::string_view kContent =
    "{{exemplars}}\n"
    "Dialogue: {{dialogue}}\n"
    "\n"
    "Generate the {{header}} section of the medical note from the "
    "dialogue.\n";

}  // namespace

PromptTemplate::PromptTemplate(std::string text,
                               const std::set<std::string>& allowed)
    : text_(std::move(text)) {
  for (std::string_view line : text::split_lines(text_)) {
    for (const auto& tok : tokenize_line(line)) {
      if (!tok.placeholder) continue;
      if (!allowed.contains(tok.text)) {
        throw Error(Errc::TemplateError,
                    "placeholder '{{" + tok.text + "}}' is not a slot here");
      }
      placeholders_.insert(tok.text);
    }
  }
}

std::string PromptTemplate::render(const Bindings& bindings) const {
  std::vector<std::string> lines;
  bool dropped_since_emit = false;
  for (std::string_view line : text::split_lines(text_)) {
    std::string rendered;
    bool drop = false;
    for (const auto& tok : tokenize_line(line)) {
      if (!tok.placeholder) {
        rendered += tok.text;
        continue;
      }
      const auto it = bindings.find(tok.text);
      if (it == bindings.end()) {
        throw Error(Errc::TemplateError,
                    "placeholder '{{" + tok.text + "}}' is unbound");
      }
      if (!it->second) {
        drop = true;
        break;
      }
      rendered += *it->second;
    }
    if (drop) {
      dropped_since_emit = true;
      continue;
    }
    // A dropped line must not leave a doubled blank line behind.
    if (rendered.empty() && dropped_since_emit &&
        (lines.empty() || lines.back().empty())) {
      continue;
    }
    dropped_since_emit = false;
    lines.push_back(std::move(rendered));
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  while (!lines.empty() && lines.front().empty()) lines.erase(lines.begin());
  return text::join(lines, "\n");
}

std::string_view to_string(DialogueMode m) noexcept {
  return m == DialogueMode::Long ? "long" : "short";
}

DialogueMode parse_mode(std::string_view s) {
  if (s == "short") return DialogueMode::Short;
  if (s == "long") return DialogueMode::Long;
  throw Error(Errc::ConfigError, "mode must be short or long, got '" +
                                     std::string(s) + "'");
}

PromptTemplateSet PromptTemplateSet::defaults(DialogueMode mode) {
  const bool long_mode = mode == DialogueMode::Long;
  PromptTemplateSet set;
  set.doctor = PromptTemplate(
      std::string(long_mode ? kDoctorLong : kDoctorShort), slots::kDoctor);
  set.patient = PromptTemplate(
      std::string(long_mode ? kPatientLong : kPatientShort), slots::kPatient);
  set.polish = PromptTemplate(std::string(kPolish), slots::kPolish);
  set.hallucination =
      PromptTemplate(std::string(kHallucination), slots::kHallucination);
  set.postedit = PromptTemplate(
      std::string(long_mode ? kPosteditLong : kPosteditShort), slots::kPostedit);
  set.heading = PromptTemplate(std::string(kHeading), slots::kHeading);
  set.content = PromptTemplate(std::string(kContent), slots::kContent);
  return set;
}

PromptTemplateSet PromptTemplateSet::load_dir(const std::string& dir,
                                              DialogueMode mode) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw Error(Errc::ConfigError, "templates directory not found: " + dir);
  }
  PromptTemplateSet set = defaults(mode);
  auto override_slot = [&](PromptTemplate& slot, const std::string& name,
                           const std::set<std::string>& allowed) {
    const fs::path long_file = fs::path(dir) / (name + "_long.txt");
    const fs::path file = fs::path(dir) / (name + ".txt");
    if (mode == DialogueMode::Long && fs::exists(long_file)) {
      slot = PromptTemplate(read_file(long_file.string()), allowed);
    } else if (fs::exists(file)) {
      slot = PromptTemplate(read_file(file.string()), allowed);
    }
  };
  override_slot(set.doctor, "doctor", slots::kDoctor);
  override_slot(set.patient, "patient", slots::kPatient);
  override_slot(set.polish, "polish", slots::kPolish);
  override_slot(set.hallucination, "hallucination", slots::kHallucination);
  override_slot(set.postedit, "postedit", slots::kPostedit);
  override_slot(set.heading, "heading", slots::kHeading);
  override_slot(set.content, "content", slots::kContent);
  return set;
}

}  // namespace synthdial
