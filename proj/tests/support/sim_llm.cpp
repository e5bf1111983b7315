#include "sim_llm.hpp"

#include <algorithm>
#include <iterator>
#include <set>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

namespace simllm {
namespace {

using nlohmann::json;

bool contains(const std::string& s, const char* needle) {
  return s.find(needle) != std::string::npos;
}

// Text after `open` up to `close` (or the end when close is empty/missing).
std::string between(const std::string& s, const std::string& open,
                    const std::string& close, bool last_open = false) {
  const std::size_t a = last_open ? s.rfind(open) : s.find(open);
  if (a == std::string::npos) return {};
  const std::size_t from = a + open.size();
  const std::size_t b = close.empty() ? std::string::npos : s.find(close, from);
  return s.substr(from, b == std::string::npos ? std::string::npos : b - from);
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    if (!out.empty()) out += '\n';
    out += l;
  }
  return out;
}

std::vector<std::string> split_keywords(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(", ", start);
    std::string kw = s.substr(start, comma == std::string::npos
                                         ? std::string::npos
                                         : comma - start);
    if (!kw.empty()) out.push_back(kw);
    if (comma == std::string::npos) break;
    start = comma + 2;
  }
  return out;
}

std::vector<std::string> speaker_lines(const std::vector<std::string>& lines,
                                       const char* prefix) {
  std::vector<std::string> out;
  for (const auto& l : lines) {
    if (l.rfind(prefix, 0) == 0) out.push_back(l);
  }
  return out;
}

const char* const kQuestions[] = {
    "Doctor: Can you tell me about your %s?",
    "Doctor: What can you tell me about your %s?",
    "Doctor: Anything new with your %s?",
};

const char* const kFollowUps[] = {
    "Doctor: How long has that been going on?",
    "Doctor: Has it changed at all recently?",
    "Doctor: How is that affecting your day?",
    "Doctor: Does anything make it better or worse?",
    "Doctor: Have you had anything like this before?",
    "Doctor: Is it worse at any particular time?",
    "Doctor: Did anything set it off?",
};
constexpr std::size_t kFollowUpCount = std::size(kFollowUps);

const char* const kAnswers[] = {
    "Patient: Yes, my %s has been on my mind.",
    "Patient: Well, the %s is what brought me in.",
    "Patient: Sure, my %s is pretty much as the note says.",
};

const char* const kFollowUpAnswers[] = {
    "Patient: A few weeks now, I think.",
    "Patient: Not really, it has been about the same.",
    "Patient: It slows me down a bit, honestly.",
    "Patient: Resting helps a little.",
    "Patient: Once, a couple of years ago.",
    "Patient: Mostly in the evenings.",
    "Patient: Nothing that I can think of.",
};

std::string fill(const char* pattern, const std::string& value) {
  std::string out(pattern);
  const std::size_t at = out.find("%s");
  if (at != std::string::npos) out.replace(at, 2, value);
  return out;
}

bool is_keyword_question(const std::string& line) {
  for (const char* f : kFollowUps) {
    if (line == f) return false;
  }
  return line.find(" your ") != std::string::npos && line.back() == '?';
}

std::string doctor(const std::string& prompt) {
  const std::string conversation =
      between(prompt, "\nConversation: ", "\n\nPlease role-play");
  const auto doctor_lines = speaker_lines(lines_of(conversation), "Doctor:");
  const std::size_t turn = doctor_lines.size();
  const auto keywords = split_keywords(between(prompt, "\nKey Words: ", "\n"));
  const bool follow_up_mode =
      contains(prompt, "follow-up question about the patient's previous answer");

  if (follow_up_mode && !doctor_lines.empty() &&
      is_keyword_question(doctor_lines.back())) {
    return kFollowUps[turn % kFollowUpCount];
  }
  if (keywords.empty()) {
    return "Doctor: Is there anything else you would like to mention?";
  }
  return fill(kQuestions[turn % 3], keywords.front());
}

std::string patient(const std::string& prompt) {
  const std::string conversation =
      between(prompt, "\nConversation: ", "\n\nPlease act as a patient");
  const auto lines = lines_of(conversation);
  const auto doctor_lines = speaker_lines(lines, "Doctor:");
  const std::size_t turn = doctor_lines.size();
  if (doctor_lines.empty()) return "Patient: I am not sure where to start.";
  const std::string& last = doctor_lines.back();
  const std::size_t your = last.rfind(" your ");
  if (is_keyword_question(last) && your != std::string::npos) {
    const std::string kw = last.substr(your + 6, last.size() - your - 7);
    return fill(kAnswers[turn % 3], kw);
  }
  if (contains(last, "anything else")) {
    return "Patient: No, I think that covers it.";
  }
  for (std::size_t i = 0; i < kFollowUpCount; ++i) {
    if (last == kFollowUps[i]) return kFollowUpAnswers[i];
  }
  return "Patient: I am not sure.";
}

std::string polish(const std::string& prompt) {
  std::string conv =
      between(prompt, "The conversation: \"", "\"\n\nClinical Note: ");
  const std::string from = "Can you tell me about your";
  const std::string to = "Could you tell me more about your";
  for (std::size_t at = conv.find(from); at != std::string::npos;
       at = conv.find(from, at + to.size())) {
    conv.replace(at, from.size(), to);
  }
  return conv;
}

std::string hallucination(const std::string& prompt) {
  const auto lines = lines_of(between(prompt, "\nConversation: ", "", true));
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& l : lines) {
    if (seen.insert(l).second) out.push_back(l);
  }
  return join_lines(out);
}

std::string postedit(const std::string& prompt) {
  const auto a = lines_of(between(prompt, "History Conversation: ",
                                  "\nGenerated Conversation: "));
  const auto b = lines_of(
      between(prompt, "\nGenerated Conversation: ", "\n\nThe above two"));
  std::vector<std::string> out = a;
  const std::set<std::string> have(a.begin(), a.end());
  for (const auto& l : b) {
    if (!have.count(l)) out.push_back(l);
  }
  return "Here is the merged conversation:\n\n" + join_lines(out);
}

std::string heading(const std::string& prompt) {
  std::string dialogue =
      between(prompt, "Dialogue: ", "\n\nGiven the dialogue above");
  std::transform(dialogue.begin(), dialogue.end(), dialogue.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  const std::pair<const char*, const char*> rules[] = {
      {"allerg", "allergy"},
      {"surgery", "past surgical history"},
      {"taking", "medications"},
      {"family", "family history social history"},
      {"x-ray", "imaging"},
  };
  for (const auto& [cue, label] : rules) {
    if (dialogue.find(cue) != std::string::npos) {
      return std::string("The most relevant section is: ") + label + ".";
    }
  }
  return "The most relevant section is: history of present illness.";
}

std::string content(const std::string& prompt) {
  // The last "Dialogue: " is the target; earlier ones belong to examples.
  const std::string dialogue =
      between("\n" + prompt, "\nDialogue: ", "\n\nGenerate the", true);
  std::string out = "Patient reports:";
  for (const auto& l : speaker_lines(lines_of(dialogue), "Patient:")) {
    out += " " + l.substr(9);
  }
  return out;
}

}  // namespace

std::string respond(const std::string& prompt) {
  if (contains(prompt, "Please role-play as a doctor")) return doctor(prompt);
  if (contains(prompt, "Please act as a patient")) return patient(prompt);
  if (contains(prompt, "Please rewrite all the conversations")) return polish(prompt);
  if (contains(prompt, "Check whether the information")) return hallucination(prompt);
  if (contains(prompt, "Please concatenate the two dialogues")) return postedit(prompt);
  if (contains(prompt, "select a section of the medical note")) return heading(prompt);
  if (contains(prompt, "Generate the ")) return content(prompt);
  return "I am not sure what you are asking.";
}

synthdial::ChatResponse SimBackend::send(const synthdial::ChatRequest& request,
                                         const synthdial::CallContext&) {
  ++calls_;
  std::string prompt;
  for (const auto& m : request.messages) {
    if (m.role == synthdial::Role::User) prompt = m.content;
  }
  synthdial::ChatResponse r;
  r.content = respond(prompt);
  r.usage.prompt_tokens = static_cast<std::int64_t>(prompt.size() / 4);
  r.usage.completion_tokens = static_cast<std::int64_t>(r.content.size() / 4);
  r.usage.total_tokens = r.usage.prompt_tokens + r.usage.completion_tokens;
  return r;
}

SimServer::SimServer() : server_(std::make_unique<httplib::Server>()) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    {
      std::lock_guard lock(mu_);
      last_auth_ = req.get_header_value("Authorization");
      if (!faults_.empty()) {
        res.status = faults_.front();
        faults_.pop_front();
        res.set_content(R"({"error":{"message":"injected"}})",
                        "application/json");
        return;
      }
    }
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      res.status = 400;
      return;
    }
    std::string prompt;
    for (const auto& m : body.at("messages")) {
      if (m.value("role", "") == "user") prompt = m.at("content").get<std::string>();
    }
    const std::string answer = respond(prompt);
    const long long prompt_tokens = static_cast<long long>(prompt.size() / 4);
    const long long completion_tokens = static_cast<long long>(answer.size() / 4);
    const json out = {
        {"id", "sim-" + std::to_string(requests_.load())},
        {"object", "chat.completion"},
        {"model", body.value("model", "")},
        {"choices",
         {{{"index", 0},
           {"message", {{"role", "assistant"}, {"content", answer}}},
           {"finish_reason", "stop"}}}},
        {"usage",
         {{"prompt_tokens", prompt_tokens},
          {"completion_tokens", completion_tokens},
          {"total_tokens", prompt_tokens + completion_tokens}}}};
    res.set_content(out.dump(), "application/json");
  };
  server_->Post("/chat/completions", handler);
  server_->Post("/v1/chat/completions", handler);
  port_ = server_->bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

SimServer::~SimServer() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string SimServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_) + "/v1";
}

void SimServer::inject_faults(std::vector<int> statuses) {
  std::lock_guard lock(mu_);
  faults_.assign(statuses.begin(), statuses.end());
}

std::string SimServer::last_authorization() const {
  std::lock_guard lock(mu_);
  return last_auth_;
}

}  // namespace simllm
