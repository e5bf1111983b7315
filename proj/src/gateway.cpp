#include "synthdial/gateway.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "synthdial/error.hpp"
#include "synthdial/io.hpp"
#include "synthdial/text.hpp"

namespace synthdial {

using nlohmann::json;

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw Error(Errc::ConfigError, "unknown role '" + std::string(s) + "'");
}

std::string_view to_string(FinishReason f) noexcept {
  switch (f) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Other: return "other";
  }
  return "other";
}

FinishReason parse_finish_reason(std::string_view s) noexcept {
  if (s == "stop") return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  return FinishReason::Other;
}

void BackendConfig::validate(int max_output_tokens) const {
  if (kind == BackendKind::Live) {
    if (base_url.empty()) {
      throw Error(Errc::ConfigError, "live backend needs base_url");
    }
    if (api_key_env.empty()) {
      throw Error(Errc::ConfigError, "live backend needs api_key_env");
    }
  } else if (transcript_path.empty()) {
    throw Error(Errc::ConfigError, "scripted backend needs a transcript");
  }
  if (max_retries < 0) throw Error(Errc::ConfigError, "max_retries < 0");
  if (max_in_flight < 1) throw Error(Errc::ConfigError, "max_in_flight < 1");
  if (max_output_tokens < 1) {
    throw Error(Errc::ConfigError, "max_output_tokens < 1");
  }
  if (context_token_budget <= max_output_tokens) {
    throw Error(Errc::ConfigError,
                "context_token_budget must exceed max_output_tokens");
  }
}

std::size_t estimate_tokens(std::string_view text) noexcept {
  return (text.size() + 3) / 4;
}

std::size_t estimate_request_tokens(const ChatRequest& request) noexcept {
  std::size_t n = 0;
  for (const auto& m : request.messages) n += estimate_tokens(m.content);
  return n;
}

namespace {

json messages_json(const ChatRequest& request) {
  auto arr = json::array();
  for (const auto& m : request.messages) {
    arr.push_back({{"role", std::string(to_string(m.role))},
                   {"content", m.content}});
  }
  return arr;
}

ChatRequest request_from_json(const json& j) {
  ChatRequest r;
  r.model = j.value("model", std::string{});
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({parse_role(m.at("role").get<std::string>()),
                          m.at("content").get<std::string>()});
  }
  r.temperature = j.value("temperature", 0.0);
  r.max_output_tokens = j.value("max_tokens", 0);
  if (j.contains("seed")) r.seed = j.at("seed").get<std::int64_t>();
  return r;
}

Usage usage_from_json(const json& j) {
  Usage u;
  if (!j.is_object()) return u;
  u.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  u.completion_tokens = j.value("completion_tokens", std::int64_t{0});
  u.total_tokens = j.value("total_tokens", u.prompt_tokens + u.completion_tokens);
  return u;
}

json usage_to_json(const Usage& u) {
  return {{"prompt_tokens", u.prompt_tokens},
          {"completion_tokens", u.completion_tokens},
          {"total_tokens", u.total_tokens}};
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string prompt_fingerprint(const ChatRequest& request) {
  return messages_json(request).dump();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error(Errc::IoError, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Live backend

LiveBackend::LiveBackend(BackendConfig config)
    : config_(std::move(config)), rng_state_(0x5eed5eedULL) {
  const std::string& url = config_.base_url;
  const std::size_t scheme = url.find("://");
  const std::size_t path_at =
      url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_at == std::string::npos) {
    origin_ = url;
    path_.clear();
  } else {
    origin_ = url.substr(0, path_at);
    path_ = url.substr(path_at);
  }
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  path_ += "/chat/completions";
  if (const char* key = std::getenv(config_.api_key_env.c_str())) {
    api_key_ = key;
  }
}

json LiveBackend::request_body(const ChatRequest& request) {
  json body = {{"model", request.model},
               {"messages", messages_json(request)},
               {"temperature", request.temperature},
               {"max_tokens", request.max_output_tokens}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

ChatResponse LiveBackend::send(const ChatRequest& request,
                               const CallContext& /*ctx*/) {
  httplib::Client client(origin_);
  const auto timeout = config_.timeout;
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (!api_key_.empty()) {
    headers.emplace("Authorization", "Bearer " + api_key_);
  }
  const std::string body = request_body(request).dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      // Full jitter: uniform in [0, base * 2^(attempt-1)].
      const auto cap = config_.backoff_base.count() << (attempt - 1);
      std::uint64_t r;
      {
        std::lock_guard lock(rng_mu_);
        r = splitmix64(rng_state_);
      }
      const auto wait = cap > 0 ? static_cast<long long>(r % (cap + 1)) : 0;
      std::this_thread::sleep_for(std::chrono::milliseconds(wait));
    }

    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw HttpError(Errc::AuthError, status, "authentication rejected");
    }
    if (status == 429 || status >= 500) {
      last_error = "HTTP " + std::to_string(status);
      continue;
    }
    if (status < 200 || status >= 300) {
      throw HttpError(Errc::TransportError, status, res->body);
    }

    ChatResponse out;
    try {
      const auto j = json::parse(res->body);
      const auto& choice = j.at("choices").at(0);
      out.content = choice.at("message").at("content").get<std::string>();
      if (choice.contains("finish_reason") &&
          choice.at("finish_reason").is_string()) {
        out.finish_reason =
            parse_finish_reason(choice.at("finish_reason").get<std::string>());
      }
      if (j.contains("usage")) out.usage = usage_from_json(j.at("usage"));
    } catch (const json::exception& e) {
      throw Error(Errc::TransportError,
                  std::string("malformed completion body: ") + e.what());
    }
    out.retries = attempt;
    return out;
  }
  throw Error(Errc::TransportError,
              "gave up after " + std::to_string(config_.max_retries + 1) +
                  " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Transcripts

json to_json(const TranscriptEntry& e) {
  return {{"seq", e.seq},
          {"stream", e.stream},
          {"stream_seq", e.stream_seq},
          {"prompt_sha256", e.prompt_sha256},
          {"request", e.request},
          {"response_content", e.response_content},
          {"finish_reason", std::string(to_string(e.finish_reason))},
          {"usage", usage_to_json(e.usage)}};
}

TranscriptEntry transcript_entry_from_json(const json& j) {
  TranscriptEntry e;
  e.seq = j.at("seq").get<std::size_t>();
  e.stream = j.value("stream", std::string{});
  e.stream_seq = j.contains("stream_seq") ? j.at("stream_seq").get<std::size_t>()
                                          : e.seq;
  e.prompt_sha256 = j.value("prompt_sha256", std::string{});
  if (j.contains("request")) e.request = j.at("request");
  e.response_content = j.at("response_content").get<std::string>();
  e.finish_reason = parse_finish_reason(j.value("finish_reason", "stop"));
  if (j.contains("usage")) e.usage = usage_from_json(j.at("usage"));
  return e;
}

std::vector<TranscriptEntry> read_transcript(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open transcript " + path);
  std::vector<TranscriptEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    try {
      out.push_back(transcript_entry_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw LineError(Errc::MalformedLine, line_no, e.what());
    }
  }
  return out;
}

ScriptedBackend::ScriptedBackend(std::vector<TranscriptEntry> entries,
                                 bool verify)
    : verify_(verify) {
  for (auto& e : entries) {
    auto& slot = by_stream_[e.stream];
    if (slot.size() <= e.stream_seq) slot.resize(e.stream_seq + 1);
    slot[e.stream_seq] = std::move(e);
  }
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(
    const std::string& path, bool verify) {
  return std::make_unique<ScriptedBackend>(read_transcript(path), verify);
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_responses(
    const std::vector<std::string>& responses, const std::string& stream) {
  std::vector<TranscriptEntry> entries;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    TranscriptEntry e;
    e.seq = i;
    e.stream = stream;
    e.stream_seq = i;
    e.response_content = responses[i];
    entries.push_back(std::move(e));
  }
  return std::make_unique<ScriptedBackend>(std::move(entries), false);
}

ChatResponse ScriptedBackend::send(const ChatRequest& request,
                                   const CallContext& ctx) {
  const auto it = by_stream_.find(ctx.stream);
  if (it == by_stream_.end() || ctx.stream_seq >= it->second.size() ||
      !it->second[ctx.stream_seq]) {
    throw Error(Errc::ScriptExhausted,
                "no recorded response for stream '" + ctx.stream +
                    "' call " + std::to_string(ctx.stream_seq));
  }
  const TranscriptEntry& e = *it->second[ctx.stream_seq];
  if (verify_) {
    const std::string issued = sha256_hex(prompt_fingerprint(request));
    if (issued != e.prompt_sha256) {
      throw ScriptMismatchError(e.seq, "issued prompt hash differs");
    }
    if (!e.request.is_null()) {
      std::string recorded;
      try {
        recorded = sha256_hex(prompt_fingerprint(request_from_json(e.request)));
      } catch (const std::exception&) {
        throw ScriptMismatchError(e.seq, "recorded request is unreadable");
      }
      if (recorded != e.prompt_sha256) {
        throw ScriptMismatchError(e.seq, "recorded request was altered");
      }
    }
  }
  ChatResponse out;
  out.content = e.response_content;
  out.finish_reason = e.finish_reason;
  out.usage = e.usage;
  return out;
}

TranscriptWriter::TranscriptWriter(std::string path) : path_(std::move(path)) {}

TranscriptWriter::~TranscriptWriter() {
  try {
    if (!flushed_) flush();
  } catch (...) {
  }
}

void TranscriptWriter::append(const ChatRequest& request,
                              const CallContext& ctx,
                              const ChatResponse& response) {
  TranscriptEntry e;
  e.stream = ctx.stream;
  e.stream_seq = ctx.stream_seq;
  e.prompt_sha256 = sha256_hex(prompt_fingerprint(request));
  e.request = LiveBackend::request_body(request);
  e.response_content = response.content;
  e.finish_reason = response.finish_reason;
  e.usage = response.usage;
  std::lock_guard lock(mu_);
  e.seq = entries_.size();
  entries_.push_back(std::move(e));
}

void TranscriptWriter::flush() {
  std::string out;
  {
    std::lock_guard lock(mu_);
    for (const auto& e : entries_) {
      out += to_json(e).dump();
      out += '\n';
    }
    flushed_ = true;
  }
  write_file_atomic(path_, out);
}

std::size_t TranscriptWriter::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(BackendConfig config, std::unique_ptr<ChatBackend> backend,
                 TranscriptWriter* recorder)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      recorder_(recorder) {}

ChatResponse Gateway::complete(const ChatRequest& request, CallContext& ctx) {
  if (request.messages.empty()) {
    throw Error(Errc::TemplateError, "request has no messages");
  }
  const std::size_t needed = estimate_request_tokens(request) +
                             static_cast<std::size_t>(request.max_output_tokens);
  if (needed > static_cast<std::size_t>(config_.context_token_budget)) {
    ++budget_rejections_;
    throw Error(Errc::BudgetExceeded,
                "estimated " + std::to_string(needed) + " tokens > budget " +
                    std::to_string(config_.context_token_budget));
  }

  {
    std::unique_lock lock(admit_mu_);
    admit_cv_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    Gateway* g;
    ~Release() {
      {
        std::lock_guard lock(g->admit_mu_);
        --g->in_flight_;
      }
      g->admit_cv_.notify_one();
    }
  } release{this};

  const CallContext call = ctx;
  ++ctx.stream_seq;
  ChatResponse response = backend_->send(request, call);
  ++calls_;
  retries_ += static_cast<std::size_t>(response.retries);
  if (recorder_) recorder_->append(request, call, response);
  return response;
}

GatewayStats Gateway::stats() const {
  return {calls_.load(), retries_.load(), budget_rejections_.load()};
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  if (config.kind == BackendKind::Live) {
    return std::make_unique<LiveBackend>(config);
  }
  return ScriptedBackend::from_file(config.transcript_path,
                                    config.verify_transcript);
}

}  // namespace synthdial
