#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace synthdial {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r) noexcept;
Role parse_role(std::string_view s);

struct ChatMessage {
  Role role = Role::User;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int max_output_tokens = 512;
  std::optional<std::int64_t> seed;
};

enum class FinishReason { Stop, Length, Other };

std::string_view to_string(FinishReason f) noexcept;
FinishReason parse_finish_reason(std::string_view s) noexcept;

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total_tokens = 0;
};

struct ChatResponse {
  std::string content;
  FinishReason finish_reason = FinishReason::Stop;
  Usage usage;
  int retries = 0;
};

enum class BackendKind { Live, Scripted };

struct BackendConfig {
  BackendKind kind = BackendKind::Scripted;
  std::string base_url;                      // live
  std::string api_key_env = "OPENAI_API_KEY";  // live
  std::string transcript_path;               // scripted
  bool verify_transcript = false;            // scripted
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  int max_in_flight = 4;
  int context_token_budget = 4096;
  std::chrono::milliseconds backoff_base{1000};

  // Throws ConfigError when the fields required by `kind` are missing.
  void validate(int max_output_tokens) const;
};

// Share of the context budget the pipeline keeps free when trimming history.
inline constexpr double kBudgetHeadroom = 0.2;

// ceil(bytes / 4).
std::size_t estimate_tokens(std::string_view text) noexcept;
std::size_t estimate_request_tokens(const ChatRequest& request) noexcept;

// Canonical JSON of the request messages; hashed for transcript checks.
std::string prompt_fingerprint(const ChatRequest& request);
std::string sha256_hex(std::string_view data);

// Identifies the issuing worker's call stream. Each note (or dialogue) owns
// one stream and numbers its calls from zero.
struct CallContext {
  std::string stream;
  std::size_t stream_seq = 0;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse send(const ChatRequest& request,
                            const CallContext& ctx) = 0;
};

// Chat-completions over HTTP. Retries 429 and 5xx with full-jitter
// exponential backoff; 401/403 fail immediately.
class LiveBackend : public ChatBackend {
 public:
  explicit LiveBackend(BackendConfig config);
  ChatResponse send(const ChatRequest& request,
                    const CallContext& ctx) override;

  static nlohmann::json request_body(const ChatRequest& request);

 private:
  BackendConfig config_;
  std::string origin_;
  std::string path_;
  std::string api_key_;
  std::mutex rng_mu_;
  std::uint64_t rng_state_;
};

struct TranscriptEntry {
  std::size_t seq = 0;
  std::string stream;
  std::size_t stream_seq = 0;
  std::string prompt_sha256;
  nlohmann::json request;  // empty when not recorded
  std::string response_content;
  FinishReason finish_reason = FinishReason::Stop;
  Usage usage;
};

nlohmann::json to_json(const TranscriptEntry& entry);
TranscriptEntry transcript_entry_from_json(const nlohmann::json& j);
std::vector<TranscriptEntry> read_transcript(const std::string& path);

// Replays recorded responses keyed by (stream, stream_seq). Entries without
// a stream field fall into stream "" with stream_seq = seq.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<TranscriptEntry> entries,
                           bool verify = false);
  static std::unique_ptr<ScriptedBackend> from_file(const std::string& path,
                                                    bool verify);
  // Unhashed responses for one stream; verification is off.
  static std::unique_ptr<ScriptedBackend> from_responses(
      const std::vector<std::string>& responses, const std::string& stream = "");

  ChatResponse send(const ChatRequest& request,
                    const CallContext& ctx) override;

 private:
  std::unordered_map<std::string, std::vector<std::optional<TranscriptEntry>>>
      by_stream_;
  bool verify_;
};

// Collects one JSON line per completed call and writes them atomically on
// flush(). Global seq numbers are assigned in completion order.
class TranscriptWriter {
 public:
  explicit TranscriptWriter(std::string path);
  ~TranscriptWriter();

  void append(const ChatRequest& request, const CallContext& ctx,
              const ChatResponse& response);
  void flush();
  std::size_t size() const;

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> entries_;
  bool flushed_ = false;
};

struct GatewayStats {
  std::size_t calls = 0;
  std::size_t retries = 0;
  std::size_t budget_rejections = 0;
};

// Front door for every model call: budget check, admission limit, optional
// recording.
class Gateway {
 public:
  Gateway(BackendConfig config, std::unique_ptr<ChatBackend> backend,
          TranscriptWriter* recorder = nullptr);

  // Throws BudgetExceeded before touching the backend when the estimated
  // prompt plus max_output_tokens exceeds the budget. Advances ctx.stream_seq
  // on every call that reaches the backend.
  ChatResponse complete(const ChatRequest& request, CallContext& ctx);

  const BackendConfig& config() const noexcept { return config_; }
  GatewayStats stats() const;

 private:
  BackendConfig config_;
  std::unique_ptr<ChatBackend> backend_;
  TranscriptWriter* recorder_;

  std::mutex admit_mu_;
  std::condition_variable admit_cv_;
  int in_flight_ = 0;

  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> retries_{0};
  std::atomic<std::size_t> budget_rejections_{0};
};

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

}  // namespace synthdial
