#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "sim_llm.hpp"
#include "synthdial/error.hpp"
#include "synthdial/gateway.hpp"
#include "synthdial/io.hpp"

using namespace synthdial;
namespace fs = std::filesystem;

namespace {

ChatRequest req(std::string content, int max_out = 16) {
  ChatRequest r;
  r.model = "m";
  r.messages.push_back({Role::User, std::move(content)});
  r.max_output_tokens = max_out;
  return r;
}

BackendConfig live_config(const std::string& url) {
  BackendConfig c;
  c.kind = BackendKind::Live;
  c.base_url = url;
  c.api_key_env = "SYNTHDIAL_TEST_KEY";
  c.backoff_base = std::chrono::milliseconds(1);
  c.timeout = std::chrono::milliseconds(5000);
  return c;
}

// Counts calls and fails the test if it is ever reached.
class Tripwire : public ChatBackend {
 public:
  ChatResponse send(const ChatRequest&, const CallContext&) override {
    ++calls;
    return {};
  }
  std::atomic<int> calls{0};
};

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("synthdial_gw_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Tokens, Estimate) {
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("hello world"), 3u);
  EXPECT_EQ(estimate_tokens(std::string(4096, 'x')), 1024u);
  ChatRequest r = req("abcd");
  r.messages.push_back({Role::Assistant, "abcde"});
  EXPECT_EQ(estimate_request_tokens(r), 3u);
}

TEST(Gateway, BudgetCheckedBeforeBackend) {
  BackendConfig c;
  c.context_token_budget = 100;
  auto wire = std::make_unique<Tripwire>();
  auto* w = wire.get();
  Gateway g(c, std::move(wire));
  CallContext ctx{"s", 0};
  try {
    g.complete(req(std::string(400, 'a'), 10), ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BudgetExceeded);
  }
  EXPECT_EQ(w->calls, 0);
  EXPECT_EQ(ctx.stream_seq, 0u);
  EXPECT_EQ(g.stats().budget_rejections, 1u);
  g.complete(req(std::string(300, 'a'), 25), ctx);
  EXPECT_EQ(w->calls, 1);
  EXPECT_EQ(ctx.stream_seq, 1u);
}

TEST(Gateway, AdmissionLimit) {
  class Slow : public ChatBackend {
   public:
    ChatResponse send(const ChatRequest&, const CallContext&) override {
      const int now = ++active;
      int prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --active;
      return {};
    }
    std::atomic<int> active{0}, peak{0};
  };
  BackendConfig c;
  c.max_in_flight = 2;
  auto slow = std::make_unique<Slow>();
  auto* s = slow.get();
  Gateway g(c, std::move(slow));
  std::vector<std::thread> ts;
  for (int t = 0; t < 6; ++t) {
    ts.emplace_back([&, t] {
      CallContext ctx{"s" + std::to_string(t), 0};
      for (int i = 0; i < 3; ++i) g.complete(req("x"), ctx);
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_LE(s->peak.load(), 2);
  EXPECT_EQ(g.stats().calls, 18u);
}

TEST(Scripted, ReplaysByStream) {
  auto b = ScriptedBackend::from_responses({"Doctor: Hi", ""}, "n1");
  BackendConfig c;
  Gateway g(c, std::move(b));
  CallContext ctx{"n1", 0};
  EXPECT_EQ(g.complete(req("q"), ctx).content, "Doctor: Hi");
  EXPECT_EQ(g.complete(req("q"), ctx).content, "");
  try {
    g.complete(req("q"), ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ScriptExhausted);
  }
  CallContext other{"n2", 0};
  EXPECT_THROW(g.complete(req("q"), other), Error);
}

TEST(Transcript, RecordThenVerify) {
  const auto dir = temp_dir("record");
  const std::string path = (dir / "t.jsonl").string();
  {
    TranscriptWriter w(path);
    BackendConfig c;
    Gateway g(c, ScriptedBackend::from_responses({"a", "b", "c", "d", "e"}, "s"),
              &w);
    CallContext ctx{"s", 0};
    for (int i = 0; i < 5; ++i) g.complete(req("p" + std::to_string(i)), ctx);
    w.flush();
  }
  const auto entries = read_transcript(path);
  ASSERT_EQ(entries.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(entries[i].seq, i);
    EXPECT_EQ(entries[i].stream_seq, i);
    EXPECT_EQ(entries[i].request.at("messages").at(0).at("content"),
              "p" + std::to_string(i));
  }

  BackendConfig c;
  Gateway g(c, ScriptedBackend::from_file(path, true));
  CallContext ctx{"s", 0};
  EXPECT_EQ(g.complete(req("p0"), ctx).content, "a");
  EXPECT_EQ(g.complete(req("p1"), ctx).content, "b");
  try {
    g.complete(req("p2 altered"), ctx);
    FAIL();
  } catch (const ScriptMismatchError& e) {
    EXPECT_EQ(e.seq(), 2u);
  }
}

TEST(Transcript, AlteredRecordedRequestIsDetected) {
  auto entries = std::vector<TranscriptEntry>{};
  TranscriptEntry e;
  e.seq = 0;
  e.stream = "s";
  const ChatRequest r = req("hello");
  e.prompt_sha256 = sha256_hex(prompt_fingerprint(r));
  e.request = LiveBackend::request_body(r);
  e.request["messages"][0]["content"] = "tampered";
  e.response_content = "x";
  entries.push_back(e);
  BackendConfig c;
  Gateway g(c, std::make_unique<ScriptedBackend>(entries, true));
  CallContext ctx{"s", 0};
  EXPECT_THROW(g.complete(r, ctx), ScriptMismatchError);
}

TEST(Transcript, ShaIsStable) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Live, RetriesOn429ThenSucceeds) {
  simllm::SimServer server;
  server.inject_faults({429, 429});
  ::setenv("SYNTHDIAL_TEST_KEY", "sk-test", 1);
  const auto c = live_config(server.base_url());
  Gateway g(c, std::make_unique<LiveBackend>(c));
  CallContext ctx{"s", 0};
  const auto resp = g.complete(req("Generate the plan section"), ctx);
  EXPECT_EQ(resp.retries, 2);
  EXPECT_EQ(g.stats().retries, 2u);
  EXPECT_EQ(server.requests(), 3u);
  EXPECT_EQ(server.last_authorization(), "Bearer sk-test");
  EXPECT_GT(resp.usage.total_tokens, 0);
  ::unsetenv("SYNTHDIAL_TEST_KEY");
}

TEST(Live, RetryPolicy) {
  simllm::SimServer server;
  auto c = live_config(server.base_url());
  c.max_retries = 2;

  server.inject_faults({500, 502, 503, 504});
  try {
    LiveBackend(c).send(req("x"), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TransportError);
  }
  EXPECT_EQ(server.requests(), 3u);

  server.inject_faults({401});
  try {
    LiveBackend(c).send(req("x"), {});
    FAIL();
  } catch (const HttpError& e) {
    EXPECT_EQ(e.code(), Errc::AuthError);
    EXPECT_EQ(e.status(), 401);
  }
  EXPECT_EQ(server.requests(), 4u);

  server.inject_faults({404});
  try {
    LiveBackend(c).send(req("x"), {});
    FAIL();
  } catch (const HttpError& e) {
    EXPECT_EQ(e.code(), Errc::TransportError);
  }
  EXPECT_EQ(server.requests(), 5u);
}

TEST(Live, ConnectionRefusedIsTransportError) {
  std::string url;
  {
    simllm::SimServer server;
    url = server.base_url();
  }
  auto c = live_config(url);
  c.max_retries = 1;
  try {
    LiveBackend(c).send(req("x"), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TransportError);
  }
}

TEST(Config, Validate) {
  BackendConfig c;
  EXPECT_THROW(c.validate(512), Error);  // scripted without transcript
  c.transcript_path = "t.jsonl";
  EXPECT_NO_THROW(c.validate(512));
  c.context_token_budget = 512;
  EXPECT_THROW(c.validate(512), Error);
  BackendConfig live;
  live.kind = BackendKind::Live;
  EXPECT_THROW(live.validate(512), Error);
  live.base_url = "http://localhost:1";
  EXPECT_NO_THROW(live.validate(512));
}

TEST(Io, AtomicWriteCreatesParents) {
  const auto dir = temp_dir("io");
  const auto path = (dir / "a" / "b.txt").string();
  write_file_atomic(path, "one");
  write_file_atomic(path, "two");
  EXPECT_EQ(read_file(path), "two");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    (void)e;
    ++files;
  }
  EXPECT_EQ(files, 1u);
  EXPECT_THROW(read_file((dir / "missing").string()), Error);
}
