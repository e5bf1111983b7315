#pragma once

#include <atomic>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "synthdial/gateway.hpp"

namespace httplib {
class Server;
}

namespace simllm {

// Rule-based stand-in for a chat model. It recognises each pipeline prompt
// by its instruction sentence and answers deterministically.
std::string respond(const std::string& prompt);

// In-process backend answering through respond(); no network.
class SimBackend : public synthdial::ChatBackend {
 public:
  synthdial::ChatResponse send(const synthdial::ChatRequest& request,
                               const synthdial::CallContext& ctx) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::atomic<std::size_t> calls_{0};
};

// Local /chat/completions endpoint backed by respond(). Queued fault
// statuses are returned, one per request, before normal answers resume.
class SimServer {
 public:
  SimServer();
  ~SimServer();
  SimServer(const SimServer&) = delete;
  SimServer& operator=(const SimServer&) = delete;

  std::string base_url() const;
  void inject_faults(std::vector<int> statuses);
  std::size_t requests() const { return requests_.load(); }
  std::string last_authorization() const;

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
  mutable std::mutex mu_;
  std::deque<int> faults_;
  std::string last_auth_;
};

}  // namespace simllm
