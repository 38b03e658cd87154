#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "forge/transcript.hpp"

namespace forge {

struct MockServiceOptions {
  Transcript transcript;
  int fail_first = 0;  // answer the first N requests with 503
  std::chrono::milliseconds latency{0};
};

/// Local stand-in for the three model services, answering from a transcript:
///   POST /v1/chat/completions  (OpenAI-style chat)
///   POST /v1/embeddings        {"input"} -> {"data":[{"embedding":[...]}]}
///   POST /v1/similarity        {"image_uri","text"} -> {"cosine"}
/// Unknown requests get 404 {"error":"transcript_miss"}.
class MockServices {
 public:
  explicit MockServices(MockServiceOptions options);
  ~MockServices();
  MockServices(const MockServices&) = delete;
  MockServices& operator=(const MockServices&) = delete;

  /// Port 0 picks a free port; returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void serve();
  /// bind + serve on a background thread; returns once accepting.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();

  std::string base_url() const;
  std::size_t requests() const;
  std::size_t max_in_flight() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace forge
