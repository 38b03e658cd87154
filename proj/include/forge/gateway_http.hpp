#pragma once

#include <chrono>
#include <string>

#include "forge/gateway.hpp"

namespace forge {

struct EndpointConfig {
  std::string url;
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{120000};

  bool configured() const { return !url.empty(); }
};

/// Reads `<url_var>` and `<key_var>` from the environment; empty when unset.
EndpointConfig endpoint_from_env(const char* url_var, const char* key_var);

/// Chat-completions style endpoint: POST {model, messages, temperature,
/// max_tokens}, text read from choices[0].message.content.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(EndpointConfig config) : config_(std::move(config)) {}
  ChatResponse chat(const ChatRequest& request) override;

 private:
  EndpointConfig config_;
};

/// POST {model, input}; accepts {"data":[{"embedding":[...]}]} or {"embedding":[...]}.
class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(EndpointConfig config) : config_(std::move(config)) {}
  std::vector<float> embed(std::string_view text) override;

 private:
  EndpointConfig config_;
};

/// POST {image_uri, text} -> {cosine}.
class HttpSimilarityBackend : public SimilarityBackend {
 public:
  explicit HttpSimilarityBackend(EndpointConfig config) : config_(std::move(config)) {}
  double cosine(std::string_view image_uri, std::string_view text) override;

 private:
  EndpointConfig config_;
};

}  // namespace forge
