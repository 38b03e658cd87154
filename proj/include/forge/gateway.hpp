#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/concurrency.hpp"
#include "json.hpp"

namespace forge {

enum class ResponseHint { free_text, json_array, yes_no };
enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason);
FinishReason parse_finish_reason(std::string_view s);

struct ChatRequest {
  std::string prompt;
  double temperature = 0.0;
  int max_new_tokens = 8192;
  ResponseHint response_hint = ResponseHint::free_text;
};

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  std::int64_t latency_ms = 0;
  std::int64_t total_tokens = 0;  // 0 when the service does not report usage
};

enum class SimilarityScale { cosine, clipscore };

struct SimilarityScore {
  double value = 0.0;
  SimilarityScale scale = SimilarityScale::clipscore;
};

inline constexpr double kClipScoreWeight = 2.5;

/// CLIPScore convention: 2.5 * max(0, cosine).
double clipscore_from_cosine(double cosine);
double cosine_similarity(std::span<const float> a, std::span<const float> b);
/// Throws forge::Error("zero_norm_embedding") for an all-zero vector.
std::vector<float> l2_normalize(std::vector<float> v);

// Service backends. Implementations throw forge::TransientError for failures
// worth retrying and forge::Error for everything else.

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<float> embed(std::string_view text) = 0;
};

class SimilarityBackend {
 public:
  virtual ~SimilarityBackend() = default;
  /// Raw cosine between the image and text embeddings.
  virtual double cosine(std::string_view image_uri, std::string_view text) = 0;
};

// Adapters over plain callables, mostly for tests.

class FunctionChatBackend : public ChatBackend {
 public:
  explicit FunctionChatBackend(std::function<ChatResponse(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
  ChatResponse chat(const ChatRequest& request) override { return fn_(request); }

 private:
  std::function<ChatResponse(const ChatRequest&)> fn_;
};

class FunctionEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit FunctionEmbeddingBackend(std::function<std::vector<float>(std::string_view)> fn) : fn_(std::move(fn)) {}
  std::vector<float> embed(std::string_view text) override { return fn_(text); }

 private:
  std::function<std::vector<float>(std::string_view)> fn_;
};

class FunctionSimilarityBackend : public SimilarityBackend {
 public:
  explicit FunctionSimilarityBackend(std::function<double(std::string_view, std::string_view)> fn)
      : fn_(std::move(fn)) {}
  double cosine(std::string_view image_uri, std::string_view text) override { return fn_(image_uri, text); }

 private:
  std::function<double(std::string_view, std::string_view)> fn_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};  // doubles per retry
  Sleeper sleeper = real_sleeper();
};

struct GatewayOptions {
  RetryPolicy retry;
  double rate_limit_rps = 8.0;  // per endpoint; <= 0 disables
  std::size_t embedding_dim = 0;  // 0 accepts any dimension
};

struct CallTally {
  std::uint64_t calls = 0;
  std::uint64_t attempts = 0;
  std::uint64_t failures = 0;
  std::uint64_t tokens = 0;

  CallTally& operator+=(const CallTally& o);
  friend CallTally operator-(CallTally a, const CallTally& b);
  friend bool operator==(const CallTally&, const CallTally&) = default;
};

/// Cost ledger: every gateway call, per capability.
struct CallLedger {
  CallTally chat;
  CallTally embed;
  CallTally similarity;

  CallLedger& operator+=(const CallLedger& o);
  friend CallLedger operator-(CallLedger a, const CallLedger& b);
  friend bool operator==(const CallLedger&, const CallLedger&) = default;

  nlohmann::ordered_json to_json() const;
  static CallLedger from_json(const nlohmann::json& j);
};

/// Single entry point for chat, embedding and image-text similarity. Safe to
/// share across threads; only the per-endpoint rate limiters serialize.
class ModelGateway {
 public:
  ModelGateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embed,
               std::shared_ptr<SimilarityBackend> similarity, GatewayOptions options = {});

  /// Retries transient failures up to the policy budget, then throws
  /// forge::Error("service_unavailable"); "bad_request" is never retried.
  ChatResponse complete_chat(const ChatRequest& request);

  /// Unit-norm embedding. Throws "embedding_dim_mismatch" when a dimension is configured.
  std::vector<float> embed_text(std::string_view text);

  /// Clipscore-scaled image/text similarity in [0, 2.5].
  SimilarityScore cross_modal_score(std::string_view image_uri, std::string_view text);

  CallLedger ledger() const;
  const GatewayOptions& options() const { return options_; }

 private:
  struct AtomicTally {
    std::atomic<std::uint64_t> calls{0}, attempts{0}, failures{0}, tokens{0};
    CallTally snapshot() const;
  };

  template <class F>
  auto with_retry(AtomicTally& tally, TokenBucket& limiter, F&& call);

  std::shared_ptr<ChatBackend> chat_;
  std::shared_ptr<EmbeddingBackend> embed_;
  std::shared_ptr<SimilarityBackend> similarity_;
  GatewayOptions options_;
  TokenBucket chat_limiter_;
  TokenBucket embed_limiter_;
  TokenBucket similarity_limiter_;
  AtomicTally chat_tally_;
  AtomicTally embed_tally_;
  AtomicTally similarity_tally_;
};

/// True iff the first yes/true/no/false word in the text is affirmative.
/// Throws forge::Error("unparseable_verdict") when no verdict word appears.
bool classify_yes_no(std::string_view text);

struct QuestionAnswer {
  std::string question;
  std::string answer;

  friend bool operator==(const QuestionAnswer&, const QuestionAnswer&) = default;
};

/// Finds the first bracket-balanced JSON array in model output (brackets
/// inside string literals do not count) and reads its question/answer
/// objects. Throws forge::Error with "no_json_array", "invalid_json" or
/// "malformed_pair" (message carries the element index).
std::vector<QuestionAnswer> extract_json_array(std::string_view text);

struct PartialExtraction {
  std::vector<QuestionAnswer> pairs;
  std::size_t truncated_elements = 0;
};

/// Salvages the complete leading elements of an array cut off mid-stream.
/// Throws "no_json_array" without an array start; a complete element that
/// does not parse throws like extract_json_array. A cut inside the first
/// element gives no pairs and one truncated element.
PartialExtraction extract_json_array_prefix(std::string_view text);

}  // namespace forge
