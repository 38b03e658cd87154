#include "forge/gateway.hpp"

#include <algorithm>
#include <cmath>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

FinishReason parse_finish_reason(std::string_view s) {
  if (s == "stop" || s.empty()) return FinishReason::stop;
  if (s == "length" || s == "max_tokens") return FinishReason::length;
  return FinishReason::error;
}

double clipscore_from_cosine(double cosine) { return kClipScoreWeight * std::max(0.0, cosine); }

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error("embedding_dim_mismatch", "cosine of vectors with different sizes");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<float> l2_normalize(std::vector<float> v) {
  double sq = 0;
  for (float x : v) sq += static_cast<double>(x) * x;
  if (sq == 0 || !std::isfinite(sq)) throw Error("zero_norm_embedding");
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& x : v) x = static_cast<float>(x * inv);
  return v;
}

CallTally& CallTally::operator+=(const CallTally& o) {
  calls += o.calls;
  attempts += o.attempts;
  failures += o.failures;
  tokens += o.tokens;
  return *this;
}

CallTally operator-(CallTally a, const CallTally& b) {
  a.calls -= b.calls;
  a.attempts -= b.attempts;
  a.failures -= b.failures;
  a.tokens -= b.tokens;
  return a;
}

CallLedger& CallLedger::operator+=(const CallLedger& o) {
  chat += o.chat;
  embed += o.embed;
  similarity += o.similarity;
  return *this;
}

CallLedger operator-(CallLedger a, const CallLedger& b) {
  a.chat = a.chat - b.chat;
  a.embed = a.embed - b.embed;
  a.similarity = a.similarity - b.similarity;
  return a;
}

namespace {

nlohmann::ordered_json tally_json(const CallTally& t) {
  return {{"calls", t.calls}, {"attempts", t.attempts}, {"failures", t.failures}, {"tokens", t.tokens}};
}

CallTally tally_from(const nlohmann::json& j) {
  return {j.value("calls", 0ULL), j.value("attempts", 0ULL), j.value("failures", 0ULL), j.value("tokens", 0ULL)};
}

}  // namespace

nlohmann::ordered_json CallLedger::to_json() const {
  return {{"chat", tally_json(chat)}, {"embed", tally_json(embed)}, {"similarity", tally_json(similarity)}};
}

CallLedger CallLedger::from_json(const nlohmann::json& j) {
  return {tally_from(j.at("chat")), tally_from(j.at("embed")), tally_from(j.at("similarity"))};
}

CallTally ModelGateway::AtomicTally::snapshot() const {
  return {calls.load(), attempts.load(), failures.load(), tokens.load()};
}

ModelGateway::ModelGateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embed,
                           std::shared_ptr<SimilarityBackend> similarity, GatewayOptions options)
    : chat_(std::move(chat)),
      embed_(std::move(embed)),
      similarity_(std::move(similarity)),
      options_(std::move(options)),
      chat_limiter_(options_.rate_limit_rps),
      embed_limiter_(options_.rate_limit_rps),
      similarity_limiter_(options_.rate_limit_rps) {}

template <class F>
auto ModelGateway::with_retry(AtomicTally& tally, TokenBucket& limiter, F&& call) {
  ++tally.calls;
  const int budget = std::max(1, options_.retry.max_attempts);
  auto backoff = options_.retry.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    limiter.acquire();
    ++tally.attempts;
    try {
      return call();
    } catch (const TransientError& e) {
      last_error = e.what();
      if (attempt < budget && options_.retry.sleeper) {
        options_.retry.sleeper(backoff);
        backoff *= 2;
      }
    } catch (...) {
      ++tally.failures;
      throw;
    }
  }
  ++tally.failures;
  throw Error("service_unavailable", "retries exhausted after " + std::to_string(budget) + " attempts: " + last_error);
}

ChatResponse ModelGateway::complete_chat(const ChatRequest& request) {
  if (!chat_) throw Error("service_not_configured", "no chat endpoint");
  if (request.temperature < 0 || request.max_new_tokens <= 0) throw Error("bad_request", "invalid chat request");
  auto start = std::chrono::steady_clock::now();
  ChatResponse resp = with_retry(chat_tally_, chat_limiter_, [&] { return chat_->chat(request); });
  if (resp.latency_ms == 0) {
    resp.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                          .count();
  }
  chat_tally_.tokens += static_cast<std::uint64_t>(std::max<std::int64_t>(0, resp.total_tokens));
  return resp;
}

std::vector<float> ModelGateway::embed_text(std::string_view text) {
  if (!embed_) throw Error("service_not_configured", "no embedding endpoint");
  if (text::trim(text).empty()) throw Error("bad_request", "cannot embed empty text");
  auto v = with_retry(embed_tally_, embed_limiter_, [&] { return embed_->embed(text); });
  if (options_.embedding_dim != 0 && v.size() != options_.embedding_dim) {
    ++embed_tally_.failures;
    throw Error("embedding_dim_mismatch",
                "expected " + std::to_string(options_.embedding_dim) + ", got " + std::to_string(v.size()));
  }
  return l2_normalize(std::move(v));
}

SimilarityScore ModelGateway::cross_modal_score(std::string_view image_uri, std::string_view text) {
  if (!similarity_) throw Error("service_not_configured", "no similarity endpoint");
  double cos = with_retry(similarity_tally_, similarity_limiter_, [&] { return similarity_->cosine(image_uri, text); });
  if (!std::isfinite(cos)) throw Error("image_embed_failed", "non-finite similarity");
  cos = std::clamp(cos, -1.0, 1.0);
  return {clipscore_from_cosine(cos), SimilarityScale::clipscore};
}

CallLedger ModelGateway::ledger() const {
  return {chat_tally_.snapshot(), embed_tally_.snapshot(), similarity_tally_.snapshot()};
}

bool classify_yes_no(std::string_view response) {
  for (const auto& tok : text::word_tokens(response)) {
    if (tok == "yes" || tok == "true") return true;
    if (tok == "no" || tok == "false") return false;
  }
  throw Error("unparseable_verdict", std::string(response.substr(0, 120)));
}

}  // namespace forge
