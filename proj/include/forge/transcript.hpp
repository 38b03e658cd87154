#pragma once

#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "forge/gateway.hpp"
#include "forge/image_probe.hpp"

// Offline replay of service calls. A transcript is JSONL of
// {"request_digest", "response_text"[, "finish_reason"]}; the digest is the
// SHA-256 of a canonical JSON rendering of the request.
namespace forge {

std::string chat_request_digest(const ChatRequest& request);
std::string embed_request_digest(std::string_view text);
std::string similarity_request_digest(std::string_view image_uri, std::string_view text);
std::string probe_request_digest(std::string_view image_uri);

struct TranscriptEntry {
  std::string response_text;
  FinishReason finish_reason = FinishReason::stop;
};

class Transcript {
 public:
  static Transcript load(const std::filesystem::path& path);
  static Transcript read(std::istream& in);

  /// Later entries with the same digest replace earlier ones.
  void add(std::string digest, TranscriptEntry entry);
  const TranscriptEntry* find(const std::string& digest) const;
  std::size_t size() const { return entries_.size(); }

  /// Writes entries sorted by digest.
  void write(std::ostream& out) const;

 private:
  std::unordered_map<std::string, TranscriptEntry> entries_;
};

/// Serves every gateway capability and image probing from a transcript.
/// Unknown requests throw forge::Error("transcript_miss"). Embedding responses
/// are JSON arrays, similarity responses a number (or "error:<code>"), probe
/// responses one of found / not_found / timeout.
class TranscriptBackend : public ChatBackend,
                          public EmbeddingBackend,
                          public SimilarityBackend,
                          public ImageProber {
 public:
  explicit TranscriptBackend(Transcript transcript) : transcript_(std::move(transcript)) {}

  ChatResponse chat(const ChatRequest& request) override;
  std::vector<float> embed(std::string_view text) override;
  double cosine(std::string_view image_uri, std::string_view text) override;
  ProbeStatus probe(std::string_view image_uri) override;

 private:
  const TranscriptEntry& lookup(const std::string& digest, std::string_view what) const;

  Transcript transcript_;
};

}  // namespace forge
