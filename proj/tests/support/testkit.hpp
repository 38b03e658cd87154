#pragma once

// Shared helpers for the unit and acceptance tests: scripted model services
// and the deterministic 100-record pipeline fixture.

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/transcript.hpp"
#include "json.hpp"

namespace forge::testkit {

/// No rate limit and a sleeper that returns at once; retries stay at 3.
GatewayOptions fast_options();

using ChatFn = std::function<ChatResponse(const ChatRequest&)>;
using EmbedFn = std::function<std::vector<float>(std::string_view)>;
using SimFn = std::function<double(std::string_view, std::string_view)>;

/// Missing functions answer with forge::Error("not_scripted").
std::shared_ptr<ModelGateway> scripted_gateway(ChatFn chat, EmbedFn embed = {}, SimFn sim = {},
                                               GatewayOptions options = fast_options());

ChatResponse reply(std::string text, FinishReason finish = FinishReason::stop);

/// Deterministic pseudo-random vector of `dim` components in [-1, 1].
std::vector<float> hashed_vector(std::string_view key, std::size_t dim = 32);

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag = "forge");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view body);

struct PipelineFixture {
  std::vector<CaptionRecord> records;
  Transcript transcript;
  // Stage accounting worked out from the scripted fates, independent of the
  // pipeline code: {"stages":[StageReport...], "rows":[...], "accepted":N}.
  nlohmann::ordered_json expected;
};

/// 100 records (40 DOCCI, 35 Localized Narratives, 25 PixMo-Cap) with
/// scripted probe, prefilter, generation and check answers. 11 images are
/// missing, 10 descriptions are not spatial and 1 verdict is unparseable.
PipelineFixture make_pipeline_fixture();

/// Writes corpus.jsonl, transcript.jsonl and expected.json into `dir`.
void write_pipeline_fixture(const PipelineFixture& fixture, const std::filesystem::path& dir);

}  // namespace forge::testkit
