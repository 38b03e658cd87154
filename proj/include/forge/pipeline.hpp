#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/gateway_http.hpp"
#include "forge/image_probe.hpp"
#include "forge/qa_generation.hpp"
#include "forge/qa_quality.hpp"
#include "forge/stage_report.hpp"

namespace forge {

struct PipelineConfig {
  EndpointConfig chat;
  EndpointConfig embed;
  EndpointConfig similarity;
  std::size_t concurrency = 16;
  QualityConfig quality;
  std::optional<std::filesystem::path> taxonomy_path;
  std::optional<std::filesystem::path> prompts_dir;
  std::filesystem::path checkpoint_dir = "forge-run";
  std::uint64_t seed = 0;
  std::size_t batch_size = 1000;  // records per checkpoint batch
  double rate_limit_rps = 8.0;
  bool probe_images = true;
  std::filesystem::path image_root = ".";  // base for relative image paths
  std::optional<std::filesystem::path> mock_transcript;

  /// Endpoints from FORGE_{CHAT,EMBED,SIM}_{URL,KEY}; everything else default.
  static PipelineConfig from_env();

  /// Throws forge::Error("invalid_config").
  void validate() const;

  /// Keys from the environment are never serialized.
  nlohmann::ordered_json to_json() const;
  /// Overlays the fields present in `j` onto `base`.
  static PipelineConfig from_json(const nlohmann::json& j, PipelineConfig base);
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path, PipelineConfig base);

  /// Digest of the fields that change stage outputs (not concurrency, rate
  /// limit or checkpoint location).
  std::string output_digest() const;
};

struct Services {
  std::shared_ptr<ModelGateway> gateway;
  std::shared_ptr<ImageProber> prober;
  ProbePolicy probe_policy;
};

/// A transcript-backed gateway when config.mock_transcript is set, HTTP
/// backends otherwise. Unconfigured endpoints fail with
/// forge::Error("endpoint_not_configured") on first use.
Services make_services(const PipelineConfig& config);

inline constexpr std::string_view kStageProbe = "probe";
inline constexpr std::string_view kStagePrefilter = "prefilter";
inline constexpr std::string_view kStageGenerate = "generate";
inline constexpr std::string_view kStageQuality = "quality";
inline constexpr std::string_view kStages[] = {kStageProbe, kStagePrefilter, kStageGenerate, kStageQuality};

struct SourceRow {
  SourceKind source = SourceKind::Custom;
  std::size_t size = 0;
  std::size_t filtered = 0;
  std::size_t total_words = 0;
  std::size_t generated_pairs = 0;
  std::size_t accepted_pairs = 0;

  double mean_words() const { return size ? static_cast<double>(total_words) / static_cast<double>(size) : 0.0; }
};

struct RunReport {
  std::vector<SourceRow> rows;  // source order
  std::vector<StageReport> stages;
  std::map<std::string, CallLedger> cost;  // per stage
  std::map<std::string, double> wall_clock_seconds;

  SourceRow totals() const;  // column sums, recomputed on every call
  CallLedger total_cost() const;

  static RunReport from_json(const nlohmann::json& j);
};

enum class ReportFormat { json, markdown };

/// Deterministic rendering. Wall-clock numbers are left out unless asked
/// for, so reports of identical runs compare equal byte for byte.
std::string emit_report(const RunReport& report, ReportFormat format, bool include_timings = false);

struct RunOptions {
  std::optional<std::string> stop_after;           // stage name
  std::optional<std::size_t> abort_after_batches;  // testing aid: simulated crash
};

struct PipelineResult {
  bool finished = false;  // false after stop_after
  std::vector<QAPair> accepted;
  RunReport report;
};

/// probe -> prefilter -> generate -> quality. Each stage checkpoints its
/// batches and outputs under config.checkpoint_dir; a rerun resumes where the
/// last one stopped. Throws forge::Error("stale_checkpoint") when the
/// checkpoint belongs to other inputs, config or prompts, and
/// forge::Error("aborted") when abort_after_batches triggers.
PipelineResult run_pipeline(const PipelineConfig& config, std::span<const CaptionRecord> records, Services& services,
                            const RunOptions& options = {});

/// One chat sample per pair, or per image in grouped mode. Throws
/// forge::Error("dangling_record") listing pairs whose record is unknown.
std::vector<nlohmann::ordered_json> export_training_format(std::span<const QAPair> pairs,
                                                           std::span<const CaptionRecord> records,
                                                           bool grouped = false);

}  // namespace forge
