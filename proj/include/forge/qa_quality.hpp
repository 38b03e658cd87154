#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/prompts.hpp"
#include "forge/qa_generation.hpp"
#include "forge/stage_report.hpp"

namespace forge {

struct QualityConfig {
  double dedup_semantic_cutoff = 0.95;
  double clipscore_cutoff = 0.25;  // on the 2.5-scaled clipscore
  std::set<std::string> reference_keywords{"mention", "mentions", "mentioned", "description",
                                           "describe", "described", "caption",  "text"};
  double answer_match_min_fraction = 0.5;
  double nonspatial_keep_fraction = 0.0;

  /// Throws forge::Error("invalid_config") for out-of-range values.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  /// Every field optional; missing ones keep their defaults.
  static QualityConfig from_json(const nlohmann::json& j);
};

// Check names, in execution order. They key QAPair::verdicts.
inline constexpr std::string_view kCheckAvailability = "availability";
inline constexpr std::string_view kCheckDedup = "dedup";
inline constexpr std::string_view kCheckReference = "reference";
inline constexpr std::string_view kCheckAnswer = "answer";
inline constexpr std::string_view kCheckImage = "image";
inline constexpr std::string_view kCheckSpatial = "spatial";
inline constexpr std::array<std::string_view, 6> kCheckOrder = {kCheckAvailability, kCheckDedup, kCheckReference,
                                                                kCheckAnswer,       kCheckImage, kCheckSpatial};

struct CheckResult {
  bool pass = true;
  bool errored = false;  // failed because a service could not answer
  std::string reason;    // empty on pass
};

struct DedupResult {
  std::vector<QAPair> kept;
  std::vector<std::pair<QAPair, std::string>> rejected;  // pair, "dup_exact" | "dup_semantic"
  bool semantic_skipped = false;                         // embedding failed for this group
};

/// Exact (case/whitespace-normalized) then greedy semantic dedup of questions
/// within one record's pairs, earliest ordinal wins. Throws
/// forge::Error("precondition") when the pairs span several records.
DedupResult dedup_pairs(std::span<const QAPair> pairs, ModelGateway& gateway, const QualityConfig& config);

/// Fails when question or answer refers to the source text ("mentioned", ...).
CheckResult reference_check(const QAPair& pair, const QualityConfig& config);

/// Passes when enough of the answer's content words appear in the description.
CheckResult answer_consistency(const QAPair& pair, std::string_view description, const QualityConfig& config);

CheckResult image_question_consistency(const QAPair& pair, std::string_view image_uri, ModelGateway& gateway,
                                       const QualityConfig& config);

/// Spatial check over "Q: ... A: ..."; non-spatial pairs may be admitted by
/// the deterministic bucket rule when nonspatial_keep_fraction > 0.
CheckResult verify_spatial(const QAPair& pair, ModelGateway& gateway, const QualityConfig& config,
                           const PromptSet& prompts = PromptSet::builtin());

/// Bucket rule behind nonspatial_keep_fraction: bucket = (fnv(record_id) +
/// 617 * ordinal) mod 1000, admitted iff bucket < round(1000 * fraction).
/// Any 1000 consecutive ordinals of a record admit exactly round(1000 * fraction).
bool nonspatial_admitted(const QAPair& pair, double fraction);

/// Lowercased content words (punctuation and stopwords removed).
std::vector<std::string> content_tokens(std::string_view text);

struct QualityResult {
  std::vector<QAPair> pairs;     // every input pair, verdicts and final status filled
  std::vector<QAPair> accepted;  // subset of pairs, canonical order
  std::vector<StageReport> reports;  // one per check, in kCheckOrder
};

/// Runs the checks cheapest first; a pair that fails is not evaluated by
/// later checks (their verdicts are "skipped"). Service outages propagate.
QualityResult run_quality_pipeline(std::vector<QAPair> pairs, std::span<const CaptionRecord> records,
                                   ModelGateway& gateway, const QualityConfig& config,
                                   const PromptSet& prompts = PromptSet::builtin(), std::size_t in_flight = 16);

}  // namespace forge
