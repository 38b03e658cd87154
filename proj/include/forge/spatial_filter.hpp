#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/prompts.hpp"
#include "forge/stage_report.hpp"

namespace forge {

struct SpatialVerdict {
  std::string record_id;
  bool is_spatial = false;
  bool needs_review = false;  // model answer had no yes/no verdict
  std::string raw_response;

  friend bool operator==(const SpatialVerdict&, const SpatialVerdict&) = default;
};

nlohmann::ordered_json verdict_to_json(const SpatialVerdict& v);
SpatialVerdict verdict_from_json(const nlohmann::json& j);

/// Asks the model whether the description states a spatial relation
/// (temperature 0). Service failures propagate.
SpatialVerdict classify_description(const CaptionRecord& record, ModelGateway& gateway,
                                    const PromptSet& prompts = PromptSet::builtin());

/// Classifies with at most `in_flight` concurrent calls; verdicts in input order.
std::vector<SpatialVerdict> classify_records(std::span<const CaptionRecord> records, ModelGateway& gateway,
                                             const PromptSet& prompts, std::size_t in_flight);

struct FilterResult {
  std::vector<CaptionRecord> kept;  // spatial_ok set
  std::vector<CaptionRecord> dropped;
  std::vector<CaptionRecord> needs_review;
  std::vector<SpatialVerdict> verdicts;
  StageReport report;
};

/// Partitions `records` by their verdicts (same order, same length).
FilterResult apply_verdicts(std::span<const CaptionRecord> records, std::vector<SpatialVerdict> verdicts);

FilterResult filter_corpus(std::span<const CaptionRecord> records, ModelGateway& gateway,
                           const PromptSet& prompts = PromptSet::builtin(), std::size_t in_flight = 16);

struct ClassifierMetrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Harmonic mean; 0 when both inputs are 0.
double f1_score(double precision, double recall);

ClassifierMetrics metrics_from_confusion(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

/// Binary metrics with "spatial" (true) as the positive class. Throws
/// forge::Error("label_mismatch") unless both maps cover the same ids.
ClassifierMetrics classifier_metrics(const std::map<std::string, bool>& gold,
                                     const std::map<std::string, bool>& predicted);

}  // namespace forge
