#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/qa_generation.hpp"
#include "json.hpp"

namespace forge {

/// Finite-population sample size, ceiling-rounded:
///   n = N Z^2 p(1-p) / (E^2 (N-1) + Z^2 p(1-p))
/// Throws forge::Error("invalid_domain") unless N >= 1, Z > 0, 0 < p < 1, 0 < E < 1.
std::size_t required_sample_size(std::size_t population, double z, double p, double margin);

struct SamplePlan {
  std::size_t population_size = 0;
  double confidence_z = 1.96;
  double proportion = 0.5;
  double margin = 0.05;
  std::size_t computed_n = 0;
  std::size_t final_n = 0;  // >= computed_n; e.g. 384 rounded up to 400

  nlohmann::ordered_json to_json() const;
  static SamplePlan from_json(const nlohmann::json& j);
};

/// Computes computed_n and sets final_n to the override (if any) or computed_n.
/// Throws forge::Error("invalid_plan") when the override is below computed_n.
SamplePlan make_plan(std::size_t population, double z = 1.96, double p = 0.5, double margin = 0.05,
                     std::optional<std::size_t> final_n = std::nullopt);

enum class ReviewVerdict { correct, wrong_answer, relation_hallucination, object_hallucination, not_spatial };

std::string_view to_string(ReviewVerdict v);
/// Throws forge::Error("invalid_verdict").
ReviewVerdict parse_review_verdict(std::string_view s);

struct ReviewLabel {
  std::string pair_id;
  ReviewVerdict verdict = ReviewVerdict::correct;
  std::string reviewer;
  std::chrono::system_clock::time_point timestamp;
};

nlohmann::ordered_json label_to_json(const ReviewLabel& label);
ReviewLabel label_from_json(const nlohmann::json& j);
std::string format_utc(std::chrono::system_clock::time_point t);
std::chrono::system_clock::time_point parse_utc(std::string_view s);

enum class SessionStatus { open, complete };

struct ReviewSession {
  std::string session_id;
  SamplePlan plan;
  std::uint64_t seed = 0;
  std::vector<std::string> sampled_pair_ids;
  std::vector<ReviewLabel> labels;  // active labels: one per (pair_id, reviewer)

  /// Complete iff every sampled pair carries at least one label.
  SessionStatus status() const;
};

/// Largest-remainder apportionment of `n` across strata proportional to their
/// sizes. Strata that cannot fill their share are capped and the deficit goes
/// to the others (a message per capped stratum lands in `warnings`).
std::map<SourceKind, std::size_t> apportion(const std::map<SourceKind, std::size_t>& stratum_sizes, std::size_t n,
                                            std::vector<std::string>* warnings = nullptr);

struct SampleDraw {
  ReviewSession session;
  std::map<SourceKind, std::size_t> strata;
  std::vector<std::string> warnings;
};

/// Proportional stratified sample by source, then seeded uniform sampling
/// without replacement inside each stratum. Deterministic for a fixed seed.
SampleDraw draw_sample(std::span<const QAPair> pairs, std::span<const CaptionRecord> records, const SamplePlan& plan,
                       std::uint64_t seed);

enum class IntervalMethod { normal, wilson };

struct RateEstimate {
  std::size_t count = 0;
  std::size_t n = 0;
  double rate = 0;
  double low = 0;
  double high = 0;
  double half_width = 0;

  nlohmann::ordered_json to_json() const;
};

/// Point estimate with a two-sided interval at `z`, clamped to [0, 1].
RateEstimate estimate_rate(std::size_t count, std::size_t n, IntervalMethod method = IntervalMethod::normal,
                           double z = 1.96);

struct ReviewStats {
  std::size_t labeled = 0;
  RateEstimate error_rate;
  RateEstimate relation_hallucination_rate;
  RateEstimate object_hallucination_rate;

  nlohmann::ordered_json to_json() const;
};

/// Rates over a label multiset (no completeness requirement).
ReviewStats label_stats(std::span<const ReviewLabel> labels, IntervalMethod method = IntervalMethod::normal);

/// Throws forge::Error("session_incomplete") unless every sampled pair is labeled.
ReviewStats compute_review_stats(const ReviewSession& session, IntervalMethod method = IntervalMethod::normal);

/// Append-only JSONL event log per session; state is the fold of the events.
/// Writes are serialized; reads take a shared lock.
class SessionStore {
 public:
  /// Loads every existing `*.events.jsonl` under `dir` (created if missing).
  explicit SessionStore(std::filesystem::path dir);

  std::string create(const SamplePlan& plan, std::uint64_t seed, std::vector<std::string> sampled_pair_ids);

  /// Throws forge::Error with "unknown_session", "not_sampled" or
  /// "duplicate_label" (same pair and reviewer, unless `replace`).
  void add_label(const std::string& session_id, ReviewLabel label, bool replace = false);

  std::optional<ReviewSession> get(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  void append(const std::string& session_id, const nlohmann::ordered_json& event);
  void apply(const nlohmann::json& event);

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, ReviewSession> sessions_;
};

}  // namespace forge
