#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/prompts.hpp"
#include "forge/stage_report.hpp"

namespace forge {

enum class CheckVerdict { pass, fail, skipped };
enum class PairStatus { pending, accepted, rejected };

std::string_view to_string(CheckVerdict v);
std::string_view to_string(PairStatus s);

struct QAPair {
  std::string pair_id;  // "<record_id>#<ordinal>"
  std::string record_id;
  std::size_t ordinal = 0;
  std::string question;
  std::string answer;
  std::map<std::string, CheckVerdict> verdicts;
  PairStatus final_status = PairStatus::pending;
  std::string reject_reason;  // set with final_status == rejected

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

std::string make_pair_id(std::string_view record_id, std::size_t ordinal);
QAPair make_pair(std::string_view record_id, std::size_t ordinal, std::string question, std::string answer);

nlohmann::ordered_json pair_to_json(const QAPair& p);
QAPair pair_from_json(const nlohmann::json& j);

/// Sorts by (record_id, ordinal): the canonical output order.
void sort_pairs(std::vector<QAPair>& pairs);
void write_pairs(std::ostream& out, std::span<const QAPair> pairs);
std::vector<QAPair> read_pairs(std::istream& in);
std::vector<QAPair> read_pairs_file(const std::filesystem::path& path);
void write_pairs_file(const std::filesystem::path& path, std::span<const QAPair> pairs);

/// Generation prompt from the builtin template. Throws
/// forge::Error("empty_description") for blank input.
std::string build_generation_prompt(std::string_view description);

struct GenerationOutcome {
  std::string record_id;
  std::vector<QAPair> pairs;
  bool parse_failed = false;
  std::size_t truncated_pairs = 0;
  int chat_calls = 0;
  std::string error;  // last extraction error code when parse_failed
};

/// One chat call (temperature 0, 8192 new tokens) parsed as a JSON list of
/// QA pairs. An unparseable reply is retried once with the identical request.
/// Requires the record's spatial_ok flag.
GenerationOutcome generate_pairs(const CaptionRecord& record, ModelGateway& gateway,
                                 const PromptSet& prompts = PromptSet::builtin());

std::vector<GenerationOutcome> generate_all(std::span<const CaptionRecord> records, ModelGateway& gateway,
                                            const PromptSet& prompts, std::size_t in_flight);

nlohmann::ordered_json outcome_to_json(const GenerationOutcome& o);
GenerationOutcome outcome_from_json(const nlohmann::json& j);

struct GenerationStats {
  std::size_t records_processed = 0;
  std::size_t pairs_generated = 0;
  double mean_pairs_per_record = 0.0;
  bool mean_defined = false;  // false when no records were processed
  std::size_t parse_failures = 0;
  std::size_t truncated_pairs = 0;

  nlohmann::ordered_json to_json() const;
};

GenerationStats generation_stats(std::span<const GenerationOutcome> outcomes);

/// Stage accounting: records that yielded a parseable list are kept, parse
/// failures are errored.
StageReport generation_report(std::span<const GenerationOutcome> outcomes);

}  // namespace forge
