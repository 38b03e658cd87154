#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace forge {

enum class EvalKind { binary, multiple_choice };

std::string_view to_string(EvalKind kind);

struct EvalItem {
  std::string item_id;
  EvalKind kind = EvalKind::binary;
  std::vector<std::string> options;  // empty for binary
  std::string gold;                  // "True"/"False" for binary
  std::string prediction_text;
};

/// Throws forge::Error("invalid_item").
void validate_item(const EvalItem& item);
EvalItem item_from_json(const nlohmann::json& j);
nlohmann::ordered_json item_to_json(const EvalItem& item);
std::vector<EvalItem> read_items(std::istream& in);
std::vector<EvalItem> read_items_file(const std::filesystem::path& path);

/// Lowercase, trim, collapse whitespace, drop terminal punctuation and a
/// leading option letter such as "a)", "(b)" or "c.".
std::string normalize_answer(std::string_view text);

struct ItemScore {
  bool correct = false;
  std::optional<std::string> matched_option;
  std::string reason;  // "", "no_verdict", "ambiguous_prediction"
};

/// Binary: first true/false/yes/no token of the prediction against gold.
/// Multiple choice: exactly one option must occur as a whole phrase.
ItemScore score_item(const EvalItem& item);

struct AccuracyReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0;  // percent, rounded to 1 dp

  nlohmann::ordered_json to_json() const;
};

/// Throws forge::Error("no_items") on an empty set.
AccuracyReport aggregate_accuracy(std::span<const ItemScore> scores);

/// Scores every item and reports overall and per-kind accuracy plus the
/// reason tally.
nlohmann::ordered_json evaluate_items(std::span<const EvalItem> items);

}  // namespace forge
