#include "forge/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {

std::string_view to_string(EvalKind kind) { return kind == EvalKind::binary ? "binary" : "multiple_choice"; }

void validate_item(const EvalItem& item) {
  if (item.item_id.empty()) throw Error("invalid_item", "empty item_id");
  if (item.kind == EvalKind::binary) {
    if (item.gold != "True" && item.gold != "False") {
      throw Error("invalid_item", item.item_id + ": binary gold must be True or False");
    }
    return;
  }
  if (item.options.size() < 2) throw Error("invalid_item", item.item_id + ": fewer than two options");
  if (std::find(item.options.begin(), item.options.end(), item.gold) == item.options.end()) {
    throw Error("invalid_item", item.item_id + ": gold is not one of the options");
  }
}

EvalItem item_from_json(const nlohmann::json& j) {
  EvalItem item;
  try {
    item.item_id = j.at("item_id").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "binary") {
      item.kind = EvalKind::binary;
    } else if (kind == "multiple_choice") {
      item.kind = EvalKind::multiple_choice;
    } else {
      throw Error("invalid_item", item.item_id + ": unknown kind '" + kind + "'");
    }
    item.options = j.value("options", std::vector<std::string>{});
    item.gold = j.at("gold").get<std::string>();
    item.prediction_text = j.at("prediction_text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_item", e.what());
  }
  validate_item(item);
  return item;
}

nlohmann::ordered_json item_to_json(const EvalItem& item) {
  return {{"item_id", item.item_id},
          {"kind", std::string(to_string(item.kind))},
          {"options", item.options},
          {"gold", item.gold},
          {"prediction_text", item.prediction_text}};
}

std::vector<EvalItem> read_items(std::istream& in) {
  std::vector<EvalItem> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error("invalid_item", "line " + std::to_string(lineno) + ": invalid JSON");
    items.push_back(item_from_json(j));
  }
  return items;
}

std::vector<EvalItem> read_items_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  return read_items(in);
}

namespace {

bool is_terminal_punct(char c) { return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':'; }

// "a) x", "(b) x", "c. x" -> "x"
std::string_view strip_option_prefix(std::string_view s) {
  auto letter = [](char c) { return c >= 'a' && c <= 'z'; };
  if (s.size() >= 4 && s[0] == '(' && letter(s[1]) && s[2] == ')' && s[3] == ' ') return s.substr(4);
  if (s.size() >= 3 && letter(s[0]) && (s[1] == ')' || s[1] == '.') && s[2] == ' ') return s.substr(3);
  return s;
}

bool contains_phrase(const std::vector<std::string>& haystack, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), phrase.begin(), phrase.end()) != haystack.end();
}

}  // namespace

std::string normalize_answer(std::string_view raw) {
  const std::string lowered = text::to_lower(raw);
  std::vector<std::string> words;
  for (auto w : text::split_whitespace(lowered)) words.emplace_back(w);
  std::string s = text::join(words);
  std::string_view v = strip_option_prefix(s);
  while (!v.empty() && is_terminal_punct(v.back())) v.remove_suffix(1);
  return std::string(text::trim(v));
}

ItemScore score_item(const EvalItem& item) {
  ItemScore score;
  const auto prediction = normalize_answer(item.prediction_text);
  if (item.kind == EvalKind::binary) {
    std::optional<bool> said;
    for (const auto& tok : text::word_tokens(prediction)) {
      if (tok == "true" || tok == "yes") {
        said = true;
        break;
      }
      if (tok == "false" || tok == "no") {
        said = false;
        break;
      }
    }
    if (!said) {
      score.reason = "no_verdict";
      return score;
    }
    score.matched_option = *said ? "True" : "False";
    score.correct = *score.matched_option == item.gold;
    return score;
  }

  const auto tokens = text::word_tokens(prediction);
  std::vector<const std::string*> hits;
  for (const auto& option : item.options) {
    if (contains_phrase(tokens, text::word_tokens(normalize_answer(option)))) hits.push_back(&option);
  }
  if (hits.size() != 1) {
    score.reason = "ambiguous_prediction";
    return score;
  }
  score.matched_option = *hits.front();
  score.correct = *hits.front() == item.gold;
  return score;
}

nlohmann::ordered_json AccuracyReport::to_json() const {
  return {{"total", total}, {"correct", correct}, {"accuracy", accuracy}};
}

AccuracyReport aggregate_accuracy(std::span<const ItemScore> scores) {
  if (scores.empty()) throw Error("no_items", "nothing to aggregate");
  AccuracyReport r;
  r.total = scores.size();
  r.correct = static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [](const ItemScore& s) { return s.correct; }));
  // Integer rounding of 1000 * c / t keeps the 1 dp value free of binary
  // representation drift; halves round up.
  const std::size_t tenths = (2000 * r.correct + r.total) / (2 * r.total);
  r.accuracy = static_cast<double>(tenths) / 10.0;
  return r;
}

nlohmann::ordered_json evaluate_items(std::span<const EvalItem> items) {
  std::vector<ItemScore> all;
  std::map<EvalKind, std::vector<ItemScore>> by_kind;
  std::map<std::string, std::size_t> reasons;
  for (const auto& item : items) {
    validate_item(item);
    auto s = score_item(item);
    if (!s.reason.empty()) ++reasons[s.reason];
    by_kind[item.kind].push_back(s);
    all.push_back(std::move(s));
  }
  nlohmann::ordered_json out = aggregate_accuracy(all).to_json();
  nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
  for (const auto& [kind, scores] : by_kind) kinds[std::string(to_string(kind))] = aggregate_accuracy(scores).to_json();
  out["by_kind"] = kinds;
  out["reasons"] = reasons;
  return out;
}

}  // namespace forge
