#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "json.hpp"

namespace forge {

/// Per-stage ledger. Every unit entering a stage leaves as exactly one of
/// kept, dropped (failed the check) or errored (service/parse trouble).
struct StageReport {
  std::string stage;
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t errored = 0;
  std::map<std::string, std::size_t> reasons;

  bool balanced() const { return input == kept + dropped + errored; }

  /// Sums counts of a report for the same stage (batch merge).
  StageReport& operator+=(const StageReport& other);
  friend bool operator==(const StageReport&, const StageReport&) = default;

  nlohmann::ordered_json to_json() const;
  static StageReport from_json(const nlohmann::json& j);
};

}  // namespace forge
