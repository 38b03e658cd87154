#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace forge {

inline constexpr std::string_view kDescriptionPlaceholder = "{description}";

/// Replaces the template's single `{description}` slot with `value`. One
/// pass only: a placeholder occurring inside `value` stays literal text.
/// Throws forge::Error("invalid_template") unless the slot occurs exactly once.
std::string fill_template(std::string_view tmpl, std::string_view value);

/// The two prompt templates the pipeline sends, verbatim.
struct PromptSet {
  std::string spatial_check;
  std::string qa_generation;

  static PromptSet builtin();
  /// Reads spatial_check.txt and qa_generation.txt from `dir`.
  static PromptSet load(const std::filesystem::path& dir);

  /// SHA-256 of each template, pinned into manifests and checkpoints.
  nlohmann::ordered_json digests() const;

  std::string spatial_check_prompt(std::string_view description) const;
  /// Spatial check whose subject is a QA pair rendered as "Q: ... A: ...".
  std::string pair_check_prompt(std::string_view question, std::string_view answer) const;
  std::string generation_prompt(std::string_view description) const;
};

}  // namespace forge
