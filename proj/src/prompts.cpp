#include "forge/prompts.hpp"

#include <fstream>
#include <sstream>

#include "forge/assets.hpp"
#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {

std::string fill_template(std::string_view tmpl, std::string_view value) {
  auto pos = tmpl.find(kDescriptionPlaceholder);
  if (pos == std::string_view::npos || tmpl.find(kDescriptionPlaceholder, pos + 1) != std::string_view::npos) {
    throw Error("invalid_template", "template must contain exactly one {description} slot");
  }
  std::string out;
  out.reserve(tmpl.size() + value.size());
  out.append(tmpl.substr(0, pos));
  out.append(value);
  out.append(tmpl.substr(pos + kDescriptionPlaceholder.size()));
  return out;
}

PromptSet PromptSet::builtin() {
  return {std::string(assets::spatial_check_prompt()), std::string(assets::qa_generation_prompt())};
}

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  PromptSet p{slurp(dir / "spatial_check.txt"), slurp(dir / "qa_generation.txt")};
  // Validate both up front rather than on the first record.
  fill_template(p.spatial_check, "");
  fill_template(p.qa_generation, "");
  return p;
}

nlohmann::ordered_json PromptSet::digests() const {
  return {{"spatial_check", text::sha256_hex(spatial_check)}, {"qa_generation", text::sha256_hex(qa_generation)}};
}

std::string PromptSet::spatial_check_prompt(std::string_view description) const {
  return fill_template(spatial_check, description);
}

std::string PromptSet::pair_check_prompt(std::string_view question, std::string_view answer) const {
  std::string subject = "Q: ";
  subject.append(question).append(" A: ").append(answer);
  return fill_template(spatial_check, subject);
}

std::string PromptSet::generation_prompt(std::string_view description) const {
  if (text::trim(description).empty()) throw Error("empty_description", "generation prompt needs a description");
  return fill_template(qa_generation, description);
}

}  // namespace forge
