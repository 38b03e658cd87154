#include <optional>

#include "forge/error.hpp"
#include "forge/gateway.hpp"
#include "forge/text.hpp"

namespace forge {
namespace {

// Index one past the ']' that closes the '[' at `open`, or nullopt when the
// text ends first. Brackets inside string literals are ignored.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

QuestionAnswer read_pair(const nlohmann::json& el, std::size_t index) {
  auto fail = [&](const std::string& why) {
    return Error("malformed_pair", "element " + std::to_string(index) + ": " + why);
  };
  if (!el.is_object()) throw fail("not an object");
  QuestionAnswer qa;
  for (auto [key, out] : {std::pair{"question", &qa.question}, std::pair{"answer", &qa.answer}}) {
    auto it = el.find(key);
    if (it == el.end()) throw fail(std::string("missing \"") + key + "\"");
    if (!it->is_string()) throw fail(std::string("\"") + key + "\" is not a string");
    *out = std::string(text::trim(it->get_ref<const std::string&>()));
    if (out->empty()) throw fail(std::string("empty \"") + key + "\"");
  }
  return qa;
}

std::vector<QuestionAnswer> read_pairs(const nlohmann::json& arr) {
  std::vector<QuestionAnswer> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(read_pair(arr[i], i));
  return out;
}

}  // namespace

std::vector<QuestionAnswer> extract_json_array(std::string_view text) {
  bool saw_balanced = false;
  std::string parse_error;
  for (std::size_t open = text.find('['); open != std::string_view::npos; open = text.find('[', open + 1)) {
    auto end = balanced_end(text, open);
    if (!end) continue;
    saw_balanced = true;
    nlohmann::json arr;
    try {
      arr = nlohmann::json::parse(text.substr(open, *end - open));
    } catch (const nlohmann::json::parse_error& e) {
      if (parse_error.empty()) parse_error = e.what();
      continue;
    }
    if (!arr.is_array()) continue;
    return read_pairs(arr);
  }
  if (saw_balanced) throw Error("invalid_json", parse_error);
  throw Error("no_json_array", "no balanced JSON array in output");
}

PartialExtraction extract_json_array_prefix(std::string_view text) {
  std::size_t open = text.find('[');
  if (open == std::string_view::npos) throw Error("no_json_array", "no array start in output");

  // Walk depth-1 element boundaries; anything after the last separator that
  // never closed is the truncated tail.
  std::vector<std::string_view> elements;
  std::size_t start = open + 1;
  int depth = 1;
  bool in_string = false;
  bool closed = false;
  for (std::size_t i = open + 1; i < text.size() && !closed; ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '[': case '{': ++depth; break;
      case '}': --depth; break;
      case ']':
        if (--depth == 0) {
          elements.push_back(text.substr(start, i - start));
          closed = true;
        }
        break;
      case ',':
        if (depth == 1) {
          elements.push_back(text.substr(start, i - start));
          start = i + 1;
        }
        break;
      default: break;
    }
  }

  PartialExtraction out;
  if (!closed) {
    auto tail = text.substr(std::min(start, text.size()));
    if (!text::trim(tail).empty()) ++out.truncated_elements;
  }
  for (std::size_t i = 0; i < elements.size(); ++i) {
    if (text::trim(elements[i]).empty()) continue;
    nlohmann::json el;
    try {
      el = nlohmann::json::parse(elements[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error("invalid_json", "element " + std::to_string(i) + ": " + e.what());
    }
    out.pairs.push_back(read_pair(el, i));
  }
  return out;
}

}  // namespace forge
