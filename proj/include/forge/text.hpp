#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 text utilities shared by every module. Case folding and character
// classes come from ICU so behaviour does not depend on the C locale.
namespace forge::text {

/// NFC-normalizes UTF-8 text. Throws forge::Error("invalid_utf8") on bad input.
std::string nfc(std::string_view utf8);

/// Strips leading and trailing Unicode whitespace.
std::string_view trim(std::string_view utf8);

/// Splits on runs of Unicode whitespace (White_Space property).
std::vector<std::string_view> split_whitespace(std::string_view utf8);

std::size_t word_count(std::string_view utf8);

/// Lowercased maximal runs of letters/digits. Everything else separates.
std::vector<std::string> word_tokens(std::string_view utf8);

std::string to_lower(std::string_view utf8);

/// Joins with a single space.
std::string join(const std::vector<std::string>& parts, std::string_view sep = " ");

std::string sha256_hex(std::string_view bytes);

/// FNV-1a, used where a fast stable non-cryptographic hash is enough.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace forge::text
