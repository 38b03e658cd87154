#include "forge/text.hpp"

#include <openssl/evp.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <array>
#include <memory>

#include "forge/error.hpp"

namespace forge::text {
namespace {

// Decodes one code point at `i`, advancing `i`. Malformed sequences decode
// to a negative value and consume one byte.
UChar32 next_code_point(std::string_view s, std::size_t& i) {
  UChar32 c = 0;
  auto idx = static_cast<int32_t>(i);
  U8_NEXT(reinterpret_cast<const uint8_t*>(s.data()), idx, static_cast<int32_t>(s.size()), c);
  i = static_cast<std::size_t>(idx);
  return c;
}

bool is_space(UChar32 c) { return c >= 0 && u_isUWhiteSpace(c); }

void append_utf8(std::string& out, UChar32 c) {
  std::array<uint8_t, U8_MAX_LENGTH> buf{};
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(buf.data(), len, U8_MAX_LENGTH, c, err);
  if (!err) out.append(reinterpret_cast<const char*>(buf.data()), static_cast<std::size_t>(len));
}

}  // namespace

std::string nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("icu_error", u_errorName(status));
  for (std::size_t i = 0; i < utf8.size();) {
    if (next_code_point(utf8, i) < 0) throw Error("invalid_utf8", "malformed UTF-8 sequence");
  }
  auto ustr = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  if (norm->isNormalized(ustr, status) && U_SUCCESS(status)) return std::string(utf8);
  status = U_ZERO_ERROR;
  icu::UnicodeString normalized = norm->normalize(ustr, status);
  if (U_FAILURE(status)) throw Error("icu_error", u_errorName(status));
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::string_view trim(std::string_view utf8) {
  std::size_t begin = utf8.size();
  std::size_t i = 0;
  while (i < utf8.size()) {
    std::size_t start = i;
    if (!is_space(next_code_point(utf8, i))) {
      begin = start;
      break;
    }
  }
  std::size_t end = begin;
  for (i = begin; i < utf8.size();) {
    if (!is_space(next_code_point(utf8, i))) end = i;
  }
  return utf8.substr(begin, end - begin);
}

std::vector<std::string_view> split_whitespace(std::string_view utf8) {
  std::vector<std::string_view> out;
  std::size_t token_start = std::string_view::npos;
  for (std::size_t i = 0; i < utf8.size();) {
    std::size_t start = i;
    bool space = is_space(next_code_point(utf8, i));
    if (space && token_start != std::string_view::npos) {
      out.push_back(utf8.substr(token_start, start - token_start));
      token_start = std::string_view::npos;
    } else if (!space && token_start == std::string_view::npos) {
      token_start = start;
    }
  }
  if (token_start != std::string_view::npos) out.push_back(utf8.substr(token_start));
  return out;
}

std::size_t word_count(std::string_view utf8) { return split_whitespace(utf8).size(); }

std::vector<std::string> word_tokens(std::string_view utf8) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < utf8.size();) {
    UChar32 c = next_code_point(utf8, i);
    if (c >= 0 && u_isalnum(c)) {
      if (c < 0x80) {
        current.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c));
      } else {
        append_utf8(current, u_tolower(c));
      }
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string to_lower(std::string_view utf8) {
  std::string out;
  out.reserve(utf8.size());
  for (std::size_t i = 0; i < utf8.size();) {
    std::size_t start = i;
    UChar32 c = next_code_point(utf8, i);
    if (c < 0) {
      out.append(utf8.substr(start, i - start));
    } else if (c < 0x80) {
      out.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c));
    } else {
      append_utf8(out, u_tolower(c));
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw Error("digest_error", "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace forge::text
