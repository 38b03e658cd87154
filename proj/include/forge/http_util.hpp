#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>

// Thin blocking HTTP helpers so only one translation unit pulls in httplib.
namespace forge::http {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

/// Throws forge::Error("invalid_url") for anything that is not http(s)://host[...].
Url split_url(std::string_view url);

struct Response {
  int status = 0;
  std::string body;
};

/// nullopt means no response arrived (connect failure or timeout).
std::optional<Response> post_json(std::string_view url, const std::string& body,
                                  const std::map<std::string, std::string>& headers,
                                  std::chrono::milliseconds timeout);

std::optional<int> head_status(std::string_view url, std::chrono::milliseconds timeout);

}  // namespace forge::http
