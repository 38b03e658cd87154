#include "forge/gateway_http.hpp"

#include <cstdlib>

#include "forge/error.hpp"
#include "forge/http_util.hpp"
#include "httplib.h"

namespace forge {
namespace http {

Url split_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw Error("invalid_url", std::string(url));
  auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw Error("invalid_url", std::string(url));
  auto path_start = url.find('/', scheme_end + 3);
  Url out;
  if (path_start == std::string_view::npos) {
    out.origin = std::string(url);
    out.path = "/";
  } else {
    out.origin = std::string(url.substr(0, path_start));
    out.path = std::string(url.substr(path_start));
  }
  if (out.origin.size() <= scheme_end + 3) throw Error("invalid_url", std::string(url));
  return out;
}

namespace {

httplib::Client make_client(const Url& url, std::chrono::milliseconds timeout) {
  httplib::Client cli(url.origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  cli.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  cli.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  cli.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  return cli;
}

}  // namespace

std::optional<Response> post_json(std::string_view url, const std::string& body,
                                  const std::map<std::string, std::string>& headers,
                                  std::chrono::milliseconds timeout) {
  Url u = split_url(url);
  auto cli = make_client(u, timeout);
  httplib::Headers h(headers.begin(), headers.end());
  auto res = cli.Post(u.path, h, body, "application/json");
  if (!res) return std::nullopt;
  return Response{res->status, res->body};
}

std::optional<int> head_status(std::string_view url, std::chrono::milliseconds timeout) {
  Url u = split_url(url);
  auto cli = make_client(u, timeout);
  cli.set_follow_location(true);
  auto res = cli.Head(u.path);
  if (!res) return std::nullopt;
  return res->status;
}

}  // namespace http

EndpointConfig endpoint_from_env(const char* url_var, const char* key_var) {
  EndpointConfig cfg;
  if (const char* u = std::getenv(url_var)) cfg.url = u;
  if (const char* k = std::getenv(key_var)) cfg.api_key = k;
  return cfg;
}

namespace {

std::map<std::string, std::string> auth_headers(const EndpointConfig& cfg) {
  std::map<std::string, std::string> h;
  if (!cfg.api_key.empty()) h["Authorization"] = "Bearer " + cfg.api_key;
  return h;
}

// Maps transport outcome onto the retry taxonomy and returns the parsed body.
nlohmann::json call(const EndpointConfig& cfg, const nlohmann::json& body) {
  auto res = http::post_json(cfg.url, body.dump(), auth_headers(cfg), cfg.timeout);
  if (!res) throw TransientError("timeout", "no response from " + cfg.url);
  if (res->status >= 500 || res->status == 429 || res->status == 408) {
    throw TransientError("http_" + std::to_string(res->status), res->body.substr(0, 200));
  }
  if (res->status >= 400) {
    std::string code = "bad_request";
    auto err = nlohmann::json::parse(res->body, nullptr, false);
    if (err.is_object() && err.contains("error") && err["error"].is_string()) code = err["error"].get<std::string>();
    throw Error(code, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  auto parsed = nlohmann::json::parse(res->body, nullptr, false);
  if (parsed.is_discarded()) throw Error("bad_response", "response is not JSON");
  return parsed;
}

}  // namespace

ChatResponse HttpChatBackend::chat(const ChatRequest& request) {
  nlohmann::json body = {{"model", config_.model},
                         {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
                         {"temperature", request.temperature},
                         {"max_tokens", request.max_new_tokens}};
  auto start = std::chrono::steady_clock::now();
  auto doc = call(config_, body);
  ChatResponse out;
  try {
    const auto& choice = doc.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string();
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      out.finish_reason = parse_finish_reason(choice["finish_reason"].get<std::string>());
    }
    if (doc.contains("usage") && doc["usage"].is_object()) out.total_tokens = doc["usage"].value("total_tokens", 0);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_response", e.what());
  }
  out.latency_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<float> HttpEmbeddingBackend::embed(std::string_view text) {
  nlohmann::json body = {{"model", config_.model}, {"input", std::string(text)}};
  auto doc = call(config_, body);
  try {
    if (doc.contains("data")) return doc.at("data").at(0).at("embedding").get<std::vector<float>>();
    return doc.at("embedding").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_response", e.what());
  }
}

double HttpSimilarityBackend::cosine(std::string_view image_uri, std::string_view text) {
  nlohmann::json body = {{"image_uri", std::string(image_uri)}, {"text", std::string(text)}};
  if (!config_.model.empty()) body["model"] = config_.model;
  nlohmann::json doc;
  try {
    doc = call(config_, body);
  } catch (const TransientError&) {
    throw;
  } catch (const Error& e) {
    throw Error("image_embed_failed", e.what());
  }
  try {
    return doc.at("cosine").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_response", e.what());
  }
}

}  // namespace forge
