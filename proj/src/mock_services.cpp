#include "forge/mock_services.hpp"

#include <atomic>
#include <thread>

#include "forge/error.hpp"
#include "httplib.h"

namespace forge {

struct MockServices::Impl {
  MockServiceOptions options;
  TranscriptBackend backend;
  httplib::Server server;
  std::thread thread;
  std::string host = "127.0.0.1";
  int port = 0;
  std::atomic<std::size_t> requests{0};
  std::atomic<std::size_t> in_flight{0};
  std::atomic<std::size_t> max_in_flight{0};

  explicit Impl(MockServiceOptions opts) : options(std::move(opts)), backend(options.transcript) {
    server.Post("/v1/chat/completions", wrap([this](const nlohmann::json& body) {
      ChatRequest req;
      req.prompt = body.at("messages").at(0).at("content").get<std::string>();
      req.temperature = body.value("temperature", 0.0);
      req.max_new_tokens = body.value("max_tokens", 8192);
      auto resp = backend.chat(req);
      return nlohmann::json{
          {"choices", {{{"index", 0},
                        {"message", {{"role", "assistant"}, {"content", resp.text}}},
                        {"finish_reason", std::string(to_string(resp.finish_reason))}}}},
          {"usage", {{"total_tokens", 0}}}};
    }));
    server.Post("/v1/embeddings", wrap([this](const nlohmann::json& body) {
      auto v = backend.embed(body.at("input").get<std::string>());
      return nlohmann::json{{"data", {{{"index", 0}, {"embedding", v}}}}};
    }));
    server.Post("/v1/similarity", wrap([this](const nlohmann::json& body) {
      double c = backend.cosine(body.at("image_uri").get<std::string>(), body.at("text").get<std::string>());
      return nlohmann::json{{"cosine", c}};
    }));
  }

  template <class F>
  httplib::Server::Handler wrap(F fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      const auto current = ++in_flight;
      auto seen = max_in_flight.load();
      while (current > seen && !max_in_flight.compare_exchange_weak(seen, current)) {
      }
      const auto n = ++requests;
      if (options.latency.count() > 0) std::this_thread::sleep_for(options.latency);
      if (static_cast<int>(n) <= options.fail_first) {
        res.status = 503;
        res.set_content(R"({"error":"unavailable"})", "application/json");
      } else {
        try {
          auto body = nlohmann::json::parse(req.body);
          res.set_content(fn(body).dump(), "application/json");
        } catch (const Error& e) {
          res.status = e.code() == "transcript_miss" ? 404 : 422;
          res.set_content(nlohmann::json{{"error", e.code()}, {"message", e.what()}}.dump(), "application/json");
        } catch (const std::exception& e) {
          res.status = 400;
          res.set_content(nlohmann::json{{"error", "bad_request"}, {"message", e.what()}}.dump(), "application/json");
        }
      }
      --in_flight;
    };
  }
};

MockServices::MockServices(MockServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

MockServices::~MockServices() { stop(); }

int MockServices::bind(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(host);
    if (port <= 0) throw Error("bind_failed", host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw Error("bind_failed", host + ":" + std::to_string(port));
  }
  impl_->port = port;
  return port;
}

void MockServices::serve() { impl_->server.listen_after_bind(); }

int MockServices::start(const std::string& host, int port) {
  int bound = bind(host, port);
  impl_->thread = std::thread([this] { serve(); });
  impl_->server.wait_until_ready();
  return bound;
}

void MockServices::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockServices::base_url() const { return "http://" + impl_->host + ":" + std::to_string(impl_->port); }

std::size_t MockServices::requests() const { return impl_->requests.load(); }

std::size_t MockServices::max_in_flight() const { return impl_->max_in_flight.load(); }

}  // namespace forge
