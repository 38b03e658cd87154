#include "forge/review_server.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "forge/error.hpp"
#include "httplib.h"

namespace forge {

namespace {

int status_for(const std::string& code) {
  if (code == "unknown_session") return 404;
  if (code == "duplicate_label") return 409;
  return 400;
}

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

}  // namespace

struct ReviewServer::Impl {
  ReviewServerOptions options;
  SessionStore store;
  httplib::Server server;
  std::unordered_map<std::string, std::size_t> pair_index;
  std::unordered_map<std::string, std::size_t> record_index;

  explicit Impl(ReviewServerOptions opts) : options(std::move(opts)), store(options.session_dir) {
    for (std::size_t i = 0; i < options.pairs.size(); ++i) pair_index.emplace(options.pairs[i].pair_id, i);
    for (std::size_t i = 0; i < options.records.size(); ++i) record_index.emplace(options.records[i].id, i);
    routes();
  }

  bool authorized(const httplib::Request& req) const {
    if (options.token.empty()) return true;
    if (req.get_header_value("Authorization") == "Bearer " + options.token) return true;
    return req.get_header_value("X-Review-Token") == options.token;
  }

  ReviewSession session_or_throw(const std::string& id) const {
    auto s = store.get(id);
    if (!s) throw Error("unknown_session", id);
    return *s;
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "invalid_json", "body must be a JSON object");
    const auto plan_in = body.value("plan", nlohmann::json::object());
    std::optional<std::size_t> final_n;
    if (plan_in.contains("final_n") && plan_in["final_n"].is_number_unsigned()) {
      final_n = plan_in["final_n"].get<std::size_t>();
    }
    auto plan = make_plan(plan_in.value("population_size", options.pairs.size()), plan_in.value("confidence_z", 1.96),
                          plan_in.value("proportion", 0.5), plan_in.value("margin", 0.05), final_n);
    auto draw = draw_sample(options.pairs, options.records, plan, body.value("seed", std::uint64_t{0}));
    auto id = store.create(plan, draw.session.seed, draw.session.sampled_pair_ids);
    nlohmann::ordered_json strata = nlohmann::ordered_json::object();
    for (const auto& [kind, n] : draw.strata) strata[std::string(to_string(kind))] = n;
    send_json(res, 201, {{"session_id", id}, {"plan", plan.to_json()}, {"strata", strata}, {"warnings", draw.warnings}});
  }

  void next_card(const httplib::Request& req, httplib::Response& res) {
    const auto session = session_or_throw(req.path_params.at("id"));
    const auto reviewer = req.get_param_value("reviewer");
    if (reviewer.empty()) return send_error(res, 400, "invalid_request", "reviewer query parameter is required");
    std::size_t done = 0;
    const std::string* pending = nullptr;
    for (const auto& pid : session.sampled_pair_ids) {
      bool labeled = std::any_of(session.labels.begin(), session.labels.end(),
                                 [&](const ReviewLabel& l) { return l.pair_id == pid && l.reviewer == reviewer; });
      if (labeled) {
        ++done;
      } else if (!pending) {
        pending = &pid;
      }
    }
    if (!pending) {
      res.status = 204;
      return;
    }
    const auto& pair = options.pairs.at(pair_index.at(*pending));
    const auto& record = options.records.at(record_index.at(pair.record_id));
    send_json(res, 200,
              {{"pair_id", pair.pair_id},
               {"image_uri", record.image_uri},
               {"description", record.description},
               {"question", pair.question},
               {"answer", pair.answer},
               {"position", std::to_string(done + 1) + " of " + std::to_string(session.sampled_pair_ids.size())}});
  }

  void add_label(const httplib::Request& req, httplib::Response& res) {
    const auto id = req.path_params.at("id");
    session_or_throw(id);
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "invalid_json", "body must be a JSON object");
    ReviewLabel label;
    label.pair_id = body.value("pair_id", std::string());
    label.reviewer = body.value("reviewer", std::string());
    label.verdict = parse_review_verdict(body.value("verdict", std::string()));
    label.timestamp = std::chrono::system_clock::now();
    store.add_label(id, label, body.value("replace", false));
    label.timestamp = std::chrono::time_point_cast<std::chrono::seconds>(label.timestamp);
    send_json(res, 201, label_to_json(label));
  }

  void stats(const httplib::Request& req, httplib::Response& res) {
    const auto session = session_or_throw(req.path_params.at("id"));
    auto method = req.get_param_value("interval") == "wilson" ? IntervalMethod::wilson : options.interval;
    auto out = label_stats(session.labels, method).to_json();
    std::set<std::string_view> labeled_pairs;
    for (const auto& l : session.labels) labeled_pairs.insert(l.pair_id);
    out["session_id"] = session.session_id;
    out["sampled"] = session.sampled_pair_ids.size();
    out["labeled_pairs"] = labeled_pairs.size();
    out["complete"] = session.status() == SessionStatus::complete;
    send_json(res, 200, out);
  }

  void export_labels(const httplib::Request& req, httplib::Response& res) {
    const auto session = session_or_throw(req.path_params.at("id"));
    std::string body;
    for (const auto& pid : session.sampled_pair_ids) {
      for (const auto& l : session.labels) {
        if (l.pair_id == pid) body += label_to_json(l).dump() + "\n";
      }
    }
    res.status = 200;
    res.set_content(body, "application/x-ndjson");
  }

  template <class Handler>
  httplib::Server::Handler guarded(Handler h) {
    return [this, h](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) return send_error(res, 401, "unauthorized", "missing or wrong review token");
      try {
        (this->*h)(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), e.code(), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes() {
    server.Post("/sessions", guarded(&Impl::create_session));
    server.Get("/sessions/:id/next", guarded(&Impl::next_card));
    server.Post("/sessions/:id/labels", guarded(&Impl::add_label));
    server.Get("/sessions/:id/stats", guarded(&Impl::stats));
    server.Get("/sessions/:id/export", guarded(&Impl::export_labels));
    if (options.ui_dir && !server.set_mount_point("/", options.ui_dir->string())) {
      throw Error("invalid_ui_dir", options.ui_dir->string());
    }
  }
};

ReviewServer::ReviewServer(ReviewServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) {
    int bound = impl_->server.bind_to_any_port(host);
    if (bound <= 0) throw Error("bind_failed", host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("bind_failed", host + ":" + std::to_string(port));
  return port;
}

void ReviewServer::serve() { impl_->server.listen_after_bind(); }

void ReviewServer::stop() {
  if (impl_) impl_->server.stop();
}

SessionStore& ReviewServer::store() { return impl_->store; }

}  // namespace forge
