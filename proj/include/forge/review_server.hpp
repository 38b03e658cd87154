#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/human_eval.hpp"
#include "forge/qa_generation.hpp"

namespace forge {

struct ReviewServerOptions {
  std::vector<QAPair> pairs;  // the population (normally accepted pairs)
  std::vector<CaptionRecord> records;
  std::filesystem::path session_dir;
  std::string token;                      // shared token; empty disables auth
  std::optional<std::filesystem::path> ui_dir;  // static files mounted at /
  IntervalMethod interval = IntervalMethod::normal;
};

/// JSON API over a SessionStore:
///   POST /sessions                     {plan, seed} -> {session_id, ...}
///   GET  /sessions/{id}/next?reviewer=R -> card, or 204 when R is done
///   POST /sessions/{id}/labels         {pair_id, verdict, reviewer[, replace]}
///   GET  /sessions/{id}/stats          -> rates with intervals
///   GET  /sessions/{id}/export         -> labels as JSONL
class ReviewServer {
 public:
  explicit ReviewServer(ReviewServerOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port or throws
  /// forge::Error("bind_failed").
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void serve();
  void stop();

  SessionStore& store();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace forge
