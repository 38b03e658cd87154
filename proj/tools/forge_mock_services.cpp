// Serves chat, embedding and similarity endpoints from a transcript, for
// exercising the HTTP backends without real model services.
#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "forge/error.hpp"
#include "forge/mock_services.hpp"

namespace {
forge::MockServices* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge-mock-services: transcript-backed model endpoints"};
  std::string transcript, host = "127.0.0.1";
  int port = 8090, fail_first = 0, latency_ms = 0;
  app.add_option("--transcript", transcript)->required()->check(CLI::ExistingFile);
  app.add_option("--host", host);
  app.add_option("--port", port);
  app.add_option("--fail-first", fail_first, "Answer the first N requests with 503");
  app.add_option("--latency-ms", latency_ms);
  CLI11_PARSE(app, argc, argv);

  try {
    forge::MockServiceOptions opts{forge::Transcript::load(transcript), fail_first,
                                   std::chrono::milliseconds(latency_ms)};
    forge::MockServices server(std::move(opts));
    int bound = server.bind(host, port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "mock services on http://" << host << ":" << bound << "/v1/{chat/completions,embeddings,similarity}\n";
    server.serve();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
