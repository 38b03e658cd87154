#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/concurrency.hpp"
#include "forge/corpus.hpp"

namespace forge {

enum class ProbeStatus { found, not_found, timeout, error };

/// Answers "does this image exist?" without fetching its bytes.
class ImageProber {
 public:
  virtual ~ImageProber() = default;
  virtual ProbeStatus probe(std::string_view image_uri) = 0;
};

/// Resolves relative paths and file:// URIs against a base directory.
class LocalFileProber : public ImageProber {
 public:
  explicit LocalFileProber(std::filesystem::path base_dir = ".") : base_(std::move(base_dir)) {}
  ProbeStatus probe(std::string_view image_uri) override;

 private:
  std::filesystem::path base_;
};

/// Issues HEAD requests; 2xx is found, 404/410 not found, 5xx/transport errors retryable.
class HttpProber : public ImageProber {
 public:
  explicit HttpProber(std::chrono::milliseconds timeout = std::chrono::milliseconds(5000)) : timeout_(timeout) {}
  ProbeStatus probe(std::string_view image_uri) override;

 private:
  std::chrono::milliseconds timeout_;
};

/// http(s) URIs go to the HTTP prober, everything else to the local one.
class DispatchingProber : public ImageProber {
 public:
  DispatchingProber(std::shared_ptr<ImageProber> local, std::shared_ptr<ImageProber> remote)
      : local_(std::move(local)), remote_(std::move(remote)) {}
  ProbeStatus probe(std::string_view image_uri) override;

 private:
  std::shared_ptr<ImageProber> local_;
  std::shared_ptr<ImageProber> remote_;
};

struct ProbePolicy {
  int retries = 2;
  std::chrono::milliseconds initial_backoff{500};
  Sleeper sleeper = real_sleeper();
};

struct ProbeResult {
  CaptionRecord record;
  std::optional<std::string> reason;  // set when image_ok is false
  int attempts = 0;
};

ProbeResult check_image_availability(const CaptionRecord& record, ImageProber& prober,
                                     const ProbePolicy& policy = {});

/// Probes with bounded parallelism; results come back in input order.
std::vector<ProbeResult> probe_records(std::span<const CaptionRecord> records, ImageProber& prober,
                                       const ProbePolicy& policy = {}, std::size_t in_flight = 16);

}  // namespace forge
