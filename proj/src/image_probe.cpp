#include "forge/image_probe.hpp"

#include <system_error>

#include "forge/error.hpp"
#include "forge/http_util.hpp"

namespace forge {

ProbeStatus LocalFileProber::probe(std::string_view image_uri) {
  std::string_view path = image_uri;
  if (path.starts_with("file://")) path.remove_prefix(7);
  std::filesystem::path p(path);
  if (p.is_relative()) p = base_ / p;
  std::error_code ec;
  bool exists = std::filesystem::is_regular_file(p, ec);
  if (ec && ec != std::errc::no_such_file_or_directory) return ProbeStatus::error;
  return exists ? ProbeStatus::found : ProbeStatus::not_found;
}

ProbeStatus HttpProber::probe(std::string_view image_uri) {
  auto status = http::head_status(image_uri, timeout_);
  if (!status) return ProbeStatus::timeout;
  if (*status >= 200 && *status < 400) return ProbeStatus::found;
  if (*status >= 500 || *status == 429) return ProbeStatus::error;
  return ProbeStatus::not_found;
}

ProbeStatus DispatchingProber::probe(std::string_view image_uri) {
  if (image_uri.starts_with("http://") || image_uri.starts_with("https://")) return remote_->probe(image_uri);
  return local_->probe(image_uri);
}

ProbeResult check_image_availability(const CaptionRecord& record, ImageProber& prober, const ProbePolicy& policy) {
  ProbeResult result{record, std::nullopt, 0};
  result.record.flags.image_ok = false;
  if (record.image_uri.empty()) {
    result.reason = "invalid_uri";
    return result;
  }
  auto backoff = policy.initial_backoff;
  ProbeStatus status = ProbeStatus::error;
  for (int attempt = 0; attempt <= policy.retries; ++attempt) {
    if (attempt > 0) {
      if (policy.sleeper) policy.sleeper(backoff);
      backoff *= 2;
    }
    ++result.attempts;
    status = prober.probe(record.image_uri);
    if (status == ProbeStatus::found || status == ProbeStatus::not_found) break;
  }
  switch (status) {
    case ProbeStatus::found: result.record.flags.image_ok = true; break;
    case ProbeStatus::not_found: result.reason = "not_found"; break;
    case ProbeStatus::timeout: result.reason = "probe_timeout"; break;
    case ProbeStatus::error: result.reason = "probe_error"; break;
  }
  return result;
}

std::vector<ProbeResult> probe_records(std::span<const CaptionRecord> records, ImageProber& prober,
                                       const ProbePolicy& policy, std::size_t in_flight) {
  return ordered_parallel_map(records, in_flight,
                              [&](const CaptionRecord& r) { return check_image_availability(r, prober, policy); });
}

}  // namespace forge
