#include "forge/transcript.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {

std::string chat_request_digest(const ChatRequest& request) {
  nlohmann::ordered_json j = {{"kind", "chat"},
                              {"prompt", request.prompt},
                              {"temperature", request.temperature},
                              {"max_tokens", request.max_new_tokens}};
  return text::sha256_hex(j.dump());
}

std::string embed_request_digest(std::string_view text_in) {
  nlohmann::ordered_json j = {{"kind", "embed"}, {"text", std::string(text_in)}};
  return text::sha256_hex(j.dump());
}

std::string similarity_request_digest(std::string_view image_uri, std::string_view text_in) {
  nlohmann::ordered_json j = {{"kind", "similarity"}, {"image_uri", std::string(image_uri)}, {"text", std::string(text_in)}};
  return text::sha256_hex(j.dump());
}

std::string probe_request_digest(std::string_view image_uri) {
  nlohmann::ordered_json j = {{"kind", "probe"}, {"image_uri", std::string(image_uri)}};
  return text::sha256_hex(j.dump());
}

Transcript Transcript::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open transcript " + path.string());
  return read(in);
}

Transcript Transcript::read(std::istream& in) {
  Transcript t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TranscriptEntry e;
      e.response_text = j.at("response_text").get<std::string>();
      e.finish_reason = parse_finish_reason(j.value("finish_reason", std::string("stop")));
      t.add(j.at("request_digest").get<std::string>(), std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw Error("invalid_transcript", "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

void Transcript::add(std::string digest, TranscriptEntry entry) { entries_[std::move(digest)] = std::move(entry); }

const TranscriptEntry* Transcript::find(const std::string& digest) const {
  auto it = entries_.find(digest);
  return it == entries_.end() ? nullptr : &it->second;
}

void Transcript::write(std::ostream& out) const {
  std::vector<const std::pair<const std::string, TranscriptEntry>*> sorted;
  for (const auto& kv : entries_) sorted.push_back(&kv);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
  for (const auto* kv : sorted) {
    nlohmann::ordered_json j = {{"request_digest", kv->first}, {"response_text", kv->second.response_text}};
    if (kv->second.finish_reason != FinishReason::stop) j["finish_reason"] = std::string(to_string(kv->second.finish_reason));
    out << j.dump() << '\n';
  }
}

const TranscriptEntry& TranscriptBackend::lookup(const std::string& digest, std::string_view what) const {
  const auto* e = transcript_.find(digest);
  if (!e) throw Error("transcript_miss", std::string(what) + " request " + digest.substr(0, 12));
  return *e;
}

ChatResponse TranscriptBackend::chat(const ChatRequest& request) {
  const auto& e = lookup(chat_request_digest(request), "chat");
  return {e.response_text, e.finish_reason, 0, 0};
}

std::vector<float> TranscriptBackend::embed(std::string_view text_in) {
  const auto& e = lookup(embed_request_digest(text_in), "embed");
  if (e.response_text.starts_with("error:")) throw Error(e.response_text.substr(6));
  try {
    return nlohmann::json::parse(e.response_text).get<std::vector<float>>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error("bad_response", ex.what());
  }
}

double TranscriptBackend::cosine(std::string_view image_uri, std::string_view text_in) {
  const auto& e = lookup(similarity_request_digest(image_uri, text_in), "similarity");
  if (e.response_text.starts_with("error:")) throw Error(e.response_text.substr(6));
  try {
    return std::stod(e.response_text);
  } catch (const std::exception&) {
    throw Error("bad_response", "similarity response is not a number");
  }
}

ProbeStatus TranscriptBackend::probe(std::string_view image_uri) {
  const auto& e = lookup(probe_request_digest(image_uri), "probe");
  if (e.response_text == "found") return ProbeStatus::found;
  if (e.response_text == "not_found") return ProbeStatus::not_found;
  if (e.response_text == "timeout") return ProbeStatus::timeout;
  return ProbeStatus::error;
}

}  // namespace forge
