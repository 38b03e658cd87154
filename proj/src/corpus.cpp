#include "forge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {
namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c);
  return out;
}

// Field value as a string; numbers are accepted for ids. Returns nullopt when absent.
std::optional<std::string> string_field(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw Error("invalid_field", key);
}

std::string require(const nlohmann::json& obj, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (auto v = string_field(obj, k)) return *v;
  }
  throw Error("missing_field", *keys.begin());
}

struct NativeFields {
  std::string id;
  std::string image;
  std::string text;
  SourceKind source;
};

bool is_canonical(const nlohmann::json& obj) {
  return obj.contains("id") && obj.contains("image_uri") && obj.contains("description");
}

NativeFields adapt(const nlohmann::json& obj, SourceKind source) {
  if (is_canonical(obj)) {
    NativeFields f{require(obj, {"id"}), require(obj, {"image_uri"}), require(obj, {"description"}), source};
    if (auto s = string_field(obj, "source")) f.source = parse_source_kind(*s);
    return f;
  }
  switch (source) {
    case SourceKind::DOCCI:
      return {require(obj, {"example_id", "id"}), require(obj, {"image_file", "image_url", "image"}),
              require(obj, {"description", "text"}), source};
    case SourceKind::LocalizedNarratives: {
      std::string image_id = require(obj, {"image_id", "id"});
      std::string id = image_id;
      if (auto annotator = string_field(obj, "annotator_id")) id += "_" + *annotator;
      std::string image = string_field(obj, "image_url").value_or(image_id + ".jpg");
      return {id, image, require(obj, {"caption", "text"}), source};
    }
    case SourceKind::PixMoCap: {
      std::string image = require(obj, {"image_url", "image"});
      std::string id = string_field(obj, "id").value_or("pixmo-" + text::sha256_hex(image).substr(0, 16));
      return {id, image, require(obj, {"caption", "text"}), source};
    }
    case SourceKind::Custom:
      return {require(obj, {"id"}), require(obj, {"image"}), require(obj, {"text"}), source};
  }
  throw Error("invalid_source");
}

std::string normalize_description(std::string_view raw) {
  std::string s = text::nfc(raw);
  std::string lf;
  lf.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      lf.push_back('\n');
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      lf.push_back(s[i]);
    }
  }
  return std::string(text::trim(lf));
}

}  // namespace

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::DOCCI: return "docci";
    case SourceKind::LocalizedNarratives: return "ln";
    case SourceKind::PixMoCap: return "pixmo";
    case SourceKind::Custom: return "custom";
  }
  return "custom";
}

std::string_view display_name(SourceKind kind) {
  switch (kind) {
    case SourceKind::DOCCI: return "DOCCI";
    case SourceKind::LocalizedNarratives: return "LN";
    case SourceKind::PixMoCap: return "PixMo-Cap";
    case SourceKind::Custom: return "Custom";
  }
  return "Custom";
}

SourceKind parse_source_kind(std::string_view name) {
  std::string n = ascii_lower(name);
  if (n == "docci") return SourceKind::DOCCI;
  if (n == "ln" || n == "localizednarratives" || n == "localized_narratives") return SourceKind::LocalizedNarratives;
  if (n == "pixmo" || n == "pixmocap" || n == "pixmo-cap" || n == "pixmo_cap") return SourceKind::PixMoCap;
  if (n == "custom") return SourceKind::Custom;
  throw Error("invalid_source", std::string(name));
}

CaptionRecord make_record(std::string id, SourceKind source, std::string image_uri,
                          std::string_view description) {
  if (text::trim(id).empty()) throw Error("empty_id");
  if (text::trim(image_uri).empty()) throw Error("empty_image_uri");
  CaptionRecord r;
  r.id = std::move(id);
  r.source = source;
  r.image_uri = std::move(image_uri);
  r.description = normalize_description(description);
  if (r.description.empty()) throw Error("empty_description");
  r.word_count = text::word_count(r.description);
  return r;
}

nlohmann::ordered_json Manifest::to_json() const {
  nlohmann::ordered_json per_source = nlohmann::ordered_json::object();
  for (auto [kind, n] : per_source_counts) per_source[std::string(to_string(kind))] = n;
  return {{"corpus_path", corpus_path},
          {"record_count", record_count},
          {"per_source_counts", per_source},
          {"content_digest", content_digest}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  m.corpus_path = j.value("corpus_path", "");
  m.record_count = j.at("record_count").get<std::size_t>();
  for (auto& [k, v] : j.at("per_source_counts").items()) m.per_source_counts[parse_source_kind(k)] = v.get<std::size_t>();
  m.content_digest = j.at("content_digest").get<std::string>();
  return m;
}

std::map<std::string, std::size_t> IngestResult::rejection_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& r : rejections) ++out[r.reason];
  return out;
}

IngestResult ingest_records(std::istream& in, SourceKind source) {
  if (!in) throw Error("io_error", "input stream is not readable");
  IngestResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    ++result.lines_read;
    const std::size_t lineno = result.lines_read;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) {
      result.rejections.push_back({lineno, "blank_line", ""});
      continue;
    }
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      result.rejections.push_back({lineno, "invalid_json", e.what()});
      continue;
    }
    if (!obj.is_object()) {
      result.rejections.push_back({lineno, "not_object", ""});
      continue;
    }
    try {
      NativeFields f = adapt(obj, source);
      CaptionRecord rec = make_record(std::move(f.id), f.source, std::move(f.image), f.text);
      if (is_canonical(obj) && obj.contains("flags")) rec.flags = record_from_json(obj).flags;
      if (!seen.insert(rec.id).second) {
        result.rejections.push_back({lineno, "duplicate_id", rec.id});
        continue;
      }
      result.records.push_back(std::move(rec));
    } catch (const Error& e) {
      result.rejections.push_back({lineno, e.code(), e.what()});
    }
  }
  if (in.bad()) throw Error("io_error", "read failed");
  result.manifest = compute_manifest(result.records);
  return result;
}

nlohmann::ordered_json record_to_json(const CaptionRecord& r) {
  nlohmann::ordered_json flags = nlohmann::ordered_json::array();
  if (r.flags.image_ok) flags.push_back("image_ok");
  if (r.flags.spatial_ok) flags.push_back("spatial_ok");
  return {{"id", r.id},
          {"source", std::string(to_string(r.source))},
          {"image_uri", r.image_uri},
          {"description", r.description},
          {"word_count", r.word_count},
          {"flags", flags}};
}

CaptionRecord record_from_json(const nlohmann::json& j) {
  CaptionRecord r;
  r.id = j.at("id").get<std::string>();
  r.source = parse_source_kind(j.at("source").get<std::string>());
  r.image_uri = j.at("image_uri").get<std::string>();
  r.description = j.at("description").get<std::string>();
  r.word_count = j.at("word_count").get<std::size_t>();
  for (const auto& f : j.value("flags", nlohmann::json::array())) {
    auto name = f.get<std::string>();
    if (name == "image_ok") {
      r.flags.image_ok = true;
    } else if (name == "spatial_ok") {
      r.flags.spatial_ok = true;
    } else {
      throw Error("invalid_flag", name);
    }
  }
  return r;
}

std::string canonical_line(const CaptionRecord& record) { return record_to_json(record).dump(); }

namespace {

std::vector<const CaptionRecord*> sorted_unique(std::span<const CaptionRecord> records) {
  std::vector<const CaptionRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::set<std::string> dups;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->id == sorted[i - 1]->id) dups.insert(sorted[i]->id);
  }
  if (!dups.empty()) {
    std::string list;
    for (const auto& d : dups) list += (list.empty() ? "" : ", ") + d;
    throw Error("duplicate_id", list);
  }
  return sorted;
}

}  // namespace

Manifest compute_manifest(std::span<const CaptionRecord> records, std::string corpus_path) {
  std::ostringstream sink;
  return write_records(records, sink, std::move(corpus_path));
}

Manifest write_records(std::span<const CaptionRecord> records, std::ostream& out, std::string corpus_path) {
  auto sorted = sorted_unique(records);
  Manifest m;
  m.corpus_path = std::move(corpus_path);
  std::string body;
  for (const auto* r : sorted) {
    body += canonical_line(*r);
    body += '\n';
    ++m.per_source_counts[r->source];
  }
  m.record_count = sorted.size();
  m.content_digest = text::sha256_hex(body);
  out << body;
  if (!out) throw Error("io_error", "write failed");
  return m;
}

std::vector<CaptionRecord> read_corpus(std::istream& in) {
  if (!in) throw Error("io_error", "corpus stream is not readable");
  std::vector<CaptionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error("invalid_corpus", "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<CaptionRecord> read_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  return read_corpus(in);
}

Manifest write_corpus_file(const std::filesystem::path& path, std::span<const CaptionRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot open " + path.string());
  return write_records(records, out, path.string());
}

}  // namespace forge
