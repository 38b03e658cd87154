#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace forge {

enum class SourceKind { DOCCI, LocalizedNarratives, PixMoCap, Custom };

inline constexpr SourceKind kAllSources[] = {SourceKind::DOCCI, SourceKind::LocalizedNarratives,
                                             SourceKind::PixMoCap, SourceKind::Custom};

/// Short wire name: "docci", "ln", "pixmo", "custom".
std::string_view to_string(SourceKind kind);
/// Display name used in report tables ("DOCCI", "LN", "PixMo-Cap", "Custom").
std::string_view display_name(SourceKind kind);
/// Accepts the short wire names and the long enumerator names, case-insensitively.
SourceKind parse_source_kind(std::string_view name);

struct RecordFlags {
  bool image_ok = false;
  bool spatial_ok = false;

  friend bool operator==(const RecordFlags&, const RecordFlags&) = default;
};

struct CaptionRecord {
  std::string id;
  SourceKind source = SourceKind::Custom;
  std::string image_uri;
  std::string description;  // NFC, trimmed
  std::size_t word_count = 0;
  RecordFlags flags;

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

/// Builds a normalized record. Throws forge::Error with code "empty_id",
/// "empty_image_uri", "empty_description" or "invalid_utf8".
CaptionRecord make_record(std::string id, SourceKind source, std::string image_uri,
                          std::string_view description);

struct Manifest {
  std::string corpus_path;
  std::size_t record_count = 0;
  std::map<SourceKind, std::size_t> per_source_counts;
  std::string content_digest;

  nlohmann::ordered_json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

struct Rejection {
  std::size_t line = 0;  // 1-based
  std::string reason;
  std::string detail;
};

struct IngestResult {
  std::vector<CaptionRecord> records;
  std::vector<Rejection> rejections;
  std::size_t lines_read = 0;
  Manifest manifest;

  std::map<std::string, std::size_t> rejection_counts() const;
};

/// Streams JSONL in the native field layout of `source` (the canonical corpus
/// layout is also accepted). Every line ends up either as a record or as a
/// tallied rejection. Throws forge::Error("io_error") if the stream fails.
IngestResult ingest_records(std::istream& in, SourceKind source);

nlohmann::ordered_json record_to_json(const CaptionRecord& record);
CaptionRecord record_from_json(const nlohmann::json& j);
/// One canonical JSONL line, without the trailing newline.
std::string canonical_line(const CaptionRecord& record);

/// Computes the manifest the writer would produce, without writing.
Manifest compute_manifest(std::span<const CaptionRecord> records, std::string corpus_path = {});

/// Writes records sorted by id, one canonical line each. Throws
/// forge::Error("duplicate_id") listing offenders before writing anything.
Manifest write_records(std::span<const CaptionRecord> records, std::ostream& out,
                       std::string corpus_path = {});

/// Reads a canonical corpus file; strict (throws on any bad line).
std::vector<CaptionRecord> read_corpus(std::istream& in);
std::vector<CaptionRecord> read_corpus_file(const std::filesystem::path& path);
Manifest write_corpus_file(const std::filesystem::path& path, std::span<const CaptionRecord> records);

}  // namespace forge
