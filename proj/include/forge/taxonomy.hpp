#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "forge/corpus.hpp"
#include "json.hpp"

namespace forge {

enum class Granularity { coarse, fine };

struct SpatialRelation {
  std::string name;
  std::vector<std::string> keywords;  // lowercase; multiword phrases allowed
  Granularity granularity = Granularity::coarse;
};

/// Validated relation lexicon with a token trie for longest-match lookup.
class RelationTaxonomy {
 public:
  /// Throws forge::Error("invalid_taxonomy") on empty keyword sets, duplicate
  /// relation names, or a keyword claimed by two relations.
  explicit RelationTaxonomy(std::vector<SpatialRelation> relations);

  static RelationTaxonomy from_json(const nlohmann::json& doc);
  static RelationTaxonomy load(const std::filesystem::path& path);
  /// The lexicon shipped in assets/taxonomy.json.
  static RelationTaxonomy builtin();

  const std::vector<SpatialRelation>& relations() const { return relations_; }
  const SpatialRelation* find(std::string_view name) const;

  /// Relation name per hit, in text order. Case-insensitive, on word
  /// boundaries, non-overlapping, longest keyword wins at each position.
  std::vector<std::string_view> match(std::string_view text) const;

 private:
  struct Node {
    std::unordered_map<std::string, std::unique_ptr<Node>> next;
    int relation = -1;
  };

  std::vector<SpatialRelation> relations_;
  std::shared_ptr<Node> root_;
};

/// Multiset of matched relation names as name -> count.
std::map<std::string, std::size_t> match_relations(std::string_view text, const RelationTaxonomy& taxonomy);

struct SourceBreakdown {
  std::size_t records = 0;
  std::size_t spatial_records = 0;  // records with at least one hit
  std::size_t hits = 0;
};

struct DatasetProfile {
  std::map<std::string, std::size_t> per_relation_counts;
  std::size_t total_records = 0;
  std::size_t spatial_record_count = 0;
  std::map<std::string, double> per_relation_percent;
  std::map<SourceKind, SourceBreakdown> per_source;

  std::size_t total_hits() const;

  /// Builds a profile from raw counts (percentages recomputed on total hits).
  static DatasetProfile from_counts(const std::map<std::string, std::size_t>& counts);
  /// Commutative, associative merge of two shard profiles.
  void merge(const DatasetProfile& other);
  void recompute_percent();
};

DatasetProfile profile_corpus(std::span<const CaptionRecord> records, const RelationTaxonomy& taxonomy);

/// Share of hits (percent) held by the ceil(top_fraction * relations) most
/// frequent relations; ties broken by name. Throws forge::Error("no_relation_hits")
/// on an empty profile and forge::Error("invalid_fraction") outside (0, 1].
double head_coverage(const DatasetProfile& profile, double top_fraction);

/// Report document: relation table, per-source table and head coverage.
nlohmann::ordered_json profile_report(const DatasetProfile& profile, const RelationTaxonomy& taxonomy,
                                      double head_fraction = 0.17);

}  // namespace forge
