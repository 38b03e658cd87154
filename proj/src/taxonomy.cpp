#include "forge/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "forge/assets.hpp"
#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {

RelationTaxonomy::RelationTaxonomy(std::vector<SpatialRelation> relations)
    : relations_(std::move(relations)), root_(std::make_shared<Node>()) {
  std::set<std::string> names;
  std::map<std::string, std::string> owner;
  for (std::size_t i = 0; i < relations_.size(); ++i) {
    auto& rel = relations_[i];
    if (rel.name.empty()) throw Error("invalid_taxonomy", "relation with empty name");
    if (!names.insert(rel.name).second) throw Error("invalid_taxonomy", "duplicate relation name '" + rel.name + "'");
    if (rel.keywords.empty()) throw Error("invalid_taxonomy", "relation '" + rel.name + "' has no keywords");
    for (auto& kw : rel.keywords) {
      auto tokens = text::word_tokens(kw);
      if (tokens.empty()) throw Error("invalid_taxonomy", "empty keyword under '" + rel.name + "'");
      kw = text::join(tokens);
      auto [it, inserted] = owner.emplace(kw, rel.name);
      if (!inserted) {
        throw Error("invalid_taxonomy", "keyword '" + kw + "' claimed by '" + it->second + "' and '" + rel.name + "'");
      }
      Node* node = root_.get();
      for (const auto& tok : tokens) {
        auto& child = node->next[tok];
        if (!child) child = std::make_unique<Node>();
        node = child.get();
      }
      node->relation = static_cast<int>(i);
    }
  }
}

RelationTaxonomy RelationTaxonomy::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("relations") || !doc["relations"].is_array()) {
    throw Error("invalid_taxonomy", "expected {\"relations\": [...]}");
  }
  std::vector<SpatialRelation> rels;
  for (const auto& r : doc["relations"]) {
    SpatialRelation rel;
    try {
      rel.name = r.at("name").get<std::string>();
      auto g = r.value("granularity", std::string("coarse"));
      if (g == "coarse") {
        rel.granularity = Granularity::coarse;
      } else if (g == "fine") {
        rel.granularity = Granularity::fine;
      } else {
        throw Error("invalid_taxonomy", "granularity must be coarse or fine, got '" + g + "'");
      }
      rel.keywords = r.at("keywords").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error("invalid_taxonomy", e.what());
    }
    rels.push_back(std::move(rel));
  }
  return RelationTaxonomy(std::move(rels));
}

RelationTaxonomy RelationTaxonomy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open taxonomy " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("invalid_taxonomy", e.what());
  }
}

RelationTaxonomy RelationTaxonomy::builtin() { return from_json(nlohmann::json::parse(assets::default_taxonomy())); }

const SpatialRelation* RelationTaxonomy::find(std::string_view name) const {
  for (const auto& r : relations_) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::vector<std::string_view> RelationTaxonomy::match(std::string_view text_in) const {
  std::vector<std::string_view> hits;
  auto tokens = text::word_tokens(text_in);
  std::size_t i = 0;
  while (i < tokens.size()) {
    const Node* node = root_.get();
    int best = -1;
    std::size_t best_len = 0;
    for (std::size_t j = i; j < tokens.size(); ++j) {
      auto it = node->next.find(tokens[j]);
      if (it == node->next.end()) break;
      node = it->second.get();
      if (node->relation >= 0) {
        best = node->relation;
        best_len = j - i + 1;
      }
    }
    if (best >= 0) {
      hits.push_back(relations_[static_cast<std::size_t>(best)].name);
      i += best_len;
    } else {
      ++i;
    }
  }
  return hits;
}

std::map<std::string, std::size_t> match_relations(std::string_view text, const RelationTaxonomy& taxonomy) {
  std::map<std::string, std::size_t> out;
  for (auto name : taxonomy.match(text)) ++out[std::string(name)];
  return out;
}

std::size_t DatasetProfile::total_hits() const {
  std::size_t n = 0;
  for (const auto& [_, c] : per_relation_counts) n += c;
  return n;
}

void DatasetProfile::recompute_percent() {
  per_relation_percent.clear();
  const double total = static_cast<double>(total_hits());
  for (const auto& [name, c] : per_relation_counts) {
    per_relation_percent[name] = total > 0 ? 100.0 * static_cast<double>(c) / total : 0.0;
  }
}

DatasetProfile DatasetProfile::from_counts(const std::map<std::string, std::size_t>& counts) {
  DatasetProfile p;
  p.per_relation_counts = counts;
  p.recompute_percent();
  return p;
}

void DatasetProfile::merge(const DatasetProfile& other) {
  for (const auto& [name, c] : other.per_relation_counts) per_relation_counts[name] += c;
  total_records += other.total_records;
  spatial_record_count += other.spatial_record_count;
  for (const auto& [kind, b] : other.per_source) {
    auto& mine = per_source[kind];
    mine.records += b.records;
    mine.spatial_records += b.spatial_records;
    mine.hits += b.hits;
  }
  recompute_percent();
}

DatasetProfile profile_corpus(std::span<const CaptionRecord> records, const RelationTaxonomy& taxonomy) {
  DatasetProfile p;
  for (const auto& rel : taxonomy.relations()) p.per_relation_counts[rel.name] = 0;
  std::map<std::string_view, std::size_t*> slot;
  for (auto& [name, c] : p.per_relation_counts) slot[name] = &c;
  for (const auto& rec : records) {
    auto hits = taxonomy.match(rec.description);
    for (auto name : hits) ++*slot[name];
    auto& src = p.per_source[rec.source];
    ++src.records;
    src.hits += hits.size();
    if (!hits.empty()) {
      ++src.spatial_records;
      ++p.spatial_record_count;
    }
    ++p.total_records;
  }
  p.recompute_percent();
  return p;
}

namespace {

std::vector<std::pair<std::string, std::size_t>> ranked(const DatasetProfile& profile) {
  std::vector<std::pair<std::string, std::size_t>> v(profile.per_relation_counts.begin(),
                                                     profile.per_relation_counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return v;
}

}  // namespace

double head_coverage(const DatasetProfile& profile, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw Error("invalid_fraction", std::to_string(top_fraction));
  const std::size_t total = profile.total_hits();
  if (total == 0) throw Error("no_relation_hits");
  auto order = ranked(profile);
  // The epsilon keeps products like 0.17 * 100 = 17.000000000000004 from rounding up.
  auto take = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(order.size()) - 1e-9));
  take = std::clamp<std::size_t>(take, 1, order.size());
  std::size_t covered = 0;
  for (std::size_t i = 0; i < take; ++i) covered += order[i].second;
  return 100.0 * static_cast<double>(covered) / static_cast<double>(total);
}

nlohmann::ordered_json profile_report(const DatasetProfile& profile, const RelationTaxonomy& taxonomy,
                                      double head_fraction) {
  nlohmann::ordered_json rels = nlohmann::ordered_json::array();
  for (const auto& [name, count] : ranked(profile)) {
    const auto* rel = taxonomy.find(name);
    auto pct = profile.per_relation_percent.at(name);
    rels.push_back({{"relation", name},
                    {"granularity", rel && rel->granularity == Granularity::fine ? "fine" : "coarse"},
                    {"count", count},
                    {"percent", std::round(pct * 100.0) / 100.0}});
  }
  const double total_hits = static_cast<double>(profile.total_hits());
  nlohmann::ordered_json sources = nlohmann::ordered_json::array();
  for (const auto& [kind, b] : profile.per_source) {
    sources.push_back({{"source", std::string(display_name(kind))},
                       {"records", b.records},
                       {"spatial_records", b.spatial_records},
                       {"hits", b.hits},
                       {"percent", total_hits > 0 ? std::round(10000.0 * b.hits / total_hits) / 100.0 : 0.0}});
  }
  nlohmann::ordered_json doc = {{"total_records", profile.total_records},
                                {"spatial_records", profile.spatial_record_count},
                                {"total_hits", profile.total_hits()},
                                {"relations", rels},
                                {"sources", sources}};
  if (profile.total_hits() > 0) {
    doc["head_coverage"] = {{"top_fraction", head_fraction},
                            {"percent", std::round(head_coverage(profile, head_fraction) * 100.0) / 100.0}};
  }
  return doc;
}

}  // namespace forge
