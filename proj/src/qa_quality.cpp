#include "forge/qa_quality.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "forge/assets.hpp"
#include "forge/concurrency.hpp"
#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {

void QualityConfig::validate() const {
  auto bad = [](const std::string& what) { return Error("invalid_config", what); };
  if (!(dedup_semantic_cutoff > 0.0 && dedup_semantic_cutoff <= 1.0)) throw bad("dedup_semantic_cutoff must be in (0,1]");
  if (!(clipscore_cutoff >= 0.0 && clipscore_cutoff <= kClipScoreWeight)) throw bad("clipscore_cutoff must be in [0,2.5]");
  if (!(answer_match_min_fraction > 0.0 && answer_match_min_fraction <= 1.0)) {
    throw bad("answer_match_min_fraction must be in (0,1]");
  }
  if (!(nonspatial_keep_fraction >= 0.0 && nonspatial_keep_fraction <= 1.0)) {
    throw bad("nonspatial_keep_fraction must be in [0,1]");
  }
}

nlohmann::ordered_json QualityConfig::to_json() const {
  return {{"dedup_semantic_cutoff", dedup_semantic_cutoff},
          {"clipscore_cutoff", clipscore_cutoff},
          {"reference_keywords", reference_keywords},
          {"answer_match_min_fraction", answer_match_min_fraction},
          {"nonspatial_keep_fraction", nonspatial_keep_fraction}};
}

QualityConfig QualityConfig::from_json(const nlohmann::json& j) {
  QualityConfig c;
  try {
    c.dedup_semantic_cutoff = j.value("dedup_semantic_cutoff", c.dedup_semantic_cutoff);
    c.clipscore_cutoff = j.value("clipscore_cutoff", c.clipscore_cutoff);
    if (j.contains("reference_keywords")) {
      c.reference_keywords.clear();
      for (const auto& k : j["reference_keywords"]) c.reference_keywords.insert(text::to_lower(k.get<std::string>()));
    }
    c.answer_match_min_fraction = j.value("answer_match_min_fraction", c.answer_match_min_fraction);
    c.nonspatial_keep_fraction = j.value("nonspatial_keep_fraction", c.nonspatial_keep_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_config", e.what());
  }
  c.validate();
  return c;
}

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = [] {
    std::unordered_set<std::string> s;
    for (auto w : text::split_whitespace(assets::stopwords())) s.insert(text::to_lower(w));
    return s;
  }();
  return words;
}

// Case and whitespace folded; punctuation kept.
std::string normalize_question(std::string_view q) {
  std::string out;
  for (auto w : text::split_whitespace(q)) {
    if (!out.empty()) out.push_back(' ');
    out.append(w);
  }
  return text::to_lower(out);
}

}  // namespace

std::vector<std::string> content_tokens(std::string_view s) {
  std::vector<std::string> out;
  for (auto& tok : text::word_tokens(s)) {
    if (!stopwords().contains(tok)) out.push_back(std::move(tok));
  }
  return out;
}

DedupResult dedup_pairs(std::span<const QAPair> pairs, ModelGateway& gateway, const QualityConfig& config) {
  DedupResult out;
  if (pairs.empty()) return out;
  for (const auto& p : pairs) {
    if (p.record_id != pairs.front().record_id) throw Error("precondition", "dedup group spans several records");
  }

  std::vector<QAPair> survivors;
  std::unordered_set<std::string> seen;
  for (const auto& p : pairs) {
    if (seen.insert(normalize_question(p.question)).second) {
      survivors.push_back(p);
    } else {
      out.rejected.emplace_back(p, "dup_exact");
    }
  }
  if (survivors.size() < 2) {
    out.kept = std::move(survivors);
    return out;
  }

  std::vector<std::vector<float>> embeddings;
  embeddings.reserve(survivors.size());
  try {
    for (const auto& p : survivors) embeddings.push_back(gateway.embed_text(p.question));
  } catch (const Error& e) {
    if (e.code() == "service_unavailable") throw;
    out.semantic_skipped = true;
    out.kept = std::move(survivors);
    return out;
  }

  std::vector<std::size_t> kept_idx;
  for (std::size_t i = 0; i < survivors.size(); ++i) {
    bool dup = false;
    for (std::size_t k : kept_idx) {
      if (cosine_similarity(embeddings[k], embeddings[i]) >= config.dedup_semantic_cutoff) {
        dup = true;
        break;
      }
    }
    if (dup) {
      out.rejected.emplace_back(survivors[i], "dup_semantic");
    } else {
      kept_idx.push_back(i);
    }
  }
  for (std::size_t k : kept_idx) out.kept.push_back(std::move(survivors[k]));
  // Rejections back in ordinal order so reports read naturally.
  std::sort(out.rejected.begin(), out.rejected.end(),
            [](const auto& a, const auto& b) { return a.first.ordinal < b.first.ordinal; });
  return out;
}

CheckResult reference_check(const QAPair& pair, const QualityConfig& config) {
  for (const auto* field : {&pair.question, &pair.answer}) {
    for (const auto& tok : text::word_tokens(*field)) {
      if (config.reference_keywords.contains(tok)) return {false, false, "references_description"};
    }
  }
  return {};
}

CheckResult answer_consistency(const QAPair& pair, std::string_view description, const QualityConfig& config) {
  auto answer = content_tokens(pair.answer);
  if (answer.empty()) return {};
  auto desc_tokens = text::word_tokens(description);
  std::unordered_set<std::string> desc(desc_tokens.begin(), desc_tokens.end());
  std::size_t matched = 0;
  for (const auto& tok : answer) matched += desc.contains(tok) ? 1 : 0;
  const double fraction = static_cast<double>(matched) / static_cast<double>(answer.size());
  if (fraction + 1e-12 >= config.answer_match_min_fraction) return {};
  return {false, false, "answer_not_grounded"};
}

CheckResult image_question_consistency(const QAPair& pair, std::string_view image_uri, ModelGateway& gateway,
                                       const QualityConfig& config) {
  try {
    auto score = gateway.cross_modal_score(image_uri, pair.question);
    if (score.value >= config.clipscore_cutoff) return {};
    return {false, false, "low_clipscore"};
  } catch (const Error& e) {
    if (e.code() == "service_unavailable") throw;
    return {false, true, "image_embed_failed"};
  }
}

bool nonspatial_admitted(const QAPair& pair, double fraction) {
  if (fraction <= 0.0) return false;
  constexpr std::uint64_t kBuckets = 1000;
  constexpr std::uint64_t kStride = 617;  // coprime with kBuckets
  const auto threshold = static_cast<std::uint64_t>(std::llround(fraction * kBuckets));
  const std::uint64_t bucket = (text::fnv1a64(pair.record_id) % kBuckets + kStride * (pair.ordinal % kBuckets)) % kBuckets;
  return bucket < threshold;
}

CheckResult verify_spatial(const QAPair& pair, ModelGateway& gateway, const QualityConfig& config,
                           const PromptSet& prompts) {
  ChatRequest req;
  req.prompt = prompts.pair_check_prompt(pair.question, pair.answer);
  req.temperature = 0.0;
  req.response_hint = ResponseHint::yes_no;
  auto resp = gateway.complete_chat(req);
  bool spatial = false;
  try {
    spatial = classify_yes_no(resp.text);
  } catch (const Error& e) {
    if (e.code() != "unparseable_verdict") throw;
    return {false, true, "unparseable_verdict"};
  }
  if (spatial) return {};
  if (nonspatial_admitted(pair, config.nonspatial_keep_fraction)) return {true, false, "admitted_nonspatial"};
  return {false, false, "not_spatial"};
}

namespace {

struct Tracker {
  std::vector<QAPair>& pairs;
  std::vector<bool> alive;
  std::vector<StageReport> reports;

  explicit Tracker(std::vector<QAPair>& p) : pairs(p), alive(p.size(), true) {}

  std::vector<std::size_t> pending() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (alive[i]) out.push_back(i);
    }
    return out;
  }

  StageReport& begin(std::string_view check, std::size_t input) {
    reports.push_back(StageReport{std::string(check), input, 0, 0, 0, {}});
    return reports.back();
  }

  void record(std::size_t i, std::string_view check, const CheckResult& r) {
    auto& rep = reports.back();
    auto& p = pairs[i];
    if (r.pass) {
      p.verdicts[std::string(check)] = CheckVerdict::pass;
      ++rep.kept;
      if (!r.reason.empty()) ++rep.reasons[r.reason];
      return;
    }
    p.verdicts[std::string(check)] = CheckVerdict::fail;
    p.final_status = PairStatus::rejected;
    p.reject_reason = r.reason;
    alive[i] = false;
    if (r.errored) {
      ++rep.errored;
    } else {
      ++rep.dropped;
    }
    ++rep.reasons[r.reason];
  }
};

}  // namespace

QualityResult run_quality_pipeline(std::vector<QAPair> pairs, std::span<const CaptionRecord> records,
                                   ModelGateway& gateway, const QualityConfig& config, const PromptSet& prompts,
                                   std::size_t in_flight) {
  config.validate();
  sort_pairs(pairs);
  for (auto& p : pairs) {
    p.verdicts.clear();
    for (auto check : kCheckOrder) p.verdicts[std::string(check)] = CheckVerdict::skipped;
    p.final_status = PairStatus::pending;
    p.reject_reason.clear();
  }
  std::unordered_map<std::string_view, const CaptionRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  auto record_of = [&](const QAPair& p) -> const CaptionRecord& {
    auto it = by_id.find(p.record_id);
    if (it == by_id.end()) throw Error("dangling_record", "pair " + p.pair_id + " has no record");
    return *it->second;
  };

  Tracker t(pairs);

  {
    auto idx = t.pending();
    t.begin(kCheckAvailability, idx.size());
    for (auto i : idx) {
      bool ok = record_of(pairs[i]).flags.image_ok;
      t.record(i, kCheckAvailability, ok ? CheckResult{} : CheckResult{false, false, "image_missing"});
    }
  }

  {
    auto idx = t.pending();
    auto& rep = t.begin(kCheckDedup, idx.size());
    std::vector<std::vector<std::size_t>> groups;
    for (auto i : idx) {
      if (groups.empty() || pairs[groups.back().front()].record_id != pairs[i].record_id) groups.emplace_back();
      groups.back().push_back(i);
    }
    auto results = ordered_parallel_map(groups, in_flight, [&](const std::vector<std::size_t>& g) {
      std::vector<QAPair> members;
      members.reserve(g.size());
      for (auto i : g) members.push_back(pairs[i]);
      return dedup_pairs(members, gateway, config);
    });
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& g = groups[gi];
      std::map<std::size_t, std::string> rejected;
      for (const auto& [p, why] : results[gi].rejected) rejected[p.ordinal] = why;
      if (results[gi].semantic_skipped) ++rep.reasons["semantic_skipped"];
      for (auto i : g) {
        auto it = rejected.find(pairs[i].ordinal);
        t.record(i, kCheckDedup, it == rejected.end() ? CheckResult{} : CheckResult{false, false, it->second});
      }
    }
  }

  {
    auto idx = t.pending();
    t.begin(kCheckReference, idx.size());
    for (auto i : idx) t.record(i, kCheckReference, reference_check(pairs[i], config));
  }

  {
    auto idx = t.pending();
    t.begin(kCheckAnswer, idx.size());
    for (auto i : idx) t.record(i, kCheckAnswer, answer_consistency(pairs[i], record_of(pairs[i]).description, config));
  }

  {
    auto idx = t.pending();
    t.begin(kCheckImage, idx.size());
    auto results = ordered_parallel_map(idx, in_flight, [&](std::size_t i) {
      return image_question_consistency(pairs[i], record_of(pairs[i]).image_uri, gateway, config);
    });
    for (std::size_t k = 0; k < idx.size(); ++k) t.record(idx[k], kCheckImage, results[k]);
  }

  {
    auto idx = t.pending();
    t.begin(kCheckSpatial, idx.size());
    auto results = ordered_parallel_map(
        idx, in_flight, [&](std::size_t i) { return verify_spatial(pairs[i], gateway, config, prompts); });
    for (std::size_t k = 0; k < idx.size(); ++k) t.record(idx[k], kCheckSpatial, results[k]);
  }

  QualityResult out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (t.alive[i]) {
      pairs[i].final_status = PairStatus::accepted;
      out.accepted.push_back(pairs[i]);
    }
  }
  out.reports = std::move(t.reports);
  out.pairs = std::move(pairs);
  return out;
}

}  // namespace forge
