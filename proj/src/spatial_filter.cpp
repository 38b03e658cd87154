#include "forge/spatial_filter.hpp"

#include "forge/concurrency.hpp"
#include "forge/error.hpp"

namespace forge {

nlohmann::ordered_json verdict_to_json(const SpatialVerdict& v) {
  return {{"record_id", v.record_id},
          {"is_spatial", v.is_spatial},
          {"needs_review", v.needs_review},
          {"raw_response", v.raw_response}};
}

SpatialVerdict verdict_from_json(const nlohmann::json& j) {
  return {j.at("record_id").get<std::string>(), j.at("is_spatial").get<bool>(), j.at("needs_review").get<bool>(),
          j.at("raw_response").get<std::string>()};
}

SpatialVerdict classify_description(const CaptionRecord& record, ModelGateway& gateway, const PromptSet& prompts) {
  ChatRequest req;
  req.prompt = prompts.spatial_check_prompt(record.description);
  req.temperature = 0.0;
  req.response_hint = ResponseHint::yes_no;
  auto resp = gateway.complete_chat(req);

  SpatialVerdict v{record.id, false, false, resp.text};
  try {
    v.is_spatial = classify_yes_no(resp.text);
  } catch (const Error& e) {
    if (e.code() != "unparseable_verdict") throw;
    v.needs_review = true;
  }
  return v;
}

std::vector<SpatialVerdict> classify_records(std::span<const CaptionRecord> records, ModelGateway& gateway,
                                             const PromptSet& prompts, std::size_t in_flight) {
  return ordered_parallel_map(records, in_flight,
                              [&](const CaptionRecord& r) { return classify_description(r, gateway, prompts); });
}

FilterResult apply_verdicts(std::span<const CaptionRecord> records, std::vector<SpatialVerdict> verdicts) {
  if (records.size() != verdicts.size()) throw Error("internal", "verdict count does not match record count");
  FilterResult out;
  out.report.stage = "prefilter";
  out.report.input = records.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& v = verdicts[i];
    CaptionRecord rec = records[i];
    if (v.needs_review) {
      out.needs_review.push_back(std::move(rec));
      ++out.report.errored;
      ++out.report.reasons["needs_review"];
    } else if (v.is_spatial) {
      rec.flags.spatial_ok = true;
      out.kept.push_back(std::move(rec));
      ++out.report.kept;
    } else {
      rec.flags.spatial_ok = false;
      out.dropped.push_back(std::move(rec));
      ++out.report.dropped;
      ++out.report.reasons["not_spatial"];
    }
  }
  out.verdicts = std::move(verdicts);
  return out;
}

FilterResult filter_corpus(std::span<const CaptionRecord> records, ModelGateway& gateway, const PromptSet& prompts,
                           std::size_t in_flight) {
  return apply_verdicts(records, classify_records(records, gateway, prompts, in_flight));
}

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0 ? 2.0 * precision * recall / denom : 0.0;
}

ClassifierMetrics metrics_from_confusion(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  ClassifierMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  m.support = tp + fp + tn + fn;
  auto ratio = [](std::size_t num, std::size_t den) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };
  m.accuracy = ratio(tp + tn, m.support);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

ClassifierMetrics classifier_metrics(const std::map<std::string, bool>& gold,
                                     const std::map<std::string, bool>& predicted) {
  if (gold.size() != predicted.size()) throw Error("label_mismatch", "gold and predicted cover different ids");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  auto g = gold.begin();
  auto p = predicted.begin();
  for (; g != gold.end(); ++g, ++p) {
    if (g->first != p->first) throw Error("label_mismatch", "id '" + g->first + "' vs '" + p->first + "'");
    if (g->second && p->second) {
      ++tp;
    } else if (!g->second && p->second) {
      ++fp;
    } else if (!g->second && !p->second) {
      ++tn;
    } else {
      ++fn;
    }
  }
  return metrics_from_confusion(tp, fp, tn, fn);
}

}  // namespace forge
