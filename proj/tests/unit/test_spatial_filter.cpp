#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "forge/error.hpp"
#include "forge/spatial_filter.hpp"
#include "testkit.hpp"

using namespace forge;
using testkit::reply;

namespace {

std::vector<CaptionRecord> make_corpus(const std::vector<std::pair<SourceKind, int>>& sizes) {
  std::vector<CaptionRecord> out;
  int n = 0;
  for (auto [kind, count] : sizes) {
    for (int i = 0; i < count; ++i, ++n) {
      char id[16];
      std::snprintf(id, sizeof id, "s%05d", n);
      out.push_back(make_record(id, kind, "img.jpg", "description number " + std::to_string(n)));
    }
  }
  return out;
}

// Answers by the record number embedded at the end of the prompt's description.
std::shared_ptr<ModelGateway> by_number(std::function<std::string(int)> answer) {
  return testkit::scripted_gateway([answer](const ChatRequest& r) {
    auto pos = r.prompt.find("description number ");
    int n = std::stoi(r.prompt.substr(pos + 19));
    return reply(answer(n));
  });
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace

TEST(Classify, YesNo) {
  auto rec = make_record("a", SourceKind::Custom, "u", "a cup left of a plate");
  std::string answer = "Yes";
  ChatRequest seen;
  auto gw = testkit::scripted_gateway([&](const ChatRequest& r) {
    seen = r;
    return reply(answer);
  });
  EXPECT_TRUE(classify_description(rec, *gw).is_spatial);
  EXPECT_EQ(seen.temperature, 0.0);
  EXPECT_NE(seen.prompt.find("a cup left of a plate"), std::string::npos);
  EXPECT_EQ(seen.prompt, PromptSet::builtin().spatial_check_prompt(rec.description));
  answer = "No.";
  auto v = classify_description(rec, *gw);
  EXPECT_FALSE(v.is_spatial);
  EXPECT_FALSE(v.needs_review);
  EXPECT_EQ(v.raw_response, "No.");
  answer = "Hard to tell";
  v = classify_description(rec, *gw);
  EXPECT_TRUE(v.needs_review);
  EXPECT_FALSE(v.is_spatial);
}

TEST(Filter, FiftySevenOfHundred) {
  auto recs = make_corpus({{SourceKind::DOCCI, 100}});
  auto gw = by_number([](int n) { return n < 57 ? "Yes." : "No."; });
  auto res = filter_corpus(recs, *gw, PromptSet::builtin(), 8);
  EXPECT_EQ(res.kept.size(), 57u);
  EXPECT_EQ(res.report.kept, 57u);
  EXPECT_EQ(res.report.dropped, 43u);
  EXPECT_EQ(res.report.reasons.at("not_spatial"), 43u);
  for (const auto& r : res.kept) EXPECT_TRUE(r.flags.spatial_ok);
  EXPECT_TRUE(res.report.balanced());
}

TEST(Filter, AllYesKeepsEverything) {
  auto recs = make_corpus({{SourceKind::Custom, 30}});
  auto res = filter_corpus(recs, *by_number([](int) { return "yes"; }));
  EXPECT_EQ(res.kept.size(), recs.size());
  EXPECT_EQ(res.report.dropped, 0u);
}

TEST(Filter, TableOneShapedKeepRates) {
  auto recs = make_corpus({{SourceKind::DOCCI, 15}, {SourceKind::LocalizedNarratives, 849}, {SourceKind::PixMoCap, 717}});
  // Keep the first 10 / 232 / 214 of each source.
  auto gw = by_number([](int n) {
    if (n < 15) return n < 10 ? "Yes" : "No";
    if (n < 15 + 849) return n - 15 < 232 ? "Yes" : "No";
    return n - 15 - 849 < 214 ? "Yes" : "No";
  });
  auto res = filter_corpus(recs, *gw, PromptSet::builtin(), 16);
  std::map<SourceKind, int> kept;
  for (const auto& r : res.kept) ++kept[r.source];
  EXPECT_EQ(kept[SourceKind::DOCCI], 10);
  EXPECT_EQ(kept[SourceKind::LocalizedNarratives], 232);
  EXPECT_EQ(kept[SourceKind::PixMoCap], 214);
  EXPECT_EQ(res.report.input, 1581u);
}

TEST(Filter, PartitionAndDeterminism) {
  auto recs = make_corpus({{SourceKind::PixMoCap, 200}});
  auto gw = by_number([](int n) { return n % 3 == 0 ? "Yes" : n % 3 == 1 ? "No" : "unclear"; });
  auto a = filter_corpus(recs, *gw, PromptSet::builtin(), 7);
  auto b = filter_corpus(recs, *gw, PromptSet::builtin(), 3);
  EXPECT_EQ(a.kept, b.kept);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.kept.size() + a.dropped.size() + a.needs_review.size(), recs.size());
  EXPECT_EQ(a.report.errored, a.needs_review.size());
  EXPECT_EQ(a.report.reasons.at("needs_review"), a.needs_review.size());
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(a.verdicts[i].record_id, recs[i].id);
}

TEST(Filter, ServiceFailurePropagates) {
  auto recs = make_corpus({{SourceKind::Custom, 5}});
  auto gw = testkit::scripted_gateway([](const ChatRequest&) -> ChatResponse { throw TransientError("timeout", "x"); });
  EXPECT_THROW(filter_corpus(recs, *gw), Error);
}

TEST(Verdict, JsonRoundTrip) {
  SpatialVerdict v{"r1", true, false, "Yes!"};
  EXPECT_EQ(verdict_from_json(verdict_to_json(v)), v);
}

TEST(Metrics, TableTenRows) {
  EXPECT_DOUBLE_EQ(round2(f1_score(1.0, 0.20)), 0.33);
  EXPECT_NEAR(f1_score(1.0, 0.56), 0.72, 0.01);
  EXPECT_DOUBLE_EQ(round2(f1_score(1.0, 0.54)), 0.70);
  EXPECT_DOUBLE_EQ(round2(f1_score(1.0, 0.58)), 0.73);
  EXPECT_EQ(f1_score(0, 0), 0.0);
}

TEST(Metrics, PerfectPrediction) {
  std::map<std::string, bool> gold = {{"a", true}, {"b", false}, {"c", true}};
  auto m = classifier_metrics(gold, gold);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.support, 3u);
}

TEST(Metrics, LabelMismatch) {
  try {
    classifier_metrics({{"a", true}}, {{"b", true}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "label_mismatch");
  }
}

TEST(Metrics, MatchConfusionOracle) {
  std::mt19937 rng(123);
  for (int t = 0; t < 40; ++t) {
    std::size_t n = 1 + rng() % 10000;
    std::map<std::string, bool> gold, pred;
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool g = rng() % 2, p = rng() % 3 == 0;
      gold["i" + std::to_string(i)] = g;
      pred["i" + std::to_string(i)] = p;
      (g ? (p ? tp : fn) : (p ? fp : tn))++;
    }
    auto m = classifier_metrics(gold, pred);
    double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    EXPECT_EQ(m.tp, std::size_t(tp));
    EXPECT_EQ(m.fn, std::size_t(fn));
    EXPECT_NEAR(m.accuracy, double(tp + tn) / double(n), 1e-12);
    EXPECT_NEAR(m.precision, prec, 1e-12);
    EXPECT_NEAR(m.recall, rec, 1e-12);
    EXPECT_NEAR(m.f1, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0, 1e-12);
  }
}
