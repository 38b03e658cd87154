#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "forge/assets.hpp"
#include "forge/error.hpp"
#include "forge/qa_generation.hpp"
#include "testkit.hpp"

using namespace forge;
using testkit::reply;

namespace {

CaptionRecord spatial_record(std::string id = "r1", std::string desc = "a mug left of a lamp") {
  auto r = make_record(std::move(id), SourceKind::Custom, "img.jpg", desc);
  r.flags.spatial_ok = true;
  return r;
}

std::string pairs_json(int n) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < n; ++i) arr.push_back({{"question", "Q" + std::to_string(i) + "?"}, {"answer", "A" + std::to_string(i)}});
  return arr.dump();
}

}  // namespace

TEST(Prompt, DescriptionAtTheEnd) {
  auto p = build_generation_prompt("X");
  auto pos = p.rfind("Image description: X");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LE(p.size() - pos, std::string("Image description: X").size() + 1);
  EXPECT_EQ(p.substr(0, pos), std::string(assets::qa_generation_prompt()).substr(0, pos));
}

TEST(Prompt, EmptyDescriptionRejected) {
  EXPECT_THROW(build_generation_prompt(""), Error);
  EXPECT_THROW(build_generation_prompt("  \n"), Error);
}

TEST(Prompt, OnlySubstitutedSpanDiffers) {
  auto a = build_generation_prompt("alpha");
  auto b = build_generation_prompt("beta gamma");
  auto tmpl = std::string(assets::qa_generation_prompt());
  auto slot = tmpl.find("{description}");
  EXPECT_EQ(a.substr(0, slot), b.substr(0, slot));
  EXPECT_EQ(a.substr(slot + 5), b.substr(slot + 10));
}

TEST(Prompt, PlaceholderInDescriptionStaysLiteral) {
  auto p = build_generation_prompt("see {description} here");
  EXPECT_NE(p.find("Image description: see {description} here"), std::string::npos);
  EXPECT_THROW(fill_template("no slot", "x"), Error);
  EXPECT_THROW(fill_template("{description}{description}", "x"), Error);
}

TEST(Prompt, LoadFromDirectory) {
  testkit::TempDir dir;
  testkit::write_file(dir / "spatial_check.txt", "S {description}");
  testkit::write_file(dir / "qa_generation.txt", "G {description}");
  auto ps = PromptSet::load(dir.path());
  EXPECT_EQ(ps.generation_prompt("d"), "G d");
  EXPECT_EQ(ps.pair_check_prompt("q", "a"), "S Q: q A: a");
  EXPECT_NE(ps.digests()["spatial_check"], PromptSet::builtin().digests()["spatial_check"]);
  testkit::write_file(dir / "qa_generation.txt", "no slot");
  EXPECT_THROW(PromptSet::load(dir.path()), Error);
}

TEST(Generate, SeventeenPairs) {
  ChatRequest seen;
  auto gw = testkit::scripted_gateway([&](const ChatRequest& r) {
    seen = r;
    return reply(pairs_json(17));
  });
  auto out = generate_pairs(spatial_record(), *gw);
  ASSERT_EQ(out.pairs.size(), 17u);
  EXPECT_FALSE(out.parse_failed);
  EXPECT_EQ(out.chat_calls, 1);
  for (std::size_t i = 0; i < 17; ++i) {
    EXPECT_EQ(out.pairs[i].ordinal, i);
    EXPECT_EQ(out.pairs[i].pair_id, "r1#" + std::to_string(i));
    EXPECT_EQ(out.pairs[i].final_status, PairStatus::pending);
    EXPECT_EQ(out.pairs[i].question, "Q" + std::to_string(i) + "?");
  }
  EXPECT_EQ(seen.temperature, 0.0);
  EXPECT_EQ(seen.max_new_tokens, 8192);
  EXPECT_EQ(seen.prompt, build_generation_prompt("a mug left of a lamp"));
}

TEST(Generate, EmptyArrayIsNotFailure) {
  auto gw = testkit::scripted_gateway([](const ChatRequest&) { return reply("[]"); });
  auto out = generate_pairs(spatial_record(), *gw);
  EXPECT_TRUE(out.pairs.empty());
  EXPECT_FALSE(out.parse_failed);
  auto rep = generation_report(std::vector{out});
  EXPECT_EQ(rep.kept, 1u);
  EXPECT_EQ(rep.reasons.at("empty_list"), 1u);
}

TEST(Generate, ProseIsParseFailureAfterOneRetry) {
  int calls = 0;
  auto gw = testkit::scripted_gateway([&](const ChatRequest&) {
    ++calls;
    return reply("I'm sorry, I cannot do that.");
  });
  auto out = generate_pairs(spatial_record(), *gw);
  EXPECT_TRUE(out.parse_failed);
  EXPECT_TRUE(out.pairs.empty());
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(out.error, "no_json_array");
  auto stats = generation_stats(std::vector{out});
  EXPECT_EQ(stats.parse_failures, 1u);
  auto rep = generation_report(std::vector{out});
  EXPECT_EQ(rep.errored, 1u);
  EXPECT_EQ(rep.reasons.at("parse_failure:no_json_array"), 1u);
}

TEST(Generate, RetryRecovers) {
  int calls = 0;
  auto gw = testkit::scripted_gateway([&](const ChatRequest&) { return reply(++calls == 1 ? "oops [" : pairs_json(2)); });
  auto out = generate_pairs(spatial_record(), *gw);
  EXPECT_FALSE(out.parse_failed);
  EXPECT_EQ(out.pairs.size(), 2u);
  EXPECT_EQ(out.chat_calls, 2);
}

TEST(Generate, TruncatedTailDropped) {
  auto gw = testkit::scripted_gateway([](const ChatRequest&) {
    return reply(R"([{"question":"a?","answer":"b"},{"question":"c?","answer":"d"},{"question":"e)", FinishReason::length);
  });
  auto out = generate_pairs(spatial_record(), *gw);
  EXPECT_EQ(out.pairs.size(), 2u);
  EXPECT_EQ(out.truncated_pairs, 1u);
  EXPECT_EQ(generation_report(std::vector{out}).reasons.at("truncated_pair"), 1u);
}

TEST(Generate, ExtraFieldsIgnoredAndTrimmed) {
  auto gw = testkit::scripted_gateway(
      [](const ChatRequest&) { return reply(R"([{"question":"  Where?  ","answer":" left ","why":"x"}])"); });
  auto out = generate_pairs(spatial_record(), *gw);
  ASSERT_EQ(out.pairs.size(), 1u);
  EXPECT_EQ(out.pairs[0].question, "Where?");
  EXPECT_EQ(out.pairs[0].answer, "left");
}

TEST(Generate, MalformedElementFailsWholeReply) {
  auto gw = testkit::scripted_gateway([](const ChatRequest&) { return reply(R"([{"question":"a?","answer":"b"},{"q":1}])"); });
  auto out = generate_pairs(spatial_record(), *gw);
  EXPECT_TRUE(out.parse_failed);
  EXPECT_EQ(out.error, "malformed_pair");
}

TEST(Generate, RequiresSpatialFlag) {
  auto gw = testkit::scripted_gateway([](const ChatRequest&) { return reply("[]"); });
  auto r = spatial_record();
  r.flags.spatial_ok = false;
  EXPECT_THROW(generate_pairs(r, *gw), Error);
}

TEST(Generate, IdempotentAndUniqueIds) {
  std::vector<CaptionRecord> recs;
  for (int i = 0; i < 30; ++i) recs.push_back(spatial_record("r" + std::to_string(i), "desc " + std::to_string(i)));
  auto gw = testkit::scripted_gateway([](const ChatRequest& r) { return reply(pairs_json(static_cast<int>(r.prompt.size() % 5))); });
  auto a = generate_all(recs, *gw, PromptSet::builtin(), 6);
  auto b = generate_all(recs, *gw, PromptSet::builtin(), 2);
  std::set<std::string> ids;
  std::size_t total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].pairs, b[i].pairs);
    EXPECT_EQ(a[i].record_id, recs[i].id);
    for (const auto& p : a[i].pairs) ids.insert(p.pair_id);
    total += a[i].pairs.size();
  }
  EXPECT_EQ(ids.size(), total);
  auto s = generation_stats(a);
  std::size_t ok = 0;
  for (const auto& o : a) ok += o.parse_failed ? 0 : 1;
  EXPECT_EQ(s.records_processed, ok + s.parse_failures);
}

TEST(Stats, Examples) {
  std::vector<GenerationOutcome> outs(455);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    std::size_t n = 3372 / 455 + (i < 3372 % 455 ? 1 : 0);
    for (std::size_t k = 0; k < n; ++k) outs[i].pairs.push_back(make_pair("r" + std::to_string(i), k, "q", "a"));
  }
  auto s = generation_stats(outs);
  EXPECT_EQ(s.pairs_generated, 3372u);
  EXPECT_DOUBLE_EQ(std::round(s.mean_pairs_per_record * 100) / 100, 7.41);

  auto z = generation_stats(std::vector<GenerationOutcome>{});
  EXPECT_EQ(z.records_processed, 0u);
  EXPECT_EQ(z.mean_pairs_per_record, 0.0);
  EXPECT_FALSE(z.mean_defined);

  std::vector<GenerationOutcome> ten(10);
  for (auto& o : ten) o.pairs.resize(3);
  EXPECT_DOUBLE_EQ(generation_stats(ten).mean_pairs_per_record, 3.0);
}

TEST(Pairs, JsonlSchemaAndRoundTrip) {
  auto p = make_pair("rec", 4, "Where?", "Left.");
  EXPECT_EQ(pair_to_json(p).dump(),
            R"({"pair_id":"rec#4","record_id":"rec","question":"Where?","answer":"Left.","verdicts":{},"final_status":"pending"})");
  p.verdicts["dedup"] = CheckVerdict::pass;
  p.verdicts["availability"] = CheckVerdict::fail;
  p.final_status = PairStatus::rejected;
  p.reject_reason = "image_missing";
  std::stringstream ss;
  write_pairs(ss, std::vector{p});
  auto back = read_pairs(ss);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], p);
}

TEST(Pairs, CanonicalOrder) {
  std::vector<QAPair> v = {make_pair("b", 0, "q", "a"), make_pair("a", 10, "q", "a"), make_pair("a", 2, "q", "a")};
  sort_pairs(v);
  EXPECT_EQ(v[0].pair_id, "a#2");
  EXPECT_EQ(v[1].pair_id, "a#10");
  EXPECT_EQ(v[2].pair_id, "b#0");
}
