#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "forge/error.hpp"
#include "forge/gateway.hpp"
#include "forge/gateway_http.hpp"
#include "httplib.h"
#include "testkit.hpp"

using namespace forge;
using testkit::reply;
using testkit::scripted_gateway;

namespace {

std::string code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

// Minimal HTTP stand-in whose handler the test scripts.
struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};

  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
    server.Post(".*", [this, fn](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      fn(req, res);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }
  EndpointConfig endpoint(std::string path = "/v1/x") const {
    EndpointConfig c;
    c.url = "http://127.0.0.1:" + std::to_string(port) + path;
    c.model = "m";
    c.timeout = std::chrono::milliseconds(3000);
    return c;
  }
};

}  // namespace

TEST(Chat, EchoRoundTrip) {
  auto gw = scripted_gateway([](const ChatRequest&) { return reply("Yes"); });
  auto r = gw->complete_chat({"hello"});
  EXPECT_EQ(r.text, "Yes");
  EXPECT_EQ(r.finish_reason, FinishReason::stop);
}

TEST(Chat, DefaultsMatchPipelineSettings) {
  ChatRequest r;
  EXPECT_EQ(r.temperature, 0.0);
  EXPECT_EQ(r.max_new_tokens, 8192);
}

TEST(Chat, RetriesTransientThenSucceeds) {
  int n = 0;
  std::vector<long> waits;
  auto opts = testkit::fast_options();
  opts.retry.initial_backoff = std::chrono::milliseconds(1000);
  opts.retry.sleeper = [&](std::chrono::milliseconds d) { waits.push_back(d.count()); };
  auto gw = scripted_gateway(
      [&](const ChatRequest&) {
        if (++n < 3) throw TransientError("timeout", "scripted");
        return reply("ok");
      },
      {}, {}, opts);
  EXPECT_EQ(gw->complete_chat({"p"}).text, "ok");
  auto led = gw->ledger();
  EXPECT_EQ(led.chat.calls, 1u);
  EXPECT_EQ(led.chat.attempts, 3u);
  EXPECT_EQ(led.chat.failures, 0u);
  EXPECT_EQ(waits, (std::vector<long>{1000, 2000}));
}

TEST(Chat, ExhaustionAfterExactlyThree) {
  int n = 0;
  auto gw = scripted_gateway([&](const ChatRequest&) -> ChatResponse {
    ++n;
    throw TransientError("http_503", "down");
  });
  EXPECT_EQ(code_of([&] { gw->complete_chat({"p"}); }), "service_unavailable");
  EXPECT_EQ(n, 3);
  EXPECT_EQ(gw->ledger().chat.failures, 1u);
}

TEST(Chat, ContentErrorsNotRetried) {
  int n = 0;
  auto gw = scripted_gateway([&](const ChatRequest&) -> ChatResponse {
    ++n;
    throw Error("bad_request", "400");
  });
  EXPECT_EQ(code_of([&] { gw->complete_chat({"p"}); }), "bad_request");
  EXPECT_EQ(n, 1);
  EXPECT_EQ(code_of([&] { gw->complete_chat({"p", -1.0}); }), "bad_request");
}

TEST(Chat, DeterministicUnderDeterministicMock) {
  auto run = [] {
    auto gw = scripted_gateway([](const ChatRequest& r) { return reply(std::to_string(r.prompt.size())); });
    std::vector<std::string> out;
    for (int i = 0; i < 20; ++i) out.push_back(gw->complete_chat({std::string(static_cast<std::size_t>(i), 'x')}).text);
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(YesNo, Examples) {
  EXPECT_TRUE(classify_yes_no("Yes, the description contains a spatial relation."));
  EXPECT_FALSE(classify_yes_no("no"));
  EXPECT_FALSE(classify_yes_no("The answer is: NO."));
  EXPECT_TRUE(classify_yes_no("**TRUE**"));
  EXPECT_FALSE(classify_yes_no("False; yes would be wrong"));
  EXPECT_TRUE(classify_yes_no("Well... yes-ish"));
  EXPECT_EQ(code_of([] { classify_yes_no("Hmm, hard to say."); }), "unparseable_verdict");
  EXPECT_EQ(code_of([] { classify_yes_no("nothing notable, yesterday"); }), "unparseable_verdict");
}

TEST(Extract, Examples) {
  EXPECT_TRUE(extract_json_array("[]").empty());
  auto fenced = extract_json_array("```json\n[{\"question\":\"Q\",\"answer\":\"A\"}]\n```");
  ASSERT_EQ(fenced.size(), 1u);
  EXPECT_EQ(fenced[0], (QuestionAnswer{"Q", "A"}));
  auto nested = extract_json_array(
      "Sure! [ {\"question\":\"Where is the [red] box?\",\"answer\":\"left\"} ] hope this helps");
  ASSERT_EQ(nested.size(), 1u);
  EXPECT_EQ(nested[0].question, "Where is the [red] box?");
}

TEST(Extract, Errors) {
  EXPECT_EQ(code_of([] { extract_json_array("no array here"); }), "no_json_array");
  EXPECT_EQ(code_of([] { extract_json_array("[{\"question\":\"Q\""); }), "no_json_array");
  EXPECT_EQ(code_of([] { extract_json_array("[1, 2,]"); }), "invalid_json");
  EXPECT_EQ(code_of([] { extract_json_array("[{\"question\":\"Q\"}]"); }), "malformed_pair");
  EXPECT_EQ(code_of([] { extract_json_array("[{\"question\":\"\",\"answer\":\"A\"}]"); }), "malformed_pair");
  EXPECT_EQ(code_of([] { extract_json_array("[{\"question\":\"Q\",\"answer\":3}]"); }), "malformed_pair");
  try {
    extract_json_array("[{\"question\":\"Q\",\"answer\":\"A\"}, {\"answer\":\"A\"}]");
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("element 1"), std::string::npos);
  }
}

TEST(Extract, SkipsLeadingBracketNoise) {
  auto r = extract_json_array("Pairs for [image 3]:\n[{\"question\":\"Q\",\"answer\":\"A\"}]");
  ASSERT_EQ(r.size(), 1u);
}

TEST(Extract, RoundTripWithBracketsAndQuotes) {
  std::mt19937 rng(42);
  const std::string alphabet = "ab []{}\"\\,:'x\n\t";
  auto rand_str = [&] {
    std::string s = "q";
    int len = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < len; ++i) s += rng() % 10 == 0 ? std::string("\xC3\xA9") : std::string(1, alphabet[rng() % alphabet.size()]);
    return s + "z";
  };
  for (int t = 0; t < 500; ++t) {
    std::vector<QuestionAnswer> pairs;
    nlohmann::json arr = nlohmann::json::array();
    int n = static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      QuestionAnswer qa{rand_str(), rand_str()};
      arr.push_back({{"question", qa.question}, {"answer", qa.answer}});
      pairs.push_back(qa);
    }
    std::string dumped = arr.dump();
    auto back = extract_json_array("Here you go:\n" + dumped + "\nDone [ok]");
    ASSERT_EQ(back, pairs) << dumped;
  }
}

TEST(Extract, PrefixSalvage) {
  auto p = extract_json_array_prefix("[{\"question\":\"a\",\"answer\":\"b\"}, {\"question\":\"c\",\"answer\":\"d\"}, {\"question\":\"e");
  ASSERT_EQ(p.pairs.size(), 2u);
  EXPECT_EQ(p.truncated_elements, 1u);
  auto whole = extract_json_array_prefix("[{\"question\":\"a\",\"answer\":\"b\"}]");
  EXPECT_EQ(whole.pairs.size(), 1u);
  EXPECT_EQ(whole.truncated_elements, 0u);
  EXPECT_EQ(code_of([] { extract_json_array_prefix("nothing"); }), "no_json_array");
}

TEST(Embed, UnitNormAndIdentity) {
  auto gw = scripted_gateway({}, [](std::string_view t) { return testkit::hashed_vector(t); });
  auto a = gw->embed_text("the cup");
  auto b = gw->embed_text("the cup");
  double norm = 0;
  for (float x : a) norm += double(x) * x;
  EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-6);
  EXPECT_NEAR(cosine_similarity(a, b), 1.0, 1e-6);
}

TEST(Embed, Orthogonal) {
  auto gw = scripted_gateway({}, [](std::string_view t) {
    return t == "x" ? std::vector<float>{3, 0, 0} : std::vector<float>{0, 0.5f, 0};
  });
  EXPECT_NEAR(cosine_similarity(gw->embed_text("x"), gw->embed_text("y")), 0.0, 1e-9);
}

TEST(Embed, DimensionMismatchAndZero) {
  auto opts = testkit::fast_options();
  opts.embedding_dim = 4;
  auto gw = scripted_gateway({}, [](std::string_view) { return std::vector<float>{1, 2, 3}; }, {}, opts);
  EXPECT_EQ(code_of([&] { gw->embed_text("x"); }), "embedding_dim_mismatch");
  auto zero = scripted_gateway({}, [](std::string_view) { return std::vector<float>{0, 0}; });
  EXPECT_EQ(code_of([&] { zero->embed_text("x"); }), "zero_norm_embedding");
  EXPECT_EQ(code_of([&] { zero->embed_text("  "); }), "bad_request");
}

TEST(Similarity, ClipScoreScale) {
  double cos = 0;
  auto gw = scripted_gateway({}, {}, [&](std::string_view, std::string_view) { return cos; });
  cos = 1.0;
  EXPECT_DOUBLE_EQ(gw->cross_modal_score("i", "t").value, 2.5);
  cos = -0.4;
  EXPECT_DOUBLE_EQ(gw->cross_modal_score("i", "t").value, 0.0);
  cos = 0.2;
  auto s = gw->cross_modal_score("i", "t");
  EXPECT_DOUBLE_EQ(s.value, 0.5);
  EXPECT_EQ(s.scale, SimilarityScale::clipscore);
  EXPECT_GE(s.value, 0.25);
}

TEST(Similarity, MonotoneAndClamped) {
  double last = -1;
  for (int i = -100; i <= 100; ++i) {
    double v = clipscore_from_cosine(i / 100.0);
    EXPECT_GE(v, last);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.5);
    last = v;
  }
}

TEST(Ledger, Arithmetic) {
  CallLedger a, b;
  a.chat.calls = 3;
  a.embed.attempts = 2;
  b.chat.calls = 1;
  auto c = a;
  c += b;
  EXPECT_EQ(c.chat.calls, 4u);
  EXPECT_EQ(c - b, a);
  EXPECT_EQ(CallLedger::from_json(c.to_json()), c);
}

TEST(Http, ChatBodyAndAuth) {
  nlohmann::json seen;
  std::string auth;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"content":"Yes."},"finish_reason":"length"}],"usage":{"total_tokens":12}})",
                    "application/json");
  });
  auto ep = stub.endpoint("/v1/chat/completions");
  ep.api_key = "k1";
  HttpChatBackend chat(ep);
  ChatRequest req{"prompt text"};
  auto r = chat.chat(req);
  EXPECT_EQ(r.text, "Yes.");
  EXPECT_EQ(r.finish_reason, FinishReason::length);
  EXPECT_EQ(r.total_tokens, 12);
  EXPECT_EQ(seen["model"], "m");
  EXPECT_EQ(seen["temperature"], 0.0);
  EXPECT_EQ(seen["max_tokens"], 8192);
  EXPECT_EQ(seen["messages"][0]["content"], "prompt text");
  EXPECT_EQ(auth, "Bearer k1");
}

TEST(Http, StatusMapping) {
  int status = 503;
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    res.status = status;
    res.set_content(R"({"error":"nope"})", "application/json");
  });
  HttpChatBackend chat(stub.endpoint());
  EXPECT_THROW(chat.chat({"p"}), TransientError);
  status = 429;
  EXPECT_THROW(chat.chat({"p"}), TransientError);
  status = 400;
  try {
    chat.chat({"p"});
    FAIL();
  } catch (const TransientError&) {
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "nope");
  }

  // Through the gateway: 3 attempts against a 5xx service.
  status = 500;
  stub.hits = 0;
  auto gw = std::make_shared<ModelGateway>(std::make_shared<HttpChatBackend>(stub.endpoint()), nullptr, nullptr,
                                           testkit::fast_options());
  EXPECT_EQ(code_of([&] { gw->complete_chat({"p"}); }), "service_unavailable");
  EXPECT_EQ(stub.hits, 3);
}

TEST(Http, EmbeddingShapes) {
  bool flat = false;
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(flat ? R"({"embedding":[0,2]})" : R"({"data":[{"embedding":[1,0]}]})", "application/json");
  });
  HttpEmbeddingBackend emb(stub.endpoint());
  EXPECT_EQ(emb.embed("x"), (std::vector<float>{1, 0}));
  flat = true;
  EXPECT_EQ(emb.embed("x"), (std::vector<float>{0, 2}));
}

TEST(Http, SimilarityFailureIsImageEmbedFailed) {
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    if (body["image_uri"] == "bad") {
      res.status = 422;
      res.set_content("{}", "application/json");
    } else {
      res.set_content(R"({"cosine":0.4})", "application/json");
    }
  });
  HttpSimilarityBackend sim(stub.endpoint());
  EXPECT_DOUBLE_EQ(sim.cosine("ok", "t"), 0.4);
  EXPECT_EQ(code_of([&] { sim.cosine("bad", "t"); }), "image_embed_failed");
}

TEST(Http, NoServerIsTransient) {
  EndpointConfig ep;
  ep.url = "http://127.0.0.1:1/v1/chat";
  ep.timeout = std::chrono::milliseconds(500);
  EXPECT_THROW(HttpChatBackend(ep).chat({"p"}), TransientError);
}

TEST(Concurrency, OrderedMapKeepsOrderAndBound) {
  std::vector<int> items(200);
  std::iota(items.begin(), items.end(), 0);
  std::atomic<int> cur{0}, peak{0};
  auto out = ordered_parallel_map(items, 5, [&](int x) {
    int c = ++cur;
    int p = peak.load();
    while (c > p && !peak.compare_exchange_weak(p, c)) {
    }
    std::this_thread::sleep_for(std::chrono::microseconds(200));
    --cur;
    return x * 2;
  });
  for (int i = 0; i < 200; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)], 2 * i);
  EXPECT_LE(peak.load(), 5);
  EXPECT_THROW(ordered_parallel_map(items, 4, [](int x) -> int {
                 if (x == 77) throw Error("boom");
                 return x;
               }),
               Error);
}

TEST(Concurrency, TokenBucketPaces) {
  TokenBucket tb(50.0, 1.0);
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 11; ++i) tb.acquire();
  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GE(secs, 0.18);
  TokenBucket off(0);
  for (int i = 0; i < 1000; ++i) off.acquire();
}
