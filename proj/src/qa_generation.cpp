#include "forge/qa_generation.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "forge/concurrency.hpp"
#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {

std::string_view to_string(CheckVerdict v) {
  switch (v) {
    case CheckVerdict::pass: return "pass";
    case CheckVerdict::fail: return "fail";
    case CheckVerdict::skipped: return "skipped";
  }
  return "skipped";
}

std::string_view to_string(PairStatus s) {
  switch (s) {
    case PairStatus::pending: return "pending";
    case PairStatus::accepted: return "accepted";
    case PairStatus::rejected: return "rejected";
  }
  return "pending";
}

namespace {

CheckVerdict parse_verdict(std::string_view s) {
  if (s == "pass") return CheckVerdict::pass;
  if (s == "fail") return CheckVerdict::fail;
  if (s == "skipped") return CheckVerdict::skipped;
  throw Error("invalid_pair", "unknown verdict '" + std::string(s) + "'");
}

PairStatus parse_status(std::string_view s) {
  if (s == "pending") return PairStatus::pending;
  if (s == "accepted") return PairStatus::accepted;
  if (s == "rejected") return PairStatus::rejected;
  throw Error("invalid_pair", "unknown status '" + std::string(s) + "'");
}

std::size_t ordinal_of(std::string_view pair_id) {
  auto hash = pair_id.rfind('#');
  if (hash == std::string_view::npos) throw Error("invalid_pair", "pair_id without ordinal: " + std::string(pair_id));
  std::size_t n = 0;
  auto tail = pair_id.substr(hash + 1);
  auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), n);
  if (ec != std::errc() || ptr != tail.data() + tail.size()) {
    throw Error("invalid_pair", "bad ordinal in " + std::string(pair_id));
  }
  return n;
}

}  // namespace

std::string make_pair_id(std::string_view record_id, std::size_t ordinal) {
  return std::string(record_id) + "#" + std::to_string(ordinal);
}

QAPair make_pair(std::string_view record_id, std::size_t ordinal, std::string question, std::string answer) {
  QAPair p;
  p.pair_id = make_pair_id(record_id, ordinal);
  p.record_id = std::string(record_id);
  p.ordinal = ordinal;
  p.question = std::string(text::trim(question));
  p.answer = std::string(text::trim(answer));
  if (p.question.empty() || p.answer.empty()) throw Error("malformed_pair", "empty question or answer");
  return p;
}

nlohmann::ordered_json pair_to_json(const QAPair& p) {
  nlohmann::ordered_json verdicts = nlohmann::ordered_json::object();
  for (const auto& [k, v] : p.verdicts) verdicts[k] = std::string(to_string(v));
  nlohmann::ordered_json j = {{"pair_id", p.pair_id},         {"record_id", p.record_id},
                              {"question", p.question},       {"answer", p.answer},
                              {"verdicts", verdicts},         {"final_status", std::string(to_string(p.final_status))}};
  if (!p.reject_reason.empty()) j["reject_reason"] = p.reject_reason;
  return j;
}

QAPair pair_from_json(const nlohmann::json& j) {
  QAPair p;
  try {
    p.pair_id = j.at("pair_id").get<std::string>();
    p.record_id = j.at("record_id").get<std::string>();
    p.question = j.at("question").get<std::string>();
    p.answer = j.at("answer").get<std::string>();
    const auto verdicts = j.value("verdicts", nlohmann::json::object());
    for (const auto& [k, v] : verdicts.items()) {
      p.verdicts[k] = parse_verdict(v.get<std::string>());
    }
    p.final_status = parse_status(j.value("final_status", std::string("pending")));
    p.reject_reason = j.value("reject_reason", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_pair", e.what());
  }
  p.ordinal = ordinal_of(p.pair_id);
  return p;
}

void sort_pairs(std::vector<QAPair>& pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const QAPair& a, const QAPair& b) {
    return a.record_id != b.record_id ? a.record_id < b.record_id : a.ordinal < b.ordinal;
  });
}

void write_pairs(std::ostream& out, std::span<const QAPair> pairs) {
  for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
  if (!out) throw Error("io_error", "write failed");
}

std::vector<QAPair> read_pairs(std::istream& in) {
  if (!in) throw Error("io_error", "pairs stream is not readable");
  std::vector<QAPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(pair_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error("invalid_pair", "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<QAPair> read_pairs_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  return read_pairs(in);
}

void write_pairs_file(const std::filesystem::path& path, std::span<const QAPair> pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot open " + path.string());
  write_pairs(out, pairs);
}

std::string build_generation_prompt(std::string_view description) {
  static const PromptSet prompts = PromptSet::builtin();
  return prompts.generation_prompt(description);
}

GenerationOutcome generate_pairs(const CaptionRecord& record, ModelGateway& gateway, const PromptSet& prompts) {
  if (!record.flags.spatial_ok) throw Error("precondition", "record " + record.id + " has not passed the prefilter");
  ChatRequest req;
  req.prompt = prompts.generation_prompt(record.description);
  req.temperature = 0.0;
  req.max_new_tokens = 8192;
  req.response_hint = ResponseHint::json_array;

  GenerationOutcome out;
  out.record_id = record.id;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto resp = gateway.complete_chat(req);
    ++out.chat_calls;
    std::vector<QuestionAnswer> qas;
    try {
      qas = extract_json_array(resp.text);
      out.truncated_pairs = 0;
    } catch (const Error& e) {
      out.error = e.code();
      if (resp.finish_reason != FinishReason::length || e.code() != "no_json_array") continue;
      try {
        auto partial = extract_json_array_prefix(resp.text);
        qas = std::move(partial.pairs);
        out.truncated_pairs = partial.truncated_elements;
      } catch (const Error& e2) {
        out.error = e2.code();
        continue;
      }
    }
    out.error.clear();
    out.pairs.reserve(qas.size());
    for (std::size_t i = 0; i < qas.size(); ++i) {
      out.pairs.push_back(make_pair(record.id, i, std::move(qas[i].question), std::move(qas[i].answer)));
    }
    return out;
  }
  out.parse_failed = true;
  return out;
}

std::vector<GenerationOutcome> generate_all(std::span<const CaptionRecord> records, ModelGateway& gateway,
                                            const PromptSet& prompts, std::size_t in_flight) {
  return ordered_parallel_map(records, in_flight,
                              [&](const CaptionRecord& r) { return generate_pairs(r, gateway, prompts); });
}

nlohmann::ordered_json outcome_to_json(const GenerationOutcome& o) {
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& p : o.pairs) pairs.push_back(pair_to_json(p));
  return {{"record_id", o.record_id},     {"parse_failed", o.parse_failed}, {"truncated_pairs", o.truncated_pairs},
          {"chat_calls", o.chat_calls},   {"error", o.error},               {"pairs", pairs}};
}

GenerationOutcome outcome_from_json(const nlohmann::json& j) {
  GenerationOutcome o;
  o.record_id = j.at("record_id").get<std::string>();
  o.parse_failed = j.at("parse_failed").get<bool>();
  o.truncated_pairs = j.at("truncated_pairs").get<std::size_t>();
  o.chat_calls = j.at("chat_calls").get<int>();
  o.error = j.at("error").get<std::string>();
  for (const auto& p : j.at("pairs")) o.pairs.push_back(pair_from_json(p));
  return o;
}

nlohmann::ordered_json GenerationStats::to_json() const {
  return {{"records_processed", records_processed},
          {"pairs_generated", pairs_generated},
          {"mean_pairs_per_record", mean_pairs_per_record},
          {"mean_defined", mean_defined},
          {"parse_failures", parse_failures},
          {"truncated_pairs", truncated_pairs}};
}

GenerationStats generation_stats(std::span<const GenerationOutcome> outcomes) {
  GenerationStats s;
  for (const auto& o : outcomes) {
    ++s.records_processed;
    s.pairs_generated += o.pairs.size();
    s.truncated_pairs += o.truncated_pairs;
    if (o.parse_failed) ++s.parse_failures;
  }
  s.mean_defined = s.records_processed > 0;
  if (s.mean_defined) {
    s.mean_pairs_per_record = static_cast<double>(s.pairs_generated) / static_cast<double>(s.records_processed);
  }
  return s;
}

StageReport generation_report(std::span<const GenerationOutcome> outcomes) {
  StageReport r;
  r.stage = "generate";
  for (const auto& o : outcomes) {
    ++r.input;
    if (o.parse_failed) {
      ++r.errored;
      ++r.reasons["parse_failure:" + o.error];
    } else {
      ++r.kept;
      if (o.pairs.empty()) ++r.reasons["empty_list"];
    }
    if (o.truncated_pairs) r.reasons["truncated_pair"] += o.truncated_pairs;
  }
  return r;
}

}  // namespace forge
