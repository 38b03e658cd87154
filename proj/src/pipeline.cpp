#include "forge/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "forge/error.hpp"
#include "forge/prompts.hpp"
#include "forge/spatial_filter.hpp"
#include "forge/text.hpp"
#include "forge/transcript.hpp"

namespace forge {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-then-rename so a crash never leaves a half-written checkpoint file.
void write_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("io_error", "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string jsonl(std::span<const QAPair> pairs) {
  std::ostringstream ss;
  write_pairs(ss, pairs);
  return ss.str();
}

EndpointConfig endpoint_from_json(const nlohmann::json& j, EndpointConfig base) {
  base.url = j.value("url", base.url);
  base.model = j.value("model", base.model);
  if (j.contains("timeout_ms")) base.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<std::int64_t>());
  return base;
}

ojson endpoint_to_json(const EndpointConfig& e) {
  return {{"url", e.url}, {"model", e.model}, {"timeout_ms", e.timeout.count()}};
}

class UnconfiguredBackend : public ChatBackend, public EmbeddingBackend, public SimilarityBackend {
 public:
  explicit UnconfiguredBackend(std::string name) : name_(std::move(name)) {}
  ChatResponse chat(const ChatRequest&) override { fail(); }
  std::vector<float> embed(std::string_view) override { fail(); }
  double cosine(std::string_view, std::string_view) override { fail(); }

 private:
  [[noreturn]] void fail() const { throw Error("endpoint_not_configured", "no URL configured for the " + name_ + " endpoint"); }
  std::string name_;
};

}  // namespace

PipelineConfig PipelineConfig::from_env() {
  PipelineConfig c;
  c.chat = endpoint_from_env("FORGE_CHAT_URL", "FORGE_CHAT_KEY");
  c.embed = endpoint_from_env("FORGE_EMBED_URL", "FORGE_EMBED_KEY");
  c.similarity = endpoint_from_env("FORGE_SIM_URL", "FORGE_SIM_KEY");
  return c;
}

void PipelineConfig::validate() const {
  auto bad = [](const std::string& what) { return Error("invalid_config", what); };
  if (concurrency < 1) throw bad("concurrency must be at least 1");
  if (batch_size < 1) throw bad("batch_size must be at least 1");
  if (taxonomy_path && !fs::exists(*taxonomy_path)) throw bad("taxonomy_path does not exist: " + taxonomy_path->string());
  if (prompts_dir && !fs::is_directory(*prompts_dir)) throw bad("prompts_dir does not exist: " + prompts_dir->string());
  if (mock_transcript && !fs::exists(*mock_transcript)) {
    throw bad("mock transcript does not exist: " + mock_transcript->string());
  }
  quality.validate();
}

ojson PipelineConfig::to_json() const {
  ojson j;
  j["endpoints"] = {{"chat", endpoint_to_json(chat)},
                    {"embed", endpoint_to_json(embed)},
                    {"similarity", endpoint_to_json(similarity)}};
  j["concurrency"] = concurrency;
  j["quality"] = quality.to_json();
  j["taxonomy_path"] = taxonomy_path ? ojson(taxonomy_path->string()) : ojson(nullptr);
  j["prompts_dir"] = prompts_dir ? ojson(prompts_dir->string()) : ojson(nullptr);
  j["checkpoint_dir"] = checkpoint_dir.string();
  j["seed"] = seed;
  j["batch_size"] = batch_size;
  j["rate_limit_rps"] = rate_limit_rps;
  j["probe_images"] = probe_images;
  j["image_root"] = image_root.string();
  j["mock_transcript"] = mock_transcript ? ojson(mock_transcript->string()) : ojson(nullptr);
  return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, PipelineConfig c) {
  static const std::set<std::string> known = {"endpoints",      "concurrency", "quality",       "taxonomy_path",
                                              "prompts_dir",    "checkpoint_dir", "seed",       "batch_size",
                                              "rate_limit_rps", "probe_images", "image_root", "mock_transcript"};
  if (!j.is_object()) throw Error("invalid_config", "configuration must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw Error("invalid_config", "unknown key '" + key + "'");
  }
  auto opt_path = [&](const char* key, std::optional<fs::path>& field) {
    if (!j.contains(key)) return;
    if (j[key].is_null()) {
      field.reset();
    } else {
      field = j[key].get<std::string>();
    }
  };
  try {
    if (j.contains("endpoints")) {
      const auto& e = j["endpoints"];
      if (e.contains("chat")) c.chat = endpoint_from_json(e["chat"], c.chat);
      if (e.contains("embed")) c.embed = endpoint_from_json(e["embed"], c.embed);
      if (e.contains("similarity")) c.similarity = endpoint_from_json(e["similarity"], c.similarity);
    }
    c.concurrency = j.value("concurrency", c.concurrency);
    if (j.contains("quality")) {
      nlohmann::json merged = nlohmann::json::parse(c.quality.to_json().dump());
      merged.merge_patch(j["quality"]);
      c.quality = QualityConfig::from_json(merged);
    }
    opt_path("taxonomy_path", c.taxonomy_path);
    opt_path("prompts_dir", c.prompts_dir);
    opt_path("mock_transcript", c.mock_transcript);
    if (j.contains("checkpoint_dir")) c.checkpoint_dir = j["checkpoint_dir"].get<std::string>();
    if (j.contains("image_root")) c.image_root = j["image_root"].get<std::string>();
    c.seed = j.value("seed", c.seed);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.rate_limit_rps = j.value("rate_limit_rps", c.rate_limit_rps);
    c.probe_images = j.value("probe_images", c.probe_images);
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_config", e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) { return from_json(j, PipelineConfig{}); }

PipelineConfig PipelineConfig::load(const fs::path& path, PipelineConfig base) {
  auto j = nlohmann::json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw Error("invalid_config", path.string() + " is not valid JSON");
  return from_json(j, std::move(base));
}

std::string PipelineConfig::output_digest() const {
  ojson j;
  j["chat"] = {chat.url, chat.model};
  j["embed"] = {embed.url, embed.model};
  j["similarity"] = {similarity.url, similarity.model};
  j["quality"] = quality.to_json();
  j["seed"] = seed;
  j["batch_size"] = batch_size;
  j["probe_images"] = probe_images;
  return text::sha256_hex(j.dump());
}

Services make_services(const PipelineConfig& config) {
  Services s;
  GatewayOptions opts;
  opts.rate_limit_rps = config.rate_limit_rps;
  if (config.mock_transcript) {
    auto backend = std::make_shared<TranscriptBackend>(Transcript::load(*config.mock_transcript));
    opts.rate_limit_rps = 0;  // nothing remote to protect
    s.gateway = std::make_shared<ModelGateway>(backend, backend, backend, opts);
    s.prober = backend;
    return s;
  }
  std::shared_ptr<ChatBackend> chat;
  std::shared_ptr<EmbeddingBackend> embed;
  std::shared_ptr<SimilarityBackend> sim;
  if (config.chat.configured()) {
    chat = std::make_shared<HttpChatBackend>(config.chat);
  } else {
    chat = std::make_shared<UnconfiguredBackend>("chat");
  }
  if (config.embed.configured()) {
    embed = std::make_shared<HttpEmbeddingBackend>(config.embed);
  } else {
    embed = std::make_shared<UnconfiguredBackend>("embed");
  }
  if (config.similarity.configured()) {
    sim = std::make_shared<HttpSimilarityBackend>(config.similarity);
  } else {
    sim = std::make_shared<UnconfiguredBackend>("similarity");
  }
  s.gateway = std::make_shared<ModelGateway>(chat, embed, sim, opts);
  s.prober = std::make_shared<DispatchingProber>(std::make_shared<LocalFileProber>(config.image_root),
                                                 std::make_shared<HttpProber>());
  return s;
}

SourceRow RunReport::totals() const {
  SourceRow t;
  for (const auto& r : rows) {
    t.size += r.size;
    t.filtered += r.filtered;
    t.total_words += r.total_words;
    t.generated_pairs += r.generated_pairs;
    t.accepted_pairs += r.accepted_pairs;
  }
  return t;
}

CallLedger RunReport::total_cost() const {
  CallLedger total;
  for (const auto& [_, c] : cost) total += c;
  return total;
}

namespace {

ojson row_to_json(const SourceRow& r) {
  return {{"size", r.size},
          {"filtered", r.filtered},
          {"total_words", r.total_words},
          {"mean_words", r.mean_words()},
          {"generated_pairs", r.generated_pairs},
          {"accepted_pairs", r.accepted_pairs}};
}

std::string fixed1(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

RunReport RunReport::from_json(const nlohmann::json& j) {
  RunReport r;
  try {
    for (const auto& row : j.at("sources")) {
      SourceRow s;
      s.source = parse_source_kind(row.at("source").get<std::string>());
      s.size = row.at("size").get<std::size_t>();
      s.filtered = row.at("filtered").get<std::size_t>();
      s.total_words = row.at("total_words").get<std::size_t>();
      s.generated_pairs = row.at("generated_pairs").get<std::size_t>();
      s.accepted_pairs = row.at("accepted_pairs").get<std::size_t>();
      r.rows.push_back(s);
    }
    for (const auto& st : j.at("stages")) r.stages.push_back(StageReport::from_json(st));
    for (const auto& [stage, c] : j.at("cost").items()) {
      if (stage != "total") r.cost[stage] = CallLedger::from_json(c);
    }
    if (j.contains("wall_clock_seconds")) {
      for (const auto& [stage, v] : j["wall_clock_seconds"].items()) r.wall_clock_seconds[stage] = v.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_report", e.what());
  }
  return r;
}

std::string emit_report(const RunReport& report, ReportFormat format, bool include_timings) {
  const SourceRow totals = report.totals();
  if (format == ReportFormat::json) {
    ojson j;
    ojson rows = ojson::array();
    for (const auto& r : report.rows) {
      ojson row = {{"source", std::string(to_string(r.source))}, {"name", std::string(display_name(r.source))}};
      row.update(row_to_json(r));
      rows.push_back(row);
    }
    j["sources"] = rows;
    j["totals"] = row_to_json(totals);
    ojson stages = ojson::array();
    for (const auto& s : report.stages) stages.push_back(s.to_json());
    j["stages"] = stages;
    ojson cost = ojson::object();
    for (const auto& [stage, c] : report.cost) cost[stage] = c.to_json();
    cost["total"] = report.total_cost().to_json();
    j["cost"] = cost;
    if (include_timings) j["wall_clock_seconds"] = report.wall_clock_seconds;
    return j.dump(2) + "\n";
  }

  std::ostringstream md;
  md << "| Dataset | Size | Filtered | Words | Gen. Pairs | Accepted |\n";
  md << "|---|---:|---:|---:|---:|---:|\n";
  auto row = [&](std::string_view name, const SourceRow& r) {
    md << "| " << name << " | " << r.size << " | " << r.filtered << " | " << fixed1(r.mean_words()) << " | "
       << r.generated_pairs << " | " << r.accepted_pairs << " |\n";
  };
  for (const auto& r : report.rows) row(display_name(r.source), r);
  if (!report.rows.empty()) row("Total", totals);

  md << "\n| Stage | Input | Kept | Dropped | Errored |\n";
  md << "|---|---:|---:|---:|---:|\n";
  for (const auto& s : report.stages) {
    md << "| " << s.stage << " | " << s.input << " | " << s.kept << " | " << s.dropped << " | " << s.errored << " |\n";
  }

  md << "\n| Endpoint | Calls | Attempts | Failures | Tokens |\n";
  md << "|---|---:|---:|---:|---:|\n";
  if (!report.cost.empty()) {
    const auto total = report.total_cost();
    for (const auto& [name, t] : {std::pair{"chat", total.chat}, {"embed", total.embed}, {"similarity", total.similarity}}) {
      md << "| " << name << " | " << t.calls << " | " << t.attempts << " | " << t.failures << " | " << t.tokens << " |\n";
    }
  }

  if (include_timings && !report.wall_clock_seconds.empty()) {
    md << "\n| Stage | Seconds |\n|---|---:|\n";
    for (const auto& [stage, secs] : report.wall_clock_seconds) md << "| " << stage << " | " << fixed1(secs) << " |\n";
  }
  return md.str();
}

namespace {

// Digest over the files directly inside a stage directory (batches excluded).
std::string stage_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() != ".tmp") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string basis;
  for (const auto& f : files) basis += f.filename().string() + '\0' + text::sha256_hex(read_text(f)) + '\n';
  return text::sha256_hex(basis);
}

class Checkpoint {
 public:
  Checkpoint(fs::path dir, ojson identity) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    const auto state_path = dir_ / "state.json";
    if (!fs::exists(state_path)) {
      state_ = std::move(identity);
      state_["completed"] = ojson::array();
      save();
      return;
    }
    auto existing = ojson::parse(read_text(state_path), nullptr, false);
    if (existing.is_discarded()) throw Error("stale_checkpoint", "state.json is unreadable");
    for (const auto& [key, value] : identity.items()) {
      if (!existing.contains(key) || existing[key] != value) {
        throw Error("stale_checkpoint", "checkpoint " + dir_.string() + " was made with a different " + key);
      }
    }
    for (const auto& done : existing.at("completed")) {
      const auto stage = done.at("stage").get<std::string>();
      if (stage_digest(dir_ / stage) != done.at("digest").get<std::string>()) {
        throw Error("stale_checkpoint", "outputs of stage " + stage + " changed since they were written");
      }
    }
    state_ = std::move(existing);
  }

  bool completed(std::string_view stage) const {
    for (const auto& done : state_["completed"]) {
      if (done["stage"] == stage) return true;
    }
    return false;
  }

  void mark_completed(std::string_view stage) {
    state_["completed"].push_back({{"stage", stage}, {"digest", stage_digest(stage_dir(stage))}});
    save();
  }

  fs::path stage_dir(std::string_view stage) const {
    auto d = dir_ / std::string(stage);
    fs::create_directories(d);
    return d;
  }

  const fs::path& dir() const { return dir_; }

 private:
  void save() const { write_atomic(dir_ / "state.json", state_.dump(2) + "\n"); }

  fs::path dir_;
  ojson state_;
};

struct BatchOutput {
  std::vector<nlohmann::json> payloads;
  CallLedger cost;
};

class Runner {
 public:
  Runner(const PipelineConfig& config, Services& services, const RunOptions& options, Checkpoint& ckpt)
      : config_(config), services_(services), options_(options), ckpt_(ckpt) {}

  // Splits `units` into batches of config.batch_size and runs `work` on each
  // batch not already on disk.
  BatchOutput run(std::string_view stage, std::size_t units,
                  const std::function<ojson(std::size_t begin, std::size_t end)>& work) {
    BatchOutput out;
    const auto dir = ckpt_.stage_dir(stage) / "batches";
    fs::create_directories(dir);
    for (std::size_t begin = 0, b = 0; begin < units; begin += config_.batch_size, ++b) {
      const std::size_t end = std::min(units, begin + config_.batch_size);
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.json", b);
      const auto path = dir / name;
      if (fs::exists(path)) {
        auto j = nlohmann::json::parse(read_text(path), nullptr, false);
        if (j.is_discarded() || j.value("first", std::size_t{0}) != begin || j.value("count", std::size_t{0}) != end - begin) {
          throw Error("stale_checkpoint", "batch file " + path.string() + " does not fit this run");
        }
        out.cost += CallLedger::from_json(j.at("cost"));
        out.payloads.push_back(std::move(j.at("payload")));
        continue;
      }
      const auto before = services_.gateway->ledger();
      ojson payload = work(begin, end);
      const auto delta = services_.gateway->ledger() - before;
      ojson doc = {{"first", begin}, {"count", end - begin}, {"cost", delta.to_json()}, {"payload", payload}};
      write_atomic(path, doc.dump() + "\n");
      out.cost += delta;
      out.payloads.push_back(nlohmann::json::parse(payload.dump()));
      ++batches_written_;
      if (options_.abort_after_batches && batches_written_ >= *options_.abort_after_batches) {
        throw Error("aborted", "stopped after " + std::to_string(batches_written_) + " batch(es) as requested");
      }
    }
    return out;
  }

 private:
  const PipelineConfig& config_;
  Services& services_;
  const RunOptions& options_;
  Checkpoint& ckpt_;
  std::size_t batches_written_ = 0;
};

void write_stage_common(const fs::path& dir, const StageReport& report, const CallLedger& cost) {
  write_atomic(dir / "report.json", report.to_json().dump(2) + "\n");
  write_atomic(dir / "cost.json", cost.to_json().dump(2) + "\n");
}

CallLedger read_cost(const fs::path& dir) { return CallLedger::from_json(nlohmann::json::parse(read_text(dir / "cost.json"))); }

StageReport read_report(const fs::path& dir) {
  return StageReport::from_json(nlohmann::json::parse(read_text(dir / "report.json")));
}

std::vector<CaptionRecord> corpus_from(const std::string& body) {
  std::istringstream in(body);
  return read_corpus(in);
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, std::span<const CaptionRecord> records, Services& services,
                            const RunOptions& options) {
  config.validate();
  if (options.stop_after &&
      std::find(std::begin(kStages), std::end(kStages), *options.stop_after) == std::end(kStages)) {
    throw Error("invalid_config", "unknown stage '" + *options.stop_after + "'");
  }
  const PromptSet prompts = config.prompts_dir ? PromptSet::load(*config.prompts_dir) : PromptSet::builtin();

  std::vector<CaptionRecord> input(records.begin(), records.end());
  std::sort(input.begin(), input.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (auto& r : input) r.flags = {};

  ojson identity = {{"input_digest", compute_manifest(input).content_digest},
                    {"config_digest", config.output_digest()},
                    {"prompts", prompts.digests()}};
  Checkpoint ckpt(config.checkpoint_dir, identity);
  Runner runner(config, services, options, ckpt);
  auto& gateway = *services.gateway;
  const std::size_t width = config.concurrency;

  PipelineResult result;
  RunReport& report = result.report;
  using clock = std::chrono::steady_clock;
  auto timed = [&](std::string_view stage, auto&& body) {
    const auto t0 = clock::now();
    body();
    report.wall_clock_seconds[std::string(stage)] = std::chrono::duration<double>(clock::now() - t0).count();
  };
  auto stop_here = [&](std::string_view stage) { return options.stop_after && *options.stop_after == stage; };

  // probe: flags image availability; pairs of unavailable images are dropped
  // later by the quality stage's first check.
  std::vector<CaptionRecord> probed;
  timed(kStageProbe, [&] {
    const auto dir = ckpt.stage_dir(kStageProbe);
    if (ckpt.completed(kStageProbe)) {
      probed = corpus_from(read_text(dir / "records.jsonl"));
      report.stages.push_back(read_report(dir));
      report.cost[std::string(kStageProbe)] = read_cost(dir);
      return;
    }
    auto batches = runner.run(kStageProbe, input.size(), [&](std::size_t b, std::size_t e) {
      ojson items = ojson::array();
      std::span<const CaptionRecord> slice(input.data() + b, e - b);
      if (!config.probe_images) {
        for (const auto& r : slice) items.push_back({{"id", r.id}, {"image_ok", true}, {"reason", nullptr}});
        return items;
      }
      for (const auto& pr : probe_records(slice, *services.prober, services.probe_policy, width)) {
        items.push_back({{"id", pr.record.id},
                         {"image_ok", pr.record.flags.image_ok},
                         {"reason", pr.reason ? ojson(*pr.reason) : ojson(nullptr)}});
      }
      return items;
    });
    StageReport rep;
    rep.stage = kStageProbe;
    probed = input;
    std::size_t i = 0;
    for (const auto& payload : batches.payloads) {
      for (const auto& item : payload) {
        auto& r = probed.at(i++);
        r.flags.image_ok = item.at("image_ok").get<bool>();
        ++rep.input;
        if (r.flags.image_ok) {
          ++rep.kept;
        } else {
          ++rep.dropped;
          ++rep.reasons[item.at("reason").is_string() ? item["reason"].get<std::string>() : "image_unavailable"];
        }
      }
    }
    write_corpus_file(dir / "records.jsonl", probed);
    write_stage_common(dir, rep, batches.cost);
    ckpt.mark_completed(kStageProbe);
    report.stages.push_back(rep);
    report.cost[std::string(kStageProbe)] = batches.cost;
  });
  if (stop_here(kStageProbe)) return result;

  std::vector<CaptionRecord> spatial;
  timed(kStagePrefilter, [&] {
    const auto dir = ckpt.stage_dir(kStagePrefilter);
    if (ckpt.completed(kStagePrefilter)) {
      spatial = corpus_from(read_text(dir / "records.jsonl"));
      report.stages.push_back(read_report(dir));
      report.cost[std::string(kStagePrefilter)] = read_cost(dir);
      return;
    }
    auto batches = runner.run(kStagePrefilter, probed.size(), [&](std::size_t b, std::size_t e) {
      ojson items = ojson::array();
      std::span<const CaptionRecord> slice(probed.data() + b, e - b);
      for (const auto& v : classify_records(slice, gateway, prompts, width)) items.push_back(verdict_to_json(v));
      return items;
    });
    std::vector<SpatialVerdict> verdicts;
    std::string verdict_lines;
    for (const auto& payload : batches.payloads) {
      for (const auto& item : payload) {
        verdicts.push_back(verdict_from_json(item));
        verdict_lines += verdict_to_json(verdicts.back()).dump() + "\n";
      }
    }
    auto filtered = apply_verdicts(probed, std::move(verdicts));
    spatial = std::move(filtered.kept);
    write_corpus_file(dir / "records.jsonl", spatial);
    write_atomic(dir / "verdicts.jsonl", verdict_lines);
    write_stage_common(dir, filtered.report, batches.cost);
    ckpt.mark_completed(kStagePrefilter);
    report.stages.push_back(filtered.report);
    report.cost[std::string(kStagePrefilter)] = batches.cost;
  });
  if (stop_here(kStagePrefilter)) return result;

  std::vector<QAPair> generated;
  timed(kStageGenerate, [&] {
    const auto dir = ckpt.stage_dir(kStageGenerate);
    if (ckpt.completed(kStageGenerate)) {
      generated = read_pairs_file(dir / "pairs.jsonl");
      report.stages.push_back(read_report(dir));
      report.cost[std::string(kStageGenerate)] = read_cost(dir);
      return;
    }
    auto batches = runner.run(kStageGenerate, spatial.size(), [&](std::size_t b, std::size_t e) {
      ojson items = ojson::array();
      std::span<const CaptionRecord> slice(spatial.data() + b, e - b);
      for (const auto& o : generate_all(slice, gateway, prompts, width)) items.push_back(outcome_to_json(o));
      return items;
    });
    std::vector<GenerationOutcome> outcomes;
    for (const auto& payload : batches.payloads) {
      for (const auto& item : payload) outcomes.push_back(outcome_from_json(item));
    }
    for (const auto& o : outcomes) generated.insert(generated.end(), o.pairs.begin(), o.pairs.end());
    sort_pairs(generated);
    const auto rep = generation_report(outcomes);
    write_atomic(dir / "pairs.jsonl", jsonl(generated));
    write_atomic(dir / "stats.json", generation_stats(outcomes).to_json().dump(2) + "\n");
    write_stage_common(dir, rep, batches.cost);
    ckpt.mark_completed(kStageGenerate);
    report.stages.push_back(rep);
    report.cost[std::string(kStageGenerate)] = batches.cost;
  });
  if (stop_here(kStageGenerate)) return result;

  std::vector<QAPair> judged;
  timed(kStageQuality, [&] {
    const auto dir = ckpt.stage_dir(kStageQuality);
    std::vector<StageReport> checks;
    for (auto name : kCheckOrder) {
      checks.emplace_back();
      checks.back().stage = name;
    }
    if (ckpt.completed(kStageQuality)) {
      judged = read_pairs_file(dir / "pairs.jsonl");
      auto arr = nlohmann::json::parse(read_text(dir / "report.json"));
      for (std::size_t i = 0; i < checks.size(); ++i) checks[i] = StageReport::from_json(arr.at(i));
      report.cost[std::string(kStageQuality)] = read_cost(dir);
    } else {
      // Batches are cut at record boundaries: every check only looks at one
      // record's pairs, so per-batch runs compose exactly.
      std::unordered_map<std::string_view, std::vector<QAPair>> by_record;
      for (const auto& p : generated) by_record[p.record_id].push_back(p);
      auto batches = runner.run(kStageQuality, spatial.size(), [&](std::size_t b, std::size_t e) {
        std::vector<QAPair> slice;
        for (std::size_t i = b; i < e; ++i) {
          auto it = by_record.find(spatial[i].id);
          if (it != by_record.end()) slice.insert(slice.end(), it->second.begin(), it->second.end());
        }
        auto q = run_quality_pipeline(std::move(slice), spatial, gateway, config.quality, prompts, width);
        ojson pairs = ojson::array();
        for (const auto& p : q.pairs) pairs.push_back(pair_to_json(p));
        ojson reports = ojson::array();
        for (const auto& r : q.reports) reports.push_back(r.to_json());
        return ojson{{"pairs", pairs}, {"reports", reports}};
      });
      for (const auto& payload : batches.payloads) {
        for (const auto& p : payload.at("pairs")) judged.push_back(pair_from_json(p));
        const auto& reps = payload.at("reports");
        for (std::size_t i = 0; i < checks.size() && i < reps.size(); ++i) checks[i] += StageReport::from_json(reps[i]);
      }
      sort_pairs(judged);
      std::vector<QAPair> accepted;
      for (const auto& p : judged) {
        if (p.final_status == PairStatus::accepted) accepted.push_back(p);
      }
      ojson reports = ojson::array();
      for (const auto& r : checks) reports.push_back(r.to_json());
      write_atomic(dir / "pairs.jsonl", jsonl(judged));
      write_atomic(dir / "accepted.jsonl", jsonl(accepted));
      write_atomic(dir / "report.json", reports.dump(2) + "\n");
      write_atomic(dir / "cost.json", batches.cost.to_json().dump(2) + "\n");
      ckpt.mark_completed(kStageQuality);
      report.cost[std::string(kStageQuality)] = batches.cost;
    }
    report.stages.insert(report.stages.end(), checks.begin(), checks.end());
  });

  for (const auto& p : judged) {
    if (p.final_status == PairStatus::accepted) result.accepted.push_back(p);
  }

  // Table-style rows per source.
  std::unordered_map<std::string_view, SourceKind> source_of;
  std::map<SourceKind, SourceRow> rows;
  for (const auto& r : input) {
    source_of.emplace(r.id, r.source);
    auto& row = rows[r.source];
    row.source = r.source;
    ++row.size;
    row.total_words += r.word_count;
  }
  for (const auto& r : spatial) ++rows[r.source].filtered;
  for (const auto& p : generated) ++rows[source_of.at(p.record_id)].generated_pairs;
  for (const auto& p : result.accepted) ++rows[source_of.at(p.record_id)].accepted_pairs;
  for (const auto& [_, row] : rows) report.rows.push_back(row);

  write_atomic(ckpt.dir() / "accepted.jsonl", jsonl(result.accepted));
  write_atomic(ckpt.dir() / "run_report.json", emit_report(report, ReportFormat::json));
  write_atomic(ckpt.dir() / "run_report.md", emit_report(report, ReportFormat::markdown));
  write_atomic(ckpt.dir() / "timings.json", ojson(report.wall_clock_seconds).dump(2) + "\n");
  result.finished = true;
  return result;
}

std::vector<ojson> export_training_format(std::span<const QAPair> pairs, std::span<const CaptionRecord> records,
                                          bool grouped) {
  std::unordered_map<std::string_view, const CaptionRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  std::vector<std::string> dangling;
  for (const auto& p : pairs) {
    if (!by_id.contains(p.record_id)) dangling.push_back(p.pair_id);
  }
  if (!dangling.empty()) throw Error("dangling_record", "pairs without a record: " + text::join(dangling, ", "));

  std::vector<QAPair> ordered(pairs.begin(), pairs.end());
  sort_pairs(ordered);
  auto turn = [](const QAPair& p) {
    return std::array<ojson, 2>{ojson{{"role", "user"}, {"content", p.question}},
                                ojson{{"role", "assistant"}, {"content", p.answer}}};
  };
  std::vector<ojson> out;
  std::string_view last_record;
  for (const auto& p : ordered) {
    if (grouped && !out.empty() && p.record_id == last_record) {
      for (auto& m : turn(p)) out.back()["messages"].push_back(std::move(m));
      continue;
    }
    last_record = p.record_id;
    ojson sample = {{"image", by_id.at(p.record_id)->image_uri}, {"messages", ojson::array()}};
    for (auto& m : turn(p)) sample["messages"].push_back(std::move(m));
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace forge
