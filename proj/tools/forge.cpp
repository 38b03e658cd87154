// forge: command-line front end for the dataset pipeline.
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "forge/corpus.hpp"
#include "forge/error.hpp"
#include "forge/eval_harness.hpp"
#include "forge/human_eval.hpp"
#include "forge/image_probe.hpp"
#include "forge/pipeline.hpp"
#include "forge/qa_generation.hpp"
#include "forge/qa_quality.hpp"
#include "forge/review_server.hpp"
#include "forge/spatial_filter.hpp"
#include "forge/taxonomy.hpp"

namespace fs = std::filesystem;
using forge::Error;
using ojson = nlohmann::ordered_json;

namespace {

struct Globals {
  std::string config_path;
  std::string checkpoint_dir;
  std::size_t concurrency = 0;
  std::optional<std::uint64_t> seed;
  std::string mock_gateway;
};

forge::PipelineConfig resolve_config(const Globals& g) {
  auto config = forge::PipelineConfig::from_env();
  if (!g.config_path.empty()) config = forge::PipelineConfig::load(g.config_path, config);
  if (!g.checkpoint_dir.empty()) config.checkpoint_dir = g.checkpoint_dir;
  if (g.concurrency > 0) config.concurrency = g.concurrency;
  if (g.seed) config.seed = *g.seed;
  if (!g.mock_gateway.empty()) config.mock_transcript = g.mock_gateway;
  config.validate();
  return config;
}

forge::PromptSet prompts_for(const forge::PipelineConfig& config) {
  return config.prompts_dir ? forge::PromptSet::load(*config.prompts_dir) : forge::PromptSet::builtin();
}

void write_text(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body;
  if (!out) throw Error("io_error", "cannot write " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string pairs_text(std::span<const forge::QAPair> pairs) {
  std::ostringstream ss;
  forge::write_pairs(ss, pairs);
  return ss.str();
}

std::vector<forge::CaptionRecord> read_corpora(const std::vector<std::string>& paths) {
  std::vector<forge::CaptionRecord> all;
  for (const auto& p : paths) {
    auto part = forge::read_corpus_file(p);
    all.insert(all.end(), part.begin(), part.end());
  }
  forge::compute_manifest(all);  // rejects duplicate ids across files
  return all;
}

forge::ReviewServer* g_review_server = nullptr;

void on_signal(int) {
  if (g_review_server) g_review_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: build spatial-reasoning QA datasets from image descriptions"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--checkpoint-dir", g.checkpoint_dir, "Checkpoint and output directory");
  app.add_option("--concurrency", g.concurrency, "Maximum in-flight model requests")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed for sampling");
  app.add_option("--mock-gateway", g.mock_gateway, "Answer model calls from a JSONL transcript")
      ->check(CLI::ExistingFile);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Normalize a source file into the canonical corpus format");
  std::string ingest_source, ingest_in, ingest_out, image_root = ".";
  bool probe_images = false;
  ingest->add_option("--source", ingest_source, "docci|ln|pixmo|custom")->required();
  ingest->add_option("--in", ingest_in)->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", ingest_out)->required();
  ingest->add_flag("--probe-images", probe_images, "Check that every image exists");
  ingest->add_option("--image-root", image_root, "Base directory for relative image paths");

  // profile
  auto* profile = app.add_subcommand("profile", "Spatial-relation frequency profile of a corpus");
  std::vector<std::string> corpus_paths;
  std::string taxonomy_path, out_path;
  double head_fraction = 0.17;
  profile->add_option("--corpus", corpus_paths)->required()->check(CLI::ExistingFile);
  profile->add_option("--taxonomy", taxonomy_path)->check(CLI::ExistingFile);
  profile->add_option("--head-fraction", head_fraction);
  profile->add_option("--out", out_path);

  // prefilter
  auto* prefilter = app.add_subcommand("prefilter", "Keep descriptions that state a spatial relation");
  std::string verdicts_path, report_path;
  prefilter->add_option("--corpus", corpus_paths)->required()->check(CLI::ExistingFile);
  prefilter->add_option("--out", out_path)->required();
  prefilter->add_option("--verdicts", verdicts_path);
  prefilter->add_option("--report", report_path);

  // generate
  auto* generate = app.add_subcommand("generate", "Generate QA pairs for prefiltered records");
  generate->add_option("--corpus", corpus_paths)->required()->check(CLI::ExistingFile);
  generate->add_option("--out", out_path)->required();
  generate->add_option("--report", report_path);

  // qa
  auto* qa = app.add_subcommand("qa", "Run the quality checks over generated pairs");
  std::string pairs_path, all_out, quality_path;
  qa->add_option("--quality-config", quality_path, "JSON with quality thresholds, overrides the run config")
      ->check(CLI::ExistingFile);
  qa->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);
  qa->add_option("--corpus", corpus_paths)->required()->check(CLI::ExistingFile);
  qa->add_option("--out", out_path, "Accepted pairs")->required();
  qa->add_option("--all-out", all_out, "Every pair with its verdicts");
  qa->add_option("--report", report_path);

  // sample
  auto* sample = app.add_subcommand("sample", "Draw a review sample sized for a margin of error");
  std::string n_spec = "auto", sample_session_dir;
  std::optional<std::size_t> population;
  double margin = 0.05, z = 1.96, proportion = 0.5;
  sample->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);
  sample->add_option("--corpus", corpus_paths)->required()->check(CLI::ExistingFile);
  sample->add_option("--n", n_spec, "auto, or a sample size at least the required one");
  sample->add_option("--population", population, "Population size override");
  sample->add_option("--margin", margin);
  sample->add_option("--z", z);
  sample->add_option("--proportion", proportion);
  sample->add_option("--session-dir", sample_session_dir, "Also register the sample as a review session");
  sample->add_option("--out", out_path);

  // review-serve
  auto* serve = app.add_subcommand("review-serve", "Serve the review API");
  std::string host = "127.0.0.1", token, ui_dir;
  int port = 8080;
  bool wilson = false;
  std::string session_dir = "review-sessions";
  serve->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);
  serve->add_option("--corpus", corpus_paths)->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--session-dir", session_dir);
  serve->add_option("--token", token, "Shared token required on every API call");
  serve->add_option("--ui-dir", ui_dir, "Static files served at /")->check(CLI::ExistingDirectory);
  serve->add_flag("--wilson", wilson, "Wilson intervals instead of the normal approximation");

  // eval
  auto* eval = app.add_subcommand("eval", "Score model predictions by string matching");
  std::string items_path;
  eval->add_option("--items", items_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out_path);

  // export
  auto* exp = app.add_subcommand("export", "Write accepted pairs as chat-format training samples");
  bool grouped = false;
  exp->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);
  exp->add_option("--corpus", corpus_paths)->required()->check(CLI::ExistingFile);
  exp->add_option("--out", out_path)->required();
  exp->add_flag("--grouped", grouped, "One sample per image");

  // report
  auto* report = app.add_subcommand("report", "Render a run report");
  std::string format = "markdown";
  bool timings = false;
  report->add_option("--format", format)->check(CLI::IsMember({"json", "markdown"}));
  report->add_flag("--timings", timings, "Include wall-clock seconds");
  report->add_option("--out", out_path);

  // run
  auto* run = app.add_subcommand("run", "Run probe, prefilter, generate and quality end to end");
  std::string stop_after;
  std::optional<std::size_t> abort_after, batch_size;
  run->add_option("--corpus", corpus_paths)->required()->check(CLI::ExistingFile);
  run->add_option("--stop-after", stop_after)->check(CLI::IsMember({"probe", "prefilter", "generate", "quality"}));
  run->add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
  run->add_option("--abort-after-batches", abort_after, "Simulate a crash after N checkpoint batches")
      ->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      std::ifstream in(ingest_in, std::ios::binary);
      auto result = forge::ingest_records(in, forge::parse_source_kind(ingest_source));
      if (probe_images) {
        auto config = resolve_config(g);
        config.image_root = image_root;
        auto services = forge::make_services(config);
        auto probed = forge::probe_records(result.records, *services.prober, services.probe_policy, config.concurrency);
        for (std::size_t i = 0; i < probed.size(); ++i) result.records[i] = probed[i].record;
      }
      auto manifest = forge::write_corpus_file(ingest_out, result.records);
      ojson summary = {{"lines_read", result.lines_read},
                       {"records", result.records.size()},
                       {"rejections", result.rejection_counts()},
                       {"manifest", manifest.to_json()}};
      std::cout << summary.dump(2) << "\n";
    } else if (*profile) {
      auto taxonomy = taxonomy_path.empty() ? forge::RelationTaxonomy::builtin() : forge::RelationTaxonomy::load(taxonomy_path);
      auto records = read_corpora(corpus_paths);
      auto prof = forge::profile_corpus(records, taxonomy);
      write_text(out_path, forge::profile_report(prof, taxonomy, head_fraction).dump(2) + "\n");
    } else if (*prefilter) {
      auto config = resolve_config(g);
      auto services = forge::make_services(config);
      auto records = read_corpora(corpus_paths);
      auto result = forge::filter_corpus(records, *services.gateway, prompts_for(config), config.concurrency);
      forge::write_corpus_file(out_path, result.kept);
      if (!verdicts_path.empty()) {
        std::string body;
        for (const auto& v : result.verdicts) body += forge::verdict_to_json(v).dump() + "\n";
        write_text(verdicts_path, body);
      }
      write_text(report_path.empty() ? "-" : report_path, result.report.to_json().dump(2) + "\n");
    } else if (*generate) {
      auto config = resolve_config(g);
      auto services = forge::make_services(config);
      auto records = read_corpora(corpus_paths);
      std::erase_if(records, [](const forge::CaptionRecord& r) { return !r.flags.spatial_ok; });
      auto outcomes = forge::generate_all(records, *services.gateway, prompts_for(config), config.concurrency);
      std::vector<forge::QAPair> pairs;
      for (const auto& o : outcomes) pairs.insert(pairs.end(), o.pairs.begin(), o.pairs.end());
      forge::sort_pairs(pairs);
      write_text(out_path, pairs_text(pairs));
      ojson doc = {{"report", forge::generation_report(outcomes).to_json()},
                   {"stats", forge::generation_stats(outcomes).to_json()},
                   {"cost", services.gateway->ledger().to_json()}};
      write_text(report_path.empty() ? "-" : report_path, doc.dump(2) + "\n");
    } else if (*qa) {
      auto config = resolve_config(g);
      if (!quality_path.empty()) config.quality = forge::QualityConfig::from_json(ojson::parse(read_text(quality_path)));
      auto services = forge::make_services(config);
      auto records = read_corpora(corpus_paths);
      auto result = forge::run_quality_pipeline(forge::read_pairs_file(pairs_path), records, *services.gateway,
                                                config.quality, prompts_for(config), config.concurrency);
      write_text(out_path, pairs_text(result.accepted));
      if (!all_out.empty()) write_text(all_out, pairs_text(result.pairs));
      ojson reports = ojson::array();
      for (const auto& r : result.reports) reports.push_back(r.to_json());
      write_text(report_path.empty() ? "-" : report_path,
                 ojson{{"checks", reports}, {"cost", services.gateway->ledger().to_json()}}.dump(2) + "\n");
    } else if (*sample) {
      auto pairs = forge::read_pairs_file(pairs_path);
      auto records = read_corpora(corpus_paths);
      std::optional<std::size_t> final_n;
      if (n_spec != "auto") final_n = std::stoull(n_spec);
      auto plan = forge::make_plan(population.value_or(pairs.size()), z, proportion, margin, final_n);
      auto seed = g.seed.value_or(0);
      auto draw = forge::draw_sample(pairs, records, plan, seed);
      ojson strata = ojson::object();
      for (const auto& [kind, n] : draw.strata) strata[std::string(forge::to_string(kind))] = n;
      ojson doc = {{"plan", plan.to_json()},
                   {"seed", seed},
                   {"strata", strata},
                   {"warnings", draw.warnings},
                   {"sampled_pair_ids", draw.session.sampled_pair_ids}};
      if (!sample_session_dir.empty()) {
        forge::SessionStore store(sample_session_dir);
        doc["session_id"] = store.create(plan, seed, draw.session.sampled_pair_ids);
      }
      for (const auto& w : draw.warnings) std::cerr << "warning: " << w << "\n";
      write_text(out_path, doc.dump(2) + "\n");
    } else if (*serve) {
      forge::ReviewServerOptions opts;
      opts.pairs = forge::read_pairs_file(pairs_path);
      opts.records = read_corpora(corpus_paths);
      opts.session_dir = session_dir;
      opts.token = token;
      if (!ui_dir.empty()) opts.ui_dir = ui_dir;
      opts.interval = wilson ? forge::IntervalMethod::wilson : forge::IntervalMethod::normal;
      forge::ReviewServer server(std::move(opts));
      int bound = server.bind(host, port);
      g_review_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "review API listening on http://" << host << ":" << bound << "\n";
      server.serve();
      g_review_server = nullptr;
    } else if (*eval) {
      auto items = forge::read_items_file(items_path);
      write_text(out_path, forge::evaluate_items(items).dump(2) + "\n");
    } else if (*exp) {
      auto pairs = forge::read_pairs_file(pairs_path);
      auto records = read_corpora(corpus_paths);
      std::string body;
      for (const auto& line : forge::export_training_format(pairs, records, grouped)) body += line.dump() + "\n";
      write_text(out_path, body);
    } else if (*report) {
      auto config = resolve_config(g);
      std::ifstream in(config.checkpoint_dir / "run_report.json");
      if (!in) throw Error("io_error", "no run_report.json under " + config.checkpoint_dir.string());
      auto rep = forge::RunReport::from_json(nlohmann::json::parse(in));
      std::ifstream tin(config.checkpoint_dir / "timings.json");
      if (tin) {
        const auto secs = nlohmann::json::parse(tin);
        for (const auto& [stage, v] : secs.items()) rep.wall_clock_seconds[stage] = v.get<double>();
      }
      auto fmt = format == "json" ? forge::ReportFormat::json : forge::ReportFormat::markdown;
      write_text(out_path, forge::emit_report(rep, fmt, timings));
    } else if (*run) {
      auto config = resolve_config(g);
      if (batch_size) config.batch_size = *batch_size;
      auto services = forge::make_services(config);
      auto records = read_corpora(corpus_paths);
      forge::RunOptions options;
      if (!stop_after.empty()) options.stop_after = stop_after;
      options.abort_after_batches = abort_after;
      auto result = forge::run_pipeline(config, records, services, options);
      if (result.finished) {
        std::cout << forge::emit_report(result.report, forge::ReportFormat::markdown);
      } else {
        std::cerr << "stopped after " << stop_after << "; rerun to resume\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == "aborted" ? 3 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
