#include "forge/human_eval.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {

std::size_t required_sample_size(std::size_t population, double z, double p, double margin) {
  if (population < 1 || !(z > 0) || !(p > 0 && p < 1) || !(margin > 0 && margin < 1)) {
    throw Error("invalid_domain", "need N >= 1, Z > 0, 0 < p < 1, 0 < E < 1");
  }
  const long double n_pop = static_cast<long double>(population);
  const long double zz = static_cast<long double>(z) * z;
  const long double pq = static_cast<long double>(p) * (1.0L - p);
  const long double e2 = static_cast<long double>(margin) * margin;
  const long double n = n_pop * zz * pq / (e2 * (n_pop - 1.0L) + zz * pq);
  // Tolerance absorbs representation error when the exact value is an integer.
  auto out = static_cast<std::size_t>(std::ceil(n - 1e-9L));
  return std::clamp<std::size_t>(out, 1, population);
}

nlohmann::ordered_json SamplePlan::to_json() const {
  return {{"population_size", population_size}, {"confidence_z", confidence_z}, {"proportion", proportion},
          {"margin", margin},                   {"computed_n", computed_n},     {"final_n", final_n}};
}

SamplePlan SamplePlan::from_json(const nlohmann::json& j) {
  SamplePlan p;
  try {
    p.population_size = j.value("population_size", std::size_t{0});
    p.confidence_z = j.value("confidence_z", p.confidence_z);
    p.proportion = j.value("proportion", p.proportion);
    p.margin = j.value("margin", p.margin);
    p.computed_n = j.value("computed_n", std::size_t{0});
    p.final_n = j.value("final_n", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_plan", e.what());
  }
  return p;
}

SamplePlan make_plan(std::size_t population, double z, double p, double margin, std::optional<std::size_t> final_n) {
  SamplePlan plan;
  plan.population_size = population;
  plan.confidence_z = z;
  plan.proportion = p;
  plan.margin = margin;
  plan.computed_n = required_sample_size(population, z, p, margin);
  plan.final_n = final_n.value_or(plan.computed_n);
  if (plan.final_n < plan.computed_n) {
    throw Error("invalid_plan", "final_n " + std::to_string(plan.final_n) + " is below the required " +
                                    std::to_string(plan.computed_n));
  }
  return plan;
}

std::string_view to_string(ReviewVerdict v) {
  switch (v) {
    case ReviewVerdict::correct: return "correct";
    case ReviewVerdict::wrong_answer: return "wrong_answer";
    case ReviewVerdict::relation_hallucination: return "relation_hallucination";
    case ReviewVerdict::object_hallucination: return "object_hallucination";
    case ReviewVerdict::not_spatial: return "not_spatial";
  }
  return "correct";
}

ReviewVerdict parse_review_verdict(std::string_view s) {
  for (auto v : {ReviewVerdict::correct, ReviewVerdict::wrong_answer, ReviewVerdict::relation_hallucination,
                 ReviewVerdict::object_hallucination, ReviewVerdict::not_spatial}) {
    if (to_string(v) == s) return v;
  }
  throw Error("invalid_verdict", std::string(s));
}

std::string format_utc(std::chrono::system_clock::time_point t) {
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

std::chrono::system_clock::time_point parse_utc(std::string_view s) {
  std::tm tm{};
  std::istringstream ss{std::string(s)};
  ss >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  if (ss.fail()) throw Error("invalid_timestamp", std::string(s));
  return std::chrono::system_clock::from_time_t(timegm(&tm));
}

nlohmann::ordered_json label_to_json(const ReviewLabel& l) {
  return {{"pair_id", l.pair_id},
          {"verdict", std::string(to_string(l.verdict))},
          {"reviewer", l.reviewer},
          {"timestamp", format_utc(l.timestamp)}};
}

ReviewLabel label_from_json(const nlohmann::json& j) {
  ReviewLabel l;
  l.pair_id = j.at("pair_id").get<std::string>();
  l.verdict = parse_review_verdict(j.at("verdict").get<std::string>());
  l.reviewer = j.at("reviewer").get<std::string>();
  l.timestamp = parse_utc(j.at("timestamp").get<std::string>());
  return l;
}

SessionStatus ReviewSession::status() const {
  std::set<std::string_view> labeled;
  for (const auto& l : labels) labeled.insert(l.pair_id);
  for (const auto& id : sampled_pair_ids) {
    if (!labeled.contains(id)) return SessionStatus::open;
  }
  return SessionStatus::complete;
}

std::map<SourceKind, std::size_t> apportion(const std::map<SourceKind, std::size_t>& stratum_sizes, std::size_t n,
                                            std::vector<std::string>* warnings) {
  using u128 = unsigned __int128;
  std::size_t total = 0;
  for (const auto& [_, s] : stratum_sizes) total += s;
  if (n > total) throw Error("population_too_small", "cannot draw " + std::to_string(n) + " from " + std::to_string(total));
  std::map<SourceKind, std::size_t> alloc;
  if (n == 0) return alloc;

  struct Share {
    SourceKind kind;
    std::size_t base;
    u128 remainder;
  };
  std::vector<Share> shares;
  std::size_t assigned = 0;
  for (const auto& [kind, size] : stratum_sizes) {
    u128 scaled = static_cast<u128>(n) * size;
    Share s{kind, static_cast<std::size_t>(scaled / total), scaled % total};
    assigned += s.base;
    shares.push_back(s);
  }
  std::vector<Share*> by_remainder;
  for (auto& s : shares) by_remainder.push_back(&s);
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [](const Share* a, const Share* b) { return a->remainder > b->remainder; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++by_remainder[i % by_remainder.size()]->base;

  // Cap at stratum capacity and hand the deficit to strata with room, in
  // remainder order.
  std::size_t deficit = 0;
  for (auto& s : shares) {
    const std::size_t cap = stratum_sizes.at(s.kind);
    if (s.base > cap) {
      if (warnings) {
        warnings->push_back(std::string(display_name(s.kind)) + " stratum holds " + std::to_string(cap) +
                            " but was apportioned " + std::to_string(s.base));
      }
      deficit += s.base - cap;
      s.base = cap;
    }
  }
  while (deficit > 0) {
    for (Share* s : by_remainder) {
      const std::size_t room = stratum_sizes.at(s->kind) - s->base;
      const std::size_t give = std::min(room, deficit);
      s->base += give;
      deficit -= give;
      if (deficit == 0) break;
    }
  }
  for (const auto& s : shares) alloc[s.kind] = s.base;
  return alloc;
}

namespace {

// Unbiased draw from [0, bound) on top of mt19937_64, so samples do not
// depend on the standard library's distribution implementation.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

SampleDraw draw_sample(std::span<const QAPair> pairs, std::span<const CaptionRecord> records, const SamplePlan& plan,
                       std::uint64_t seed) {
  if (plan.final_n > pairs.size()) {
    throw Error("population_too_small", "plan wants " + std::to_string(plan.final_n) + " of " +
                                            std::to_string(pairs.size()) + " pairs");
  }
  std::unordered_map<std::string_view, SourceKind> source_of;
  for (const auto& r : records) source_of.emplace(r.id, r.source);

  std::vector<QAPair> ordered(pairs.begin(), pairs.end());
  sort_pairs(ordered);
  std::map<SourceKind, std::vector<std::string>> strata_ids;
  for (const auto& p : ordered) {
    auto it = source_of.find(p.record_id);
    if (it == source_of.end()) throw Error("dangling_record", "pair " + p.pair_id + " has no record");
    strata_ids[it->second].push_back(p.pair_id);
  }
  std::map<SourceKind, std::size_t> sizes;
  for (const auto& [k, ids] : strata_ids) sizes[k] = ids.size();

  SampleDraw draw;
  draw.strata = apportion(sizes, plan.final_n, &draw.warnings);
  draw.session.plan = plan;
  draw.session.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& [kind, ids] : strata_ids) {
    const std::size_t k = draw.strata[kind];
    for (std::size_t i = 0; i < k; ++i) {
      auto j = i + static_cast<std::size_t>(uniform_below(rng, ids.size() - i));
      std::swap(ids[i], ids[j]);
      draw.session.sampled_pair_ids.push_back(ids[i]);
    }
  }
  return draw;
}

nlohmann::ordered_json RateEstimate::to_json() const {
  return {{"count", count}, {"n", n}, {"rate", rate}, {"ci_low", low}, {"ci_high", high}, {"half_width", half_width}};
}

RateEstimate estimate_rate(std::size_t count, std::size_t n, IntervalMethod method, double z) {
  RateEstimate e{count, n, 0, 0, 0, 0};
  if (n == 0) return e;
  const double nn = static_cast<double>(n);
  e.rate = static_cast<double>(count) / nn;
  double center = e.rate;
  if (method == IntervalMethod::normal) {
    e.half_width = z * std::sqrt(e.rate * (1.0 - e.rate) / nn);
  } else {
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    center = (e.rate + z2 / (2.0 * nn)) / denom;
    e.half_width = z / denom * std::sqrt(e.rate * (1.0 - e.rate) / nn + z2 / (4.0 * nn * nn));
  }
  e.low = std::max(0.0, center - e.half_width);
  e.high = std::min(1.0, center + e.half_width);
  return e;
}

nlohmann::ordered_json ReviewStats::to_json() const {
  return {{"labeled", labeled},
          {"error_rate", error_rate.to_json()},
          {"relation_hallucination_rate", relation_hallucination_rate.to_json()},
          {"object_hallucination_rate", object_hallucination_rate.to_json()}};
}

ReviewStats label_stats(std::span<const ReviewLabel> labels, IntervalMethod method) {
  std::size_t errors = 0, relation = 0, object = 0;
  for (const auto& l : labels) {
    if (l.verdict != ReviewVerdict::correct) ++errors;
    if (l.verdict == ReviewVerdict::relation_hallucination) ++relation;
    if (l.verdict == ReviewVerdict::object_hallucination) ++object;
  }
  ReviewStats s;
  s.labeled = labels.size();
  s.error_rate = estimate_rate(errors, labels.size(), method);
  s.relation_hallucination_rate = estimate_rate(relation, labels.size(), method);
  s.object_hallucination_rate = estimate_rate(object, labels.size(), method);
  return s;
}

ReviewStats compute_review_stats(const ReviewSession& session, IntervalMethod method) {
  if (session.status() != SessionStatus::complete) throw Error("session_incomplete", session.session_id);
  return label_stats(session.labels, method);
}

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  std::vector<std::filesystem::path> logs;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().string().ends_with(".events.jsonl")) logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& path : logs) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      // A torn final line from a crash mid-append is ignored.
      auto ev = nlohmann::json::parse(line, nullptr, false);
      if (!ev.is_discarded()) apply(ev);
    }
  }
}

void SessionStore::apply(const nlohmann::json& ev) {
  const auto kind = ev.at("event").get<std::string>();
  const auto id = ev.at("session_id").get<std::string>();
  if (kind == "session_created") {
    ReviewSession s;
    s.session_id = id;
    s.plan = SamplePlan::from_json(ev.at("plan"));
    s.seed = ev.at("seed").get<std::uint64_t>();
    s.sampled_pair_ids = ev.at("sampled_pair_ids").get<std::vector<std::string>>();
    sessions_[id] = std::move(s);
  } else if (kind == "label") {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return;
    auto label = label_from_json(ev);
    auto& labels = it->second.labels;
    std::erase_if(labels, [&](const ReviewLabel& l) { return l.pair_id == label.pair_id && l.reviewer == label.reviewer; });
    labels.push_back(std::move(label));
  }
}

void SessionStore::append(const std::string& session_id, const nlohmann::ordered_json& event) {
  std::ofstream out(dir_ / (session_id + ".events.jsonl"), std::ios::app | std::ios::binary);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw Error("io_error", "cannot append to session log " + session_id);
}

std::string SessionStore::create(const SamplePlan& plan, std::uint64_t seed, std::vector<std::string> sampled_pair_ids) {
  std::set<std::string_view> unique(sampled_pair_ids.begin(), sampled_pair_ids.end());
  if (unique.size() != sampled_pair_ids.size()) throw Error("invalid_session", "duplicate sampled pair ids");
  if (sampled_pair_ids.size() != plan.final_n) throw Error("invalid_session", "sample size does not match plan.final_n");
  std::unique_lock lock(mu_);
  nlohmann::ordered_json ev = {{"event", "session_created"},
                               {"session_id", ""},
                               {"plan", plan.to_json()},
                               {"seed", seed},
                               {"sampled_pair_ids", sampled_pair_ids}};
  std::string basis = ev.dump() + "#" + std::to_string(sessions_.size());
  std::string id = "rs-" + text::sha256_hex(basis).substr(0, 12);
  ev["session_id"] = id;
  append(id, ev);
  apply(ev);
  return id;
}

void SessionStore::add_label(const std::string& session_id, ReviewLabel label, bool replace) {
  std::unique_lock lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error("unknown_session", session_id);
  const auto& s = it->second;
  if (std::find(s.sampled_pair_ids.begin(), s.sampled_pair_ids.end(), label.pair_id) == s.sampled_pair_ids.end()) {
    throw Error("not_sampled", label.pair_id);
  }
  if (label.reviewer.empty()) throw Error("invalid_label", "reviewer is required");
  if (!replace) {
    for (const auto& l : s.labels) {
      if (l.pair_id == label.pair_id && l.reviewer == label.reviewer) {
        throw Error("duplicate_label", label.pair_id + " already labeled by " + label.reviewer);
      }
    }
  }
  label.timestamp = std::chrono::time_point_cast<std::chrono::seconds>(label.timestamp);
  auto ev = label_to_json(label);
  ev["event"] = "label";
  ev["session_id"] = session_id;
  append(session_id, ev);
  apply(ev);
}

std::optional<ReviewSession> SessionStore::get(const std::string& session_id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> SessionStore::session_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

}  // namespace forge
