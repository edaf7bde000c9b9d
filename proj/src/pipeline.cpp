#include "primelens/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "primelens/cache.hpp"
#include "primelens/error.hpp"
#include "primelens/metrics.hpp"
#include "primelens/prefs.hpp"
#include "primelens/random.hpp"
#include "primelens/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace primelens {

const BackendSpec& RunConfig::backend(const std::string& model_id) const {
  for (const auto& b : backends)
    if (b.model_id == model_id) return b;
  throw ConfigError("unknown model id '" + model_id + "'");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

void expect_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected a table");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path existing(const fs::path& base, const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + "." + key + " is required");
  auto p = resolve(base, get_or<std::string>(j, key, "", where));
  if (!fs::exists(p)) throw ConfigError(where + "." + key + ": no such file " + p.string());
  return p;
}

BackendSpec parse_backend(const json& j, const fs::path& base, std::size_t index) {
  const std::string where = "backends[" + std::to_string(index) + "]";
  expect_keys(j, where,
              {"model_id", "type", "cache", "order", "weights", "context_window", "unknown",
               "training_file", "url", "path", "api_key", "remote_model", "timeout_s",
               "max_in_flight", "logprob_base", "separator", "empty_context_prefix", "retry"});
  BackendSpec b;
  b.model_id = get_or<std::string>(j, "model_id", "", where);
  if (b.model_id.empty()) throw ConfigError(where + ".model_id is required");
  if (b.model_id.find_first_of(",|/\\ ") != std::string::npos)
    throw ConfigError(where + ".model_id may not contain separators or spaces");
  const auto type = get_or<std::string>(j, "type", "", where);
  if (j.contains("cache")) b.cache_path = resolve(base, get_or<std::string>(j, "cache", "", where));

  if (type == "oracle") {
    b.kind = BackendKind::Oracle;
    auto& o = b.oracle;
    o.order = get_or<std::size_t>(j, "order", o.order, where);
    if (j.contains("weights")) {
      o.weights = get_or<std::vector<double>>(j, "weights", {}, where);
    } else {
      o.weights.assign(o.order, 1.0 / static_cast<double>(o.order));
    }
    if (o.order < 1 || o.weights.size() != o.order)
      throw ConfigError(where + ": need one interpolation weight per order");
    o.context_window = get_or<std::size_t>(j, "context_window", o.context_window, where);
    const auto unknown = get_or<std::string>(j, "unknown", "reject", where);
    if (unknown == "reject") {
      o.unknown = UnknownWordPolicy::Reject;
    } else if (unknown == "unk") {
      o.unknown = UnknownWordPolicy::MapToUnk;
    } else {
      throw ConfigError(where + ".unknown must be 'reject' or 'unk'");
    }
    if (j.contains("training_file")) o.training_file = existing(base, j, "training_file", where);
  } else if (type == "endpoint") {
    b.kind = BackendKind::Endpoint;
    auto& e = b.endpoint;
    e.url = get_or<std::string>(j, "url", "", where);
    if (e.url.empty()) throw ConfigError(where + ".url is required");
    e.path = get_or<std::string>(j, "path", e.path, where);
    e.api_key = get_or<std::string>(j, "api_key", "", where);
    e.remote_model = get_or<std::string>(j, "remote_model", "", where);
    e.timeout_s = get_or<double>(j, "timeout_s", e.timeout_s, where);
    e.max_in_flight = get_or<std::size_t>(j, "max_in_flight", e.max_in_flight, where);
    e.logprob_base = get_or<double>(j, "logprob_base", e.logprob_base, where);
    e.separator = get_or<std::string>(j, "separator", e.separator, where);
    e.empty_context_prefix = get_or<std::string>(j, "empty_context_prefix", "", where);
    if (!(e.timeout_s > 0.0)) throw ConfigError(where + ".timeout_s must be positive");
    if (e.max_in_flight == 0) throw ConfigError(where + ".max_in_flight must be positive");
    if (j.contains("retry")) {
      const auto& r = j.at("retry");
      expect_keys(r, where + ".retry", {"base_delay_s", "factor", "max_attempts", "jitter"});
      e.retry.base_delay_s = get_or<double>(r, "base_delay_s", e.retry.base_delay_s, where);
      e.retry.factor = get_or<double>(r, "factor", e.retry.factor, where);
      e.retry.max_attempts = get_or<std::size_t>(r, "max_attempts", e.retry.max_attempts, where);
      e.retry.jitter = get_or<double>(r, "jitter", e.retry.jitter, where);
      if (e.retry.max_attempts == 0) throw ConfigError(where + ".retry.max_attempts must be positive");
    }
  } else if (type == "cache") {
    b.kind = BackendKind::Cache;
    if (!j.contains("cache")) throw ConfigError(where + ".cache is required for a cache backend");
    if (!fs::exists(b.cache_path)) throw ConfigError(where + ".cache: no such file " + b.cache_path.string());
  } else {
    throw ConfigError(where + ".type must be 'oracle', 'endpoint' or 'cache'");
  }
  return b;
}

std::vector<Condition> parse_conditions(const std::vector<std::string>& names, const std::string& where) {
  std::vector<Condition> out;
  for (const auto& n : names) {
    try {
      Condition c = condition_from_string(n);
      if (std::find(out.begin(), out.end(), c) != out.end())
        throw ConfigError(where + ": duplicate condition '" + n + "'");
      out.push_back(c);
    } catch (const InvalidArgument&) {
      throw ConfigError(where + ": unknown condition '" + n + "'");
    }
  }
  return out;
}

void default_cache_paths(RunConfig& c) {
  for (auto& b : c.backends)
    if (b.cache_path.empty()) b.cache_path = c.output_dir / "cache" / (b.model_id + ".jsonl");
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  expect_keys(root, "config", {"corpus", "backends", "metrics", "prefs", "regression", "output_dir",
                               "deterministic_output"});
  RunConfig c;

  if (!root.contains("corpus")) throw ConfigError("config.corpus is required");
  const auto& corpus = root.at("corpus");
  expect_keys(corpus, "corpus", {"conditions", "n_items", "seed", "lexicon", "norms", "embeddings",
                                 "sentence_embeddings", "cos_threshold", "max_attempts"});
  if (corpus.contains("conditions")) {
    c.conditions = parse_conditions(get_or<std::vector<std::string>>(corpus, "conditions", {}, "corpus"),
                                    "corpus.conditions");
  } else {
    c.conditions.assign(kAllConditions.begin(), kAllConditions.end());
  }
  c.selected_conditions = c.conditions;
  c.n_items = get_or<std::size_t>(corpus, "n_items", 0, "corpus");
  c.seed = get_or<std::uint64_t>(corpus, "seed", 0, "corpus");
  c.lexicon = existing(base_dir, corpus, "lexicon", "corpus");
  c.norms = existing(base_dir, corpus, "norms", "corpus");
  c.embeddings = existing(base_dir, corpus, "embeddings", "corpus");
  if (corpus.contains("sentence_embeddings"))
    c.sentence_embeddings = existing(base_dir, corpus, "sentence_embeddings", "corpus");
  c.cos_threshold = get_or<double>(corpus, "cos_threshold", c.cos_threshold, "corpus");
  c.max_attempts = get_or<std::size_t>(corpus, "max_attempts", c.max_attempts, "corpus");
  if (!(c.cos_threshold > 0.0 && c.cos_threshold <= 1.0))
    throw ConfigError("corpus.cos_threshold must be in (0, 1]");
  if (c.max_attempts == 0) throw ConfigError("corpus.max_attempts must be positive");

  if (root.contains("backends")) {
    const auto& list = root.at("backends");
    if (!list.is_array()) throw ConfigError("config.backends must be a list");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto b = parse_backend(list[i], base_dir, i);
      if (!ids.insert(b.model_id).second) throw ConfigError("duplicate model id '" + b.model_id + "'");
      c.backends.push_back(std::move(b));
    }
  }
  for (const auto& b : c.backends) c.selected_models.push_back(b.model_id);

  if (root.contains("metrics")) {
    const auto& m = root.at("metrics");
    expect_keys(m, "metrics", {"use_delta", "tolerance"});
    c.use_delta = get_or<bool>(m, "use_delta", c.use_delta, "metrics");
    c.tolerance = get_or<double>(m, "tolerance", c.tolerance, "metrics");
    if (!(c.tolerance > 0.0)) throw ConfigError("metrics.tolerance must be positive");
  }
  if (root.contains("prefs")) {
    const auto& p = root.at("prefs");
    expect_keys(p, "prefs", {"human_order"});
    if (p.contains("human_order")) c.human_order = existing(base_dir, p, "human_order", "prefs");
  }
  if (root.contains("regression")) {
    const auto& r = root.at("regression");
    expect_keys(r, "regression", {"sample_seed", "sample_core", "sample_other", "surprisal_mode"});
    c.sample_seed = get_or<std::uint64_t>(r, "sample_seed", c.sample_seed, "regression");
    c.sample_core = get_or<std::size_t>(r, "sample_core", c.sample_core, "regression");
    c.sample_other = get_or<std::size_t>(r, "sample_other", c.sample_other, "regression");
    try {
      c.surprisal_mode = surprisal_mode_from_string(
          get_or<std::string>(r, "surprisal_mode", "unconditioned", "regression"));
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("regression.surprisal_mode: ") + e.what());
    }
  }
  c.output_dir = resolve(base_dir, get_or<std::string>(root, "output_dir", "out", "config"));
  c.deterministic_output = get_or<bool>(root, "deterministic_output", false, "config");
  default_cache_paths(c);
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fs::absolute(path).parent_path());
}

void apply_overrides(RunConfig& config, const Overrides& o) {
  if (o.seed) config.seed = *o.seed;
  if (o.output_dir) {
    const fs::path old = config.output_dir;
    config.output_dir = *o.output_dir;
    for (auto& b : config.backends) {
      if (b.kind != BackendKind::Cache && b.cache_path == old / "cache" / (b.model_id + ".jsonl"))
        b.cache_path = config.output_dir / "cache" / (b.model_id + ".jsonl");
    }
  }
  if (o.models) {
    config.selected_models.clear();
    for (const auto& m : *o.models) {
      config.backend(m);
      if (std::find(config.selected_models.begin(), config.selected_models.end(), m) ==
          config.selected_models.end())
        config.selected_models.push_back(m);
    }
  }
  if (o.conditions) {
    auto conds = parse_conditions(*o.conditions, "--conditions");
    for (Condition c : conds) {
      if (std::find(config.conditions.begin(), config.conditions.end(), c) == config.conditions.end())
        throw ConfigError("--conditions: '" + std::string(to_string(c)) + "' is not declared in the corpus");
    }
    config.selected_conditions = std::move(conds);
  }
  if (o.deterministic_output) config.deterministic_output = true;
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

fs::path corpus_path(const RunConfig& c, Condition cond) {
  return c.output_dir / "corpus" / (std::string(to_string(cond)) + ".jsonl");
}

std::vector<PrimeTargetItem> load_items(const RunConfig& c, Condition cond) {
  const auto path = corpus_path(c, cond);
  if (!fs::exists(path)) {
    throw IncompleteData("no corpus for condition " + std::string(to_string(cond)) + " at " +
                         path.string() + " (run 'generate' first)");
  }
  return read_corpus(path);
}

std::shared_ptr<ScoreCache> open_existing_cache(const BackendSpec& b) {
  if (!fs::exists(b.cache_path)) {
    throw IncompleteData("no score cache for model " + b.model_id + " at " + b.cache_path.string() +
                         " (run 'score' first)");
  }
  return std::make_shared<ScoreCache>(b.cache_path);
}

std::vector<std::vector<std::string>> training_sentences(const RunConfig& c, const OracleSpec& o) {
  std::vector<std::vector<std::string>> out;
  if (o.training_file) {
    std::ifstream in(*o.training_file);
    std::string line;
    while (std::getline(in, line)) {
      auto words = text::split_whitespace(line);
      if (!words.empty()) out.push_back(std::move(words));
    }
    return out;
  }
  for (Condition cond : c.conditions) {
    for (const auto& item : load_items(c, cond)) {
      for (Structure s : {Structure::PO, Structure::DO}) {
        auto words = text::split_whitespace(item.prime(s));
        auto target = text::split_whitespace(item.target(s));
        words.insert(words.end(), target.begin(), target.end());
        out.push_back(std::move(words));
      }
    }
  }
  return out;
}

struct Upstream {
  std::shared_ptr<Scorer> scorer;
  std::size_t parallelism = 1;
};

Upstream open_upstream(const RunConfig& c, const BackendSpec& b) {
  Upstream u;
  switch (b.kind) {
    case BackendKind::Oracle: {
      auto model = std::make_shared<NGramModel>(train_ngram(training_sentences(c, b.oracle), b.oracle.order,
                                                            b.oracle.weights, b.oracle.context_window,
                                                            b.oracle.unknown));
      u.scorer = std::make_shared<NGramScorer>(std::move(model), b.model_id);
      break;
    }
    case BackendKind::Endpoint: {
      EndpointConfig e = b.endpoint;
      if (const char* key = std::getenv("PRIMELENS_API_KEY"); key && *key) e.api_key = key;
      u.parallelism = e.max_in_flight;
      u.scorer = std::make_shared<RemoteScorer>(std::move(e), b.model_id);
      break;
    }
    case BackendKind::Cache:
      break;
  }
  return u;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_run_metadata(const RunConfig& c, const std::string& command, const fs::path& path) {
  ordered_json j;
  j["command"] = command;
  auto models = ordered_json::array();
  for (const auto& m : c.selected_models) models.push_back(m);
  j["models"] = std::move(models);
  auto conds = ordered_json::array();
  for (Condition k : c.selected_conditions) conds.push_back(std::string(to_string(k)));
  j["conditions"] = std::move(conds);
  j["seed"] = c.seed;
  j["use_delta"] = c.use_delta;
  j["surprisal_mode"] = std::string(to_string(c.surprisal_mode));
  if (!c.deterministic_output) j["generated_at"] = timestamp();
  write_file(path, j.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------------------
// generate

int cmd_generate(const RunConfig& c, std::ostream& log) {
  const Lexicon lexicon = load_lexicon(c.lexicon);
  const AssociationNorms norms = load_norms(c.norms);
  const EmbeddingTable embeddings = load_embeddings(c.embeddings);
  GeneratorOptions options;
  options.cos_threshold = c.cos_threshold;
  options.max_attempts = c.max_attempts;

  bool all_passed = true;
  for (Condition cond : c.selected_conditions) {
    const auto name = std::string(to_string(cond));
    auto rng = keyed_rng(c.seed, static_cast<std::uint64_t>(cond));
    const std::uint64_t seed = rng();
    auto items = generate(cond, c.n_items, lexicon, norms, embeddings, seed, options);
    std::size_t passed = 0;
    for (const auto& item : items) {
      auto check = check_condition(item, norms, embeddings, c.cos_threshold);
      if (check.passed) {
        ++passed;
      } else {
        all_passed = false;
        log << "checker: " << item.id << ": " << check.violations.front() << "\n";
      }
    }
    std::ostringstream out;
    write_corpus(out, items);
    write_file(corpus_path(c, cond), out.str());
    if (items.empty()) log << "warning: n_items is 0; " << name << " corpus is empty\n";
    log << fmt::format("{}: {} items, checker {}/{}\n", name, items.size(), passed, items.size());
  }
  return all_passed ? kExitOk : kExitInvariant;
}

// ---------------------------------------------------------------------------
// score

namespace {

enum class LegKind { PE, Pref, Surprisal };

struct Job {
  ScoreRequest request;
  LegKind kind;
  std::size_t item;
  std::string label;  // leg name for reports
};

struct KindCounts {
  std::size_t fetched = 0;
  std::size_t cached = 0;
  std::size_t failed = 0;
};

std::vector<Job> plan_jobs(const std::vector<PrimeTargetItem>& items, const std::string& model_id,
                           SurprisalMode mode) {
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    auto pe = leg_requests(item, model_id);
    const std::array<std::string, 4> pe_names = {
        leg_name(Structure::PO, Structure::PO), leg_name(Structure::PO, Structure::DO),
        leg_name(Structure::DO, Structure::DO), leg_name(Structure::DO, Structure::PO)};
    for (std::size_t k = 0; k < 4; ++k) jobs.push_back({pe[k], LegKind::PE, i, pe_names[k]});
    if (item.condition == Condition::Core) {
      jobs.push_back({{"", item.prime_po, model_id}, LegKind::Pref, i, "pref_prime_po"});
      jobs.push_back({{"", item.prime_do, model_id}, LegKind::Pref, i, "pref_prime_do"});
      jobs.push_back({{"", item.target_po, model_id}, LegKind::Pref, i, "pref_target_po"});
      jobs.push_back({{"", item.target_do, model_id}, LegKind::Pref, i, "pref_target_do"});
    }
    auto s = surprisal_requests(item, model_id, mode);
    const std::array<std::string, 4> s_names = {"surp_prime_po", "surp_prime_do", "surp_target_po",
                                                "surp_target_do"};
    for (std::size_t k = 0; k < 4; ++k) jobs.push_back({s[k], LegKind::Surprisal, i, s_names[k]});
  }
  return jobs;
}

using Key = std::tuple<std::string, std::string, std::string>;
Key key_of(const ScoreRequest& r) { return {r.model_id, r.context, r.continuation}; }

// Fetches every job missing from the cache. Requests run `parallelism` at
// a time; results are committed in plan order so that an interrupted run
// followed by a rerun leaves the same cache file as an uninterrupted one.
std::map<Key, std::string> fetch_missing(const std::vector<Job>& jobs, ScoreCache& cache, Scorer* upstream,
                                         std::size_t parallelism, std::map<LegKind, KindCounts>& counts) {
  std::vector<const ScoreRequest*> pending;
  std::set<Key> scheduled;
  for (const auto& job : jobs) {
    const Key k = key_of(job.request);
    if (cache.contains(job.request) || scheduled.count(k)) {
      ++counts[job.kind].cached;
      continue;
    }
    scheduled.insert(k);
    pending.push_back(&job.request);
    ++counts[job.kind].fetched;
  }

  std::map<Key, std::string> failures;
  auto fetch_one = [&](const ScoreRequest& req) -> ScoredSequence {
    if (!upstream) throw CacheMiss("not in cache and the backend has no upstream");
    auto seq = upstream->score(req);
    validate_sequence(seq, req.continuation.size());
    return seq;
  };
  const std::size_t width = std::max<std::size_t>(1, parallelism);
  for (std::size_t start = 0; start < pending.size(); start += width) {
    const std::size_t end = std::min(pending.size(), start + width);
    std::vector<std::future<ScoredSequence>> futures;
    for (std::size_t i = start; i < end; ++i) {
      const ScoreRequest& req = *pending[i];
      futures.push_back(std::async(width == 1 ? std::launch::deferred : std::launch::async,
                                   [&fetch_one, &req] { return fetch_one(req); }));
    }
    for (std::size_t i = start; i < end; ++i) {
      try {
        cache.put(*pending[i], futures[i - start].get());
      } catch (const std::exception& e) {
        failures.emplace(key_of(*pending[i]), e.what());
      }
    }
  }
  return failures;
}

std::string_view kind_name(LegKind k) {
  switch (k) {
    case LegKind::PE: return "PE";
    case LegKind::Pref: return "preference";
    case LegKind::Surprisal: return "surprisal";
  }
  return "?";
}

}  // namespace

int cmd_score(const RunConfig& c, std::ostream& log) {
  ordered_json incomplete = ordered_json::array();
  for (const auto& model_id : c.selected_models) {
    const BackendSpec& b = c.backend(model_id);
    Upstream up = open_upstream(c, b);
    ScoreCache cache(b.cache_path);
    for (Condition cond : c.selected_conditions) {
      const auto items = load_items(c, cond);
      const auto jobs = plan_jobs(items, model_id, c.surprisal_mode);
      std::map<LegKind, KindCounts> counts;
      const auto failures = fetch_missing(jobs, cache, up.scorer.get(), up.parallelism, counts);

      std::map<std::size_t, ordered_json> bad_items;
      std::set<Key> failed_once;
      for (const auto& job : jobs) {
        auto f = failures.find(key_of(job.request));
        if (f == failures.end()) continue;
        if (failed_once.insert(key_of(job.request)).second) {
          --counts[job.kind].fetched;
          ++counts[job.kind].failed;
        }
        auto& entry = bad_items[job.item];
        if (entry.is_null()) {
          entry["model_id"] = model_id;
          entry["item_id"] = items[job.item].id;
          entry["legs"] = ordered_json::array();
        }
        entry["legs"].push_back({{"leg", job.label}, {"error", f->second}});
      }
      for (auto& [i, entry] : bad_items) incomplete.push_back(std::move(entry));

      log << fmt::format("{} {}: {} items", model_id, to_string(cond), items.size());
      for (LegKind k : {LegKind::PE, LegKind::Pref, LegKind::Surprisal}) {
        const auto& n = counts[k];
        log << fmt::format("; {} legs fetched {}, cached {}", kind_name(k), n.fetched, n.cached);
        if (n.failed) log << fmt::format(", failed {}", n.failed);
      }
      log << fmt::format("; incomplete items {}\n", bad_items.size());
    }
  }
  const fs::path report = c.output_dir / "score" / "incomplete.json";
  write_file(report, incomplete.dump(2) + "\n");
  if (!incomplete.empty()) {
    log << incomplete.size() << " item(s) incomplete; see " << report.string() << "\n";
    return kExitIncomplete;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze, prefs, regress

namespace {

struct Measured {
  // Per selected model, in condition then item order.
  std::map<std::string, std::vector<PEResult>> results;
  std::vector<PrimeTargetItem> items;  // all selected conditions
};

struct ModelScorer {
  std::shared_ptr<ScoreCache> cache;
  std::shared_ptr<CachedScorer> scorer;
};

ModelScorer cache_scorer(const RunConfig& c, const std::string& model_id) {
  ModelScorer m;
  m.cache = open_existing_cache(c.backend(model_id));
  m.scorer = std::make_shared<CachedScorer>(m.cache, nullptr, model_id);
  return m;
}

[[noreturn]] void report_missing(const std::vector<std::string>& missing, std::ostream& log) {
  const std::size_t shown = std::min<std::size_t>(missing.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) log << "missing: " << missing[i] << "\n";
  if (missing.size() > shown) log << "... and " << missing.size() - shown << " more\n";
  throw IncompleteData(std::to_string(missing.size()) + " leg(s) missing from the score cache");
}

Measured measure_all(const RunConfig& c, std::ostream& log) {
  Measured m;
  for (Condition cond : c.selected_conditions) {
    auto items = load_items(c, cond);
    m.items.insert(m.items.end(), items.begin(), items.end());
  }
  std::vector<std::string> missing;
  for (const auto& model_id : c.selected_models) {
    auto ms = cache_scorer(c, model_id);
    auto& out = m.results[model_id];
    for (const auto& item : m.items) {
      auto reqs = leg_requests(item, model_id);
      const std::array<std::string, 4> names = {
          leg_name(Structure::PO, Structure::PO), leg_name(Structure::PO, Structure::DO),
          leg_name(Structure::DO, Structure::DO), leg_name(Structure::DO, Structure::PO)};
      bool complete = true;
      for (std::size_t k = 0; k < 4; ++k) {
        if (!ms.cache->contains(reqs[k])) {
          missing.push_back("model " + model_id + " item " + item.id + " leg " + names[k]);
          complete = false;
        }
      }
      if (complete) out.push_back(measure_item(item, model_id, *ms.scorer));
    }
  }
  if (!missing.empty()) report_missing(missing, log);
  return m;
}

std::optional<PreferenceTable> compute_prefs(const RunConfig& c, const std::vector<PrimeTargetItem>& items,
                                             std::ostream& log) {
  // Both sentence pairs of a Core item are frames for their verb. The
  // target pair is stored in the prime fields so it scores the same way.
  std::vector<PrimeTargetItem> frames;
  for (const auto& it : items) {
    if (it.condition != Condition::Core) continue;
    frames.push_back(it);
    PrimeTargetItem t = it;
    t.id += "/target";
    t.prime_words = it.target_words;
    t.prime_po = it.target_po;
    t.prime_do = it.target_do;
    frames.push_back(std::move(t));
  }
  if (frames.empty()) {
    log << "warning: no Core items selected; skipping verb preferences\n";
    return std::nullopt;
  }
  PreferenceTable table;
  std::vector<VerbPreference> all;
  std::vector<PreferenceOrder> orders;
  std::vector<std::string> missing;
  for (const auto& model_id : c.selected_models) {
    auto ms = cache_scorer(c, model_id);
    for (const auto& f : frames) {
      for (const auto* s : {&f.prime_po, &f.prime_do}) {
        if (!ms.cache->contains({"", *s, model_id}))
          missing.push_back("model " + model_id + " frame " + f.id + " leg " +
                            (s == &f.prime_po ? "pref_po" : "pref_do"));
      }
    }
    if (!missing.empty()) continue;
    auto prefs = verb_preferences(frames, model_id, *ms.scorer);
    for (const auto& p : prefs) table[model_id][p.verb] = p.po_pref;
    orders.push_back(order_from_preferences(model_id, prefs));
    all.insert(all.end(), prefs.begin(), prefs.end());
  }
  if (!missing.empty()) report_missing(missing, log);
  if (c.human_order) orders.push_back(load_human_order(*c.human_order, "human"));

  std::ostringstream csv;
  write_preferences_csv(csv, all);
  write_file(c.output_dir / "prefs" / "preferences.csv", csv.str());
  write_file(c.output_dir / "prefs" / "correlations.json", correlation_matrix_json(orders) + "\n");
  log << fmt::format("preferences: {} verb(s) x {} model(s)\n",
                     table.empty() ? 0 : table.begin()->second.size(), table.size());
  return table;
}

std::string_view factor_name_for_label(std::string_view label) {
  for (std::size_t i = 0; i < kFactorCount; ++i)
    if (kFactorLabels[i] == label) return kFactorNames[i];
  return label;
}

// Fits with aliased factors removed; each removal is recorded in `meta`.
LmmFit fit_dropping_aliased(DesignTable& table, ScalingMetadata& meta, Structure response,
                            std::ostream& log) {
  for (;;) {
    try {
      return fit_lmm(table, response);
    } catch (const RankDeficiency& e) {
      if (e.aliased().empty()) throw;
      for (const auto& label : e.aliased()) {
        const std::string name(factor_name_for_label(label));
        auto it = std::find(table.names.begin(), table.names.end(), name);
        if (it == table.names.end()) throw;
        const auto idx = static_cast<std::size_t>(it - table.names.begin());
        table.names.erase(it);
        table.columns.erase(table.columns.begin() + static_cast<std::ptrdiff_t>(idx));
        std::erase_if(meta.columns, [&](const ColumnScaling& s) { return s.name == name; });
        meta.dropped.push_back({name, "aliased with earlier columns"});
        log << "warning: dropping aliased factor " << name << "\n";
      }
    }
  }
}

int run_regression(const RunConfig& c, const Measured& m, const PreferenceTable* prefs, std::ostream& log) {
  if (c.selected_models.size() < 2) {
    log << "warning: fewer than two models; skipping the mixed-model regression\n";
    return kExitOk;
  }
  if (!prefs) {
    log << "warning: no verb preferences; skipping the mixed-model regression\n";
    return kExitOk;
  }
  const EmbeddingTable embeddings = load_embeddings(c.embeddings);
  std::optional<EmbeddingTable> sentences;
  if (c.sentence_embeddings) sentences = load_embeddings(*c.sentence_embeddings);

  SurprisalTable surprisals;
  std::vector<PEResult> results;
  std::vector<std::string> missing;
  for (const auto& model_id : c.selected_models) {
    auto ms = cache_scorer(c, model_id);
    for (const auto& item : m.items) {
      auto reqs = surprisal_requests(item, model_id, c.surprisal_mode);
      bool complete = true;
      for (const auto& r : reqs) {
        if (!ms.cache->contains(r)) {
          missing.push_back("model " + model_id + " item " + item.id + " surprisal leg '" + r.continuation + "'");
          complete = false;
        }
      }
      if (complete)
        surprisals[{item.id, model_id}] = score_surprisals(item, model_id, *ms.scorer, c.surprisal_mode);
    }
    const auto& r = m.results.at(model_id);
    results.insert(results.end(), r.begin(), r.end());
  }
  if (!missing.empty()) report_missing(missing, log);

  auto built = build_rows(m.items, results, embeddings, sentences ? &*sentences : nullptr, *prefs, surprisals);
  std::ostringstream rej;
  rej << "item_id,model_id,reason\n";
  for (const auto& r : built.rejections) rej << r.item_id << ',' << r.model_id << ",\"" << r.reason << "\"\n";
  write_file(c.output_dir / "regress" / "rejections.csv", rej.str());
  if (!built.rejections.empty()) log << "regression: " << built.rejections.size() << " row(s) rejected\n";

  auto rows = sample_rows(built.rows, c.sample_core, c.sample_other, c.sample_seed);
  std::ostringstream csv;
  write_rows_csv(csv, rows);
  write_file(c.output_dir / "regress" / "rows.csv", csv.str());

  std::set<std::string> groups;
  for (const auto& r : rows) groups.insert(r.model_id);
  if (rows.size() < 2 || groups.size() < 2) {
    log << "warning: not enough rows or groups for the mixed-model regression\n";
    return kExitOk;
  }
  auto [table, meta] = standardize(rows);
  for (const auto& d : meta.dropped) log << "note: factor " << d.name << " dropped (" << d.reason << ")\n";
  if (rows.size() <= table.names.size() + 1) {
    log << fmt::format("warning: {} row(s) cannot support {} fixed effects; skipping the mixed-model regression\n",
                       rows.size(), table.names.size() + 1);
    return kExitOk;
  }
  for (Structure s : {Structure::PO, Structure::DO}) {
    const std::string suffix = s == Structure::PO ? "po" : "do";
    LmmFit fit;
    try {
      fit = fit_dropping_aliased(table, meta, s, log);
    } catch (const InvalidArgument& e) {
      log << "warning: regression " << suffix << " skipped: " << e.what() << "\n";
      continue;
    }
    write_file(c.output_dir / "regress" / ("fit_" + suffix + ".json"), fit_to_json(fit) + "\n");
    write_file(c.output_dir / "regress" / ("fit_" + suffix + ".txt"), report_fit(fit));
    log << fmt::format("regression {}: n={} groups={} R2={:.4f} converged={}\n", suffix, fit.n_obs,
                       fit.n_groups, fit.r2_marginal, fit.converged ? "yes" : "no");
  }
  write_file(c.output_dir / "regress" / "scaling.json", scaling_to_json(meta) + "\n");
  return kExitOk;
}

int write_results(const RunConfig& c, const Measured& m, std::ostream& log) {
  const fs::path dir = c.output_dir / "results";
  ordered_json summaries = ordered_json::array();
  ordered_json invariants = ordered_json::array();
  std::vector<PEResult> all;
  bool ok = true;
  for (const auto& model_id : c.selected_models) {
    const auto& results = m.results.at(model_id);
    all.insert(all.end(), results.begin(), results.end());
    for (Condition cond : c.selected_conditions) {
      const auto name = std::string(to_string(cond));
      std::vector<PEResult> subset;
      for (const auto& r : results)
        if (r.condition == name) subset.push_back(r);
      std::ostringstream lines;
      for (const auto& r : subset) lines << pe_result_to_json(r) << "\n";
      write_file(dir / "pe" / model_id / (name + ".jsonl"), lines.str());
      auto s = summarize(subset, c.use_delta);
      s.model_id = model_id;
      s.condition = name;
      summaries.push_back(ordered_json::parse(summary_to_json(s)));
    }
    auto rep = check_invariants(results);
    const bool passed = rep.passed(c.tolerance);
    ok = ok && passed;
    ordered_json j;
    j["model_id"] = model_id;
    j["tolerance"] = c.tolerance;
    j["max_decomposition_error"] = rep.max_decomposition_error;
    j["max_antisymmetry_error"] = rep.max_antisymmetry_error;
    j["max_delta_error"] = rep.max_delta_error;
    j["passed"] = passed;
    invariants.push_back(std::move(j));
    log << fmt::format("{}: {} items, invariants {}\n", model_id, results.size(), passed ? "pass" : "FAIL");
  }
  write_file(dir / "summaries.json", summaries.dump(2) + "\n");
  write_file(dir / "invariants.json", invariants.dump(2) + "\n");
  std::ostringstream pe_space, bars;
  write_pe_space_csv(pe_space, all);
  write_file(dir / "pe_space.csv", pe_space.str());
  write_slot_bars_csv(bars, slot_bars(all));
  write_file(dir / "slot_bars.csv", bars.str());
  write_run_metadata(c, "analyze", dir / "run.json");
  return ok ? kExitOk : kExitInvariant;
}

}  // namespace

int cmd_analyze(const RunConfig& c, std::ostream& log) {
  Measured m = measure_all(c, log);
  const int status = write_results(c, m, log);
  auto prefs = compute_prefs(c, m.items, log);
  run_regression(c, m, prefs ? &*prefs : nullptr, log);
  return status;
}

int cmd_prefs(const RunConfig& c, std::ostream& log) {
  std::vector<PrimeTargetItem> items;
  for (Condition cond : c.selected_conditions) {
    auto v = load_items(c, cond);
    items.insert(items.end(), v.begin(), v.end());
  }
  compute_prefs(c, items, log);
  return kExitOk;
}

int cmd_regress(const RunConfig& c, std::ostream& log) {
  Measured m = measure_all(c, log);
  auto prefs = compute_prefs(c, m.items, log);
  return run_regression(c, m, prefs ? &*prefs : nullptr, log);
}

// ---------------------------------------------------------------------------
// report

namespace {

std::optional<std::string> read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string opt_num(const json& j, int precision) {
  if (j.is_null()) return "n/a";
  return fmt::format("{:.{}f}", j.get<double>(), precision);
}

}  // namespace

int cmd_report(const RunConfig& c, std::ostream& log) {
  const fs::path dir = c.output_dir;
  auto summaries_text = read_text(dir / "results" / "summaries.json");
  if (!summaries_text) throw IncompleteData("no results under " + dir.string() + " (run 'analyze' first)");

  std::string out;
  out += "Priming effects\n";
  out += fmt::format("{:<16} {:<14} {:>6} {:>9} {:>9} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9}\n", "model",
                     "condition", "n", "mean_PO", "mean_DO", "pearson", "spearman", "Balanced",
                     "SkewedPO", "SkewedDO", "Inverse");
  const auto summaries = json::parse(*summaries_text);
  std::string variant;
  for (const auto& s : summaries) {
    variant = s.at("variant").get<std::string>();
    const auto& q = s.at("quadrant_shares");
    out += fmt::format("{:<16} {:<14} {:>6} {:>9.4f} {:>9.4f} {:>8} {:>8} {:>9.3f} {:>9.3f} {:>9.3f} {:>9.3f}\n",
                       s.at("model_id").get<std::string>(), s.at("condition").get<std::string>(),
                       s.at("n_items").get<std::size_t>(), s.at("mean_s_pe_po").get<double>(),
                       s.at("mean_s_pe_do").get<double>(), opt_num(s.at("pearson_r"), 3),
                       opt_num(s.at("spearman_rho"), 3), q.at("Balanced").get<double>(),
                       q.at("SkewedPO").get<double>(), q.at("SkewedDO").get<double>(),
                       q.at("Inverse").get<double>());
  }
  if (!variant.empty()) out += "Effect variant: " + variant + "; multi-token words are slot-aggregated.\n";

  if (auto inv = read_text(dir / "results" / "invariants.json")) {
    out += "\nInvariants\n";
    for (const auto& j : json::parse(*inv)) {
      out += fmt::format("{:<16} decomposition {:.3e}  antisymmetry {:.3e}  delta {:.3e}  {}\n",
                         j.at("model_id").get<std::string>(), j.at("max_decomposition_error").get<double>(),
                         j.at("max_antisymmetry_error").get<double>(), j.at("max_delta_error").get<double>(),
                         j.at("passed").get<bool>() ? "pass" : "FAIL");
    }
  }
  if (auto corr = read_text(dir / "prefs" / "correlations.json")) {
    out += "\nVerb preference correlations (Spearman)\n";
    const auto matrix = json::parse(*corr);
    for (const auto& [key, value] : matrix.items()) {
      const auto bar = key.find('|');
      if (key.substr(0, bar) >= key.substr(bar + 1)) continue;
      out += fmt::format("{:<34} {}\n", key, opt_num(value, 3));
    }
  }
  for (const char* name : {"fit_po.txt", "fit_do.txt"}) {
    if (auto fit = read_text(dir / "regress" / name)) out += "\n" + *fit;
  }
  write_file(dir / "report.txt", out);
  log << out;
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_command(const std::string& command, const fs::path& config_path, const Overrides& overrides,
                std::ostream& log, std::ostream& err) {
  try {
    RunConfig config = load_config(config_path);
    apply_overrides(config, overrides);
    if (command == "generate") return cmd_generate(config, log);
    if (command == "score") return cmd_score(config, log);
    if (command == "analyze") return cmd_analyze(config, log);
    if (command == "prefs") return cmd_prefs(config, log);
    if (command == "regress") return cmd_regress(config, log);
    if (command == "report") return cmd_report(config, log);
    err << "error: unknown command '" << command << "'\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IncompleteData& e) {
    err << "incomplete data: " << e.what() << "\n";
    return kExitIncomplete;
  } catch (const LegError& e) {
    err << "incomplete data: " << e.what() << "\n";
    return e.missing() ? kExitIncomplete : kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace primelens
