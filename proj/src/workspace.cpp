#include "icr/workspace.hpp"

#include <filesystem>
#include <map>
#include <set>

#include "icr/binio.hpp"
#include "icr/errors.hpp"
#include "json.hpp"

namespace icr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : obj.items())
    if (!ok.count(k)) throw ConfigError(where.empty() ? k : where + "." + k, "unknown key");
}

template <typename T>
T get(const json& obj, const char* key, const std::string& where, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where.empty() ? key : where + "." + key, "wrong type");
  }
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  return (path.is_absolute() ? path : fs::path(base) / path).lexically_normal().string();
}

std::string existing(const std::string& base, const std::string& p, const std::string& key) {
  auto r = resolve(base, p);
  if (r.empty()) throw ConfigError(key, "path must be set");
  if (!fs::exists(r)) throw ConfigError(key, "file not found: " + r);
  return r;
}

}  // namespace

WorkspaceConfig WorkspaceConfig::load(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("--config", e.what());
  }
  auto base = fs::absolute(path).parent_path().string();
  return from_json_text(text, base);
}

WorkspaceConfig WorkspaceConfig::from_json_text(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  reject_unknown(j, "", {"tasks", "datasets", "encoder", "train", "retrieval", "scorer", "generator", "output_dir", "seed"});
  WorkspaceConfig c;
  c.base_dir = base_dir;
  if (!j.contains("tasks")) throw ConfigError("tasks", "required");
  c.tasks_path = existing(base_dir, get<std::string>(j, "tasks", "", ""), "tasks");

  if (!j.contains("datasets") || !j["datasets"].is_array() || j["datasets"].empty())
    throw ConfigError("datasets", "required non-empty array");
  for (std::size_t i = 0; i < j["datasets"].size(); ++i) {
    const auto& d = j["datasets"][i];
    const std::string where = "datasets[" + std::to_string(i) + "]";
    reject_unknown(d, where, {"task_id", "train", "test", "sampling_rate"});
    DatasetEntry e;
    e.task_id = get<std::string>(d, "task_id", where, "");
    if (e.task_id.empty()) throw ConfigError(where + ".task_id", "required");
    e.train = existing(base_dir, get<std::string>(d, "train", where, ""), where + ".train");
    if (d.contains("test")) e.test = existing(base_dir, get<std::string>(d, "test", where, ""), where + ".test");
    if (d.contains("sampling_rate")) {
      const double r = get<double>(d, "sampling_rate", where, 0.0);
      if (!(r > 0)) throw ConfigError(where + ".sampling_rate", "must be > 0");
      c.train.sampling_rate[e.task_id] = r;
    }
    c.datasets.push_back(std::move(e));
  }

  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    reject_unknown(e, "encoder", {"dim", "buckets"});
    c.train.dim = get<std::size_t>(e, "dim", "encoder", c.train.dim);
    c.train.buckets = get<std::size_t>(e, "buckets", "encoder", c.train.buckets);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, "train",
                   {"K", "iterations", "epochs", "batch_size", "learning_rate", "optimizer", "gamma1", "gamma2",
                    "sampling_rate", "freeze_tree_channel", "probe_count"});
    auto& tc = c.train;
    tc.K = get<std::size_t>(t, "K", "train", tc.K);
    tc.iterations = get<std::size_t>(t, "iterations", "train", tc.iterations);
    tc.epochs = get<std::size_t>(t, "epochs", "train", tc.epochs);
    tc.batch_size = get<std::size_t>(t, "batch_size", "train", tc.batch_size);
    tc.learning_rate = get<double>(t, "learning_rate", "train", tc.learning_rate);
    tc.optimizer = get<std::string>(t, "optimizer", "train", tc.optimizer);
    tc.gamma1 = get<double>(t, "gamma1", "train", tc.gamma1);
    tc.gamma2 = get<double>(t, "gamma2", "train", tc.gamma2);
    tc.default_sampling_rate = get<double>(t, "sampling_rate", "train", tc.default_sampling_rate);
    tc.freeze_tree_channel = get<bool>(t, "freeze_tree_channel", "train", tc.freeze_tree_channel);
    tc.probe_count = get<std::size_t>(t, "probe_count", "train", tc.probe_count);
  }
  if (j.contains("retrieval")) {
    const auto& r = j["retrieval"];
    reject_unknown(r, "retrieval", {"top_l", "budget", "reserved_output", "ordering"});
    c.retrieval.top_l = get<std::size_t>(r, "top_l", "retrieval", c.retrieval.top_l);
    c.retrieval.budget = get<std::size_t>(r, "budget", "retrieval", c.retrieval.budget);
    c.retrieval.reserved_output = get<std::size_t>(r, "reserved_output", "retrieval", c.retrieval.reserved_output);
    try {
      c.retrieval.ordering = OrderingSpec::parse(get<std::string>(r, "ordering", "retrieval", "similarity"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("retrieval.ordering", e.what());
    }
    if (c.retrieval.top_l < 1) throw ConfigError("retrieval.top_l", "must be >= 1");
    if (c.retrieval.reserved_output >= c.retrieval.budget)
      throw ConfigError("retrieval.reserved_output", "must be below retrieval.budget");
  }
  if (j.contains("scorer")) {
    const auto& s = j["scorer"];
    reject_unknown(s, "scorer", {"kind"});
    c.scorer_kind = get<std::string>(s, "kind", "scorer", c.scorer_kind);
    if (c.scorer_kind != "oracle" && c.scorer_kind != "remote")
      throw ConfigError("scorer.kind", "expected oracle or remote, got '" + c.scorer_kind + "'");
  }
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    reject_unknown(g, "generator",
                   {"kind", "base_url", "model", "timeout_s", "max_in_flight", "retry", "api_key_env", "max_tokens",
                    "replay"});
    auto& gc = c.generator;
    gc.kind = get<std::string>(g, "kind", "generator", gc.kind);
    static const std::set<std::string> kinds = {"echo", "nearest-exemplar", "random-exemplar", "remote"};
    if (!kinds.count(gc.kind)) throw ConfigError("generator.kind", "unknown generator '" + gc.kind + "'");
    gc.endpoint.base_url = get<std::string>(g, "base_url", "generator", "");
    gc.endpoint.model = get<std::string>(g, "model", "generator", "");
    gc.endpoint.timeout_s = get<double>(g, "timeout_s", "generator", gc.endpoint.timeout_s);
    gc.endpoint.max_in_flight = get<std::size_t>(g, "max_in_flight", "generator", gc.endpoint.max_in_flight);
    gc.endpoint.api_key_env = get<std::string>(g, "api_key_env", "generator", gc.endpoint.api_key_env);
    gc.max_tokens = get<int>(g, "max_tokens", "generator", gc.max_tokens);
    if (g.contains("retry")) {
      const auto& r = g["retry"];
      reject_unknown(r, "generator.retry", {"max_attempts", "backoff_ms", "backoff_factor"});
      gc.endpoint.retry.max_attempts = get<int>(r, "max_attempts", "generator.retry", gc.endpoint.retry.max_attempts);
      gc.endpoint.retry.backoff_ms = get<int>(r, "backoff_ms", "generator.retry", gc.endpoint.retry.backoff_ms);
      gc.endpoint.retry.backoff_factor =
          get<double>(r, "backoff_factor", "generator.retry", gc.endpoint.retry.backoff_factor);
    }
    if (g.contains("replay")) {
      const auto& r = g["replay"];
      reject_unknown(r, "generator.replay", {"mode", "path"});
      gc.replay_mode = parse_replay_mode(get<std::string>(r, "mode", "generator.replay", "off"));
      gc.replay_path = resolve(base_dir, get<std::string>(r, "path", "generator.replay", ""));
      if (gc.replay_mode != ReplayMode::Off && gc.replay_path.empty())
        throw ConfigError("generator.replay.path", "required when replay is enabled");
    }
    if (gc.endpoint.max_in_flight < 1) throw ConfigError("generator.max_in_flight", "must be >= 1");
    c.train.max_in_flight = gc.endpoint.max_in_flight;
  }
  const bool remote = c.scorer_kind == "remote" || c.generator.kind == "remote";
  if (remote && c.generator.endpoint.model.empty()) throw ConfigError("generator.model", "required for remote use");
  if (remote && c.generator.endpoint.base_url.empty() && c.generator.replay_mode != ReplayMode::Replay)
    throw ConfigError("generator.base_url", "required for remote use");

  c.output_dir = resolve(base_dir, get<std::string>(j, "output_dir", "", "out"));
  c.set_seed(get<std::uint64_t>(j, "seed", "", kDefaultSeed));
  c.train.validate();
  return c;
}

void WorkspaceConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  if (retrieval.ordering.kind == Ordering::Random && retrieval.ordering.seed == 0) retrieval.ordering.seed = s;
}

TaskRegistry WorkspaceConfig::load_registry() const {
  auto reg = TaskRegistry::load(tasks_path);
  for (const auto& d : datasets)
    if (!reg.contains(d.task_id)) throw ConfigError("datasets", "task '" + d.task_id + "' is not in the task registry");
  return reg;
}

namespace {

// Later entries of the same task are slices; their generated ids get "-s<k>".
std::vector<std::string> slice_prefixes(const std::vector<DatasetEntry>& datasets) {
  std::map<std::string, int> seen;
  std::vector<std::string> out;
  for (const auto& d : datasets) {
    const int k = seen[d.task_id]++;
    out.push_back(k == 0 ? "" : "-s" + std::to_string(k));
  }
  return out;
}

}  // namespace

std::vector<Sample> WorkspaceConfig::load_train() const {
  std::vector<Sample> out;
  const auto prefix = slice_prefixes(datasets);
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    auto s = load_dataset(datasets[i].train, datasets[i].task_id, true, prefix[i]);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<Sample> WorkspaceConfig::load_test() const {
  std::vector<Sample> out;
  bool any = false;
  const auto prefix = slice_prefixes(datasets);
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& d = datasets[i];
    if (d.test.empty()) continue;
    any = true;
    auto s = load_dataset(d.test, d.task_id, true, prefix[i] + "-test");
    out.insert(out.end(), s.begin(), s.end());
  }
  if (!any) throw ConfigError("datasets", "no dataset declares a test file");
  return out;
}

}  // namespace icr
