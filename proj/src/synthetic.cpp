#include "icr/synthetic.hpp"

#include <filesystem>
#include <set>
#include <stdexcept>

#include "icr/binio.hpp"
#include "icr/rng.hpp"
#include "json.hpp"

namespace icr {

using nlohmann::json;

namespace {

const char* const kSyllables[] = {"ka", "ro", "mi", "tu", "se", "lo", "na", "pe", "zu", "di", "fa", "go", "hi", "ju"};

const char* const kClusterWords[] = {"amber",  "basalt", "cobalt", "dune",   "ember",  "fjord",  "garnet", "harbor",
                                     "indigo", "jasper", "kelp",   "lagoon", "marble", "nectar", "onyx",   "pebble",
                                     "quartz", "reef",   "sienna", "tundra", "umber",  "velvet", "willow", "yarrow",
                                     "zephyr", "acorn",  "birch",  "cedar",  "delta",  "estuary", "fennel", "glacier"};

std::string statement(std::size_t cluster, const std::string& a, const std::string& b, const std::string& c) {
  switch (cluster) {
    case 0: return a + " = " + b + "(" + c + ")";
    case 1: return a + " = " + b + "[" + c + "]";
    case 2: return a + " = " + b + "." + c;
    case 3: return a + " = " + b + " + " + c;
    case 4: return a + " = (" + b + ", " + c + ")";
    case 5: return a + " = " + b + " < " + c;
    case 6: return a + " = not " + b;
    default: return a + " = [" + b + ", " + c + "]";
  }
}

}  // namespace

SyntheticTask make_synthetic_task(const SyntheticConfig& cfg) {
  if (cfg.clusters < 2 || cfg.clusters > kMaxSyntheticClusters)
    throw std::invalid_argument("synthetic clusters must be in 2.." + std::to_string(kMaxSyntheticClusters));
  if (cfg.min_statements < 1 || cfg.max_statements < cfg.min_statements)
    throw std::invalid_argument("synthetic statement range is empty");
  if (cfg.identifier_pool < 3) throw std::invalid_argument("synthetic identifier pool must hold >= 3 names");

  Rng rng(cfg.seed);
  std::set<std::string> names;
  const std::size_t syl = std::size(kSyllables);
  if (cfg.identifier_pool > syl * syl * syl) throw std::invalid_argument("synthetic identifier pool too large");
  while (names.size() < cfg.identifier_pool)
    names.insert(std::string(kSyllables[rng.below(syl)]) + kSyllables[rng.below(syl)] + kSyllables[rng.below(syl)]);
  const std::vector<std::string> pool(names.begin(), names.end());

  // cluster c: shared(c) + unique(c) + shared(c + 1), two words each
  const std::size_t C = cfg.clusters;
  std::vector<std::vector<std::string>> words(C);
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t next = (c + 1) % C;
    words[c] = {kClusterWords[2 * c], kClusterWords[2 * c + 1], kClusterWords[2 * C + 2 * c],
                kClusterWords[2 * C + 2 * c + 1], kClusterWords[2 * next], kClusterWords[2 * next + 1]};
  }

  SyntheticTask task;
  task.registry.add(TaskSpec(cfg.task_id, "Describe the statement.", SegmentKind::code("python"),
                             SegmentKind::natural()));
  auto make = [&](std::size_t c, const std::string& id) {
    const std::size_t n = cfg.min_statements + rng.below(cfg.max_statements - cfg.min_statements + 1);
    std::string input;
    for (std::size_t s = 0; s < n; ++s) {
      if (s) input += "\n";
      input += statement(c, pool[rng.below(pool.size())], pool[rng.below(pool.size())], pool[rng.below(pool.size())]);
    }
    auto w = words[c];
    rng.shuffle(w);
    std::string output;
    for (const auto& x : w) output += (output.empty() ? "" : " ") + x;
    return Sample{id, cfg.task_id, input, output};
  };
  auto fill = [&](std::size_t per_cluster, const char* prefix, std::vector<Sample>& out, std::vector<std::size_t>& labels) {
    std::vector<std::size_t> order;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < per_cluster; ++k) order.push_back(c);
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%05zu", prefix, i);
      out.push_back(make(order[i], id));
      labels.push_back(order[i]);
    }
  };
  fill(cfg.train_per_cluster, "train", task.train, task.train_cluster);
  fill(cfg.test_per_cluster, "test", task.test, task.test_cluster);
  return task;
}

void write_synthetic_workspace(const std::string& dir, const SyntheticConfig& cfg) {
  const auto task = make_synthetic_task(cfg);
  std::filesystem::create_directories(dir);
  write_file_atomic(dir + "/tasks.json", task.registry.to_json_text());
  write_file_atomic(dir + "/train.jsonl", serialize_dataset(task.train));
  write_file_atomic(dir + "/test.jsonl", serialize_dataset(task.test));
  json ws = {{"tasks", "tasks.json"},
             {"datasets", json::array({{{"task_id", cfg.task_id}, {"train", "train.jsonl"}, {"test", "test.jsonl"}}})},
             {"encoder", {{"dim", 64}, {"buckets", 4096}}},
             {"train",
              {{"K", 10}, {"iterations", 3}, {"epochs", 4}, {"batch_size", 8}, {"learning_rate", 0.01}, {"optimizer", "adam"}, {"gamma1", 1.0},
               {"gamma2", 4.0}, {"sampling_rate", 0.7}}},
             {"retrieval", {{"top_l", 8}, {"budget", 2048}, {"reserved_output", 64}, {"ordering", "similarity"}}},
             {"scorer", {{"kind", "oracle"}}},
             {"generator", {{"kind", "nearest-exemplar"}}},
             {"output_dir", "out"},
             {"seed", 13}};
  write_file_atomic(dir + "/workspace.json", ws.dump(2) + "\n");
}

}  // namespace icr
