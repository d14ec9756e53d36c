#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "icr/errors.hpp"
#include "icr/synthetic.hpp"
#include "icr/trainer.hpp"

using namespace icr;
namespace fs = std::filesystem;

namespace {

SyntheticTask small_task() {
  SyntheticConfig sc;
  sc.clusters = 3;
  sc.train_per_cluster = 8;
  sc.test_per_cluster = 2;
  return make_synthetic_task(sc);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.K = 5;
  cfg.iterations = 1;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.dim = 8;
  cfg.buckets = 512;
  cfg.max_in_flight = 1;
  return cfg;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("iteration 0 ranks a verbatim copy first") {
  TaskRegistry reg;
  reg.add(TaskSpec("t", "Describe."));
  const std::vector<Sample> samples = {{"q", "t", "open the socket", "connects"},
                                       {"copy", "t", "open the socket", "connects"},
                                       {"n1", "t", "close the file", "closes"},
                                       {"n2", "t", "open a window", "shows"}};
  const ExampleStore store(reg, samples);
  const auto bm25 = Bm25Index::build(store.docs());
  const auto ids = select_candidates(0, reg, store, 0, 3, &bm25);
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == "copy");
  CHECK(std::find(ids.begin(), ids.end(), "q") == ids.end());
  CHECK(select_candidates(0, reg, store, 0, 10, &bm25).size() == 3);
  CHECK_THROWS(select_candidates(0, reg, store, 0, 3, nullptr));
  CHECK_THROWS(select_candidates(1, reg, store, 0, 3, &bm25));
}

TEST_CASE("later iterations follow the dense index") {
  TaskRegistry reg;
  reg.add(TaskSpec("t", "Describe."));
  const std::vector<Sample> samples = {
      {"q", "t", "a", "b"}, {"x", "t", "c", "d"}, {"y", "t", "e", "f"}, {"z", "t", "g", "h"}};
  const ExampleStore store(reg, samples);

  // every query encodes to (tanh 1, 0)
  ModelParams m = init_model(2, 1, 1);
  m.query.embedding = {0, 0};
  m.query.bias = {1, 0};
  m.beta1 = 0;
  DenseIndex idx(2, 0);
  idx.add("q", std::vector<double>{5, 0});
  idx.add("x", std::vector<double>{0, 1});
  idx.add("y", std::vector<double>{1, 0});
  idx.add("z", std::vector<double>{-1, 0});
  const auto ids = select_candidates(1, reg, store, 0, 2, nullptr, &m, &idx);
  CHECK(ids == std::vector<std::string>{"y", "x"});
}

TEST_CASE("build_batches sampling rates") {
  const std::vector<std::string> tasks(10, "t");
  TrainConfig cfg;
  cfg.default_sampling_rate = 0.7;
  std::size_t total = 0;
  for (const auto& b : build_batches(tasks, cfg, 4, 1)) total += b.size();
  CHECK(total == 7);

  cfg.default_sampling_rate = 3.0;
  const auto batches = build_batches(tasks, cfg, 8, 1);
  total = 0;
  for (const auto& b : batches) {
    CHECK(b.size() <= 8);
    total += b.size();
  }
  CHECK(total == 30);
  CHECK(build_batches(tasks, cfg, 8, 1) == batches);
  CHECK_FALSE(build_batches(tasks, cfg, 8, 2) == batches);

  // per-task override
  std::vector<std::string> mixed(10, "a");
  mixed.resize(20, "b");
  cfg.default_sampling_rate = 1.0;
  cfg.sampling_rate["b"] = 0.5;
  total = 0;
  for (const auto& b : build_batches(mixed, cfg, 4, 3)) total += b.size();
  CHECK(total == 15);
  CHECK_THROWS(build_batches(tasks, cfg, 0, 1));
}

TEST_CASE("config validation names the key") {
  auto cfg = small_config();
  cfg.optimizer = "lbfgs";
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key == "train.optimizer");
  }
  cfg = small_config();
  cfg.K = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("one iteration writes one checkpoint and logs every step") {
  const auto task = small_task();
  const ExampleStore store(task.registry, task.train);
  const auto dir = testutil::scratch("train1");
  OracleScorer scorer;
  ScoreCache cache;
  std::size_t steps = 0;
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) {
    ++steps;
    CHECK(std::isfinite(r.l_total));
    CHECK(r.iteration == 1);
  };
  const auto res = train(small_config(), task.registry, store, scorer, cache, dir.string(), hooks);
  CHECK(res.iterations.size() == 1);
  CHECK(fs::exists(dir / "iter_1" / "model.bin"));
  CHECK_FALSE(fs::exists(dir / "iter_2"));
  CHECK(steps == 5);  // 24 instances at rate 0.7 -> 17, batches of 4
  CHECK(count_lines(dir / "train_log.jsonl") >= steps);
  CHECK(res.iterations[0].fingerprint == model_fingerprint(res.model));

  std::string why;
  CHECK(verify_checkpoint((dir / "iter_1").string(), &why));
  auto m = load_checkpoint((dir / "iter_1" / "model.bin").string());
  m.alpha1 += 1e-9;
  save_checkpoint((dir / "iter_1" / "model.bin").string(), m);
  CHECK_FALSE(verify_checkpoint((dir / "iter_1").string(), &why));
  CHECK_FALSE(why.empty());
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto task = small_task();
  const ExampleStore store(task.registry, task.train);
  auto cfg = small_config();
  cfg.iterations = 2;
  cfg.max_in_flight = 3;
  OracleScorer scorer;
  ScoreCache c1, c2;
  TrainHooks quiet;
  quiet.warn = [](const std::string&) {};
  const auto a = train(cfg, task.registry, store, scorer, c1, {}, quiet);
  const auto b = train(cfg, task.registry, store, scorer, c2, {}, quiet);
  CHECK(serialize_checkpoint(a.model) == serialize_checkpoint(b.model));
  cfg.seed = 99;
  const auto c = train(cfg, task.registry, store, scorer, c1, {}, quiet);
  CHECK_FALSE(serialize_checkpoint(a.model) == serialize_checkpoint(c.model));
}

TEST_CASE("loss does not rise over the first epochs") {
  const auto task = small_task();
  const ExampleStore store(task.registry, task.train);
  auto cfg = small_config();
  cfg.epochs = 2;
  OracleScorer scorer;
  ScoreCache cache;
  const auto res = train(cfg, task.registry, store, scorer, cache);
  const auto& loss = res.iterations[0].epoch_loss;
  REQUIRE(loss.size() == 2);
  CHECK(loss[1] <= loss[0] * 1.05);
}

TEST_CASE("frozen tree channel keeps beta at zero") {
  const auto task = small_task();
  const ExampleStore store(task.registry, task.train);
  auto cfg = small_config();
  cfg.freeze_tree_channel = true;
  OracleScorer scorer;
  ScoreCache cache;
  const auto res = train(cfg, task.registry, store, scorer, cache);
  CHECK(res.model.beta1 == 0.0);
  CHECK(res.model.beta2 == 0.0);
  CHECK(res.model.alpha1 != res.initial.alpha1);
}
