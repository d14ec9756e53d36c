#include <cmath>

#include "doctest.h"
#include "icr/evalkit.hpp"
#include "icr/synthetic.hpp"
#include "icr/trainer.hpp"
#include "json.hpp"

using namespace icr;

namespace {

struct FailingGenerator : Generator {
  std::string name() const override { return "failing"; }
  std::string generate(const PromptPlan&, const Sample& test) override {
    if (test.sample_id.back() == '0') throw std::runtime_error("endpoint down");
    return test.output;
  }
};

struct Fixture {
  SyntheticTask task;
  ExampleStore store;
  ModelParams model;
  DenseIndex index;

  Fixture() : task(make_synthetic_task(SyntheticConfig{})), store(task.registry, task.train) {
    TrainConfig cfg;
    cfg.K = 10;
    cfg.dim = 64;
    cfg.buckets = 4096;
    cfg.max_in_flight = 1;
    OracleScorer scorer;
    ScoreCache cache;
    model = train(cfg, task.registry, store, scorer, cache).model;
    index = encode_corpus(model, store);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("metric identities and bounds") {
  const std::vector<std::string> c = {"def f ( x ) : return x", "print hello"};
  CHECK(bleu4(c, c) == doctest::Approx(1.0));
  CHECK(rouge_l(c, c) == doctest::Approx(1.0));
  CHECK(chrf(c, c) == doctest::Approx(1.0));
  CHECK(rouge_l({"a b"}, {"c d"}) == 0.0);
  CHECK(chrf({"abc"}, {"xyz"}) == 0.0);
  CHECK(bleu4({"x"}, {"y"}) == 0.0);
  const double smoothed = bleu4({"a b x c d"}, {"a b y c d"});
  CHECK(smoothed > 0.0);
  CHECK(smoothed < 1.0);
  CHECK_THROWS(bleu4({}, {}));
  CHECK_THROWS(rouge_l({"a"}, {}));
  CHECK_THROWS(chrf({}, {}));
}

TEST_CASE("ROUGE-L hand case") {
  // LCS 3, P = 1, R = 0.75, beta 1.2
  const double b2 = 1.2 * 1.2, f = (1 + b2) * 1.0 * 0.75 / (0.75 + b2 * 1.0);
  CHECK(rouge_l_single("a c d", "a b c d") == doctest::Approx(f).epsilon(1e-12));
}

TEST_CASE("metrics are invariant under sample reordering") {
  const std::vector<std::string> c = {"the cat sat", "a dog ran home", "x y z"};
  const std::vector<std::string> r = {"the cat sat down", "the dog ran home", "x z"};
  const std::vector<std::string> c2 = {c[2], c[0], c[1]}, r2 = {r[2], r[0], r[1]};
  CHECK(bleu4(c, r) == doctest::Approx(bleu4(c2, r2)).epsilon(1e-12));
  CHECK(rouge_l(c, r) == doctest::Approx(rouge_l(c2, r2)).epsilon(1e-12));
  CHECK(chrf(c, r) == doctest::Approx(chrf(c2, r2)).epsilon(1e-12));
}

TEST_CASE("trim_repetition") {
  CHECK(trim_repetition("a\nb\nb\nb") == "a\nb");
  CHECK(trim_repetition("x\ny\nz\ny\nz\n") == "x\ny\nz\n");
  CHECK(trim_repetition("a\nb\nc") == "a\nb\nc");
  CHECK(trim_repetition("") == "");
  CHECK(trim_repetition("same line") == "same line");
}

TEST_CASE("kendall tau-b") {
  CHECK(kendall_tau_b({1, 2, 3}, {1, 3, 2}) == doctest::Approx(1.0 / 3));
  CHECK(kendall_tau_b({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(kendall_tau_b({1, 1, 2}, {1, 2, 3}) == doctest::Approx(2.0 / std::sqrt(6.0)));
  CHECK(kendall_tau_b({1, 1, 1}, {1, 2, 3}) == 0.0);
  CHECK_THROWS(kendall_tau_b({1, 2}, {1}));
}

TEST_CASE("echo generator reaches the metric ceiling") {
  const auto& f = fixture();
  EchoGenerator echo;
  RetrieveConfig cfg;
  const auto res = evaluate_run(f.task.test, f.task.registry, f.model, f.index, f.store, echo, cfg);
  CHECK(res.report.samples == f.task.test.size());
  CHECK(res.report.failed == 0);
  CHECK(res.report.bleu4 == doctest::Approx(1.0));
  CHECK(res.report.chrf == doctest::Approx(1.0));
  for (const auto& rec : res.run.records) CHECK_FALSE(rec.admitted.empty());
}

TEST_CASE("generator failures are counted and excluded") {
  const auto& f = fixture();
  FailingGenerator gen;
  const auto res = evaluate_run(f.task.test, f.task.registry, f.model, f.index, f.store, gen, RetrieveConfig{}, 2);
  CHECK(res.report.failed > 0);
  CHECK(res.report.samples + res.report.failed == f.task.test.size());
  CHECK(res.report.bleu4 == doctest::Approx(1.0));
  std::size_t marked = 0;
  for (const auto& rec : res.run.records) marked += rec.failed && !rec.error.empty();
  CHECK(marked == res.report.failed);
}

TEST_CASE("nearest exemplar beats a random exemplar on the cluster task") {
  const auto& f = fixture();
  NearestExemplarGenerator nearest(f.store);
  RandomExemplarGenerator random(f.store, 3);
  const auto a = evaluate_run(f.task.test, f.task.registry, f.model, f.index, f.store, nearest, RetrieveConfig{});
  const auto b = evaluate_run(f.task.test, f.task.registry, f.model, f.index, f.store, random, RetrieveConfig{});
  CHECK(a.report.bleu4 > b.report.bleu4);
  CHECK(a.report.chrf > b.report.chrf);
}

TEST_CASE("ordering sweep keeps admitted sets") {
  const auto& f = fixture();
  NearestExemplarGenerator nearest(f.store);
  const std::vector<OrderingSpec> orders = {OrderingSpec::parse("similarity"), OrderingSpec::parse("reverse"),
                                            OrderingSpec::parse("random:1")};
  const auto abl = order_ablation(f.task.test, f.task.registry, f.model, f.index, f.store, nearest, RetrieveConfig{},
                                  orders);
  REQUIRE(abl.runs.size() == 3);
  CHECK(abl.admitted_sets_equal);
  for (std::size_t i = 0; i < f.task.test.size(); ++i) {
    CHECK(abl.runs[0].second.run.records[i].admitted == abl.runs[1].second.run.records[i].admitted);
    CHECK(abl.runs[0].second.run.records[i].layout != abl.runs[1].second.run.records[i].layout);
  }
  const auto j = nlohmann::json::parse(abl.to_json());
  CHECK(j.is_object());
}

TEST_CASE("evaluation refuses a stale index") {
  const auto& f = fixture();
  EchoGenerator echo;
  const auto other = init_model(f.model.query.dim, f.model.query.buckets, 777);
  CHECK_THROWS(evaluate_run(f.task.test, f.task.registry, other, f.index, f.store, echo, RetrieveConfig{}));
}

TEST_CASE("oracle agreement of the trained model beats BM25") {
  const auto& f = fixture();
  const auto bm25 = Bm25Index::build(f.store.docs());
  const auto& reg = f.task.registry;
  const double dense = oracle_agreement(f.task.test, reg, f.store, dense_top1(f.model, f.index, reg));
  const double lexical = oracle_agreement(f.task.test, reg, f.store, bm25_top1(bm25, reg));
  CHECK(dense > lexical);
  CHECK(dense <= 1.0);
}
