#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "icr/retrieval.hpp"
#include "json.hpp"

using namespace icr;

namespace {

std::size_t words(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

std::vector<RankedExample> ranked3() {
  return {{"a", 0.9, "one two three"}, {"b", 0.5, "four five"}, {"c", 0.1, "six seven eight nine"}};
}

}  // namespace

TEST_CASE("dense search basics") {
  DenseIndex idx(2, 7);
  idx.add("r1", std::vector<double>{1, 0});
  idx.add("r2", std::vector<double>{0, 1});
  const std::vector<double> q = {1, 0};
  auto hits = idx.search(q, 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].sample_id == "r1");
  CHECK(hits[0].score == 1.0);

  hits = idx.search(q, 50);
  CHECK(hits.size() == 2);
  CHECK(idx.search(q, 5, "r1").front().sample_id == "r2");
  CHECK(idx.search_serial(q, 2) == idx.search(q, 2));
  CHECK_THROWS(idx.search(std::vector<double>{1, 0, 0}, 1));
  CHECK_THROWS(idx.add("r3", std::vector<double>{1}));

  DenseIndex empty(2, 7);
  CHECK(empty.rows() == 0);
  CHECK_THROWS(empty.search(q, 3));
}

TEST_CASE("dense index round trip") {
  DenseIndex idx(3, 0xabcdef);
  idx.add("x", std::vector<double>{0.25, -1, 3});
  idx.add("y", std::vector<double>{1e-3, 2, -0.5});
  const auto dir = testutil::scratch("index");
  idx.save((dir / "index.bin").string());
  CHECK(DenseIndex::load((dir / "index.bin").string()) == idx);
  CHECK(DenseIndex::deserialize(idx.serialize()) == idx);
  CHECK_THROWS(DenseIndex::deserialize("not an index"));
}

TEST_CASE("encode_corpus rows equal direct example encodings") {
  TaskRegistry reg;
  reg.add(TaskSpec("t", "Explain.", SegmentKind::code("python")));
  const std::vector<Sample> samples = {{"s1", "t", "x = f(y)", "call"}, {"s2", "t", "a = b[0]", "index"}};
  const ExampleStore store(reg, samples);
  const auto model = init_model(6, 256, 3);
  const auto idx = encode_corpus(model, store);
  CHECK(idx.rows() == 2);
  CHECK(idx.fingerprint() == model_fingerprint(model));
  for (std::size_t i = 0; i < 2; ++i) {
    const auto v = encode_example(model, store.doc(i), example_tree(reg.at("t"), samples[i]));
    for (std::size_t k = 0; k < 6; ++k) CHECK(idx.row(i)[k] == static_cast<float>(v[k]));
  }
  CHECK(encode_corpus(model, store) == idx);
  CHECK_THROWS_AS(ExampleStore(reg, {samples[0], samples[0]}), DatasetError);
}

TEST_CASE("prompt budget cases") {
  const std::string ins = "Do it.", in = "the input";
  const auto sim = OrderingSpec{};

  // nothing fits besides instruction and input
  auto p = assemble_prompt(ins, ranked3(), in, 10, 5, sim, words);
  CHECK(p.exemplars.empty());
  CHECK(p.text == "Do it.\n\nthe input");

  // exactly one: the most similar
  p = assemble_prompt(ins, ranked3(), in, 12, 4, sim, words);
  REQUIRE(p.exemplars.size() == 1);
  CHECK(p.exemplars[0].sample_id == "a");

  // prefix-greedy: stop at the first exemplar that does not fit
  p = assemble_prompt(ins, ranked3(), in, 100, 90, sim, words);
  CHECK(p.admitted_set() == std::vector<std::string>{"a", "b"});
  CHECK(p.total_tokens + p.reserved_output <= p.budget);

  CHECK_THROWS_AS(assemble_prompt(ins, ranked3(), in, 8, 5, sim, words), BudgetError);
  CHECK_THROWS_AS(assemble_prompt(ins, ranked3(), in, 8, 8, sim, words), BudgetError);
}

TEST_CASE("ordering changes layout only") {
  const std::string ins = "Do it.", in = "the input";
  const auto s = assemble_prompt(ins, ranked3(), in, 100, 10, OrderingSpec::parse("similarity"), words);
  const auto r = assemble_prompt(ins, ranked3(), in, 100, 10, OrderingSpec::parse("reverse"), words);
  const auto x = assemble_prompt(ins, ranked3(), in, 100, 10, OrderingSpec::parse("random:5"), words);
  CHECK(s.exemplars.back().sample_id == "a");
  CHECK(r.exemplars.front().sample_id == "a");
  CHECK(s.admitted_set() == r.admitted_set());
  CHECK(s.admitted_set() == x.admitted_set());
  CHECK(s.text.rfind("one two three\n\nthe input") != std::string::npos);
  CHECK(s.total_tokens == r.total_tokens);

  CHECK(OrderingSpec::parse("random:5").str() == "random:5");
  CHECK(OrderingSpec::parse("random").kind == Ordering::Random);
  CHECK_THROWS(OrderingSpec::parse("sideways"));
  CHECK_THROWS(OrderingSpec::parse("random:x"));
}

TEST_CASE("prompt plan JSON") {
  const auto p = assemble_prompt("Do it.", ranked3(), "in", 100, 10, OrderingSpec{}, words);
  const auto j = nlohmann::json::parse(p.to_json());
  CHECK(j.at("exemplars").size() == p.exemplars.size());
  CHECK(j.at("ordering") == "similarity");
  CHECK(j.at("total_tokens") == p.total_tokens);
  CHECK(j.at("text") == p.text);
}

TEST_CASE("retrieve_for_test on a 3-doc corpus with a hand-set model") {
  TaskRegistry reg;
  reg.add(TaskSpec("t", "Answer."));
  const std::vector<Sample> samples = {
      {"d1", "t", "alpha", "out one"}, {"d2", "t", "beta", "out two"}, {"d3", "t", "gamma", "out three"}};
  const ExampleStore store(reg, samples);

  // One bucket with a zero row: every query encodes to (tanh 0.5, tanh -0.2).
  ModelParams m = init_model(2, 1, 1);
  m.query.embedding = {0, 0};
  m.query.bias = {0.5, -0.2};
  m.beta1 = 0;
  const double q0 = std::tanh(0.5), q1 = std::tanh(-0.2);

  DenseIndex idx(2, model_fingerprint(m));
  const std::vector<std::vector<double>> rows = {{0.1, 0.9}, {0.8, 0.1}, {-0.5, 0.5}};
  for (std::size_t i = 0; i < 3; ++i) idx.add(samples[i].sample_id, rows[i]);
  // hand sims: d1 -0.1314, d2 0.3500, d3 -0.3297

  RetrieveConfig cfg;
  cfg.top_l = 5;
  cfg.budget = 100;
  cfg.reserved_output = 10;
  const Sample test{"t-1", "t", "delta", "secret gold"};
  const auto res = retrieve_for_test(m, idx, store, reg, test, cfg);
  REQUIRE(res.hits.size() == 3);
  CHECK(res.hits[0].sample_id == "d2");
  CHECK(res.hits[1].sample_id == "d1");
  CHECK(res.hits[2].sample_id == "d3");
  CHECK(res.hits[0].score == doctest::Approx(static_cast<float>(0.8) * q0 + static_cast<float>(0.1) * q1));
  CHECK(res.plan.exemplars.back().sample_id == "d2");
  CHECK(res.plan.text.find("secret gold") == std::string::npos);
  CHECK(res.plan.text.find("Answer.") == 0);
}
