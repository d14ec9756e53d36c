#include <cmath>

#include "doctest.h"
#include "icr/objective.hpp"
#include "icr/rng.hpp"

using namespace icr;

namespace {

// Direct formula without the max shift.
double naive_in_batch(const std::vector<QuerySims>& b) {
  double total = 0;
  for (const auto& q : b) {
    double z = std::exp(q.positive);
    for (double s : q.negatives) z += std::exp(s);
    total += -std::log(std::exp(q.positive) / z);
  }
  return total / static_cast<double>(b.size());
}

double pair_oracle(const std::vector<RankedSim>& r) {
  double total = 0;
  for (const auto& a : r)
    for (const auto& b : r) {
      const double w = std::max(0.0, 1.0 / a.rank - 1.0 / b.rank);
      total += w * std::log(1 + std::exp(b.sim - a.sim));
    }
  return total;
}

}  // namespace

TEST_CASE("in-batch loss closed form and limit") {
  CHECK(std::abs(in_batch_tree_loss({{0.3, {0.3, 0.3, 0.3}}}).loss - std::log(4.0)) < 1e-12);
  CHECK(in_batch_tree_loss({{20.0, {0.0, 0.0, 0.0}}}).loss < 1e-8);
  CHECK(in_batch_tree_loss({{5.0, {0.0}}}).loss < in_batch_tree_loss({{1.0, {0.0}}}).loss);
  CHECK_THROWS(in_batch_tree_loss({{1.0, {}}}));
}

TEST_CASE("in-batch loss matches naive evaluation") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<QuerySims> b(4);
    for (auto& q : b) {
      q.positive = rng.uniform(-3, 3);
      for (int i = 0; i < 4; ++i) q.negatives.push_back(rng.uniform(-3, 3));
    }
    CHECK(std::abs(in_batch_tree_loss(b).loss - naive_in_batch(b)) < 1e-9);
  }
}

TEST_CASE("in-batch gradient matches finite differences") {
  std::vector<QuerySims> b = {{0.4, {1.1, -0.3}}, {-0.2, {0.5, 0.6, 0.0}}};
  const auto g = in_batch_tree_loss(b).grad;
  const double h = 1e-6;
  auto bump = [&](double& x) {
    const double keep = x;
    x = keep + h;
    const double up = in_batch_tree_loss(b).loss;
    x = keep - h;
    const double down = in_batch_tree_loss(b).loss;
    x = keep;
    return (up - down) / (2 * h);
  };
  CHECK(g[0].positive == doctest::Approx(bump(b[0].positive)).epsilon(1e-6));
  CHECK(g[1].negatives[2] == doctest::Approx(bump(b[1].negatives[2])).epsilon(1e-6));
}

TEST_CASE("ranking loss") {
  CHECK(std::abs(ranking_tree_loss({{0.7, 1}, {0.7, 2}}).loss - 0.5 * std::log(2.0)) < 1e-12);
  CHECK(ranking_tree_loss({{0.7, 1}}).loss == 0.0);
  CHECK_THROWS(ranking_tree_loss({{0.1, 1}, {0.2, 1}}));
  CHECK_THROWS(ranking_tree_loss({{0.1, 1}, {0.2, 3}}));

  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> ranks = {1, 2, 3, 4, 5, 6};
    rng.shuffle(ranks);
    std::vector<RankedSim> r;
    for (int k : ranks) r.push_back({rng.uniform(-4, 4), k});
    const auto got = ranking_tree_loss(r).loss;
    CHECK(std::abs(got - pair_oracle(r)) < 1e-9);
    CHECK(got > 0);
  }
}

TEST_CASE("negative set excludes the positive and the query's own sample") {
  TrainingBatch b;
  for (const char* id : {"a", "b", "c", "d"}) b.docs.push_back({id, id, "ROOT"});
  b.queries.push_back({"a", "qa", "ROOT", {1, 2}, {1, 2}});  // own sample "a" is doc 0, positive is doc 1
  b.queries.push_back({"x", "qx", "ROOT", {3, 0}, {2, 1}});  // positive is doc 0
  CHECK(negative_set(b, 0) == std::vector<std::size_t>{2, 3});
  CHECK(negative_set(b, 1) == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("total loss rejects malformed batches") {
  auto inst = make_gradcheck_instance(3);
  CHECK_THROWS(total_loss(inst.model, inst.batch, -1.0, 1.0));
  auto bad = inst.batch;
  bad.queries[0].ranks.assign(bad.queries[0].ranks.size(), 2);
  CHECK_THROWS(total_loss(inst.model, bad, 1.0, 4.0));
  bad = inst.batch;
  bad.queries[0].candidates[0] = 999;
  CHECK_THROWS(total_loss(inst.model, bad, 1.0, 4.0));
}

TEST_CASE("gradient check on random instances") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = make_gradcheck_instance(seed);
    const auto rep = gradient_check(inst.model, inst.batch, 1.0, 4.0);
    CHECK(rep.checked > 0);
    CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst_parameter);
  }
}

TEST_CASE("total loss combines the terms with gamma weights") {
  const auto inst = make_gradcheck_instance(11);
  const auto r = total_loss(inst.model, inst.batch, 1.0, 4.0, false);
  CHECK(r.l_total == doctest::Approx(r.l_bt + 4.0 * r.l_rt));
  const auto only_bt = total_loss(inst.model, inst.batch, 1.0, 0.0, false);
  CHECK(only_bt.l_total == doctest::Approx(r.l_bt));
}
