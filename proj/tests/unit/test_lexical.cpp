#include <cmath>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "icr/lexical.hpp"
#include "icr/rng.hpp"

using namespace icr;

namespace {

ExampleDoc doc(const std::string& id, const std::string& text) { return {id, "t", text, "", text}; }

// Exhaustive scorer written from the formula, independent of the index.
std::vector<ScoredId> brute_force(const std::vector<ExampleDoc>& docs, const std::string& query, std::size_t k) {
  std::vector<std::vector<std::string>> toks;
  double total = 0;
  for (const auto& d : docs) {
    toks.push_back(tokenize(d.text));
    total += static_cast<double>(toks.back().size());
  }
  const double n = static_cast<double>(docs.size()), avgdl = total / n;
  std::map<std::string, int> q;
  for (const auto& t : tokenize(query)) ++q[t];
  std::vector<ScoredId> out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double s = 0;
    for (const auto& [term, qn] : q) {
      double df = 0;
      for (const auto& dt : toks) df += std::count(dt.begin(), dt.end(), term) > 0;
      if (df == 0) continue;
      const double f = static_cast<double>(std::count(toks[i].begin(), toks[i].end(), term));
      const double idf = std::log(1 + (n - df + 0.5) / (df + 0.5));
      s += qn * idf * f * 2.2 / (f + 1.2 * (0.25 + 0.75 * static_cast<double>(toks[i].size()) / avgdl));
    }
    out.push_back({docs[i].sample_id, s});
  }
  std::sort(out.begin(), out.end(), ranks_before);
  out.resize(std::min(k, out.size()));
  return out;
}

std::string words(Rng& rng, std::size_t vocab, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += "tok" + std::to_string(rng.below(vocab)) + " ";
  return s;
}

}  // namespace

TEST_CASE("tokenizer rules") {
  CHECK(tokenize("getFooBar") == std::vector<std::string>{"get", "foo", "bar"});
  CHECK(tokenize("send_signal(pid)") == std::vector<std::string>{"send", "signal", "pid"});
  CHECK(tokenize("HTTP2") == std::vector<std::string>{"http", "2"});
  CHECK(tokenize("parseHTTPResponse") == std::vector<std::string>{"parse", "http", "response"});
  CHECK(tokenize("  ").empty());
  for (const auto& t : tokenize("a,,b;;  c__d(e)")) CHECK_FALSE(t.empty());
}

TEST_CASE("index statistics") {
  const auto one = Bm25Index::build({doc("a", "alpha beta gamma")});
  CHECK(one.doc_count() == 1);
  CHECK(one.avgdl() == 3.0);
  CHECK(one.df("alpha") == 1);
  CHECK(one.df("beta") == 1);
  const auto two = Bm25Index::build({doc("a", "x y y"), doc("b", "x y y")});
  CHECK(two.doc_lengths()[0] == two.doc_lengths()[1]);
  CHECK(two.tf("y", 0) == two.tf("y", 1));
  CHECK_THROWS(Bm25Index::build({}));
}

TEST_CASE("statistics match a recount on random docs") {
  Rng rng(5);
  std::vector<ExampleDoc> docs;
  for (int i = 0; i < 100; ++i) docs.push_back(doc("d" + std::to_string(i), words(rng, 40, 1 + rng.below(20))));
  const auto idx = Bm25Index::build(docs);
  double total = 0;
  std::map<std::string, std::size_t> df;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto t = tokenize(docs[i].text);
    CHECK(idx.doc_lengths()[i] == t.size());
    total += static_cast<double>(t.size());
    std::map<std::string, std::uint32_t> tf;
    for (const auto& w : t) ++tf[w];
    for (const auto& [w, n] : tf) {
      ++df[w];
      CHECK(idx.tf(w, i) == n);
    }
  }
  CHECK(idx.avgdl() == doctest::Approx(total / 100).epsilon(1e-12));
  for (const auto& [w, n] : df) CHECK(idx.df(w) == n);
  CHECK(idx.vocabulary_size() == df.size());
}

TEST_CASE("zero-overlap query scores zero and falls back to id order") {
  const auto idx = Bm25Index::build({doc("c", "one two"), doc("a", "three"), doc("b", "four five")});
  const auto top = idx.topk(tokenize("nothing matches"), 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].sample_id == "a");
  CHECK(top[1].sample_id == "b");
  CHECK(top[2].sample_id == "c");
  for (const auto& s : top) CHECK(s.score == 0.0);
}

TEST_CASE("unique term ranks its document first") {
  std::vector<ExampleDoc> docs;
  for (int i = 0; i < 10; ++i) docs.push_back(doc("d" + std::to_string(i), "common words here"));
  docs[7].text += " zebra";
  CHECK(Bm25Index::build(docs).topk(tokenize("zebra common"), 1)[0].sample_id == "d7");
}

TEST_CASE("top-k equals the exhaustive oracle") {
  Rng rng(11);
  std::vector<ExampleDoc> docs;
  for (int i = 0; i < 50; ++i) docs.push_back(doc("d" + std::to_string((i * 37) % 50), words(rng, 25, 2 + rng.below(10))));
  const auto idx = Bm25Index::build(docs);
  for (int q = 0; q < 20; ++q) {
    const auto query = words(rng, 30, 1 + rng.below(4));
    const auto want = brute_force(docs, query, 10);
    const auto got = idx.topk(tokenize(query), 10);
    REQUIRE(got.size() == want.size());
    for (std::size_t r = 0; r < want.size(); ++r) {
      CHECK(got[r].sample_id == want[r].sample_id);
      CHECK(got[r].score == doctest::Approx(want[r].score).epsilon(1e-12));
    }
  }
}

TEST_CASE("parallel and serial scoring agree and exclusion works") {
  Rng rng(2);
  std::vector<ExampleDoc> docs;
  for (int i = 0; i < 300; ++i) docs.push_back(doc("d" + std::to_string(i), words(rng, 50, 5)));
  const auto idx = Bm25Index::build(docs);
  const auto q = tokenize(docs[3].text);
  CHECK(idx.score_all(q) == idx.score_all_serial(q));
  CHECK(idx.topk(q, 1)[0].sample_id == "d3");
  CHECK(idx.topk(q, 1, std::string("d3"))[0].sample_id != "d3");
}

TEST_CASE("BM25 index round trip") {
  const auto idx = Bm25Index::build({doc("a", "alpha beta"), doc("b", "beta gamma gamma")});
  const auto dir = testutil::scratch("bm25");
  idx.save((dir / "i.bin").string());
  const auto back = Bm25Index::load((dir / "i.bin").string());
  CHECK(back.serialize() == idx.serialize());
  CHECK(back.topk(tokenize("gamma"), 2) == idx.topk(tokenize("gamma"), 2));
  CHECK_THROWS(Bm25Index::deserialize("garbage"));
}
