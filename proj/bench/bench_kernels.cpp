// Serial vs OpenMP timings for the hot kernels.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icr/corpus.hpp"
#include "icr/kernels.hpp"
#include "icr/lexical.hpp"
#include "icr/rng.hpp"

using namespace icr;

namespace {

template <class F>
double best_ms(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool equal) {
  std::printf("%-16s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx  %s\n", name, serial, parallel,
              serial / parallel, equal ? "equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bench_kernels"};
  std::size_t rows = 200000, dim = 64, docs = 20000, reps = 5;
  int jobs = 0;
  app.add_option("--rows", rows)->capture_default_str();
  app.add_option("--dim", dim)->capture_default_str();
  app.add_option("--docs", docs)->capture_default_str();
  app.add_option("--reps", reps)->capture_default_str();
  app.add_option("--jobs", jobs)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  kernels::set_jobs(jobs);
  std::printf("threads: %d\n", kernels::max_threads());

  Rng rng(1);
  std::vector<float> data(rows * dim);
  for (auto& v : data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<double> query(dim);
  for (auto& v : query) v = rng.uniform(-1.0, 1.0);
  std::vector<std::string> keys(rows);
  for (std::size_t i = 0; i < rows; ++i) keys[i] = "row-" + std::to_string(i);

  std::vector<double> s1(rows), s2(rows);
  const double ip_s = best_ms(reps, [&] { kernels::inner_products_serial(data, dim, query, s1); });
  const double ip_p = best_ms(reps, [&] { kernels::inner_products(data, dim, query, s2); });
  report("inner_products", ip_s, ip_p, s1 == s2);

  std::vector<std::size_t> t1, t2;
  const double tk_s = best_ms(reps, [&] { t1 = kernels::select_topk_serial(s1, keys, 20); });
  const double tk_p = best_ms(reps, [&] { t2 = kernels::select_topk(s1, keys, 20); });
  report("select_topk*", tk_s, tk_p, t1 == t2);

  const char* vocab[] = {"get", "set", "value", "list", "map", "index", "node", "tree", "parse", "token",
                         "buffer", "size", "count", "name", "path", "file", "read", "write", "open", "close"};
  std::vector<ExampleDoc> corpus(docs);
  for (std::size_t i = 0; i < docs; ++i) {
    std::string text;
    const auto len = 5 + rng.below(40);
    for (std::size_t w = 0; w < len; ++w) text += std::string(vocab[rng.below(20)]) + std::to_string(rng.below(50)) + " ";
    corpus[i] = {"doc-" + std::to_string(i), "bench", text, "", text};
  }
  const auto bm25 = Bm25Index::build(corpus);
  const auto qtok = tokenize("get value12 from tree7 and parse token3 into buffer9");
  std::vector<double> b1, b2;
  const double bm_s = best_ms(reps, [&] { b1 = bm25.score_all_serial(qtok); });
  const double bm_p = best_ms(reps, [&] { b2 = bm25.score_all(qtok); });
  report("bm25_score_all", bm_s, bm_p, b1 == b2);
  std::printf("* serial reference is a full sort; parallel uses per-thread partial sorts\n");
  return 0;
}
