#include <algorithm>

#include "doctest.h"
#include "icr/kernels.hpp"
#include "icr/rng.hpp"

using namespace icr;

TEST_CASE("parallel kernels equal their serial references") {
  Rng rng(4);
  const std::size_t rows = 5000, dim = 16;
  std::vector<float> data(rows * dim);
  for (auto& v : data) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<double> q(dim);
  for (auto& v : q) v = rng.uniform(-1, 1);
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < rows; ++i) keys.push_back("k" + std::to_string(i));

  std::vector<double> a(rows), b(rows);
  for (int jobs : {1, 2, 4}) {
    kernels::set_jobs(jobs);
    kernels::inner_products_serial(data, dim, q, a);
    kernels::inner_products(data, dim, q, b);
    CHECK(a == b);
    CHECK(kernels::select_topk(a, keys, 25) == kernels::select_topk_serial(a, keys, 25));
  }
  kernels::set_jobs(0);
}

TEST_CASE("select_topk orders ties by key and honours skip") {
  const std::vector<double> s = {1.0, 3.0, 3.0, 2.0, 3.0};
  const std::vector<std::string> keys = {"e", "d", "b", "a", "c"};
  CHECK(kernels::select_topk(s, keys, 3) == std::vector<std::size_t>{2, 4, 1});
  const std::vector<char> skip = {0, 0, 1, 0, 0};
  CHECK(kernels::select_topk(s, keys, 3, skip) == std::vector<std::size_t>{4, 1, 3});
  CHECK(kernels::select_topk(s, keys, 10).size() == 5);
}
