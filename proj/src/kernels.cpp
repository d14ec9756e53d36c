#include "icr/kernels.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <omp.h>

namespace icr::kernels {

namespace {

inline double dot_row(const float* row, const double* q, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t k = 0; k < dim; ++k) acc += q[k] * static_cast<double>(row[k]);
  return acc;
}

void check_shapes(std::span<const float> rows, std::size_t dim, std::span<const double> query, std::span<double> scores) {
  if (query.size() != dim) throw std::invalid_argument("query dimension mismatch");
  if (dim == 0 ? !rows.empty() : rows.size() != scores.size() * dim)
    throw std::invalid_argument("row matrix shape mismatch");
}

struct Better {
  std::span<const double> scores;
  const std::vector<std::string>& keys;
  bool operator()(std::size_t a, std::size_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    return a < b;
  }
};

}  // namespace

void inner_products_serial(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                           std::span<double> scores) {
  check_shapes(rows, dim, query, scores);
  for (std::size_t r = 0; r < scores.size(); ++r) scores[r] = dot_row(rows.data() + r * dim, query.data(), dim);
}

void inner_products(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                    std::span<double> scores) {
  check_shapes(rows, dim, query, scores);
  const auto n = static_cast<std::ptrdiff_t>(scores.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) scores[r] = dot_row(rows.data() + r * dim, query.data(), dim);
}

std::vector<std::size_t> select_topk_serial(std::span<const double> scores, const std::vector<std::string>& keys,
                                            std::size_t k, std::span<const char> skip) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (skip.empty() || !skip[i]) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), Better{scores, keys});
  if (idx.size() > k) idx.resize(k);
  return idx;
}

std::vector<std::size_t> select_topk(std::span<const double> scores, const std::vector<std::string>& keys,
                                     std::size_t k, std::span<const char> skip) {
  const std::size_t n = scores.size();
  Better better{scores, keys};
  std::vector<std::vector<std::size_t>> partial;
#pragma omp parallel
  {
#pragma omp single
    partial.resize(static_cast<std::size_t>(omp_get_num_threads()));
    const std::size_t nt = partial.size();
    const std::size_t t = static_cast<std::size_t>(omp_get_thread_num());
    auto& local = partial[t];
    for (std::size_t i = n * t / nt; i < n * (t + 1) / nt; ++i)
      if (skip.empty() || !skip[i]) local.push_back(i);
    const std::size_t keep = std::min(k, local.size());
    std::partial_sort(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(keep), local.end(), better);
    local.resize(keep);
  }
  std::vector<std::size_t> merged;
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  const std::size_t keep = std::min(k, merged.size());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep), merged.end(), better);
  merged.resize(keep);
  return merged;
}

void set_jobs(int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace icr::kernels
