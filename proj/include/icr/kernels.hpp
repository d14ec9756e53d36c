#pragma once

// Data-parallel inner loops. Every kernel has a serial reference with the
// same per-element arithmetic, so parallel and serial results are bitwise
// equal; tests assert this and bench_kernels times both.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace icr::kernels {

/// scores[r] = sum_k query[k] * double(rows[r*dim + k])
void inner_products_serial(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                           std::span<double> scores);
void inner_products(std::span<const float> rows, std::size_t dim, std::span<const double> query,
                    std::span<double> scores);

/// Indices of the best `k` entries by (score desc, key asc); `skip` marks
/// excluded entries (may be empty).
std::vector<std::size_t> select_topk(std::span<const double> scores, const std::vector<std::string>& keys,
                                     std::size_t k, std::span<const char> skip = {});
std::vector<std::size_t> select_topk_serial(std::span<const double> scores, const std::vector<std::string>& keys,
                                            std::size_t k, std::span<const char> skip = {});

/// Thread count for parallel sections; <= 0 leaves the OpenMP default.
void set_jobs(int jobs);
int max_threads();

}  // namespace icr::kernels
