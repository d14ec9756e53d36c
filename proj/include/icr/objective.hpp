#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icr/encoder.hpp"

namespace icr {

inline constexpr double kSimClamp = 30.0;

/// One query's view for the in-batch loss: the positive similarity and the
/// similarities of its negative set Z.
struct QuerySims {
  double positive = 0.0;
  std::vector<double> negatives;
};

struct InBatchLoss {
  double loss = 0.0;
  std::vector<QuerySims> grad;  // d loss / d sim, same shape as the input
};

/// Mean over queries of -log softmax(positive) over {positive} u Z.
InBatchLoss in_batch_tree_loss(const std::vector<QuerySims>& batch);

struct RankedSim {
  double sim = 0.0;
  int rank = 0;
};

struct RankingLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Sum over ordered pairs (i, j) of max(0, 1/r_i - 1/r_j) * log(1 + e^{s_j - s_i})
/// for one query's candidate set.
RankingLoss ranking_tree_loss(const std::vector<RankedSim>& ranked);

// ---- full-model loss over a training batch ------------------------------------

struct BatchDoc {
  std::string sample_id;
  std::string text;
  std::string tree;  // preorder serialization
};

struct BatchQuery {
  std::string sample_id;
  std::string text;
  std::string tree;
  std::vector<std::size_t> candidates;  // indices into TrainingBatch::docs
  std::vector<int> ranks;               // parallel to candidates; a permutation of 1..K
};

/// Docs are unique by sample_id. The positive of each query is its rank-1
/// candidate; Z is every other doc in the batch except the query's own sample.
struct TrainingBatch {
  std::vector<BatchQuery> queries;
  std::vector<BatchDoc> docs;
};

struct LossReport {
  double l_bt = 0.0;
  double l_rt = 0.0;
  double l_total = 0.0;
  ModelGrad grad;
};

LossReport total_loss(const ModelParams& model, const TrainingBatch& batch, double gamma1, double gamma2,
                      bool with_grad = true);

/// Negative-set indices for query `q` of `batch`.
std::vector<std::size_t> negative_set(const TrainingBatch& batch, std::size_t q);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

/// Compares total_loss gradients with central differences over every touched
/// embedding row, the projections, biases and the four mixing scalars.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport gradient_check(const ModelParams& model, const TrainingBatch& batch, double gamma1, double gamma2,
                               double h = 1e-4, double floor = 1e-8);

struct GradCheckInstance {
  ModelParams model;
  TrainingBatch batch;
};

/// Random small instance: `queries` x `candidates`, random texts/trees,
/// parameters spread beyond the init range so tanh is off its linear regime.
GradCheckInstance make_gradcheck_instance(std::uint64_t seed, std::size_t dim = 8, std::size_t queries = 3,
                                          std::size_t candidates = 4, std::size_t buckets = 97);

}  // namespace icr
