#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icr/encoder.hpp"
#include "icr/feedback.hpp"
#include "icr/objective.hpp"
#include "icr/retrieval.hpp"

namespace icr {

struct TrainConfig {
  std::size_t K = 50;
  std::size_t iterations = 3;
  std::size_t epochs = 4;
  std::size_t batch_size = 8;
  double learning_rate = 0.01;
  std::string optimizer = "adam";  // adam | sgd
  double gamma1 = 1.0;
  double gamma2 = 4.0;
  double default_sampling_rate = 0.7;
  std::map<std::string, double> sampling_rate;  // per task_id, overrides the default
  std::uint64_t seed = 13;
  std::size_t dim = kDefaultDim;
  std::size_t buckets = kDefaultBuckets;
  bool freeze_tree_channel = false;  // beta1 = beta2 = 0, never updated
  std::size_t max_in_flight = 4;
  std::size_t probe_count = 4;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  double rate_for(const std::string& task_id) const;
};

/// Masked query text and tree for every sample of a store, by index.
std::vector<QueryView> build_query_views(const TaskRegistry& registry, const ExampleStore& store, bool masked = true);

/// Top-K candidate ids for training sample `i`, excluding itself. Iteration 0
/// uses BM25 over the unmasked (x, y) text; later iterations use the dense
/// index with the masked query.
std::vector<std::string> select_candidates(std::size_t iteration, const TaskRegistry& registry,
                                           const ExampleStore& store, std::size_t i, std::size_t K,
                                           const Bm25Index* bm25, const ModelParams* model = nullptr,
                                           const DenseIndex* index = nullptr, const QueryView* view = nullptr);

struct TrainingInstance {
  std::size_t sample_index = 0;  // into the training store
  std::vector<ScoredCandidate> candidates;
};

/// Per-task sampling (rate < 1 without replacement, rate > 1 with
/// replacement, llround(rate * n) draws), seeded shuffle, contiguous batches.
std::vector<std::vector<std::size_t>> build_batches(const std::vector<std::string>& instance_tasks,
                                                    const TrainConfig& cfg, std::size_t batch_size,
                                                    std::uint64_t seed);

TrainingBatch make_training_batch(const std::vector<TrainingInstance>& instances,
                                  const std::vector<std::size_t>& members, const ExampleStore& store,
                                  const std::vector<QueryView>& views);

struct StepRecord {
  std::size_t iteration = 0;  // 1-based
  std::size_t epoch = 0;      // 1-based
  std::size_t step = 0;       // 1-based within the epoch
  std::size_t queries = 0;
  double l_bt = 0, l_rt = 0, l_total = 0;
};

struct IterationSummary {
  std::size_t iteration = 0;
  std::vector<double> epoch_loss;  // mean L_total per epoch
  std::vector<double> epoch_l_bt;
  std::vector<double> epoch_l_rt;
  std::uint64_t fingerprint = 0;
  std::string checkpoint;  // model.bin path, empty without an output dir
  ScoringStats scoring;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  /// Extra metrics merged into the iteration log record (e.g. oracle agreement).
  std::function<std::map<std::string, double>(std::size_t iteration, const ModelParams&)> iteration_metrics;
  std::function<void(const std::string&)> warn;
};

struct TrainResult {
  ModelParams initial;
  ModelParams model;
  std::vector<IterationSummary> iterations;
};

ModelParams initial_model(const TrainConfig& cfg);

/// Runs the iterative loop. With a non-empty out_dir writes
/// iter_<n>/{model.bin,manifest.json,candidates.jsonl} and train_log.jsonl.
TrainResult train(const TrainConfig& cfg, const TaskRegistry& registry, const ExampleStore& store, Scorer& scorer,
                  ScoreCache& cache, const std::string& out_dir = {}, const TrainHooks& hooks = {});

/// Re-encodes the manifest's probes with model.bin and compares bit-exactly.
bool verify_checkpoint(const std::string& iter_dir, std::string* why = nullptr);

}  // namespace icr
